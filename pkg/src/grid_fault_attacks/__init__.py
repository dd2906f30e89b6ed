"""
Grid Fault Attacks - adversarial attacks against machine-learned fault classifiers.

This package synthesizes a labeled three-phase fault dataset, extracts
time/DFT/DWT features, trains MLP classifiers for fault zone, fault type and
joint classification, and measures how FGSM, BIM and Carlini-Wagner attacks
degrade their accuracy.
"""

__version__ = "0.1.0"
