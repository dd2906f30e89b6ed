"""
Core components for grid-fault-attacks.

This package contains the domain models, the waveform surrogate, feature
extraction, the MLP classifier, the attack suite and the experiment runner.
"""
