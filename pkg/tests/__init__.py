"""
Tests for grid-fault-attacks.

This package contains test modules for the waveform, feature, model, attack
and evaluation components, plus end-to-end CLI runs.
"""
