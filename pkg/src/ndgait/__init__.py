"""EEG-to-gait decoding toolkit.

Two-stage pipeline: contrastive EEG/motion pretraining on 2-second windows,
then session-specific regression heads fused by a learned domain-weighting
layer for unseen-subject generalization. Ships with its own reverse-mode
autodiff core, a synthetic gait/EEG generator, evaluation and analysis
tooling, and a streaming inference harness.
"""

__version__ = "0.1.0"
