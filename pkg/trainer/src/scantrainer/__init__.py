"""scantrainer: a toy-scale semi-supervised restoration trainer.

Consumes patch stores produced by the scanforge pipeline (index.json + PNG
pairs), trains a restoration network against a degradation generator and a
spectral-normalized critic, and writes checkpoints, loss curves, and
restored patches for external scoring.
"""

__version__ = "0.1.0"
