"""scanforge: data machinery for photo-scan restoration research.

Perspective rectification of captured prints, global and local alignment of
scan/ground-truth pairs, degradation-domain simulation via color style
transfer, patch dataset construction, and PSNR/MS-SSIM evaluation.
"""

__version__ = "0.1.0"
