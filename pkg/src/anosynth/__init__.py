"""anosynth: masked anomaly synthesis with aggregated multi-step diffusion sampling.

The engine builds a discrete noise schedule, collapses runs of reverse
diffusion steps into closed-form affine-Gaussian segment kernels, and wires
a foreground-aware reconstruction module into a synthesize-fuse-refine
pipeline for producing image/mask training pairs.
"""
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
