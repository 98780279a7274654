"""Synthetic training corpus: smooth-gradient backgrounds with one
rectangular high-contrast defect blob per image, plus the blob mask.

Deliberately easy material (values in [0, 1], defects near 1.0) so that
reconstruction training converges quickly at desk scale.
"""
import numpy as np

from .rng import RandomStream


def make_synthetic_corpus(n: int, hw: int = 32, channels: int = 1,
                          seed: int = 0):
    """List of n (image (C, hw, hw), mask (hw, hw)) pairs."""
    if n < 1 or hw < 8:
        raise ValueError("need n >= 1 samples of at least 8 x 8")
    stream = RandomStream(seed, stream_id=404)
    yy, xx = np.mgrid[0:hw, 0:hw] / (hw - 1.0)
    corpus = []
    for _ in range(n):
        a = stream.uniform()
        lo = 0.1 + 0.1 * stream.uniform()
        hi = 0.4 + 0.2 * stream.uniform()
        bg = lo + (hi - lo) * (a * xx + (1.0 - a) * yy)
        img = np.broadcast_to(bg, (channels, hw, hw)).copy()
        side_h = stream.integers(hw // 8, hw // 3)
        side_w = stream.integers(hw // 8, hw // 3)
        r0 = stream.integers(1, hw - side_h - 1)
        c0 = stream.integers(1, hw - side_w - 1)
        blob = 0.9 + 0.1 * stream.uniform()
        mask = np.zeros((hw, hw), dtype=np.uint8)
        mask[r0:r0 + side_h, c0:c0 + side_w] = 1
        img[:, r0:r0 + side_h, c0:c0 + side_w] = blob
        corpus.append((img, mask))
    return corpus
