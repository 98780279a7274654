"""Pure-numpy implementations of the hot kernels.

Kept operation-for-operation identical to the compiled versions in
``anosynth._native`` so that both backends produce bit-identical output:
the counter hash is exact uint64 arithmetic, and the chain update applies
the same left-associated float expression per element (the extension is
compiled with -ffp-contract=off for this reason).
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)


def counter_words(key, start, n):
    """Return n pseudo-random uint64 words for counters start+1 .. start+n.

    word(i) = mix64(key + i * GOLDEN), where mix64 is the splitmix64
    finalizer (xor-shift / multiply avalanche).
    """
    with np.errstate(over="ignore"):
        idx = np.arange(1, n + 1, dtype=np.uint64) + np.uint64(start)
        z = np.uint64(key) + idx * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
        return z ^ (z >> np.uint64(31))


def posterior_chain(x, x0hat, a, b, s, eps):
    """Run m sequential reverse steps x <- a[i]*x0hat + b[i]*x + s[i]*eps[i].

    x, x0hat: (n,) float64; a, b, s: (m,) float64; eps: (m, n) float64.
    Steps are applied in array order. Returns the final state (new array).
    """
    x = np.array(x, dtype=np.float64, copy=True)
    for i in range(a.shape[0]):
        x = a[i] * x0hat + b[i] * x + s[i] * eps[i]
    return x
