"""Segmentation metrics and the Monte-Carlo moment check used by the
statistical tests.

Masks are binary, two classes: anomaly (1) and background (0). A class
absent from both prediction and ground truth counts as IoU 1 (perfect
agreement on nothing); averages over mask sets depend on this convention,
so it is fixed here rather than left to callers.
"""
from dataclasses import dataclass

import numpy as np

from .farm import validate_mask


@dataclass(frozen=True)
class MetricReport:
    miou: float
    acc: float
    per_class: tuple  # (background IoU, anomaly IoU)


def _check_pair(pred, gt):
    p = validate_mask(pred).astype(bool)
    g = validate_mask(gt).astype(bool)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs gt {g.shape}")
    return p, g


def _class_iou(p, g):
    union = np.sum(p | g)
    if union == 0:
        return 1.0
    return float(np.sum(p & g)) / float(union)


def miou(pred, gt) -> float:
    """Mean IoU over the two classes."""
    p, g = _check_pair(pred, gt)
    return 0.5 * (_class_iou(p, g) + _class_iou(~p, ~g))


def pixel_accuracy(pred, gt) -> float:
    """Fraction of pixels labeled identically."""
    p, g = _check_pair(pred, gt)
    return float(np.mean(p == g))


def metric_report(pred, gt) -> MetricReport:
    p, g = _check_pair(pred, gt)
    iou_bg = _class_iou(~p, ~g)
    iou_an = _class_iou(p, g)
    return MetricReport(miou=0.5 * (iou_bg + iou_an),
                        acc=float(np.mean(p == g)),
                        per_class=(iou_bg, iou_an))


@dataclass(frozen=True)
class MomentVerdict:
    passed: bool
    mean: float
    var: float
    mean_err: float
    mean_band: float
    var_rel_err: float
    var_rtol: float

    def __bool__(self):
        return self.passed

    def __str__(self):
        state = "pass" if self.passed else "FAIL"
        return (f"moment_test {state}: mean={self.mean:.6g} "
                f"(|err|={self.mean_err:.3g} <= {self.mean_band:.3g}), "
                f"var={self.var:.6g} (rel err={self.var_rel_err:.3g} "
                f"<= {self.var_rtol:.3g})")


def moment_test(samples, expected_mean: float, expected_var: float,
                var_rtol: float = 0.02) -> MomentVerdict:
    """Check empirical moments against a target distribution.

    Mean must sit within 4 standard errors (sqrt(expected_var/N)); variance
    within var_rtol relative. expected_var = 0 switches to an exact-match
    test. samples may be a list of tensors or one stacked array; every
    element counts as an independent draw.
    """
    x = np.concatenate([np.ravel(np.asarray(s, dtype=np.float64)) for s in samples]) \
        if isinstance(samples, (list, tuple)) else np.ravel(np.asarray(samples, dtype=np.float64))
    n = x.size
    if n < 2:
        raise ValueError(f"moment_test needs at least 2 samples, got {n}")
    m = float(np.mean(x))
    v = float(np.var(x))
    if expected_var == 0.0:
        exact = bool(np.all(x == expected_mean))
        return MomentVerdict(passed=exact, mean=m, var=v,
                             mean_err=abs(m - expected_mean), mean_band=0.0,
                             var_rel_err=v, var_rtol=0.0)
    band = 4.0 * np.sqrt(expected_var / n)
    mean_err = abs(m - expected_mean)
    var_rel_err = abs(v - expected_var) / expected_var
    return MomentVerdict(passed=(mean_err <= band) and (var_rel_err <= var_rtol),
                         mean=m, var=v, mean_err=mean_err, mean_band=float(band),
                         var_rel_err=var_rel_err, var_rtol=var_rtol)
