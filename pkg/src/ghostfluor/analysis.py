"""Profile statistics shared by the optics, imaging and acceptance code."""
from __future__ import annotations

import numpy as np
from scipy import stats

__all__ = ["fwhm", "centroid", "pearson", "flatness_chi2", "conditional_spread"]


def fwhm(x, y):
    """Full width at half maximum of a single-peaked sampled profile.

    Half-maximum crossings are located by linear interpolation on either side
    of the global maximum.  Raises ``ValueError`` if the profile does not drop
    below half maximum on both sides.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    i = int(np.argmax(y))
    half = y[i] / 2.0
    if not half > 0:
        raise ValueError("profile has no positive peak")
    left = np.flatnonzero(y[:i] < half)
    right = np.flatnonzero(y[i:] < half)
    if left.size == 0 or right.size == 0:
        raise ValueError("profile does not fall to half maximum inside the grid")
    j = left[-1]
    xl = x[j] + (half - y[j]) * (x[j + 1] - x[j]) / (y[j + 1] - y[j])
    k = i + right[0]
    xr = x[k - 1] + (half - y[k - 1]) * (x[k] - x[k - 1]) / (y[k] - y[k - 1])
    return float(abs(xr - xl))


def centroid(x, weights):
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise ValueError("centroid of an empty profile")
    return float(np.dot(np.asarray(x, dtype=float), w) / total)


def pearson(a, b):
    return float(np.corrcoef(np.asarray(a, dtype=float), np.asarray(b, dtype=float))[0, 1])


def flatness_chi2(counts):
    """Chi-square test of a histogram against a flat expectation.

    Returns ``(chi2, dof, p_value)``.
    """
    c = np.asarray(counts, dtype=float)
    expected = c.mean()
    if expected <= 0:
        raise ValueError("no counts")
    chi2 = float(((c - expected) ** 2 / expected).sum())
    dof = c.size - 1
    return chi2, dof, float(stats.chi2.sf(chi2, dof))


def conditional_spread(x1, x2):
    """Residual standard deviation of x1 after the best linear prediction from x2.

    For jointly Gaussian coordinates this is exactly the conditional standard
    deviation of x1 given x2, and it vanishes when x1 is a deterministic
    linear function of x2 (a sharp conjugate plane).
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.size < 3:
        raise ValueError("need at least three rays")
    d1 = x1 - x1.mean()
    d2 = x2 - x2.mean()
    var2 = np.dot(d2, d2)
    slope = np.dot(d1, d2) / var2 if var2 > 0 else 0.0
    resid = d1 - slope * d2
    return float(np.sqrt(np.dot(resid, resid) / (x1.size - 2)))
