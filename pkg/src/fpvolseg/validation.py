"""Small input-validation helpers in the spirit of ``sklearn.utils.validation``."""

import math

import numpy as np

from .errors import DimensionError, KindError, ParameterError


def check_triple(value, name, *, minimum=1):
    """Coerce ``value`` (int or length-3 sequence) into a tuple of 3 ints."""
    if np.isscalar(value):
        value = (value,) * 3
    out = tuple(int(v) for v in value)
    if len(out) != 3:
        raise ParameterError(f"{name} must have 3 components, got {len(out)}")
    if any(v < minimum for v in out):
        raise ParameterError(f"{name} components must be >= {minimum}, got {out}")
    return out


def check_fraction(value, name, *, low=0.0, high=1.0, high_inclusive=False):
    value = float(value)
    ok = low <= value and (value <= high if high_inclusive else value < high)
    if not ok or math.isnan(value):
        bracket = "]" if high_inclusive else ")"
        raise ParameterError(f"{name} must lie in [{low}, {high}{bracket}, got {value}")
    return value


def check_kind(volume, *kinds):
    if volume.kind not in kinds:
        raise KindError(f"expected a volume of kind {' or '.join(kinds)}, got {volume.kind!r}")
    return volume


def check_same_shape(a, b, what="arrays"):
    sa = a.shape
    sb = b.shape
    if tuple(sa) != tuple(sb):
        raise DimensionError(f"{what} must share a shape, got {tuple(sa)} and {tuple(sb)}")


def check_same_geometry(a, b):
    """Volumes must agree in shape and spacing."""
    check_same_shape(a, b, "volumes")
    if not np.allclose(a.spacing_mm, b.spacing_mm, rtol=0, atol=0):
        raise DimensionError(
            f"volumes must share spacing, got {a.spacing_mm} and {b.spacing_mm}"
        )


def check_probability_pair(p, g):
    """Return ``p`` and ``g`` as flat float64 arrays of equal length."""
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    check_same_shape(p, g, "prediction and ground truth")
    return p.ravel(), g.ravel()
