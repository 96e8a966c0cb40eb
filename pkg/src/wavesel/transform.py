"""Periodized pyramid filter bank for dyadic sample vectors.

``analyze`` runs the decimating two-channel filter bank down to a single
approximation coefficient, with all boundary handling done by index
arithmetic modulo the current level length, so the transform matrix is
exactly orthogonal for any orthonormal scaling filter, including levels
shorter than the filter. ``synthesize`` is the exact transpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidFilterError",
    "MalformedTreeError",
    "HAAR",
    "DB8",
    "get_filter",
    "validate_filter",
    "qmf",
    "CoefficientTree",
    "analyze",
    "synthesize",
    "flatten",
    "unflatten",
    "ordered_design_fit",
]


class InvalidFilterError(ValueError):
    """Scaling filter fails the orthonormality conditions."""


class MalformedTreeError(ValueError):
    """Coefficient tree with inconsistent level lengths."""


HAAR = np.array([1.0, 1.0]) / np.sqrt(2.0)

# Daubechies scaling filter with 8 vanishing moments (16 taps), obtained by
# spectral factorization of the Daubechies polynomial and Newton-polished to
# machine precision. Never trusted: every build re-validates the filter.
DB8 = np.array([
    5.4415842243099442e-02,
    3.1287159091428457e-01,
    6.7563073629727921e-01,
    5.8535468365422516e-01,
    -1.5829105256325152e-02,
    -2.8401554296155185e-01,
    4.7248457390039754e-04,
    1.2874742662048175e-01,
    -1.7369301001802746e-02,
    -4.4088253930796691e-02,
    1.3981027917397229e-02,
    8.7460940474064237e-03,
    -4.8703529934514996e-03,
    -3.9174037337704506e-04,
    6.7544940645057855e-04,
    -1.1747678412476704e-04,
])

_FILTERS = {"haar": HAAR, "db8": DB8}


def get_filter(name: str) -> np.ndarray:
    try:
        h = _FILTERS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown filter {name!r}; choose from {tuple(_FILTERS)}") from None
    validate_filter(h)
    return h


def validate_filter(h, tol: float = 1e-12) -> np.ndarray:
    """Check sum(h) = sqrt(2) and double-shift orthonormality."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or len(h) < 2 or len(h) % 2 != 0:
        raise InvalidFilterError("scaling filter must be 1-d with even length >= 2")
    if abs(h.sum() - np.sqrt(2.0)) > tol:
        raise InvalidFilterError(f"sum of taps is {h.sum()!r}, not sqrt(2)")
    L = len(h)
    for m in range(L // 2):
        target = 1.0 if m == 0 else 0.0
        got = float(np.dot(h[2 * m:], h[: L - 2 * m]))
        if abs(got - target) > tol:
            raise InvalidFilterError(f"double-shift orthonormality fails at shift {m}: {got!r}")
    return h


def qmf(h: np.ndarray) -> np.ndarray:
    """Quadrature mirror (detail) filter g_k = (-1)^k h_{L-1-k}."""
    h = np.asarray(h, dtype=float)
    signs = np.where(np.arange(len(h)) % 2 == 0, 1.0, -1.0)
    return signs * h[::-1]


def _analyze_step(a: np.ndarray, h: np.ndarray, g: np.ndarray):
    n = len(a)
    half = n // 2
    pos = 2 * np.arange(half)
    approx = np.zeros(half)
    detail = np.zeros(half)
    for k in range(len(h)):
        vals = a[(pos + k) % n]
        approx += h[k] * vals
        detail += g[k] * vals
    return approx, detail


def _synthesize_step(approx: np.ndarray, detail: np.ndarray, h: np.ndarray, g: np.ndarray) -> np.ndarray:
    half = len(approx)
    n = 2 * half
    pos = 2 * np.arange(half)
    out = np.zeros(n)
    for k in range(len(h)):
        idx = (pos + k) % n
        # a fixed shift k maps the half-grid to distinct residues, so no
        # scatter collisions occur and fancy-indexed += is safe
        out[idx] += h[k] * approx + g[k] * detail
    return out


@dataclass(frozen=True)
class CoefficientTree:
    """Pyramid coefficients: one approx value and details for levels 0..p-1."""

    approx: np.ndarray
    details: tuple
    n: int

    def __post_init__(self):
        if len(self.approx) != 1:
            raise MalformedTreeError("approx vector must have length 1")
        total = 1
        for j, d in enumerate(self.details):
            if len(d) != 2 ** j:
                raise MalformedTreeError(f"detail level {j} has length {len(d)}, expected {2 ** j}")
            total += len(d)
        if total != self.n:
            raise MalformedTreeError(f"coefficient count {total} != n = {self.n}")

    @property
    def levels(self) -> int:
        return len(self.details)

    def energy(self) -> float:
        return float(self.approx[0] ** 2 + sum(float(np.dot(d, d)) for d in self.details))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "approx": [float(v) for v in self.approx],
            "details": [[float(v) for v in d] for d in self.details],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientTree":
        return cls(np.array(d["approx"], dtype=float),
                   tuple(np.array(v, dtype=float) for v in d["details"]),
                   int(d["n"]))


def _check_dyadic(n: int) -> int:
    p = int(n).bit_length() - 1
    if n < 2 or (1 << p) != n:
        raise ValueError(f"length {n} is not a power of two >= 2")
    return p


def analyze(values, filt) -> CoefficientTree:
    """Full periodized pyramid decomposition of a 2^p vector."""
    v = np.asarray(values, dtype=float)
    _check_dyadic(len(v))
    h = validate_filter(filt)
    g = qmf(h)
    details = []
    a = v
    while len(a) > 1:
        a, d = _analyze_step(a, h, g)
        details.append(d)
    return CoefficientTree(a, tuple(reversed(details)), len(v))


def synthesize(tree: CoefficientTree, filt) -> np.ndarray:
    """Exact inverse of :func:`analyze`."""
    h = validate_filter(filt)
    g = qmf(h)
    a = tree.approx
    for d in tree.details:
        if len(d) != len(a):
            raise MalformedTreeError("detail/approx length mismatch")
        a = _synthesize_step(a, d, h, g)
    return a


def flatten(tree: CoefficientTree) -> np.ndarray:
    """Concatenate [approx, d_0, d_1, ...]; prefix 2^j spans the level-j model."""
    return np.concatenate([tree.approx] + list(tree.details))


def unflatten(coeffs, n: int) -> CoefficientTree:
    c = np.asarray(coeffs, dtype=float)
    if len(c) != n:
        raise MalformedTreeError(f"expected {n} coefficients, got {len(c)}")
    p = _check_dyadic(n)
    details = []
    pos = 1
    for j in range(p):
        details.append(c[pos: pos + 2 ** j])
        pos += 2 ** j
    return CoefficientTree(c[:1], tuple(details), n)


def truncate_flat(coeffs: np.ndarray, dim: int) -> np.ndarray:
    """Zero all coefficients beyond the leading ``dim`` (a dyadic prefix)."""
    out = np.zeros_like(coeffs)
    out[:dim] = coeffs[:dim]
    return out


def ordered_design_fit(sample, model, filt=None) -> np.ndarray:
    """Least-squares coefficients for a wavelet model from rank-ordered data.

    Runs the pyramid on the y values ordered by x (the nonequispaced data
    are treated as if observed on the regular grid), keeps the levels the
    model spans and rescales by 1/sqrt(n) so the result is in function
    units: sum_k beta_k phi_k estimates the regression function.
    """
    y = np.asarray(sample.y, dtype=float)
    n = len(y)
    _check_dyadic(n)
    dim = int(model.dim)
    if dim > n:
        raise ValueError(f"model dimension {dim} exceeds sample size {n}")
    h = model.filter_coefficients if filt is None else filt
    c = flatten(analyze(y, h))
    return c[:dim] / np.sqrt(n)
