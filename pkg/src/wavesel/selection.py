"""Model-selection procedures: oracle, slope heuristics, Cp, 2FCV, pen2F.

All selectors minimize a per-model criterion over a shared collection and
break ties toward the smaller dimension. The slope heuristics calibrates
its penalty level from the exact breakpoint path of
alpha -> argmin_m {risk_m + alpha * shape_m}, computed from the lower
convex hull of the (shape, risk) cloud, and places the minimal level at
the breakpoint with the largest drop in selected dimension (ties going
to the largest alpha).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import bases, transform
from .bases import N_GRID
from .estimator import FitResult, SingularDesignError, fit_ls, project_truth, signal_grid_values
from .signals import RegressionSample, TestSignal

__all__ = [
    "ModelCollection",
    "wavelet_collection",
    "FittedCollection",
    "fit_collection",
    "TruthProfile",
    "truth_profile",
    "FoldScheme",
    "FoldDegeneracyError",
    "PathSegment",
    "PenaltyPath",
    "penalty_path",
    "TraceEntry",
    "SelectionOutcome",
    "oracle_select",
    "select_sh",
    "select_cp",
    "select_vfcv",
    "select_penvf",
    "fold_fitted",
]


class FoldDegeneracyError(ValueError):
    """A V-fold block is empty."""


@dataclass(frozen=True)
class ModelCollection:
    models: tuple

    def __post_init__(self):
        dims = self.dims
        if len(dims) == 0:
            raise ValueError("empty model collection")
        if np.any(np.diff(dims) <= 0):
            raise ValueError("model dimensions must be strictly increasing")

    @property
    def dims(self) -> np.ndarray:
        return np.array([m.dim for m in self.models], dtype=int)

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self):
        return iter(self.models)


def wavelet_collection(n: int, filt, filter_name: Optional[str] = None) -> ModelCollection:
    """Nested wavelet models with dimensions 2^j, j = 1..log2(n)-1."""
    p = int(n).bit_length() - 1
    if (1 << p) != n or p < 2:
        raise ValueError("need a dyadic sample size >= 4")
    models = tuple(bases.WaveletModel(filt, j - 1, filter_name) for j in range(1, p))
    return ModelCollection(models)


@dataclass(frozen=True)
class FittedCollection:
    fits: tuple
    emp_risks: np.ndarray
    failed: tuple = ()

    def __len__(self) -> int:
        return len(self.fits)


def fit_collection(sample: RegressionSample, collection: ModelCollection) -> FittedCollection:
    """Fit every model once; a nested wavelet collection shares one pyramid."""
    models = collection.models
    if (all(isinstance(m, bases.WaveletModel) for m in models)
            and sample.n >= 2 and (sample.n & (sample.n - 1)) == 0
            and len({m.h.tobytes() for m in models}) == 1
            and max(m.dim for m in models) <= sample.n):
        coeffs = transform.flatten(transform.analyze(sample.y, models[0].h))
        energy = float(np.dot(sample.y, sample.y))
        csum = np.cumsum(coeffs ** 2)
        fits = []
        risks = []
        for m in models:
            kept = coeffs[: m.dim]
            risk = max((energy - csum[m.dim - 1]) / sample.n, 0.0)
            fits.append(FitResult(m, kept / np.sqrt(sample.n), risk, "pyramid_fast", None))
            risks.append(risk)
        return FittedCollection(tuple(fits), np.array(risks))
    fits = []
    risks = []
    failed = []
    for m in models:
        try:
            f = fit_ls(sample, m)
        except SingularDesignError as exc:
            failed.append((m.dim, str(exc)))
            continue
        fits.append(f)
        risks.append(f.empirical_risk)
    if not fits:
        raise SingularDesignError("every model in the collection failed to fit")
    return FittedCollection(tuple(fits), np.array(risks), tuple(failed))


@dataclass(frozen=True)
class TruthProfile:
    betas: tuple
    biases: np.ndarray
    signal_norm2: float


def truth_profile(signal: TestSignal, collection: ModelCollection) -> TruthProfile:
    """Projection coefficients and biases of the truth for every model."""
    models = collection.models
    s = signal_grid_values(signal)
    norm2 = float(np.mean(s ** 2))
    if all(isinstance(m, bases.WaveletModel) for m in models) \
            and len({m.h.tobytes() for m in models}) == 1:
        full = transform.flatten(transform.analyze(s, models[0].h)) / np.sqrt(N_GRID)
        csum = np.cumsum(full ** 2)
        betas = tuple(full[: m.dim] for m in models)
        biases = np.array([max(norm2 - csum[m.dim - 1], 0.0) for m in models])
        return TruthProfile(betas, biases, norm2)
    betas = []
    biases = []
    for m in models:
        beta = project_truth(signal, m)
        w = m.density_on_grid()
        weights = 1.0 if w is None else w
        s_m = m.grid_atoms().T @ beta
        betas.append(beta)
        biases.append(float(np.mean((s - s_m) ** 2 * weights)))
    return TruthProfile(tuple(betas), np.array(biases), norm2)


def true_losses(fitted: FittedCollection, truth: TruthProfile) -> np.ndarray:
    """Per-model total loss ||s_hat - s*||^2 = bias + Parseval excess."""
    return np.array([
        truth.biases[i] + float(np.sum((fitted.fits[i].beta - truth.betas[i]) ** 2))
        for i in range(len(fitted.fits))
    ])


# ---------------------------------------------------------------------------
# fold schemes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldScheme:
    """Index blocks over the rank-ordered sample.

    ``blocks[j]`` is held out in fold j and the fit uses its complement,
    unless explicit ``train_blocks`` are given (test doubles use that).
    """

    V: int
    blocks: tuple
    train_blocks: Optional[tuple] = None

    @classmethod
    def interleaved(cls, n: int, V: int) -> "FoldScheme":
        """Rank-interleaved blocks; V=2 gives the even/odd-rank split."""
        if V < 2 or V > n:
            raise ValueError("need 2 <= V <= n")
        idx = np.arange(n)
        blocks = tuple(idx[idx % V == (j + 1) % V] for j in range(V))
        scheme = cls(V, blocks)
        scheme.validate(n)
        return scheme

    def validate(self, n: int) -> None:
        all_idx = np.concatenate(self.blocks)
        if len(all_idx) != n or len(np.unique(all_idx)) != n:
            raise ValueError("blocks do not partition the index set")
        for b in self.blocks:
            if abs(len(b) - n / self.V) >= 1:
                raise ValueError("block sizes must be within 1 of n/V")

    def heldout(self, j: int) -> np.ndarray:
        return self.blocks[j]

    def train(self, j: int, n: int) -> np.ndarray:
        if self.train_blocks is not None:
            return self.train_blocks[j]
        mask = np.ones(n, dtype=bool)
        mask[self.blocks[j]] = False
        return np.nonzero(mask)[0]


@dataclass(frozen=True)
class FoldFit:
    train_idx: np.ndarray
    x_train: np.ndarray
    y_train: np.ndarray
    fitted: tuple          # per-model fitted values at the training points
    train_risks: np.ndarray


def fold_fitted(sample: RegressionSample, collection: ModelCollection,
                folds: FoldScheme) -> tuple:
    """Per-fold training fits for every model (shared by 2FCV and pen2F)."""
    out = []
    for j in range(folds.V):
        held = folds.heldout(j)
        if len(held) == 0:
            raise FoldDegeneracyError(f"fold {j + 1} is empty")
        tr = folds.train(j, sample.n)
        if len(tr) == 0:
            raise FoldDegeneracyError(f"training set of fold {j + 1} is empty")
        x_t = sample.x[tr]
        y_t = sample.y[tr]
        n_t = len(tr)
        models = collection.models
        wavelet_fast = (all(isinstance(m, bases.WaveletModel) for m in models)
                        and n_t >= 2 and (n_t & (n_t - 1)) == 0
                        and len({m.h.tobytes() for m in models}) == 1
                        and max(m.dim for m in models) <= n_t)
        fitted = []
        risks = []
        if wavelet_fast:
            coeffs = transform.flatten(transform.analyze(y_t, models[0].h))
            energy = float(np.dot(y_t, y_t))
            csum = np.cumsum(coeffs ** 2)
            for m in models:
                values = transform.synthesize(
                    transform.unflatten(transform.truncate_flat(coeffs, m.dim), n_t), m.h)
                fitted.append(values)
                risks.append(max((energy - csum[m.dim - 1]) / n_t, 0.0))
        else:
            sub = RegressionSample(x_t, y_t, sample.meta)
            for m in models:
                f = fit_ls(sub, m, method="gram_exact")
                fitted.append(f.design_values)
                risks.append(f.empirical_risk)
        out.append(FoldFit(tr, x_t, y_t, tuple(fitted), np.array(risks)))
    return tuple(out)


# ---------------------------------------------------------------------------
# exact penalty path
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathSegment:
    alpha_lo: float
    alpha_hi: float
    index: int
    dim: int
    risk: float


@dataclass(frozen=True)
class PenaltyPath:
    """Breakpoints of alpha -> argmin_m {risk_m + alpha shape_m}.

    Segments are ordered by decreasing alpha; the selected dimension is
    nonincreasing in alpha and jumps upward as alpha crosses each
    breakpoint downward.
    """

    segments: tuple
    shapes: np.ndarray
    risks: np.ndarray
    dims: np.ndarray

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array([seg.alpha_lo for seg in self.segments[:-1]])

    def select_at(self, alpha: float) -> int:
        """Direct argmin of risk + alpha * shape (ties -> smaller dim)."""
        crit = self.risks + alpha * self.shapes
        return int(np.lexsort((self.dims, crit))[0])

    def segment_at(self, alpha: float) -> PathSegment:
        """Path segment covering alpha; at a breakpoint the smaller dim wins."""
        for seg in self.segments:
            if alpha >= seg.alpha_lo:
                return seg
        return self.segments[-1]

    def jumps(self) -> list:
        """(alpha, dim_above, dim_below) per breakpoint, alpha descending."""
        return [(above.alpha_lo, above.dim, below.dim)
                for above, below in zip(self.segments, self.segments[1:])]


def _lower_hull(shapes: np.ndarray, risks: np.ndarray, dims: np.ndarray) -> list:
    # lower-left convex hull of the (shape, risk) cloud: exactly the models
    # selected by risk + alpha * shape for some alpha >= 0
    order = np.lexsort((dims, risks, shapes))
    hull: list = []
    for i in order:
        if hull and shapes[i] == shapes[hull[-1]]:
            continue  # same shape: the smaller risk (then dim) already kept
        if hull and risks[i] >= risks[hull[-1]]:
            continue  # no risk improvement at a larger shape: never selected
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b when the chord a -> i passes at or below b
            lhs = (risks[i] - risks[a]) * (shapes[b] - shapes[a])
            rhs = (risks[b] - risks[a]) * (shapes[i] - shapes[a])
            if lhs <= rhs:
                hull.pop()
            else:
                break
        hull.append(int(i))
    return hull


def penalty_path(shapes, risks, dims, alphas="exact") -> PenaltyPath:
    """Breakpoint path of the penalized argmin.

    With ``alphas="exact"`` the breakpoints come from the lower convex
    hull of the (shape, risk) points; an explicit alpha grid instead
    scans the direct argmin (the cross-check used by the invariants).
    """
    shapes = np.asarray(shapes, dtype=float)
    risks = np.asarray(risks, dtype=float)
    dims = np.asarray(dims, dtype=int)
    if len(shapes) < 2:
        raise ValueError("need at least two models for a path")

    if isinstance(alphas, str):
        if alphas != "exact":
            raise ValueError(f"unknown path mode {alphas!r}")
        hull = _lower_hull(shapes, risks, dims)
        segments = []
        hi = np.inf
        for pos, i in enumerate(hull):
            if pos + 1 < len(hull):
                nxt = hull[pos + 1]
                lo = (risks[i] - risks[nxt]) / (shapes[nxt] - shapes[i])
            else:
                lo = 0.0
            segments.append(PathSegment(float(lo), float(hi), i, int(dims[i]), float(risks[i])))
            hi = lo
        return PenaltyPath(tuple(segments), shapes, risks, dims)

    grid = np.sort(np.asarray(alphas, dtype=float))[::-1]
    segments = []
    prev_idx: Optional[int] = None
    prev_alpha = np.inf
    hi = np.inf
    for a in grid:
        crit = risks + a * shapes
        idx = int(np.lexsort((dims, crit))[0])
        if prev_idx is None:
            prev_idx = idx
        elif idx != prev_idx:
            # close the old segment at the last grid point where it held
            segments.append(PathSegment(float(prev_alpha), float(hi), prev_idx,
                                        int(dims[prev_idx]), float(risks[prev_idx])))
            hi = prev_alpha
            prev_idx = idx
        prev_alpha = a
    segments.append(PathSegment(0.0, float(hi), prev_idx,
                                int(dims[prev_idx]), float(risks[prev_idx])))
    return PenaltyPath(tuple(segments), shapes, risks, dims)


# ---------------------------------------------------------------------------
# outcomes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceEntry:
    dim: int
    emp_risk: float
    penalty: float
    criterion: float


@dataclass(frozen=True)
class SelectionOutcome:
    method: str
    chosen_index: int
    chosen_dim: int
    trace: tuple
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "kind": "selection_outcome",
            "method": self.method,
            "chosen_dim": int(self.chosen_dim),
            "trace": [{"dim": int(t.dim), "emp_risk": float(t.emp_risk),
                       "penalty": float(t.penalty), "criterion": float(t.criterion)}
                      for t in self.trace],
            "diagnostics": _jsonable(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _argmin_tie_smaller(criteria: np.ndarray, dims: np.ndarray) -> int:
    return int(np.lexsort((dims, criteria))[0])


def _outcome(method: str, dims, emp_risks, penalties, diagnostics) -> SelectionOutcome:
    dims = np.asarray(dims, dtype=int)
    emp_risks = np.asarray(emp_risks, dtype=float)
    penalties = np.asarray(penalties, dtype=float)
    crit = emp_risks + penalties
    idx = _argmin_tie_smaller(crit, dims)
    trace = tuple(TraceEntry(int(d), float(r), float(p), float(c))
                  for d, r, p, c in zip(dims, emp_risks, penalties, crit))
    return SelectionOutcome(method, idx, int(dims[idx]), trace, diagnostics)


def oracle_select(sample: RegressionSample, collection: ModelCollection,
                  signal: TestSignal, fits: Optional[FittedCollection] = None,
                  truth: Optional[TruthProfile] = None) -> SelectionOutcome:
    """Minimize the true loss ||s_hat_m - s*||^2 over the collection."""
    fits = fits or fit_collection(sample, collection)
    truth = truth or truth_profile(signal, collection)
    losses = true_losses(fits, truth)
    dims = np.array([f.model.dim for f in fits.fits], dtype=int)
    idx = _argmin_tie_smaller(losses, dims)
    trace = tuple(TraceEntry(int(d), float(fits.emp_risks[i]), 0.0, float(losses[i]))
                  for i, d in enumerate(dims))
    return SelectionOutcome("oracle", idx, int(dims[idx]), trace,
                            {"losses": losses})


def dimension_jump(path: PenaltyPath):
    """Calibrated minimal level: breakpoint with the largest dimension drop.

    Returns (alpha_min, jump_table, no_jump_flag); ties in the drop go to
    the largest alpha, and the flag is set when the largest relative drop
    is below a factor two.
    """
    jumps = path.jumps()
    if not jumps:
        return 0.0, [], True
    drops = [below - above for _, above, below in jumps]
    best = int(np.argmax(drops))  # jumps are ordered by decreasing alpha
    alpha_min = jumps[best][0]
    ratio = jumps[best][2] / jumps[best][1]
    return float(alpha_min), jumps, bool(ratio < 2.0)


def select_sh(sample: RegressionSample, collection: ModelCollection,
              fits: Optional[FittedCollection] = None,
              shape: Optional[np.ndarray] = None) -> SelectionOutcome:
    """Slope heuristics: pen(m) = 2 alpha_min_hat * D_m / n via the dimension jump."""
    fits = fits or fit_collection(sample, collection)
    if len(fits) < 3:
        raise ValueError("slope heuristics needs at least 3 fitted models")
    dims = np.array([f.model.dim for f in fits.fits], dtype=int)
    shape = dims / sample.n if shape is None else np.asarray(shape, dtype=float)
    path = penalty_path(shape, fits.emp_risks, dims)
    alpha_min, jumps, no_jump = dimension_jump(path)
    penalties = 2.0 * alpha_min * shape
    return _outcome("sh", dims, fits.emp_risks, penalties, {
        "alpha_min": alpha_min,
        "jumps": jumps,
        "no_jump": no_jump,
        "path": [(s.alpha_lo, s.alpha_hi, s.dim) for s in path.segments],
    })


def select_cp(sample: RegressionSample, collection: ModelCollection,
              fits: Optional[FittedCollection] = None) -> SelectionOutcome:
    """Mallows' Cp: pen(m) = 2 sigma2_hat D_m / n with the saturated-model
    variance estimator sigma2_hat = d^2(Y, m_{n/2}) / (n - n/2)."""
    fits = fits or fit_collection(sample, collection)
    dims = np.array([f.model.dim for f in fits.fits], dtype=int)
    n = sample.n
    if dims.max() != n // 2:
        raise ValueError("Cp needs the saturated model of dimension n/2 in the collection")
    largest = int(np.argmax(dims))
    sigma2 = fits.emp_risks[largest] * n / (n - n // 2)
    penalties = 2.0 * sigma2 * dims / n
    return _outcome("cp", dims, fits.emp_risks, penalties, {"sigma2": float(sigma2)})


def _heldout_prediction(x_eval: np.ndarray, fold: FoldFit, model_idx: int) -> np.ndarray:
    # linear interpolation in x between training fitted values, constant
    # extrapolation at the boundary
    return np.interp(x_eval, fold.x_train, fold.fitted[model_idx])


def select_vfcv(sample: RegressionSample, collection: ModelCollection,
                folds: FoldScheme, fits: Optional[FittedCollection] = None,
                fold_fits: Optional[tuple] = None) -> SelectionOutcome:
    """V-fold cross-validation of the interpolated held-out risk."""
    fits = fits or fit_collection(sample, collection)
    fold_fits = fold_fits or fold_fitted(sample, collection, folds)
    dims = np.array([f.model.dim for f in fits.fits], dtype=int)
    per_fold = np.zeros((folds.V, len(dims)))
    for j, fold in enumerate(fold_fits):
        held = folds.heldout(j)
        x_h = sample.x[held]
        y_h = sample.y[held]
        for i in range(len(dims)):
            pred = _heldout_prediction(x_h, fold, i)
            per_fold[j, i] = float(np.mean((y_h - pred) ** 2))
    crit = per_fold.mean(axis=0)
    penalties = crit - fits.emp_risks  # implied penalty, for the trace
    return _outcome("vfcv", dims, fits.emp_risks, penalties,
                    {"per_fold_risks": per_fold})


def select_penvf(sample: RegressionSample, collection: ModelCollection,
                 folds: FoldScheme, fits: Optional[FittedCollection] = None,
                 fold_fits: Optional[tuple] = None) -> SelectionOutcome:
    """V-fold penalization: empirical risk plus the resampled ideal penalty
    pen_VF(m) = (V-1)/V sum_j [P_n gamma(s_m^(-j)) - P_n^(-j) gamma(s_m^(-j))]."""
    fits = fits or fit_collection(sample, collection)
    fold_fits = fold_fits or fold_fitted(sample, collection, folds)
    dims = np.array([f.model.dim for f in fits.fits], dtype=int)
    pen = np.zeros(len(dims))
    terms = np.zeros((folds.V, len(dims)))
    for j, fold in enumerate(fold_fits):
        for i in range(len(dims)):
            pred_all = _heldout_prediction(sample.x, fold, i)
            full_risk = float(np.mean((sample.y - pred_all) ** 2))
            terms[j, i] = full_risk - fold.train_risks[i]
    pen = (folds.V - 1) / folds.V * terms.sum(axis=0)
    return _outcome("penvf", dims, fits.emp_risks, pen,
                    {"per_fold_terms": terms})
