"""Least-squares projection estimators and risk accounting.

Fitting dispatches between two routes: an exact Gram solve of the
empirical normal equations (any model, any design) and the fast pyramid
on rank-ordered responses (wavelet models, dyadic sample sizes). On an
equispaced dyadic design the two routes coincide exactly because the
discrete pyramid atoms are the orthonormal basis of that design.

True-measure quantities (bias, excess risk, sup-norm deviation) are
integrated on the fixed 2^14-point reference grid; the quadrature error
is O(2^-14) for the piecewise-smooth signals used here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from . import bases, transform
from .bases import N_GRID, reference_grid
from .signals import NoiseScenario, RegressionSample, TestSignal, eval_signal

__all__ = [
    "SingularDesignError",
    "FitResult",
    "RiskReport",
    "CmEstimate",
    "fit_ls",
    "project_truth",
    "signal_grid_values",
    "excess_risks",
    "compute_Cm",
    "epsilon_n",
]

_COND_LIMIT = 1e12


class SingularDesignError(ValueError):
    """Empirical Gram matrix is singular for this sample (model unusable)."""


@dataclass(frozen=True)
class FitResult:
    model: object
    beta: np.ndarray
    empirical_risk: float
    method: str
    design_values: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.beta)


@dataclass(frozen=True)
class RiskReport:
    bias: float
    excess: float
    total: float
    empirical_excess: float
    sup_dev: float
    c_m: Optional[float] = None
    epsilon_n: Optional[float] = None


def _is_dyadic(n: int) -> bool:
    return n >= 2 and (n & (n - 1)) == 0


def _pyramid_applicable(sample: RegressionSample, model) -> bool:
    return (isinstance(model, bases.WaveletModel)
            and _is_dyadic(sample.n)
            and model.dim <= sample.n)


def _fit_pyramid(sample: RegressionSample, model) -> FitResult:
    n = sample.n
    coeffs = transform.flatten(transform.analyze(sample.y, model.h))
    kept = coeffs[: model.dim]
    beta = kept / np.sqrt(n)
    # Parseval on the discrete atoms: residual energy is the dropped tail
    risk = float((np.dot(sample.y, sample.y) - np.dot(kept, kept)) / n)
    values = transform.synthesize(
        transform.unflatten(transform.truncate_flat(coeffs, model.dim), n), model.h)
    return FitResult(model, beta, max(risk, 0.0), "pyramid_fast", values)


def design_matrix(sample: RegressionSample, model) -> np.ndarray:
    """Design matrix at the sample points, in function units.

    For a wavelet model on an exactly equispaced dyadic design this is
    the discrete pyramid basis (so the Gram is the identity); otherwise
    atoms are evaluated pointwise.
    """
    n = sample.n
    if isinstance(model, bases.WaveletModel) and _is_dyadic(n) and model.dim <= n:
        mid = (np.arange(n) + 0.5) / n
        if np.array_equal(sample.x, mid) or np.array_equal(sample.x, np.arange(n) / n):
            return model.discrete_design_matrix(n)
    return model.basis_matrix(sample.x)


def _fit_gram(sample: RegressionSample, model) -> FitResult:
    phi = design_matrix(sample, model)
    n = sample.n
    gram = phi.T @ phi / n
    if np.linalg.cond(gram) > _COND_LIMIT:
        raise SingularDesignError(
            f"empirical Gram condition number exceeds {_COND_LIMIT:g} "
            f"for dimension {model.dim} at n={n}")
    rhs = phi.T @ sample.y / n
    try:
        cho = scipy.linalg.cho_factor(gram)
        beta = scipy.linalg.cho_solve(cho, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise SingularDesignError(str(exc)) from exc
    values = phi @ beta
    resid = sample.y - values
    return FitResult(model, beta, float(np.dot(resid, resid) / n), "gram_exact", values)


def fit_ls(sample: RegressionSample, model, method: str = "auto") -> FitResult:
    """Empirical-risk minimizer of the least-squares contrast over ``model``."""
    if sample.n < model.dim:
        raise SingularDesignError(
            f"sample size {sample.n} below model dimension {model.dim}")
    if method == "auto":
        method = "pyramid_fast" if _pyramid_applicable(sample, model) else "gram_exact"
    if method == "pyramid_fast":
        if not _pyramid_applicable(sample, model):
            raise ValueError("pyramid path needs a wavelet model and dyadic n >= dim")
        return _fit_pyramid(sample, model)
    if method == "gram_exact":
        return _fit_gram(sample, model)
    raise ValueError(f"unknown fit method {method!r}")


def signal_grid_values(signal: TestSignal) -> np.ndarray:
    return eval_signal(signal, reference_grid())


def project_truth(signal: TestSignal, model) -> np.ndarray:
    """Coefficients of the orthogonal projection of the signal onto the model.

    Wavelet models truncate the fine-scale pyramid of the gridded signal;
    other families integrate signal * atom (* density) on the grid. The
    two routes agree because the fine pyramid is the grid quadrature in
    the discrete atom basis.
    """
    s = signal_grid_values(signal)
    if isinstance(model, bases.WaveletModel):
        coeffs = transform.flatten(transform.analyze(s, model.h))
        return coeffs[: model.dim] / np.sqrt(N_GRID)
    atoms = model.grid_atoms()
    w = model.density_on_grid()
    integrand = atoms if w is None else atoms * w
    return integrand @ s / N_GRID


def _grid_function(model, beta: np.ndarray) -> np.ndarray:
    if isinstance(model, bases.WaveletModel):
        flat = np.zeros(N_GRID)
        flat[: model.dim] = beta * np.sqrt(N_GRID)
        return transform.synthesize(transform.unflatten(flat, N_GRID), model.h)
    return model.grid_atoms().T @ beta


def _model_design_values(sample: RegressionSample, model, beta: np.ndarray,
                         fit_method: str) -> np.ndarray:
    """Design-point values of the model element with coefficients beta,
    represented in the same discrete basis the fit used."""
    if fit_method == "pyramid_fast":
        flat = np.zeros(sample.n)
        flat[: model.dim] = beta * np.sqrt(sample.n)
        return transform.synthesize(transform.unflatten(flat, sample.n), model.h)
    return design_matrix(sample, model) @ beta


def excess_risks(sample: RegressionSample, model, signal: TestSignal,
                 fit: Optional[FitResult] = None, c_m: Optional[float] = None,
                 L0: float = 1.0) -> RiskReport:
    """Full risk decomposition of a fitted model against the known truth."""
    if fit is None:
        fit = fit_ls(sample, model)
    beta_m = project_truth(signal, model)
    excess = float(np.sum((fit.beta - beta_m) ** 2))

    s = signal_grid_values(signal)
    w = model.density_on_grid()
    weights = np.ones(N_GRID) if w is None else w
    s_m = _grid_function(model, beta_m)
    bias = float(np.mean((s - s_m) ** 2 * weights))
    s_hat = _grid_function(model, fit.beta)
    total = float(np.mean((s - s_hat) ** 2 * weights))
    sup_dev = float(np.max(np.abs(s_hat - s_m)))

    proj_values = _model_design_values(sample, model, beta_m, fit.method)
    resid = sample.y - proj_values
    empirical_excess = float(np.dot(resid, resid) / sample.n - fit.empirical_risk)

    eps = epsilon_n(sample.n, model.dim, L0) if c_m is not None else None
    return RiskReport(bias, excess, total, max(empirical_excess, 0.0), sup_dev,
                      c_m=c_m, epsilon_n=eps)


@dataclass(frozen=True)
class CmEstimate:
    value: float
    stderr: float
    n_mc: int


def compute_Cm(signal: TestSignal, noise: NoiseScenario, model,
               n_mc: int = 100_000, seed: int = 0, n_batches: int = 50) -> CmEstimate:
    """Monte-Carlo estimate of sum_k Var((Y - s_m(X)) phi_k(X)) under the
    uniform design, with a batch standard error."""
    if n_mc < 10_000:
        raise ValueError("need n_mc >= 10^4")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & ((1 << 64) - 1))))
    beta_m = project_truth(signal, model)
    s_m_grid = _grid_function(model, beta_m)
    x = rng.random(n_mc)
    eps = rng.standard_normal(n_mc)
    idx = np.clip((x * N_GRID).astype(int), 0, N_GRID - 1)
    resid = eval_signal(signal, x) - s_m_grid[idx] + np.asarray(noise.sigma(x), dtype=float) * eps
    if isinstance(model, bases.WaveletModel):
        phi = model.grid_atoms()[:, idx].T
    else:
        phi = model.basis_matrix(x)
    z = resid[:, None] * phi

    total = float(np.sum(np.var(z, axis=0, ddof=1)))
    batch = n_mc // n_batches
    vals = [float(np.sum(np.var(z[i * batch:(i + 1) * batch], axis=0, ddof=1)))
            for i in range(n_batches)]
    stderr = float(np.std(vals, ddof=1) / np.sqrt(n_batches))
    return CmEstimate(total, stderr, n_mc)


def epsilon_n(n: int, dim: int, L0: float = 1.0) -> float:
    """Concentration radius L0 * max((ln n / D)^(1/4), (D ln n / n)^(1/4))."""
    ln = np.log(n)
    return float(L0 * max((ln / dim) ** 0.25, (dim * ln / n) ** 0.25))
