"""Baseline recovery of the cascaded channel from sounding observations.

Three routes share one MeasurementModel: the minimum-norm least-squares
solution, a norm-regularized gradient descent, and a proximal-gradient solver
with singular-value soft-thresholding for the nuclear-norm-regularized
objective. Each is a deterministic function of its inputs; thin sklearn-style
wrappers batch them over sample sets.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .channel import unvectorize
from .errors import DivergenceError
from .validation import (
    as_complex_batch,
    check_nonnegative_real,
    check_positive_int,
    check_positive_real,
)

_PINV_RCOND = 1e-10


@dataclass(frozen=True)
class GdConfig:
    """Settings for the regularized gradient descent iteration.

    step_size None defers to 0.9 over the Gram spectral norm (power-iteration
    estimate); when given it must lie in (0, 1). The iteration stops once the
    iterate change drops below tol relative to the iterate norm.
    """

    step_size: float | None = None
    reg_weight: float = 0.0
    epsilon: float = 1e-12
    max_iters: int = 5000
    tol: float = 1e-8

    def __post_init__(self):
        if self.step_size is not None and not 0.0 < self.step_size < 1.0:
            raise ValueError(f"step_size must lie in (0, 1), got {self.step_size}")
        check_nonnegative_real(self.reg_weight, "reg_weight")
        check_positive_real(self.epsilon, "epsilon")
        check_positive_int(self.max_iters, "max_iters")
        check_positive_real(self.tol, "tol")


@dataclass(frozen=True)
class SvtConfig:
    """Settings for the singular-value-thresholding proximal solver.

    step_size None defers to 0.99 over the Gram spectral norm; an explicit
    value is checked against 1 over the power-iteration estimate at solve
    time, the descent condition.
    """

    reg_weight: float = 0.0
    step_size: float | None = None
    max_iters: int = 5000
    tol: float = 1e-8

    def __post_init__(self):
        check_nonnegative_real(self.reg_weight, "reg_weight")
        if self.step_size is not None:
            check_positive_real(self.step_size, "step_size")
        check_positive_int(self.max_iters, "max_iters")
        check_positive_real(self.tol, "tol")


def spectral_norm(mat, n_iters=50):
    """Largest eigenvalue of a Hermitian PSD matrix by power iteration.

    Deterministic: the start vector comes from a fixed-seed generator.
    """
    mat = np.asarray(mat)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(mat.shape[1])
    if np.iscomplexobj(mat):
        v = v + 1j * rng.standard_normal(mat.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iters):
        w = mat @ v
        lam = float(np.real(np.vdot(v, w)))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return lam


def lambda_reference(sigma2, n_bs, n_ris, n_combiner, n_uses):
    """Reference regularization weight for the norm-regularized objective.

    Scales linearly with the noise variance; uses the natural logarithm.
    """
    check_nonnegative_real(sigma2, "sigma2")
    m = check_positive_int(n_bs, "n_bs")
    n = check_positive_int(n_ris, "n_ris")
    n_w = check_positive_int(n_combiner, "n_combiner")
    k = check_positive_int(n_uses, "n_uses")
    return 4.0 * sigma2 * math.sqrt(m * n * (m + n) * math.log(m + n) / (n_w * k))


def ls_estimate(model, y):
    """Minimum-norm least-squares solution of y = Psi h.

    Computed via SVD with singular values below 1e-10 of the largest treated
    as zero; unique when Psi has full column rank, otherwise the smallest-norm
    residual minimizer.
    """
    y = np.asarray(y, dtype=np.complex128)
    sol, _, _, _ = np.linalg.lstsq(model.psi, y, rcond=_PINV_RCOND)
    return sol


def _objective_l2(model, y, h, reg_weight):
    resid = y - model.psi @ h
    return float(np.real(np.vdot(resid, resid))) + reg_weight * float(
        np.linalg.norm(h)
    )


def reg_gradient_descent(model, y, cfg=None, h0=None, with_history=False):
    """Gradient descent on the squared residual plus a weighted iterate norm.

    Each iteration steps against the residual gradient and shrinks by
    reg_weight * h / (||h|| + eps_i), where eps_i is the configured epsilon
    only while the iterate is exactly zero. Returns the final iterate (and
    the per-iteration objective values when with_history is set).
    """
    cfg = cfg or GdConfig()
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (model.n_obs,):
        raise ValueError(f"y must have shape ({model.n_obs},), got {y.shape}")
    if h0 is None:
        h = np.zeros(model.dim, dtype=np.complex128)
    else:
        h = np.array(h0, dtype=np.complex128)
        if h.shape != (model.dim,):
            raise ValueError(f"h0 must have shape ({model.dim},), got {h.shape}")
    beta = cfg.step_size
    if beta is None:
        beta = min(0.9 / spectral_norm(model.gram), 0.99)
    stat = model.psi.conj().T @ y
    history = [_objective_l2(model, y, h, cfg.reg_weight)]
    for it in range(1, cfg.max_iters + 1):
        h_new = h + (-beta) * (model.gram @ h) + beta * stat
        if cfg.reg_weight > 0.0:
            norm = np.linalg.norm(h)
            eps_i = cfg.epsilon if norm == 0.0 else 0.0
            h_new = h_new - (beta * cfg.reg_weight) * h / (norm + eps_i)
        if not np.all(np.isfinite(h_new.view(np.float64))):
            raise DivergenceError(
                f"gradient descent diverged at iteration {it}", iteration=it
            )
        change = np.linalg.norm(h_new - h)
        h = h_new
        if with_history:
            history.append(_objective_l2(model, y, h, cfg.reg_weight))
        if change < cfg.tol * max(np.linalg.norm(h), 1.0):
            break
    if with_history:
        return h, history
    return h


def nuclear_norm(mat):
    """Sum of singular values."""
    return float(np.linalg.svd(mat, compute_uv=False).sum())


def _objective_nuclear(model, y, h, reg_weight, nuc):
    resid = y - model.psi @ h
    return float(np.real(np.vdot(resid, resid))) + reg_weight * nuc


def svt_nuclear_solve(model, y, cfg=None, with_history=False):
    """Proximal gradient for the nuclear-norm-regularized residual objective.

    A gradient step on the squared residual is followed by soft-thresholding
    the singular values of the matricized iterate at step * reg_weight / 2,
    which is the proximal map of the nuclear-norm term. The objective is
    non-increasing for step sizes within the descent condition.
    """
    cfg = cfg or SvtConfig()
    y = np.asarray(y, dtype=np.complex128)
    if y.shape != (model.n_obs,):
        raise ValueError(f"y must have shape ({model.n_obs},), got {y.shape}")
    lam_max = spectral_norm(model.gram)
    eta = cfg.step_size
    if eta is None:
        eta = 0.99 / lam_max
    elif lam_max > 0.0 and eta > 1.0 / lam_max:
        raise ValueError(
            f"step_size {eta} violates the descent bound {1.0 / lam_max:.6g}"
        )
    m, n = model.n_bs, model.n_ris
    h = np.zeros(model.dim, dtype=np.complex128)
    history = [_objective_nuclear(model, y, h, cfg.reg_weight, 0.0)]
    for it in range(1, cfg.max_iters + 1):
        grad_half = model.psi.conj().T @ (model.psi @ h - y)
        mat = unvectorize(h - eta * grad_half, m, n)
        u, s, vh = np.linalg.svd(mat, full_matrices=False)
        s_thr = np.maximum(s - eta * cfg.reg_weight / 2.0, 0.0)
        mat_new = (u * s_thr) @ vh
        h_new = mat_new.ravel(order="F")
        if not np.all(np.isfinite(h_new.view(np.float64))):
            raise DivergenceError(
                f"SVT iteration diverged at iteration {it}", iteration=it
            )
        change = np.linalg.norm(h_new - h)
        h = h_new
        if with_history:
            history.append(
                _objective_nuclear(model, y, h, cfg.reg_weight, float(s_thr.sum()))
            )
        if change < cfg.tol * max(np.linalg.norm(h), 1.0):
            break
    if with_history:
        return h, history
    return h


def _predict_serial(solve_one, obs, dim, n_jobs):
    out = np.empty((obs.shape[0], dim), dtype=np.complex128)
    if n_jobs is not None and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            for i, sol in enumerate(pool.map(solve_one, obs)):
                out[i] = sol
    else:
        for i in range(obs.shape[0]):
            out[i] = solve_one(obs[i])
    return out


class LeastSquaresEstimator(BaseEstimator):
    """Batch minimum-norm least squares over a fixed measurement model."""

    def __init__(self, model=None):
        self.model = model

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("a MeasurementModel is required")
        self.pinv_ = np.linalg.pinv(self.model.psi, rcond=_PINV_RCOND)
        return self

    def predict(self, X):
        if not hasattr(self, "pinv_"):
            raise NotFittedError("call fit before predict")
        obs, was_1d = as_complex_batch(X, self.model.n_obs)
        est = obs @ self.pinv_.T
        return est[0] if was_1d else est


class GradientDescentEstimator(BaseEstimator):
    """Batch wrapper around the regularized gradient descent iteration."""

    def __init__(
        self,
        model=None,
        step_size=None,
        reg_weight=0.0,
        epsilon=1e-12,
        max_iters=5000,
        tol=1e-8,
        n_jobs=1,
    ):
        self.model = model
        self.step_size = step_size
        self.reg_weight = reg_weight
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.tol = tol
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("a MeasurementModel is required")
        step = self.step_size
        if step is None:
            step = min(0.9 / spectral_norm(self.model.gram), 0.99)
        self.cfg_ = GdConfig(
            step_size=step,
            reg_weight=self.reg_weight,
            epsilon=self.epsilon,
            max_iters=self.max_iters,
            tol=self.tol,
        )
        return self

    def predict(self, X):
        if not hasattr(self, "cfg_"):
            raise NotFittedError("call fit before predict")
        obs, was_1d = as_complex_batch(X, self.model.n_obs)
        est = _predict_serial(
            lambda row: reg_gradient_descent(self.model, row, self.cfg_),
            obs,
            self.model.dim,
            self.n_jobs,
        )
        return est[0] if was_1d else est


class NuclearNormEstimator(BaseEstimator):
    """Batch wrapper around the singular-value-thresholding solver."""

    def __init__(
        self, model=None, reg_weight=0.0, step_size=None, max_iters=5000,
        tol=1e-8, n_jobs=1,
    ):
        self.model = model
        self.reg_weight = reg_weight
        self.step_size = step_size
        self.max_iters = max_iters
        self.tol = tol
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        if self.model is None:
            raise ValueError("a MeasurementModel is required")
        self.cfg_ = SvtConfig(
            reg_weight=self.reg_weight,
            step_size=self.step_size,
            max_iters=self.max_iters,
            tol=self.tol,
        )
        return self

    def predict(self, X):
        if not hasattr(self, "cfg_"):
            raise NotFittedError("call fit before predict")
        obs, was_1d = as_complex_batch(X, self.model.n_obs)
        est = _predict_serial(
            lambda row: svt_nuclear_solve(self.model, row, self.cfg_),
            obs,
            self.model.dim,
            self.n_jobs,
        )
        return est[0] if was_1d else est
