"""Damped least squares with curvature-based uncertainties.

Every fitter in the package funnels through :func:`least_squares_fit`, which
wraps MINPACK's Levenberg-Marquardt (``scipy.optimize.least_squares`` with
``method="lm"``) and turns the Jacobian at the optimum into 1-sigma errors
scaled by the residual variance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

MAX_ITER = 500
RTOL = 1e-10


@dataclass(frozen=True)
class Param:
    value: float
    sigma: float

    def as_dict(self) -> dict:
        return {"value": _finite_or_none(self.value), "sigma": _finite_or_none(self.sigma)}


def _finite_or_none(x):
    x = float(x)
    return x if np.isfinite(x) else None


@dataclass(frozen=True)
class FitResult:
    """Outcome of one fit.

    ``params`` maps names to :class:`Param`; derived quantities (e.g. a
    correlation ratio) are included alongside the raw model parameters.
    ``n_iterations`` counts residual evaluations of the optimizer.
    """

    model: str
    params: dict[str, Param]
    residual_rms: float
    converged: bool
    n_iterations: int
    exclusion_windows: tuple[tuple[float, float], ...] = ()
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return self.params[name].value

    def sigma(self, name: str) -> float:
        return self.params[name].sigma

    def values(self) -> dict[str, float]:
        return {k: p.value for k, p in self.params.items()}

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {k: p.as_dict() for k, p in self.params.items()},
            "residual_rms": _finite_or_none(self.residual_rms),
            "converged": bool(self.converged),
            "n_iterations": int(self.n_iterations),
            "exclusion_windows": [[float(a), float(b)] for a, b in self.exclusion_windows],
            "metadata": _jsonable(self.metadata),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _finite_or_none(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def covariance(jac: np.ndarray, residuals: np.ndarray, rcond: float = 1e-12) -> np.ndarray:
    """``s^2 (J^T J)^-1`` with ``s^2 = chi^2 / dof``.

    Directions the data cannot resolve (singular values below ``rcond`` times
    the largest) get infinite variance instead of a silently huge number.
    """
    n, p = jac.shape
    dof = max(n - p, 1)
    s2 = float(residuals @ residuals) / dof
    _, sv, vt = np.linalg.svd(jac, full_matrices=False)
    if sv.size == 0 or sv[0] == 0:
        return np.full((p, p), np.inf)
    cov = np.zeros((p, p))
    bad = sv < rcond * sv[0]
    for k, s in enumerate(sv):
        if bad[k]:
            continue
        cov += np.outer(vt[k], vt[k]) / s**2
    cov *= s2
    if np.any(bad):
        for k in np.flatnonzero(bad):
            touched = np.abs(vt[k]) > 1e-8
            cov[np.ix_(touched, touched)] = np.inf
    return cov


def least_squares_fit(
    residual: Callable[[np.ndarray], np.ndarray],
    p0: Sequence[float],
    names: Sequence[str],
    model: str,
    x_scale: Sequence[float] | str = "jac",
    max_iter: int = MAX_ITER,
    rtol: float = RTOL,
    exclusion_windows=(),
    metadata: dict | None = None,
) -> tuple[FitResult, np.ndarray]:
    """Run LM on ``residual`` and package the result.

    Returns the :class:`FitResult` and the full covariance matrix.
    """
    p0 = np.asarray(p0, dtype=float)
    n_res = len(residual(p0))
    if n_res < len(p0):
        from ..errors import InsufficientDataError

        raise InsufficientDataError(f"{model}: {n_res} residuals for {len(p0)} parameters")
    with np.errstate(all="ignore"):
        sol = least_squares(
            residual,
            p0,
            method="lm",
            xtol=rtol,
            ftol=rtol,
            gtol=rtol,
            x_scale=x_scale,
            max_nfev=max_iter * (len(p0) + 1),
        )
    res = sol.fun
    cov = covariance(sol.jac, res)
    sig = np.sqrt(np.clip(np.diag(cov), 0, None))
    converged = bool(sol.success and np.all(np.isfinite(sol.x)) and np.all(np.isfinite(res)))
    result = FitResult(
        model=model,
        params={n: Param(float(v), float(s)) for n, v, s in zip(names, sol.x, sig)},
        residual_rms=float(np.sqrt(np.mean(res**2))) if len(res) else float("nan"),
        converged=converged,
        n_iterations=int(sol.nfev),
        exclusion_windows=tuple((float(a), float(b)) for a, b in exclusion_windows),
        metadata=dict(metadata or {}),
    )
    return result, cov


def derived_param(value: float, grad: np.ndarray, cov: np.ndarray) -> Param:
    """First-order error propagation for a function of the fit parameters."""
    grad = np.asarray(grad, dtype=float)
    mask = grad != 0
    sub = cov[np.ix_(mask, mask)]
    if not np.all(np.isfinite(sub)):
        return Param(float(value), float("inf"))
    var = float(grad[mask] @ sub @ grad[mask])
    return Param(float(value), float(np.sqrt(max(var, 0.0))))
