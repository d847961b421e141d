"""Curve models with an estimator interface.

Each model follows the scikit-learn conventions: hyperparameters are set in
``__init__``, ``fit(x, y)`` returns ``self`` and stores learned state in
trailing-underscore attributes (``coef_``, ``result_``), ``predict(x)``
evaluates the fitted curve, and ``get_params``/``set_params`` come from
:class:`sklearn.base.BaseEstimator`.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy.signal import find_peaks, peak_widths
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..errors import InsufficientDataError, UnidentifiableError
from ._lsq import FitResult, Param, derived_param, least_squares_fit
from ._validation import check_windows, check_xy, keep_mask

DEFAULT_G2_EXCLUSION = ((12.0, 22.0), (-22.0, -12.0))


class _CurveModel(BaseEstimator):
    model_name = "curve"

    def _names(self) -> list[str]:
        raise NotImplementedError

    def _initial(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def _evaluate(self, p, x) -> np.ndarray:
        raise NotImplementedError

    def _min_points(self) -> int:
        return len(self._names()) + 1

    def _finalize(self, result: FitResult, cov: np.ndarray, x, y) -> tuple[FitResult, np.ndarray]:
        return result, np.array([result.params[n].value for n in self._names()])

    def _windows(self):
        return check_windows(getattr(self, "exclusion", ()))

    def _range_mask(self, x) -> np.ndarray:
        return np.ones(len(x), dtype=bool)

    def fit(self, x, y):
        x, y = check_xy(x, y, name=self.model_name)
        windows = self._windows()
        keep = keep_mask(x, windows) & self._range_mask(x)
        xm, ym = x[keep], y[keep]
        if len(xm) < self._min_points():
            raise InsufficientDataError(
                f"{self.model_name}: {len(xm)} usable points, need at least {self._min_points()}"
            )
        p0 = self._initial(xm, ym)
        result, cov = least_squares_fit(
            lambda p: self._evaluate(p, xm) - ym,
            p0,
            self._names(),
            self.model_name,
            exclusion_windows=windows,
            metadata={"n_points": int(len(xm)), "n_excluded": int((~keep).sum())},
        )
        self.result_, self.coef_ = self._finalize(result, cov, xm, ym)
        self.covariance_ = cov
        return self

    def predict(self, x):
        check_is_fitted(self, "coef_")
        return self._evaluate(self.coef_, np.asarray(x, dtype=float))


# --------------------------------------------------------------------------


def lorentzian(x, amplitude, center, fwhm):
    return amplitude / (1.0 + (2.0 * (x - center) / fwhm) ** 2)


def _index_to_x(x, idx):
    return np.interp(idx, np.arange(len(x)), x)


def guess_peaks(x, y, n_peaks: int, baseline: float | None = None) -> list[tuple[float, float, float]]:
    """``(amplitude, center, fwhm)`` guesses for the ``n_peaks`` most prominent maxima."""
    base = float(np.min(y)) if baseline is None else baseline
    yy = y - base
    peaks, props = find_peaks(yy, prominence=0)
    guesses = []
    if peaks.size:
        order = np.argsort(props["prominences"])[::-1][:n_peaks]
        sel = np.sort(peaks[order])
        widths, _, left, right = peak_widths(yy, sel, rel_height=0.5)
        for p, lo, hi in zip(sel, left, right):
            w = _index_to_x(x, hi) - _index_to_x(x, lo)
            guesses.append((float(yy[p]), float(x[p]), float(max(w, np.min(np.diff(x))))))
    if not guesses:
        p = int(np.argmax(yy))
        guesses.append((float(yy[p]), float(x[p]), float((x[-1] - x[0]) / 10)))
    while len(guesses) < n_peaks:
        a, c, w = guesses[-1]
        guesses.append((0.5 * a, c + 2 * w, w))
    return guesses


class LorentzianModel(_CurveModel):
    """Sum of ``n_peaks`` Lorentzians on a constant baseline.

    Parameters are ``baseline`` and, per peak ``k`` (sorted by center after
    the fit), ``amplitude_k`` (height above baseline), ``center_k`` and
    ``fwhm_k``.  ``init`` is an optional list of ``(amplitude, center, fwhm)``
    guesses; otherwise guesses come from peak finding.
    """

    model_name = "lorentzian"

    def __init__(self, n_peaks: int = 1, init=None, exclusion=()):
        self.n_peaks = n_peaks
        self.init = init
        self.exclusion = exclusion

    def _names(self):
        names = ["baseline"]
        for k in range(self.n_peaks):
            names += [f"amplitude_{k}", f"center_{k}", f"fwhm_{k}"]
        return names

    def _min_points(self):
        return 9 * self.n_peaks

    def _initial(self, x, y):
        if self.n_peaks < 1:
            raise InsufficientDataError("n_peaks must be >= 1")
        base = float(np.percentile(y, 5))
        guesses = list(self.init) if self.init is not None else guess_peaks(x, y, self.n_peaks, base)
        if len(guesses) != self.n_peaks:
            raise InsufficientDataError(f"init lists {len(guesses)} peaks, n_peaks = {self.n_peaks}")
        return np.array([base] + [v for g in guesses for v in g], dtype=float)

    def _evaluate(self, p, x):
        out = np.full(np.shape(x), p[0], dtype=float)
        for k in range(self.n_peaks):
            a, c, w = p[1 + 3 * k : 4 + 3 * k]
            out = out + lorentzian(x, a, c, w)
        return out

    def _finalize(self, result, cov, x, y):
        vals = result.params
        peaks = []
        for k in range(self.n_peaks):
            a, c, w = (vals[f"{n}_{k}"] for n in ("amplitude", "center", "fwhm"))
            peaks.append((c.value, a, c, Param(abs(w.value), w.sigma)))
        peaks.sort(key=lambda t: t[0])
        params = {"baseline": vals["baseline"]}
        coef = [vals["baseline"].value]
        for k, (_, a, c, w) in enumerate(peaks):
            params[f"amplitude_{k}"] = a
            params[f"center_{k}"] = c
            params[f"fwhm_{k}"] = w
            coef += [a.value, c.value, w.value]
        converged = result.converged and all(np.isfinite(p.value) for p in params.values())
        return replace(result, params=params, converged=converged), np.array(coef)


class ExponentialDecay(_CurveModel):
    """``amplitude * exp(-(t - t_start) / tau) + offset`` for ``t >= t_start``.

    ``amplitude`` is the decaying part at ``t_start``.  A fit whose decay is
    not resolved (non-positive amplitude or lifetime, or unbounded errors) is
    returned with ``converged = False`` and a ``diagnostic`` entry.
    """

    model_name = "exponential_decay"

    def __init__(self, t_start: float = 0.0, exclusion=()):
        self.t_start = t_start
        self.exclusion = exclusion

    def _names(self):
        return ["amplitude", "tau", "offset"]

    def _range_mask(self, x):
        return x >= self.t_start

    def _initial(self, x, y):
        tail = y[-max(len(y) // 10, 1) :]
        b = float(np.mean(tail))
        a = float(y[0] - b)
        target = b + a / np.e
        below = np.flatnonzero((y - target) * np.sign(a or 1.0) <= 0)
        tau = float(x[below[0]] - self.t_start) if below.size else (x[-1] - x[0]) / 3
        tau = tau if tau > 0 else (x[-1] - x[0]) / 3
        return np.array([a, tau, b])

    def _evaluate(self, p, x):
        a, tau, b = p
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            return a * np.exp(-(x - self.t_start) / tau) + b

    def _finalize(self, result, cov, x, y):
        a, tau = result.params["amplitude"], result.params["tau"]
        ok = a.value > 0 and tau.value > 0 and np.isfinite(a.sigma) and np.isfinite(tau.sigma)
        meta = dict(result.metadata, t_start=float(self.t_start))
        if not ok:
            meta["diagnostic"] = "no decay detected (non-positive amplitude/lifetime or unbounded errors)"
        out = replace(result, converged=result.converged and ok, metadata=meta)
        return out, np.array([p.value for p in out.params.values()])


class PulsedG2Model(_CurveModel):
    """Comb of two-sided exponential peaks for pulsed photon correlations.

    ``background + sum_k amplitude_k * exp(-|tau - k T| / tau_decay)`` over
    every peak ``k`` whose center lies inside the data, with a shared decay
    time and (optionally) a fitted period ``T``.  ``g2_zero`` is the central
    amplitude over the mean side amplitude; with a common decay every peak
    area is ``2 amplitude tau_decay``, so this is also the area ratio.  Peaks
    centered up to half a period outside the data are modelled for their
    flanks but only peaks centered inside the data enter the side mean.
    """

    model_name = "pulsed_g2"

    def __init__(self, period: float = 42.735, exclusion=DEFAULT_G2_EXCLUSION, fit_period: bool = True):
        self.period = period
        self.exclusion = exclusion
        self.fit_period = fit_period

    def _orders(self, x, margin):
        lo = int(np.ceil((x[0] - margin) / self.period - 1e-9))
        hi = int(np.floor((x[-1] + margin) / self.period + 1e-9))
        return list(range(lo, hi + 1))

    def _names(self):
        names = ["background", "tau_decay"] + (["peak_period"] if self.fit_period else [])
        return names + [f"amplitude_{k}" for k in self.orders_]

    def _split(self, p):
        if self.fit_period:
            return p[0], p[1], p[2], p[3:]
        return p[0], p[1], self.period, p[2:]

    def _evaluate(self, p, x):
        b, td, T, amps = self._split(p)
        out = np.full(np.shape(x), b, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            for k, a in zip(self.orders_, amps):
                out = out + a * np.exp(-np.abs(x - k * T) / td)
        return out

    def _initial(self, x, y):
        T = self.period
        b = float(np.percentile(y, 5))
        amps, tds = [], []
        for k in self.orders_:
            near = np.abs(x - k * T) < T / 2
            if not near.any():
                amps.append(0.0)
                continue
            seg = y[near] - b
            amps.append(float(y[np.argmin(np.abs(x - k * T))] - b))
            if k != 0 and np.max(seg) > 0:
                xs = x[near]
                tds.append(float(np.trapezoid(np.clip(seg, 0, None), xs) / (2 * np.max(seg))))
        td = float(np.median(tds)) if tds else T / 8
        head = [b, td] + ([T] if self.fit_period else [])
        return np.array(head + amps, dtype=float)

    def fit(self, x, y):
        x, y = check_xy(x, y, name=self.model_name)
        if x[-1] - x[0] < 5 * self.period:
            raise InsufficientDataError(
                f"histogram spans {x[-1] - x[0]:.4g} ns, need >= 5 repetition periods ({5 * self.period:.4g} ns)"
            )
        keep = keep_mask(x, self._windows())
        central = keep & (np.abs(x) < self.period / 2)
        if not central.any():
            raise UnidentifiableError("every bin of the central peak is excluded; g2(0) is unidentifiable")
        # peaks just outside the data still leak their flanks into it
        self.orders_ = self._orders(x, 0.5 * self.period)
        self.full_orders_ = self._orders(x, 0.0)
        if 0 not in self.full_orders_ or len(self.full_orders_) < 2:
            raise InsufficientDataError("histogram must contain the central peak and at least one side peak")
        return super().fit(x, y)

    def _finalize(self, result, cov, x, y):
        names = self._names()
        vals = np.array([result.params[n].value for n in names])
        side = [k for k in self.full_orders_ if k != 0]
        off = names.index("amplitude_0") - self.orders_.index(0)
        i0 = names.index("amplitude_0")
        idx_side = [off + self.orders_.index(k) for k in side]
        mean_side = float(np.mean(vals[idx_side]))
        g = vals[i0] / mean_side
        grad = np.zeros(len(names))
        grad[i0] = 1.0 / mean_side
        for i in idx_side:
            grad[i] = -vals[i0] / (mean_side**2 * len(side))
        params = dict(result.params)
        params["g2_zero"] = derived_param(g, grad, cov)
        if not self.fit_period:
            params["peak_period"] = Param(float(self.period), 0.0)
        meta = dict(result.metadata, peak_orders=list(self.orders_))
        return replace(result, params=params, metadata=meta), vals
