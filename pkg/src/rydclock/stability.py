"""Differential clock-comparison statistics.

The observable is the per-shot excitation difference d_z between two
ensembles; its conversion to a frequency difference, the overlapping Allan
deviation with white-FM error bars, a white-noise amplitude fit, and the
double-exponential fit used to locate the optimal interaction time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .records import MeasurementRecord


class NoInteriorMinimumError(RuntimeError):
    """The fitted curve has no minimum strictly inside the data range."""


@dataclass(frozen=True)
class FrequencySeries:
    """Uniformly sampled angular frequency differences omega_A - omega_B."""

    values: np.ndarray
    sample_interval: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("frequency series must be finite")
        if self.sample_interval <= 0:
            raise ValueError("sample interval must be positive")
        object.__setattr__(self, "values", v)


@dataclass
class AllanCurve:
    """Overlapping Allan deviation vs averaging factor."""

    m: np.ndarray
    tau: np.ndarray
    adev: np.ndarray
    adev_err: np.ndarray
    axis: str = "time"
    sample_interval: float = 1.0

    def __post_init__(self):
        if np.any(np.diff(self.tau) <= 0):
            raise ValueError("tau must be strictly increasing")
        if np.any(self.adev < 0):
            raise ValueError("adev must be nonnegative")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "tau_s", "adev", "err"])
            for row in zip(self.m, self.tau, self.adev, self.adev_err):
                w.writerow(row)


def dz_from_record(r: MeasurementRecord):
    """Per-shot excitation-fraction difference d_z = p_a - p_b."""
    if r.n_shots == 0:
        raise ValueError("record is empty")
    return r.p_a - r.p_b


def freq_series(dz, contrast, t_dark, sample_interval) -> FrequencySeries:
    """Small-angle conversion (omega_A - omega_B) = 2 d_z / (C t_dark)."""
    if not 0.0 < contrast <= 1.0:
        raise ValueError("contrast must lie in (0, 1]")
    if t_dark <= 0:
        raise ValueError("t_dark must be positive")
    values = 2.0 * np.asarray(dz, dtype=float) / (contrast * t_dark)
    return FrequencySeries(values=values, sample_interval=sample_interval)


def _edf_white_fm(big_m, m):
    """Greenhall approximation of the chi^2 degrees of freedom, white FM."""
    return ((3.0 * (big_m - 1) / (2.0 * m) - 2.0 * (big_m - 2) / big_m)
            * 4.0 * m ** 2 / (4.0 * m ** 2 + 5.0))


def overlapping_adev(series, axis="time", m_list=None,
                     sample_interval=None) -> AllanCurve:
    """Overlapping Allan deviation of frequency-like data.

    ``axis='count'`` treats one shot as one sample at unit interval (the
    measurement-number parameterization); ``tau`` then counts shots times the
    sample interval as metadata only.
    """
    if isinstance(series, FrequencySeries):
        y = series.values
        dt = series.sample_interval
    else:
        y = np.asarray(series, dtype=float)
        dt = 1.0
    if sample_interval is not None:
        dt = sample_interval
    if axis not in ("time", "count"):
        raise ValueError("axis must be 'time' or 'count'")
    big_m = y.size
    if big_m < 8:
        raise ValueError("need at least 8 samples")
    if m_list is None:
        m_list = [int(2 ** k) for k in range(int(np.log2(big_m // 3)) + 1)]
        m_list = sorted({m for m in m_list if 1 <= m <= big_m // 3})
    s = np.concatenate([[0.0], np.cumsum(y)])
    ms, adevs, errs = [], [], []
    for m in m_list:
        if not 1 <= m <= big_m // 3:
            raise ValueError("averaging factor out of range")
        d = s[2 * m:] - 2.0 * s[m:-m] + s[:-2 * m]
        avar = np.sum(d ** 2) / (2.0 * m ** 2 * d.size)
        adev = float(np.sqrt(avar))
        edf = max(_edf_white_fm(big_m, m), 1.0)
        ms.append(m)
        adevs.append(adev)
        errs.append(adev / np.sqrt(2.0 * edf))
    ms = np.asarray(ms)
    return AllanCurve(m=ms, tau=ms * dt, adev=np.asarray(adevs),
                      adev_err=np.asarray(errs), axis=axis, sample_interval=dt)


@dataclass
class WhiteNoiseFit:
    amplitude: float       # Allan deviation extrapolated to tau = 1 sample
    amplitude_err: float
    slope: float
    slope_err: float
    flags: list = field(default_factory=list)


def fit_white_noise(curve: AllanCurve, slope_threshold_sigma=3.0) -> WhiteNoiseFit:
    """Weighted fit of a * tau^(-1/2) in log space, with a free-slope check."""
    if curve.adev.size == 0:
        raise ValueError("empty Allan curve")
    mask = curve.adev > 0
    tau, adev, err = curve.tau[mask], curve.adev[mask], curve.adev_err[mask]
    logy = np.log(adev)
    x = np.log(tau)
    w = (adev / np.maximum(err, 1e-300)) ** 2  # weights for log-ordinate

    # fixed slope -1/2: single weighted mean of log a
    resid = logy + 0.5 * x
    loga = np.sum(w * resid) / np.sum(w)
    loga_err = 1.0 / np.sqrt(np.sum(w))

    flags = []
    slope, slope_err = -0.5, 0.0
    if x.size >= 3:
        # free-slope weighted regression as the whiteness check
        sw, sx, sy = np.sum(w), np.sum(w * x), np.sum(w * logy)
        sxx, sxy = np.sum(w * x * x), np.sum(w * x * logy)
        denom = sw * sxx - sx ** 2
        slope = (sw * sxy - sx * sy) / denom
        slope_err = np.sqrt(sw / denom)
        if abs(slope + 0.5) > slope_threshold_sigma * slope_err:
            flags.append(f"non-white residual: slope {slope:.3f} "
                         f"+- {slope_err:.3f}")
    return WhiteNoiseFit(amplitude=float(np.exp(loga)),
                         amplitude_err=float(np.exp(loga) * loga_err),
                         slope=float(slope), slope_err=float(slope_err),
                         flags=flags)


@dataclass
class DoubleExponentialFit:
    a: float
    gamma_a: float
    b: float
    gamma_b: float
    t_opt: float
    xi_opt: float
    covariance: np.ndarray


def _dexp(params, t):
    a, ga, b, gb = params
    return a * np.exp(-ga * t) + b * np.exp(-gb * t)


def fit_double_exponential(points) -> DoubleExponentialFit:
    """Weighted fit of a e^(-Ga t) + b e^(-Gb t) and its interior minimum.

    An interior minimum requires the two exponential rates to act in opposite
    directions over the data range; monotone fits raise
    :class:`NoInteriorMinimumError`.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be (t_int, value, err) triples")
    if pts.shape[0] < 5:
        raise ValueError("need at least 5 points")
    t, y, sigma = pts[:, 0], pts[:, 1], pts[:, 2]
    if np.any(sigma <= 0):
        raise ValueError("errors must be positive")

    span = t.max() - t.min()
    scale = max(abs(y).max(), 1e-30)
    starts = [
        np.array([y[0], 2.0 / span, 0.5 * scale, -1.0 / span]),
        np.array([y[0], 5.0 / span, 0.1 * scale, -2.0 / span]),
        np.array([0.8 * y[0], 1.0 / span, 0.2 * y[0] + 1e-3 * scale, 0.1 / span]),
    ]
    best = None
    for x0 in starts:
        try:
            sol = least_squares(lambda p: (_dexp(p, t) - y) / sigma, x0,
                                method="lm", xtol=1e-14, ftol=1e-14,
                                max_nfev=20000)
        except Exception:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None or not best.success:
        raise RuntimeError("double-exponential fit did not converge")
    a, ga, b, gb = best.x

    jtj = best.jac.T @ best.jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.full((4, 4), np.nan)

    lo, hi = t.min(), t.max()
    res = minimize_scalar(lambda tt: _dexp(best.x, tt), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12 * max(span, 1.0)})
    t_opt = float(res.x)
    margin = 1e-6 * span
    if not (lo + margin < t_opt < hi - margin) \
            or res.fun > min(_dexp(best.x, lo), _dexp(best.x, hi)):
        raise NoInteriorMinimumError(
            "fitted curve is monotone over the data range: no interior minimum")
    return DoubleExponentialFit(a=float(a), gamma_a=float(ga), b=float(b),
                                gamma_b=float(gb), t_opt=t_opt,
                                xi_opt=float(res.fun), covariance=cov)
