"""Correlation statistics, empirical mode decomposition and Hilbert spectral analysis."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded


class SignalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# ACF / PACF
# ---------------------------------------------------------------------------

def acf(series, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation for lags ``0..max_lag``."""
    x = np.asarray(series, dtype=float)
    if max_lag < 0 or max_lag >= len(x):
        raise SignalError(f"max_lag must lie in [0, {len(x) - 1}], got {max_lag}")
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom <= 0.0:
        raise SignalError("series has zero variance")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = np.dot(d[:-k], d[k:]) / denom
    return out


def pacf(series, max_lag: int) -> np.ndarray:
    """Partial autocorrelations phi_kk for k = 1..max_lag (Durbin-Levinson).

    Element ``k - 1`` of the result holds phi_kk.
    """
    if max_lag < 1:
        raise SignalError("max_lag must be >= 1")
    rho = acf(series, max_lag)
    out = np.empty(max_lag)
    phi = np.zeros(max_lag + 1)
    v = 1.0
    for k in range(1, max_lag + 1):
        if k == 1:
            a = rho[1]
        else:
            a = (rho[k] - np.dot(phi[1:k], rho[k - 1:0:-1])) / v
        prev = phi.copy()
        phi[k] = a
        for j in range(1, k):
            phi[j] = prev[j] - a * prev[k - j]
        v = v * (1.0 - a * a)
        if v <= 0.0:
            raise SignalError(f"Durbin-Levinson recursion degenerate at lag {k}")
        out[k - 1] = a
    return out


# ---------------------------------------------------------------------------
# Extrema and envelopes
# ---------------------------------------------------------------------------

def find_extrema(series) -> tuple[np.ndarray, np.ndarray]:
    """Indices of interior local maxima and minima.

    Flat runs bordered on both sides by lower (higher) values count as one
    maximum (minimum) located at the run midpoint, rounded down. Endpoints
    are never extrema.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 3:
        raise SignalError("need at least 3 samples to locate extrema")
    # collapse runs of equal values
    change = np.flatnonzero(np.diff(x) != 0.0)
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change, [n - 1]))
    if len(starts) < 3:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    vals = x[starts]
    left = vals[:-2]
    mid = vals[1:-1]
    right = vals[2:]
    mids = (starts[1:-1] + ends[1:-1]) // 2
    maxima = mids[(mid > left) & (mid > right)]
    minima = mids[(mid < left) & (mid < right)]
    return maxima.astype(int), minima.astype(int)


def natural_cubic_spline(xk, yk, x) -> np.ndarray:
    """Evaluate the natural cubic spline through knots ``(xk, yk)`` at ``x``.

    Knot abscissae must be strictly increasing. Two knots give the chord.
    """
    xk = np.asarray(xk, dtype=float)
    yk = np.asarray(yk, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(xk)
    if n < 2:
        raise SignalError("a spline needs at least 2 knots")
    h = np.diff(xk)
    if np.any(h <= 0):
        raise SignalError("spline knots must be strictly increasing")
    slopes = np.diff(yk) / h
    m = np.zeros(n)  # second derivatives, zero at both ends
    if n > 2:
        ab = np.zeros((3, n - 2))
        ab[0, 1:] = h[1:-1]
        ab[1, :] = 2.0 * (h[:-1] + h[1:])
        ab[2, :-1] = h[1:-1]
        rhs = 6.0 * np.diff(slopes)
        m[1:-1] = solve_banded((1, 1), ab, rhs)
    j = np.clip(np.searchsorted(xk, x, side="right") - 1, 0, n - 2)
    hj = h[j]
    a = xk[j + 1] - x
    b = x - xk[j]
    return (
        m[j] * a ** 3 / (6.0 * hj)
        + m[j + 1] * b ** 3 / (6.0 * hj)
        + (yk[j] / hj - m[j] * hj / 6.0) * a
        + (yk[j + 1] / hj - m[j + 1] * hj / 6.0) * b
    )


def _mirrored_knots(x: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(x)
    idx = np.sort(np.asarray(idx, dtype=int))
    head = idx[:2]
    tail = idx[-2:]
    pos = np.concatenate((-head[::-1], idx, 2 * (n - 1) - tail[::-1])).astype(float)
    val = np.concatenate((x[head[::-1]], x[idx], x[tail[::-1]]))
    # an extremum at the same distance from both ends can collide with its mirror
    pos, keep = np.unique(pos, return_index=True)
    return pos, val[keep]


def spline_envelope(series, extrema, side: str = "upper") -> np.ndarray:
    """Natural cubic spline through one side's extrema, mirrored at both ends."""
    if side not in ("upper", "lower"):
        raise SignalError(f"side must be 'upper' or 'lower', got {side!r}")
    x = np.asarray(series, dtype=float)
    idx = np.asarray(extrema, dtype=int)
    if len(idx) == 0:
        raise SignalError(f"no {side} extrema to build an envelope from")
    pos, val = _mirrored_knots(x, idx)
    if len(pos) < 2:
        raise SignalError("fewer than 2 spline knots after boundary augmentation")
    return natural_cubic_spline(pos, val, np.arange(len(x), dtype=float))


@dataclass(frozen=True)
class EnvelopePair:
    upper: np.ndarray
    lower: np.ndarray
    mean: np.ndarray


def envelopes(series) -> EnvelopePair:
    x = np.asarray(series, dtype=float)
    maxima, minima = find_extrema(x)
    upper = spline_envelope(x, maxima, "upper")
    lower = spline_envelope(x, minima, "lower")
    return EnvelopePair(upper, lower, (upper + lower) / 2.0)


# ---------------------------------------------------------------------------
# EMD
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SiftConfig:
    max_iter: int = 50
    sd_threshold: float = 0.2


@dataclass(frozen=True)
class EmdConfig:
    max_imfs: int = 10
    sift: SiftConfig = field(default_factory=SiftConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "EmdConfig":
        d = dict(d)
        sift = SiftConfig(**d.pop("sift", {}))
        return cls(sift=sift, **d)

    def to_dict(self) -> dict:
        return {"max_imfs": self.max_imfs,
                "sift": {"max_iter": self.sift.max_iter, "sd_threshold": self.sift.sd_threshold}}


@dataclass(frozen=True)
class ImfSet:
    imfs: tuple[np.ndarray, ...]
    residual: np.ndarray
    source_length: int
    sift_counts: tuple[int, ...]

    @property
    def n_imfs(self) -> int:
        return len(self.imfs)

    def reconstruct(self) -> np.ndarray:
        total = self.residual.copy()
        for d in self.imfs:
            total = total + d
        return total


def zero_crossings(series) -> int:
    s = np.sign(np.asarray(series, dtype=float))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _extrema_count(series) -> int:
    mx, mn = find_extrema(series)
    return len(mx) + len(mn)


def imf_criteria(candidate, mean_env, sd_threshold: float) -> bool:
    """Both IMF properties: count rule and near-zero envelope mean."""
    h = np.asarray(candidate, dtype=float)
    if abs(_extrema_count(h) - zero_crossings(h)) > 1:
        return False
    energy = float(np.dot(h, h))
    if energy == 0.0:
        return True
    return float(np.dot(mean_env, mean_env)) / energy < sd_threshold


def _has_envelope_support(x: np.ndarray) -> bool:
    mx, mn = find_extrema(x)
    return len(mx) >= 2 and len(mn) >= 2


def sift(series, cfg: SiftConfig = SiftConfig()) -> tuple[np.ndarray, int]:
    """Extract one IMF candidate by repeated envelope-mean subtraction.

    Returns ``(candidate, iterations)`` where ``iterations`` counts the
    subtractions performed. The candidate is returned as soon as it meets
    both IMF criteria, when it loses the extrema needed for envelopes, or
    after ``cfg.max_iter`` subtractions.
    """
    h = np.asarray(series, dtype=float).copy()
    if len(h) < 3 or not _has_envelope_support(h):
        raise SignalError("sifting needs at least 2 maxima and 2 minima")
    env = envelopes(h)
    it = 0
    while it < cfg.max_iter:
        h = h - env.mean
        it += 1
        if not _has_envelope_support(h):
            break
        env = envelopes(h)
        if imf_criteria(h, env.mean, cfg.sd_threshold):
            break
    return h, it


def decompose(series, cfg: EmdConfig = EmdConfig()) -> ImfSet:
    """Empirical mode decomposition into IMFs plus a residual trend."""
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or len(y) < 8:
        raise SignalError("decompose needs a 1-D series of at least 8 samples")
    imfs: list[np.ndarray] = []
    counts: list[int] = []
    r = y.copy()
    while len(imfs) < cfg.max_imfs and _has_envelope_support(r):
        d, it = sift(r, cfg.sift)
        imfs.append(d)
        counts.append(it)
        r = r - d
    return ImfSet(tuple(imfs), r, len(y), tuple(counts))


# ---------------------------------------------------------------------------
# Hilbert-Huang
# ---------------------------------------------------------------------------

def analytic_signal(series) -> np.ndarray:
    """FFT analytic signal: negative frequencies zeroed, positive doubled."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 4:
        raise SignalError("analytic signal needs at least 4 samples")
    spec = np.fft.fft(x)
    w = np.zeros(n)
    w[0] = 1.0
    if n % 2 == 0:
        w[n // 2] = 1.0
        w[1:n // 2] = 2.0
    else:
        w[1:(n + 1) // 2] = 2.0
    return np.fft.ifft(spec * w)


@dataclass(frozen=True)
class HhtFrame:
    amplitude: np.ndarray
    phase: np.ndarray
    frequency: np.ndarray


def instantaneous(imf, analytic=None) -> HhtFrame:
    """Amplitude, unwrapped phase and frequency (cycles/sample) of one IMF."""
    z = analytic_signal(imf) if analytic is None else np.asarray(analytic)
    amp = np.abs(z)
    phase = np.unwrap(np.angle(z))
    freq = np.gradient(phase) / (2.0 * np.pi)
    return HhtFrame(amp, phase, freq)


def hht(imfs: ImfSet) -> list[HhtFrame]:
    return [instantaneous(d) for d in imfs.imfs]
