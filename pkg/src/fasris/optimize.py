"""Throughput maximization over the transmission rate.

Four solvers mirror the analytic development: gradient ascent and a
bisection search on a Gaussian-tail surrogate for the coherent scheme, a
partial gradient ascent exploiting the concave segment and a Lambert-W
closed form for the random-phase scheme, plus an exhaustive-search baseline.
Every solver reports its achieved value under the exact objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import SystemConfig
from .errors import ConfigError
from .outage import CsiBasedMoments
from .specfun import lambert_w0, q_func

__all__ = [
    "RateBounds",
    "ThroughputSolution",
    "tbar",
    "tbar_gradient",
    "tcheck",
    "tcheck_x",
    "tcheck_dx",
    "tcheck_dxx",
    "gda_csi_based",
    "bsm_csi_based",
    "pgda_csi_free",
    "closed_form_csi_free",
    "exhaustive",
]

_LN2 = np.log(2.0)


@dataclass(frozen=True)
class RateBounds:
    """Feasible transmission-rate interval in bits/s/Hz."""

    r_min: float = 0.01
    r_max: float = 15.0

    def __post_init__(self):
        if not (np.isfinite(self.r_min) and np.isfinite(self.r_max)):
            raise ConfigError("rate bounds must be finite")
        if self.r_min < 0 or self.r_max <= self.r_min:
            raise ConfigError(f"need 0 <= r_min < r_max, got [{self.r_min}, {self.r_max}]")

    def clamp(self, r: float) -> float:
        return float(min(max(self.r_min, r), self.r_max))


@dataclass(frozen=True)
class ThroughputSolution:
    r_star: float
    t_star: float
    solver: str
    iterations: int
    converged: bool
    trace: list | None = None


# ---- objectives ----------------------------------------------------------------


def tbar(R, moments: CsiBasedMoments, B: int):
    """Exact collapsed-block throughput of the coherent scheme."""
    R = np.asarray(R, dtype=float)
    s = moments.kappa * np.sqrt(np.maximum(2.0**R - 1.0, 0.0))
    sig = np.sqrt(moments.sigma_bar_sq)
    br = np.clip(q_func((moments.mu_bar - s) / sig) - q_func(moments.mu_bar / sig), 0.0, 1.0)
    out = R * (1.0 - br**B)
    return float(out) if out.ndim == 0 else out


def tbar_gradient(R, moments: CsiBasedMoments, B: int):
    """d/dR of tbar; singular at R = 0 where the threshold slope diverges."""
    R = np.asarray(R, dtype=float)
    s = moments.kappa * np.sqrt(np.maximum(2.0**R - 1.0, 0.0))
    sig2 = moments.sigma_bar_sq
    sig = np.sqrt(sig2)
    br = np.clip(q_func((moments.mu_bar - s) / sig) - q_func(moments.mu_bar / sig), 0.0, 1.0)
    pdf = np.exp(-((s - moments.mu_bar) ** 2) / (2.0 * sig2)) / np.sqrt(2.0 * np.pi * sig2)
    with np.errstate(divide="ignore", invalid="ignore"):
        dsdR = moments.kappa * 2.0**R * _LN2 / (2.0 * np.sqrt(np.maximum(2.0**R - 1.0, 0.0)))
    out = 1.0 - br**B - R * B * br ** (B - 1) * pdf * dsdR
    return float(out) if out.ndim == 0 else out


def tcheck(R, lambda_a: float, B: int, cfg: SystemConfig):
    """Exact collapsed-block throughput of the random-phase scheme."""
    R = np.asarray(R, dtype=float)
    g = (2.0**R - 1.0) * cfg.noise_w / cfg.power_w
    out = R * (1.0 - (1.0 - np.exp(-lambda_a * g)) ** B)
    return float(out) if out.ndim == 0 else out


def tcheck_x(x, big_gamma: float, B: int):
    """tcheck in the SNR-threshold coordinate x = 2^R - 1."""
    x = np.asarray(x, dtype=float)
    out = np.log2(1.0 + x) * (1.0 - (1.0 - np.exp(-big_gamma * x)) ** B)
    return float(out) if out.ndim == 0 else out


def tcheck_dx(x, big_gamma: float, B: int):
    """First derivative of tcheck_x."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-big_gamma * x)
    f = 1.0 - e
    out = (1.0 - f**B) / (_LN2 * (1.0 + x)) - np.log2(1.0 + x) * B * big_gamma * f ** (B - 1) * e
    return float(out) if out.ndim == 0 else out


def tcheck_dxx(x, big_gamma: float, B: int):
    """Second derivative of tcheck_x; requires x > 0 when B == 1."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-big_gamma * x)
    f = 1.0 - e
    with np.errstate(divide="ignore", invalid="ignore"):
        third = np.log2(1.0 + x) * B * big_gamma**2 * f ** (B - 2) * e * (B * e - 1.0)
    out = (
        -(1.0 - f**B) / (_LN2 * (1.0 + x) ** 2)
        - 2.0 * B * big_gamma * f ** (B - 1) * e / (_LN2 * (1.0 + x))
        - third
    )
    return float(out) if out.ndim == 0 else out


# ---- solvers ---------------------------------------------------------------------


def _ascend(objective, gradient, lo, hi, start, step, tol, max_iter, keep_trace):
    """Backtracking gradient ascent on [lo, hi] from start."""
    x = start
    t = objective(x)
    step0 = step
    trace = [(x, t)] if keep_trace else None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = gradient(x)
        if not np.isfinite(g):
            x = min(max(x + 1e-6, lo), hi)
            t = objective(x)
            continue
        if abs(g) < tol and t > 0.0:
            converged = True
            break
        xn = min(max(x + step * g, lo), hi)
        tn = objective(xn)
        if tn < t:
            step *= 0.5
            if step < 1e-16:
                converged = t > 0.0
                break
        else:
            if abs(xn - x) < 1e-14 * (1.0 + abs(x)) and t > 0.0:
                converged = True
                break
            x, t = xn, tn
            step = min(step * 2.0, step0)
            if keep_trace:
                trace.append((x, t))
    return x, t, it, converged, trace


def gda_csi_based(
    bounds: RateBounds,
    moments: CsiBasedMoments,
    B: int,
    step: float = 0.05,
    tol: float = 1e-9,
    max_iter: int = 20000,
    keep_trace: bool = False,
) -> ThroughputSolution:
    """Gradient ascent on the exact coherent-scheme throughput."""
    if step <= 0:
        raise ConfigError("step must be > 0")
    start = bounds.r_min
    if not np.isfinite(tbar_gradient(start, moments, B)):
        start = bounds.r_min + 1e-6
    r, _, it, conv, trace = _ascend(
        lambda R: tbar(R, moments, B),
        lambda R: tbar_gradient(R, moments, B),
        bounds.r_min,
        bounds.r_max,
        start,
        step,
        tol,
        max_iter,
        keep_trace,
    )
    r = bounds.clamp(r)
    return ThroughputSolution(r, tbar(r, moments, B), "gda", it, conv, trace)


def bsm_csi_based(
    bounds: RateBounds, moments: CsiBasedMoments, B: int, tol: float = 1e-9
) -> ThroughputSolution:
    """Bisection on the stationarity condition of the Gaussian-tail surrogate.

    The surrogate drops the multi-block coupling, leaving (B/2) R times a
    Gaussian factor; its derivative changes sign exactly once, so bisection
    applies.  Without a sign change the better endpoint is returned.
    """
    if tol <= 0:
        raise ConfigError("tol must be > 0")
    mu, sig2, kap = moments.mu_bar, moments.sigma_bar_sq, moments.kappa

    def surrogate(R):
        s = kap * np.sqrt(max(2.0**R - 1.0, 0.0))
        return 0.5 * B * R * np.exp(-((s - mu) ** 2) / (2.0 * sig2))

    def dsign(R):
        s = kap * np.sqrt(max(2.0**R - 1.0, 1e-300))
        dsdR = kap * 2.0**R * _LN2 / (2.0 * np.sqrt(max(2.0**R - 1.0, 1e-300)))
        return 1.0 - R * (s - mu) * dsdR / sig2

    lo, hi = bounds.r_min, bounds.r_max
    it = 0
    if dsign(lo) > 0 and dsign(hi) < 0:
        while hi - lo > tol and it < 200:
            mid = 0.5 * (lo + hi)
            if dsign(mid) > 0:
                lo = mid
            else:
                hi = mid
            it += 1
        r = 0.5 * (lo + hi)
    else:
        r = lo if surrogate(lo) > surrogate(hi) else hi
    r = bounds.clamp(r)
    return ThroughputSolution(r, tbar(r, moments, B), "bsm", it, True, None)


def pgda_csi_free(
    bounds: RateBounds,
    lambda_a: float,
    B: int,
    cfg: SystemConfig,
    step: float = 0.05,
    tol: float = 1e-10,
    max_iter: int = 20000,
    keep_trace: bool = False,
) -> ThroughputSolution:
    """Partial gradient ascent in x = 2^R - 1 for the random-phase scheme.

    On [0, ln(B)/Gamma] the objective is concave, so the maximizer is found
    by bisection (or is the segment edge); beyond it a gradient ascent runs,
    and the better of the two candidates is kept.
    """
    if B < 1:
        raise ConfigError("B must be >= 1")
    big_gamma = lambda_a * cfg.noise_w / cfg.power_w
    if big_gamma <= 0:
        raise ConfigError("lambda_a, noise and power must be positive")
    x_min = 2.0**bounds.r_min - 1.0
    x_max = 2.0**bounds.r_max - 1.0
    x_check = np.log(B) / big_gamma

    it = 0
    x_dagger = None
    if B > 1:
        if tcheck_dx(x_check, big_gamma, B) >= 0:
            x_dagger = x_check
        else:
            lo, hi = 0.0, x_check
            while hi - lo > 1e-9 * max(1.0, x_check) and it < 200:
                mid = 0.5 * (lo + hi)
                if tcheck_dx(mid, big_gamma, B) > 0:
                    lo = mid
                else:
                    hi = mid
                it += 1
            x_dagger = 0.5 * (lo + hi)

    start = min(max(x_check, x_min), x_max)
    x_dd, _, it2, conv, trace = _ascend(
        lambda x: tcheck_x(x, big_gamma, B),
        lambda x: tcheck_dx(x, big_gamma, B),
        start,
        x_max,
        start,
        step,
        tol,
        max_iter,
        keep_trace,
    )

    cands = [np.log2(1.0 + x_dd)]
    if x_dagger is not None:
        cands.append(np.log2(1.0 + x_dagger))
    best = max(cands, key=lambda r: tcheck(r, lambda_a, B, cfg))
    r = bounds.clamp(best)
    return ThroughputSolution(r, tcheck(r, lambda_a, B, cfg), "pgda", it + it2, conv, trace)


def closed_form_csi_free(
    bounds: RateBounds, lambda_a: float, B: int, cfg: SystemConfig
) -> ThroughputSolution:
    """Lambert-W stationary point of the exponential-tail surrogate.

    Both closed-form candidates (the Lambert-W root and the concavity-edge
    rate) are scored under the exact objective and the winner is clamped.
    """
    big_gamma = lambda_a * cfg.noise_w / cfg.power_w
    if big_gamma <= 0:
        raise ConfigError("lambda_a, noise and power must be positive")
    r_w = lambert_w0(1.0 / big_gamma) / _LN2
    r_edge = np.log2(1.0 + np.log(B) / big_gamma) if B > 1 else 0.0
    r = r_w if tcheck(r_w, lambda_a, B, cfg) >= tcheck(r_edge, lambda_a, B, cfg) else r_edge
    r = bounds.clamp(r)
    return ThroughputSolution(r, tcheck(r, lambda_a, B, cfg), "closed-form", 0, True, None)


def exhaustive(bounds: RateBounds, objective, grid_points: int = 10_000) -> ThroughputSolution:
    """Uniform-grid argmax baseline."""
    if grid_points < 2:
        raise ConfigError("grid_points must be >= 2")
    grid = np.linspace(bounds.r_min, bounds.r_max, grid_points)
    try:
        vals = np.asarray(objective(grid), dtype=float)
        if vals.shape != grid.shape:
            raise TypeError
    except Exception:
        vals = np.array([float(objective(r)) for r in grid])
    i = int(np.argmax(vals))
    return ThroughputSolution(float(grid[i]), float(vals[i]), "exhaustive", grid_points, True, None)
