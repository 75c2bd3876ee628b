"""Ground-truth Monte Carlo oracle for outage, throughput, and densities.

Plain averaging over independent channel draws, deliberately without any
variance reduction so results stay trivially auditable.  Trials are generated
in fixed-size chunks whose RNG streams are keyed by (seed, chunk index), so
the estimate does not depend on how chunks are distributed across workers.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .channel import (
    CorrelationMatrix,
    SystemConfig,
    correlation_cholesky,
    draw_los,
    inner_stream,
    sample_amplitudes,
    trial_stream,
)
from .errors import ConfigError

__all__ = ["McResult", "EmpiricalPdf", "estimate_outage", "estimate_throughput", "empirical_pdf"]

CHUNK = 8192


@dataclass(frozen=True)
class McResult:
    """Outage estimate with a 95% binomial confidence half-width."""

    p_hat: float
    trials: int
    half_width_95: float
    scheme: str
    corr_kind: str

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def estimate_outage(
    cfg: SystemConfig,
    corr: CorrelationMatrix,
    scheme: str,
    R: float,
    trials: int = 100_000,
    seed: int | None = None,
    los=None,
) -> McResult:
    """Fraction of draws whose best port stays below the outage threshold."""
    if trials < 1000:
        raise ConfigError("trials must be >= 1000")
    if seed is None:
        seed = cfg.seed
    if los is None:
        los = draw_los(cfg)
    chol = correlation_cholesky(corr)
    thr = np.sqrt(cfg.gamma_th(R))

    count = 0
    done = 0
    chunk_idx = 0
    while done < trials:
        n = min(CHUNK, trials - done)
        rng = trial_stream(seed, chunk_idx)
        a = sample_amplitudes(cfg, corr, scheme, n, rng, los=los, chol=chol)
        count += int(np.count_nonzero(a.max(axis=0) < thr))
        done += n
        chunk_idx += 1

    p = count / trials
    hw = 1.96 * np.sqrt(p * (1.0 - p) / trials)
    return McResult(p_hat=p, trials=trials, half_width_95=float(hw), scheme=scheme, corr_kind=corr.kind)


def estimate_throughput(
    cfg: SystemConfig,
    corr: CorrelationMatrix,
    scheme: str,
    R: float,
    trials: int = 100_000,
    seed: int | None = None,
) -> float:
    """Goodput R (1 - p_hat) of a fixed-rate transmission."""
    res = estimate_outage(cfg, corr, scheme, R, trials=trials, seed=seed)
    return float(R * (1.0 - res.p_hat))


@dataclass(frozen=True)
class EmpiricalPdf:
    """Normalized histogram: densities integrate to one over the bin edges."""

    bin_edges: np.ndarray
    densities: np.ndarray

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def to_json(self) -> str:
        return json.dumps(
            {"bin_edges": list(map(float, self.bin_edges)), "densities": list(map(float, self.densities))}
        )

    def to_csv(self) -> str:
        """Two-column plot table: bin_center, density."""
        lines = ["bin_center,density"]
        lines += [f"{repr(float(c))},{repr(float(d))}" for c, d in zip(self.bin_centers, self.densities)]
        return "\n".join(lines) + "\n"


def empirical_pdf(samples, bins: int = 80) -> EmpiricalPdf:
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ConfigError("cannot build a density from an empty sample set")
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    dens, edges = np.histogram(samples, bins=bins, density=True)
    return EmpiricalPdf(bin_edges=edges, densities=dens)


def collect_envelopes(cfg, corr, scheme, n, seed=None, port: int = 0) -> np.ndarray:
    """n independent draws of one port's envelope, for distribution checks."""
    if seed is None:
        seed = cfg.seed
    los = draw_los(cfg)
    chol = correlation_cholesky(corr)
    out = np.empty(n)
    done = 0
    chunk_idx = 0
    while done < n:
        m = min(CHUNK, n - done)
        rng = trial_stream(seed, chunk_idx)
        a = sample_amplitudes(cfg, corr, scheme, m, rng, los=los, chol=chol)
        out[done : done + m] = a[port]
        done += m
        chunk_idx += 1
    return out


def sample_conditional_csi_based(cfg, n, seed=None, port: int = 0):
    """Draws of one port's coherent envelope with the block NLoS held fixed.

    Returns (samples, v) where v holds the conditional per-element
    amplitudes that parameterize the envelope's limiting Gaussian law.
    """
    if seed is None:
        seed = cfg.seed
    pl = cfg.pathloss()
    los = draw_los(cfg)
    rng = inner_stream(seed)
    sb = np.sqrt(pl.alpha / (cfg.K + 1.0) / 2.0)
    htilde = sb * (rng.standard_normal(cfg.M) + 1j * rng.standard_normal(cfg.M))
    mean_part = np.sqrt(cfg.mu_b_sq) * htilde + np.sqrt(pl.alpha * cfg.K / (cfg.K + 1.0)) * los.hbar[port]
    v = np.abs(mean_part)

    s0 = np.sqrt((1.0 - cfg.mu_b_sq) * pl.alpha / (cfg.K + 1.0) / 2.0)
    out = np.empty(n)
    done = 0
    chunk_idx = 0
    while done < n:
        m = min(CHUNK, n - done)
        step_rng = trial_stream(seed, chunk_idx)
        e = s0 * (step_rng.standard_normal((m, cfg.M)) + 1j * step_rng.standard_normal((m, cfg.M)))
        out[done : done + m] = np.sqrt(pl.beta) * np.abs(mean_part[None, :] + e).sum(axis=1)
        done += m
        chunk_idx += 1
    return out, v
