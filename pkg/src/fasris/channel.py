"""System configuration, geometry, spatial correlation, and channel sampling.

The receiver is a fluid antenna with N ports spread over W wavelengths; the
link runs base station -> reflecting surface (M elements) -> user.  Both the
analytic outage formulas and the Monte Carlo oracle draw their channels from
the machinery here, so the two sides always see the same geometry, path
losses, and line-of-sight realization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericError
from .specfun import bessel_j0

__all__ = [
    "SystemConfig",
    "PathlossPair",
    "CorrelationMatrix",
    "ChannelDraw",
    "LosRealization",
    "dbm_to_watt",
    "build_config",
    "load_config_file",
    "jakes_correlation",
    "constant_correlation",
    "correlation_cholesky",
    "draw_los",
    "sample_ports_csi_based",
    "sample_ports_csi_free",
    "sample_amplitudes",
]

# Independent substreams derived from the experiment seed.
_LOS_STREAM = 0x10E5
_TRIAL_STREAM = 0x7172
_INNER_STREAM = 0x1AE


def dbm_to_watt(dbm: float) -> float:
    """Convert a dBm level to watts."""
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class PathlossPair:
    """Amplitude-squared path losses of the two hops."""

    beta: float  # BS -> RIS
    alpha: float  # RIS -> user

    def __post_init__(self):
        for name, v in (("beta", self.beta), ("alpha", self.alpha)):
            if not (0.0 < v <= 1.0):
                raise ConfigError(f"path loss {name}={v} outside (0, 1]")


@dataclass(frozen=True)
class SystemConfig:
    """All physical and statistical parameters of one experiment."""

    M: int
    N: int
    W: float = 5.0
    K: float = 1.0
    P_dBm: float = 10.0
    noise_dBm: float = -104.0
    pathloss_exponent: float = 2.2
    pathloss_ref_db: float = -30.0  # reference loss at 1 m
    pos_bs: tuple = (0.0, 0.0, 0.0)
    pos_ris: tuple = (10.0, 10.0, 5.0)
    pos_mu: tuple = (50.0, 0.0, 0.0)
    mu_b_sq: float = 0.97
    lambda_th: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError(f"M must be >= 1, got {self.M}")
        if self.N < 2:
            raise ConfigError(f"N must be >= 2, got {self.N}")
        if not self.W > 0:
            raise ConfigError(f"W must be > 0, got {self.W}")
        if self.K < 0:
            raise ConfigError(f"K must be >= 0, got {self.K}")
        if not (0.0 < self.mu_b_sq < 1.0):
            raise ConfigError(f"mu_b_sq must lie in (0, 1), got {self.mu_b_sq}")
        if not self.lambda_th > 0:
            raise ConfigError(f"lambda_th must be > 0, got {self.lambda_th}")
        for name in ("pos_bs", "pos_ris", "pos_mu"):
            p = np.asarray(getattr(self, name), dtype=float)
            if p.shape != (3,) or not np.all(np.isfinite(p)):
                raise ConfigError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, tuple(p))
        if not np.isfinite(self.P_dBm) or not np.isfinite(self.noise_dBm):
            raise ConfigError("P_dBm and noise_dBm must be finite")
        self.pathloss()  # validates geometry and the (0, 1] path-loss bounds

    # ---- derived quantities -------------------------------------------------

    @property
    def power_w(self) -> float:
        return dbm_to_watt(self.P_dBm)

    @property
    def noise_w(self) -> float:
        return dbm_to_watt(self.noise_dBm)

    @property
    def kappa(self) -> float:
        """sqrt(noise/power), the amplitude scale of the SNR threshold."""
        return float(np.sqrt(self.noise_w / self.power_w))

    def pathloss(self) -> PathlossPair:
        ref = 10.0 ** (self.pathloss_ref_db / 10.0)
        d_br = float(np.linalg.norm(np.subtract(self.pos_ris, self.pos_bs)))
        d_ru = float(np.linalg.norm(np.subtract(self.pos_mu, self.pos_ris)))
        if d_br <= 0 or d_ru <= 0:
            raise ConfigError("node positions must be pairwise distinct")
        return PathlossPair(
            beta=ref * d_br ** (-self.pathloss_exponent),
            alpha=ref * d_ru ** (-self.pathloss_exponent),
        )

    def gamma_th(self, rate: float) -> float:
        """SNR outage threshold (2^R - 1) sigma^2 / P for rate R."""
        if rate < 0:
            raise ConfigError(f"rate must be >= 0, got {rate}")
        with np.errstate(over="ignore"):
            return float((np.exp2(np.float64(rate)) - 1.0) * self.noise_w / self.power_w)

    def replace(self, **kw) -> "SystemConfig":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(kw)
        return SystemConfig(**vals)


def build_config(raw: dict) -> SystemConfig:
    """Build and validate a SystemConfig from a key-value document."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a key-value mapping")
    known = {f.name for f in fields(SystemConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    for req in ("M", "N"):
        if req not in raw:
            raise ConfigError(f"missing required configuration key: {req}")
    try:
        return SystemConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config_file(path) -> dict:
    """Read a JSON or TOML key-value document."""
    p = Path(path)
    data = p.read_bytes()
    if p.suffix.lower() == ".json":
        return json.loads(data)
    try:
        import tomllib  # py >= 3.11
    except ImportError:
        import tomli as tomllib
    return tomllib.loads(data.decode())


# ---- correlation matrices ----------------------------------------------------


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric port-correlation matrix with unit diagonal."""

    entries: np.ndarray
    kind: str  # exact-toeplitz | block-diagonal | constant

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ConfigError("correlation matrix must be square")
        e = np.array(e, copy=True)
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def jakes_correlation(N: int, W: float) -> CorrelationMatrix:
    """Toeplitz port correlation J0(2 pi |i-j| W / (N-1))."""
    if N < 2:
        raise ConfigError(f"N must be >= 2, got {N}")
    if not W > 0:
        raise ConfigError(f"W must be > 0, got {W}")
    row = bessel_j0(2.0 * np.pi * np.arange(N) * W / (N - 1))
    return CorrelationMatrix(entries=scipy.linalg.toeplitz(row), kind="exact-toeplitz")


def constant_correlation(N: int, mu_sq: float) -> CorrelationMatrix:
    """Constant correlation mu_sq off the diagonal."""
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    if not (0.0 <= mu_sq < 1.0):
        raise ConfigError(f"mu_sq must lie in [0, 1), got {mu_sq}")
    m = np.full((N, N), mu_sq)
    np.fill_diagonal(m, 1.0)
    return CorrelationMatrix(entries=m, kind="constant")


def correlation_cholesky(corr: CorrelationMatrix) -> np.ndarray:
    """Square-root factor L with L L^T = Sigma, applying the jitter policy.

    Cholesky is retried with 1e-10 diagonal jitter up to three times; if the
    matrix is still numerically indefinite its eigenvalues are clipped to
    1e-12 and an eigen square root is returned instead.
    """
    m = corr.entries
    jitter = 1e-10 * np.eye(m.shape[0])
    for attempt in range(4):
        try:
            return np.linalg.cholesky(m + attempt * jitter)
        except np.linalg.LinAlgError:
            continue
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericError("correlation eigendecomposition failed") from exc
    return v * np.sqrt(np.clip(w, 1e-12, None))


# ---- channel realizations ------------------------------------------------------


@dataclass(frozen=True)
class LosRealization:
    """Line-of-sight phases drawn once per experiment.

    hbar[k, i] is the unit-modulus LoS entry of port k, element i, with a
    linear phase progression across ports; gbar[i] is the unit-modulus
    BS->RIS entry.
    """

    hbar: np.ndarray  # (N, M) complex
    gbar: np.ndarray  # (M,) complex


def draw_los(cfg: SystemConfig) -> LosRealization:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((cfg.seed, _LOS_STREAM))))
    psi = rng.uniform(0.0, 2.0 * np.pi, cfg.M)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    ports = np.arange(cfg.N)
    hbar = np.exp(1j * (psi[None, :] + 2.0 * np.pi * ports[:, None] / (cfg.N - 1) * cfg.W * np.cos(phi)))
    gbar = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, cfg.M))
    return LosRealization(hbar=hbar, gbar=gbar)


@dataclass(frozen=True)
class ChannelDraw:
    """One realization of the per-port envelopes."""

    a: np.ndarray
    a_max: float
    scheme: str  # csi-based | csi-free


def sample_amplitudes(cfg, corr, scheme, n, rng, los=None, chol=None) -> np.ndarray:
    """Draw n independent realizations of the N per-port envelopes.

    Returns an (N, n) array.  The NLoS port process is generated per RIS
    element as L z with z iid circular Gaussian, which reproduces the
    per-port marginals and the pairwise correlation of `corr`.
    """
    if scheme not in ("csi-based", "csi-free"):
        raise ConfigError(f"unknown scheme: {scheme}")
    if corr.n != cfg.N:
        raise ConfigError(f"correlation matrix is {corr.n}x{corr.n}, config has N={cfg.N}")
    if los is None:
        los = draw_los(cfg)
    if chol is None:
        chol = correlation_cholesky(corr)
    pl = cfg.pathloss()
    N, M = cfg.N, cfg.M
    c_los = np.sqrt(pl.alpha * cfg.K / (cfg.K + 1.0))
    s_nlos = np.sqrt(pl.alpha / (cfg.K + 1.0))

    z = (rng.standard_normal((N, M * n)) + 1j * rng.standard_normal((N, M * n))) / np.sqrt(2.0)
    h = c_los * los.hbar[:, :, None] + (chol @ z).reshape(N, M, n) * s_nlos
    if scheme == "csi-based":
        return np.sqrt(pl.beta) * np.abs(h).sum(axis=1)
    theta = rng.uniform(0.0, 2.0 * np.pi, (M, n))
    weights = np.exp(1j * theta) * (np.sqrt(pl.beta) * los.gbar[:, None])
    return np.abs((h * weights[None, :, :]).sum(axis=1))


def _single_draw(cfg, corr, rng, scheme, los) -> ChannelDraw:
    a = sample_amplitudes(cfg, corr, scheme, 1, rng, los=los)[:, 0]
    return ChannelDraw(a=a, a_max=float(a.max()), scheme=scheme)


def sample_ports_csi_based(cfg, corr, rng, los=None) -> ChannelDraw:
    """One draw of the coherently combined envelopes sqrt(beta) sum_i |h_k^i|."""
    return _single_draw(cfg, corr, rng, "csi-based", los)


def sample_ports_csi_free(cfg, corr, rng, los=None) -> ChannelDraw:
    """One draw of |h_k Phi g^H| with fresh uniform reflection phases."""
    return _single_draw(cfg, corr, rng, "csi-free", los)


def trial_stream(seed: int, chunk_index: int) -> np.random.Generator:
    """Counter-keyed RNG stream for Monte Carlo trial chunks."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, _TRIAL_STREAM, chunk_index))))


def inner_stream(seed: int) -> np.random.Generator:
    """RNG stream for the inner expectation of the block-conditional formula."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, _INNER_STREAM))))
