"""Block-diagonal approximation of the exact port-correlation matrix.

The exact Toeplitz correlation is replaced by B constant-correlation blocks
whose sizes are chosen so the sorted eigenvalue spectra of the two matrices
are as close as possible in least squares.  The block count B is the number
of eigenvalues of the exact matrix above a threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .channel import CorrelationMatrix, SystemConfig, jakes_correlation
from .errors import ConfigError, NumericError

__all__ = [
    "BlockStructure",
    "count_blocks",
    "fit_block_sizes",
    "build_block_matrix",
    "block_spectrum",
    "block_slices",
    "fit_for_config",
]


@dataclass(frozen=True)
class BlockStructure:
    """Sizes and shared correlation of the block-diagonal approximation."""

    B: int
    sizes: tuple
    mu_sq: float
    spectral_distance: float = 0.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if self.B != len(sizes) or self.B < 1:
            raise ConfigError("block count must equal len(sizes) and be >= 1")
        if any(s < 1 for s in sizes):
            raise ConfigError("every block size must be >= 1")
        if not (0.0 <= self.mu_sq < 1.0):
            raise ConfigError(f"mu_sq must lie in [0, 1), got {self.mu_sq}")
        if self.spectral_distance < 0:
            raise ConfigError("spectral_distance must be >= 0")

    @property
    def n_ports(self) -> int:
        return sum(self.sizes)

    def to_json(self) -> str:
        return json.dumps(
            {
                "B": self.B,
                "sizes": list(self.sizes),
                "mu_sq": self.mu_sq,
                "spectral_distance": self.spectral_distance,
            }
        )

    @staticmethod
    def from_json(text: str) -> "BlockStructure":
        d = json.loads(text)
        return BlockStructure(
            B=d["B"],
            sizes=tuple(d["sizes"]),
            mu_sq=d["mu_sq"],
            spectral_distance=d.get("spectral_distance", 0.0),
        )


def _sorted_eigenvalues(corr: CorrelationMatrix) -> np.ndarray:
    try:
        ev = np.linalg.eigvalsh(corr.entries)
    except np.linalg.LinAlgError as exc:
        raise NumericError("eigensolver failed on the correlation matrix") from exc
    return ev[::-1]


def count_blocks(corr: CorrelationMatrix, lambda_th: float) -> int:
    """Number of eigenvalues of the exact correlation at or above lambda_th."""
    if not lambda_th > 0:
        raise ConfigError(f"lambda_th must be > 0, got {lambda_th}")
    ev = _sorted_eigenvalues(corr)
    return int(np.count_nonzero(ev >= lambda_th))


def block_spectrum(sizes, mu_sq: float, n: int) -> np.ndarray:
    """Closed-form eigenvalues of the block matrix, sorted descending.

    Each block of size L contributes 1 + (L-1) mu_sq once and 1 - mu_sq with
    multiplicity L - 1.
    """
    top = [1.0 + (L - 1) * mu_sq for L in sizes]
    rest = [1.0 - mu_sq] * (n - len(sizes))
    return np.sort(np.asarray(top + rest))[::-1]


def _spectral_distance(sizes, mu_sq, exact_sorted) -> float:
    approx = block_spectrum(sizes, mu_sq, exact_sorted.size)
    return float(((approx - exact_sorted) ** 2).sum())


def _equal_split(n: int, b: int):
    base, extra = divmod(n, b)
    return [base + 1] * extra + [base] * (b - extra)


def fit_block_sizes(corr: CorrelationMatrix, B: int, mu_sq: float) -> BlockStructure:
    """Choose block sizes minimizing the eigenvalue least-squares distance.

    Sizes are seeded from L_b ~ (lambda_b - 1)/mu_sq + 1, adjusted to sum to
    N, then refined by single-port transfers until no move improves the
    spectral distance.  The equal split is also evaluated so the result is
    never worse than it.
    """
    n = corr.n
    if B > n:
        raise ConfigError(f"cannot split {n} ports into {B} blocks")
    if B < 1:
        raise ConfigError("block count must be >= 1")
    if not (0.0 <= mu_sq < 1.0):
        raise ConfigError(f"mu_sq must lie in [0, 1), got {mu_sq}")
    exact = _sorted_eigenvalues(corr)

    top = exact[:B]
    sizes = np.maximum(1, np.rint((top - 1.0) / max(mu_sq, 1e-12) + 1.0).astype(int))

    # restore sum(sizes) == n by repeatedly applying the cheapest +-1 change,
    # judged by each block's top-eigenvalue mismatch
    def top_cost(L, lam):
        return (1.0 + (L - 1) * mu_sq - lam) ** 2

    while sizes.sum() != n:
        step = 1 if sizes.sum() < n else -1
        best_i, best_delta = None, None
        for i in range(B):
            if sizes[i] + step < 1:
                continue
            delta = top_cost(sizes[i] + step, top[i]) - top_cost(sizes[i], top[i])
            if best_delta is None or delta < best_delta:
                best_i, best_delta = i, delta
        sizes[best_i] += step

    # local search: move one port between blocks while it helps
    current = _spectral_distance(sizes, mu_sq, exact)
    improved = True
    while improved:
        improved = False
        for i in range(B):
            if sizes[i] <= 1:
                continue
            for j in range(B):
                if i == j:
                    continue
                cand = sizes.copy()
                cand[i] -= 1
                cand[j] += 1
                d = _spectral_distance(cand, mu_sq, exact)
                if d < current - 1e-15:
                    sizes, current = cand, d
                    improved = True
                    break
            if improved:
                break

    even = np.asarray(_equal_split(n, B))
    even_dist = _spectral_distance(even, mu_sq, exact)
    if even_dist < current:
        sizes, current = even, even_dist

    ordered = tuple(sorted((int(s) for s in sizes), reverse=True))
    return BlockStructure(B=B, sizes=ordered, mu_sq=mu_sq, spectral_distance=current)


def build_block_matrix(structure: BlockStructure) -> CorrelationMatrix:
    """Assemble the block-diagonal correlation matrix."""
    n = structure.n_ports
    m = np.zeros((n, n))
    pos = 0
    for L in structure.sizes:
        m[pos : pos + L, pos : pos + L] = structure.mu_sq
        pos += L
    np.fill_diagonal(m, 1.0)
    return CorrelationMatrix(entries=m, kind="block-diagonal")


def block_slices(structure: BlockStructure):
    """Contiguous port index ranges of each block."""
    pos = 0
    out = []
    for L in structure.sizes:
        out.append(slice(pos, pos + L))
        pos += L
    return out


def fit_for_config(cfg: SystemConfig) -> BlockStructure:
    """Exact correlation -> block count -> fitted sizes, for one config."""
    corr = jakes_correlation(cfg.N, cfg.W)
    b = count_blocks(corr, cfg.lambda_th)
    b = max(1, min(b, cfg.N))
    return fit_block_sizes(corr, b, cfg.mu_b_sq)
