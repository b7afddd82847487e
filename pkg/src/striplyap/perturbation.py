"""Rank-perturbation inequalities: Weyl interlacing, log-det gaps, partitions.

Correctness over speed: spectral distances come from full eigensolves, which
is fine at the matrix sizes these verification routines target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .determinants import logdet_direct, signed_logdet
from .model import (
    ConfigurationError,
    DisorderSample,
    Region,
    StripGeometry,
    assemble_hamiltonian,
    boundary,
)

__all__ = [
    "InterlacingReport",
    "numerical_rank",
    "weyl_check",
    "logdet_gap_bound",
    "grid_partition",
    "partition_boundary",
    "partition_defect",
    "log_plus",
    "log_minus",
]

RANK_RTOL = 1e-9  # singular values below this times the norm count as zero


def log_plus(x: float) -> float:
    """max(log x, 0), with 0 for nonpositive arguments."""
    return max(math.log(x), 0.0) if x > 0 else 0.0


def log_minus(x: float) -> float:
    """max(-log x, 0); +inf at zero."""
    if x == 0:
        return math.inf
    return max(-math.log(x), 0.0)


def numerical_rank(matrix: np.ndarray, rtol: float = RANK_RTOL) -> int:
    sv = np.linalg.svd(np.asarray(matrix, dtype=float), compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def weyl_check(h1: np.ndarray, h2: np.ndarray, tol: float = 1e-9) -> bool:
    """Both interlacing chains for a rank-r difference of symmetric matrices.

    With eigenvalues in increasing order the chains are E1_j <= E2_{j+r} and
    E2_{j-r} <= E1_j; the rank is the numerical rank of the difference.
    """
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if h1.shape != h2.shape:
        raise ConfigurationError("matrices must have the same shape")
    r = numerical_rank(h1 - h2)
    e1 = np.linalg.eigvalsh(h1)
    e2 = np.linalg.eigvalsh(h2)
    n = len(e1)
    scale = max(1.0, float(np.max(np.abs(e1))), float(np.max(np.abs(e2))))
    slack = tol * scale
    if r == 0:
        return bool(np.all(np.abs(e1 - e2) <= slack))
    up = np.all(e1[: n - r] <= e2[r:] + slack)
    down = np.all(e2[: n - r] <= e1[r:] + slack)
    return bool(up and down)


@dataclass(frozen=True)
class InterlacingReport:
    """Both sides of the rank-perturbation log-det bound on one instance."""

    lhs: float
    rhs: float
    rank: int
    norm_term: float
    dist_term: float
    vacuous: bool

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.vacuous or self.lhs <= self.rhs + 1e-8


def logdet_gap_bound(
    h1: np.ndarray,
    h2: np.ndarray,
    energy: float,
    rank: int | None = None,
) -> InterlacingReport:
    """Evaluate log|det(H1-E)| - log|det(H2-E)| against the rank bound.

    The bound is 4 rank(H1-H2) max(log+(|E| + ||H1||), log-(dist(E, spec H2))).
    A singular H2 - E makes the bound vacuous; this is flagged, not raised.
    """
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    r = numerical_rank(h1 - h2) if rank is None else int(rank)
    d1 = signed_logdet(h1 - energy * np.eye(h1.shape[0]))
    d2 = signed_logdet(h2 - energy * np.eye(h2.shape[0]))
    e2 = np.linalg.eigvalsh(h2)
    dist = float(np.min(np.abs(e2 - energy)))
    norm_term = log_plus(abs(energy) + float(np.linalg.norm(h1, 2)))
    dist_term = log_minus(dist)
    vacuous = d2.sign == 0 or not math.isfinite(dist_term)
    lhs = d1.log_abs - d2.log_abs if not vacuous else -math.inf
    rhs = 4.0 * r * max(norm_term, dist_term)
    return InterlacingReport(
        lhs=float(lhs), rhs=float(rhs), rank=r, norm_term=norm_term, dist_term=dist_term, vacuous=vacuous
    )


def grid_partition(region: Region, cell: int) -> list[Region]:
    """Partition a rectangle by the cells of an l-periodic grid.

    Cells are anchored at the lower-left corner, so at most four distinct cell
    shapes occur (interior, two edge families, one corner family).
    """
    if not region.is_rectangle:
        raise ConfigurationError("grid_partition expects a rectangle")
    if cell < 1:
        raise ConfigurationError("cell side must be at least 1")
    n0, n1, w0, w1 = region.bounds()
    cells = []
    for a in range(n0, n1 + 1, cell):
        for c in range(w0, w1 + 1, cell):
            cells.append(Region.rectangle(a, min(a + cell - 1, n1), c, min(c + cell - 1, w1)))
    return cells


def partition_boundary(
    region: Region, partition: list[Region], geometry: StripGeometry
) -> frozenset:
    """Union over the partition of the cells' bond boundaries inside the region."""
    out: set = set()
    for part in partition:
        out |= boundary(region, part, geometry)
    return frozenset(out)


def _check_partition(region: Region, partition: list[Region]) -> None:
    seen: set = set()
    for part in partition:
        overlap = seen & set(part.sites)
        if overlap:
            raise ConfigurationError(f"partition overlaps at {sorted(overlap)[:3]}")
        seen |= set(part.sites)
    if seen != set(region.sites):
        raise ConfigurationError("partition does not cover the region")


def partition_defect(
    sample: DisorderSample,
    region: Region,
    partition: list[Region],
    energy: float,
) -> tuple[float, float]:
    """Determinant defect of a partition against its deterministic bound.

    defect = |log|det(H - E)| - sum of the per-cell values|; the bound is
    4 |union of cell boundaries| max(log+(|E| + ||H||), log-(dist to the joint
    spectrum of the region and all cells)).
    """
    _check_partition(region, partition)
    h = assemble_hamiltonian(sample, region)
    full = logdet_direct(h, energy)
    parts = [logdet_direct(assemble_hamiltonian(sample, part), energy) for part in partition]
    defect = abs(full.log_abs - sum(p.log_abs for p in parts))
    bnd_sites = partition_boundary(region, partition, sample.geometry)
    spectra = [np.linalg.eigvalsh(h.matrix)]
    spectra += [np.linalg.eigvalsh(assemble_hamiltonian(sample, part).matrix) for part in partition]
    dist = float(min(np.min(np.abs(s - energy)) for s in spectra))
    norm_term = log_plus(abs(energy) + float(np.linalg.norm(h.matrix, 2)))
    bound = 4.0 * len(bnd_sites) * max(norm_term, log_minus(dist))
    return float(defect), float(bound)
