"""Chunked, worker-parallel Monte Carlo kernels over disorder ensembles.

Chunk k of an ensemble is a pure function of (spec, geometry, seed, k), and
workers only schedule whole chunks, so every sampler here returns the same
arrays for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .model import (
    ConfigurationError,
    DisorderSpec,
    Region,
    StripGeometry,
    assembly_plan,
    build_hamiltonians,
    draw_chunk,
)

__all__ = [
    "sample_logdets",
    "sample_spectral",
    "sample_site_shifts",
    "sample_resolvent_entries",
    "bootstrap_ci",
    "DEFAULT_CHUNK",
]

DEFAULT_CHUNK = 4096
_CHUNK_BUDGET = 1 << 23  # doubles per chunk of stacked Hamiltonians (~64 MB)


def _effective_chunk(chunk_size: int, matrix_dim: int) -> int:
    return max(16, min(chunk_size, _CHUNK_BUDGET // max(matrix_dim * matrix_dim, 1)))


def _chunk_spans(n_samples: int, chunk_size: int) -> list[tuple[int, int, int]]:
    spans = []
    start = 0
    idx = 0
    while start < n_samples:
        m = min(chunk_size, n_samples - start)
        spans.append((idx, start, m))
        start += m
        idx += 1
    return spans


def _run_chunks(task, n_samples: int, chunk_size: int, workers: int) -> None:
    spans = _chunk_spans(n_samples, chunk_size)
    if workers <= 1:
        for span in spans:
            task(*span)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda s: task(*s), spans))


def sample_logdets(
    spec: DisorderSpec,
    geometry: StripGeometry,
    region: Region,
    energy: float,
    n_samples: int,
    seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> tuple[np.ndarray, int]:
    """log|det(H_region - E)| over independent realizations.

    Exactly singular samples are returned as -inf; the count is reported so
    callers can exclude them explicitly.
    """
    if n_samples < 1:
        raise ConfigurationError("need at least one sample")
    plan = assembly_plan(region, geometry)
    chunk_size = _effective_chunk(chunk_size, len(plan.sites))
    out = np.empty(n_samples)
    diag = np.arange(len(plan.sites))

    def task(idx: int, start: int, m: int) -> None:
        pot, u_band = draw_chunk(spec, geometry, idx, m, seed)
        h = build_hamiltonians(plan, pot, spec.u_law, u_band)
        h[:, diag, diag] -= energy
        sign, log_abs = np.linalg.slogdet(h)
        out[start : start + m] = np.where(sign == 0.0, -np.inf, log_abs)

    _run_chunks(task, n_samples, chunk_size, workers)
    n_singular = int(np.sum(np.isneginf(out)))
    return out, n_singular


def sample_spectral(
    spec: DisorderSpec,
    geometry: StripGeometry,
    region: Region,
    energy: float,
    n_samples: int,
    seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> dict:
    """Joint samples of log|det(H - E)|, dist(E, spec H), and ||H||.

    One eigendecomposition per sample feeds all three, which keeps the
    pointwise relations between them exact.
    """
    plan = assembly_plan(region, geometry)
    chunk_size = _effective_chunk(chunk_size, len(plan.sites))
    log_abs = np.empty(n_samples)
    dist = np.empty(n_samples)
    norm = np.empty(n_samples)

    def task(idx: int, start: int, m: int) -> None:
        pot, u_band = draw_chunk(spec, geometry, idx, m, seed)
        h = build_hamiltonians(plan, pot, spec.u_law, u_band)
        eigs = np.linalg.eigvalsh(h)
        gaps = np.abs(eigs - energy)
        with np.errstate(divide="ignore"):
            log_abs[start : start + m] = np.sum(np.log(gaps), axis=1)
        dist[start : start + m] = np.min(gaps, axis=1)
        norm[start : start + m] = np.max(np.abs(eigs), axis=1)

    _run_chunks(task, n_samples, chunk_size, workers)
    return {"log_abs": log_abs, "dist": dist, "norm": norm}


def sample_site_shifts(
    spec: DisorderSpec,
    geometry: StripGeometry,
    region: Region,
    k: tuple[int, int],
    energy: float,
    n_samples: int,
    seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> tuple[np.ndarray, int]:
    """Samples of the single-site Schur shift xi at site k over the ensemble.

    Exactly singular punctured Hamiltonians are counted and returned as nan.
    """
    if k not in region:
        raise ConfigurationError(f"site {k} not in region")
    if region.size == 1:
        out = np.full(n_samples, energy)
        if spec.u_law == "random_band":
            # diagonal coupling still fluctuates for the random band law
            def task(idx, start, m):
                pot, u_band = draw_chunk(spec, geometry, idx, m, seed)
                out[start : start + m] = energy + u_band[:, k[0] - 1, 0, k[1] - 1]

            _run_chunks(task, n_samples, chunk_size, workers)
        return out, 0
    rest = region.without_site(k)
    plan = assembly_plan(rest, geometry)
    chunk_size = _effective_chunk(chunk_size, len(plan.sites))
    sites = plan.sites
    d = geometry.bandwidth
    n0, w0 = k
    hor_pos = [j for j, (n, w) in enumerate(sites) if w == w0 and abs(n - n0) == 1]
    ver_pos = [(j, abs(w - w0), min(w, w0)) for j, (n, w) in enumerate(sites) if n == n0 and 0 < abs(w - w0) <= d]
    out = np.full(n_samples, np.nan)
    diag = np.arange(len(sites))

    def task(idx: int, start: int, m: int) -> None:
        pot, u_band = draw_chunk(spec, geometry, idx, m, seed)
        h = build_hamiltonians(plan, pot, spec.u_law, u_band)
        h[:, diag, diag] -= energy
        g = np.zeros((m, len(sites)))
        if hor_pos:
            g[:, hor_pos] = -1.0
        for j, off, wlo in ver_pos:
            if spec.u_law == "adjacency":
                g[:, j] = -1.0 if off == 1 else 0.0
            elif spec.u_law == "random_band":
                g[:, j] = -u_band[:, n0 - 1, off, wlo - 1]
        if spec.u_law == "random_band":
            u_kk = u_band[:, n0 - 1, 0, w0 - 1]
        else:
            u_kk = np.zeros(m)
        try:
            x = np.linalg.solve(h, g[..., None])[..., 0]
            out[start : start + m] = u_kk + energy + np.sum(g * x, axis=1)
        except np.linalg.LinAlgError:
            for i in range(m):
                try:
                    xi = np.linalg.solve(h[i], g[i])
                    out[start + i] = u_kk[i] + energy + float(g[i] @ xi)
                except np.linalg.LinAlgError:
                    pass  # stays nan, counted below

    _run_chunks(task, n_samples, chunk_size, workers)
    n_failed = int(np.sum(~np.isfinite(out)))
    return out, n_failed


def sample_resolvent_entries(
    spec: DisorderSpec,
    geometry: StripGeometry,
    region: Region,
    site_a: tuple[int, int],
    site_b: tuple[int, int],
    energy: float,
    n_samples: int,
    seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK,
) -> np.ndarray:
    """Samples of the resolvent entry (H_region - E)^-1(a, b) over the ensemble."""
    plan = assembly_plan(region, geometry)
    chunk_size = _effective_chunk(chunk_size, len(plan.sites))
    sites = list(plan.sites)
    ia, ib = sites.index(site_a), sites.index(site_b)
    out = np.full(n_samples, np.nan)
    diag = np.arange(len(sites))

    def task(idx: int, start: int, m: int) -> None:
        pot, u_band = draw_chunk(spec, geometry, idx, m, seed)
        h = build_hamiltonians(plan, pot, spec.u_law, u_band)
        h[:, diag, diag] -= energy
        rhs = np.zeros((m, len(sites)))
        rhs[:, ib] = 1.0
        try:
            x = np.linalg.solve(h, rhs[..., None])[..., 0]
            out[start : start + m] = x[:, ia]
        except np.linalg.LinAlgError:
            for i in range(m):
                try:
                    out[start + i] = np.linalg.solve(h[i], rhs[i])[ia]
                except np.linalg.LinAlgError:
                    pass

    _run_chunks(task, n_samples, chunk_size, workers)
    return out


def bootstrap_ci(
    values: np.ndarray,
    statistic,
    seed: int,
    n_boot: int = 1000,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile bootstrap interval for a statistic of an i.i.d. sample."""
    values = np.asarray(values)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & ((1 << 63) - 1), spawn_key=(9,)))
    idx = rng.integers(0, len(values), size=(n_boot, len(values)))
    stats = np.array([statistic(values[row]) for row in idx])
    alpha = (1.0 - level) / 2.0
    return float(np.quantile(stats, alpha)), float(np.quantile(stats, 1.0 - alpha))
