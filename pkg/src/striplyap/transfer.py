"""Transfer-matrix cocycles, stabilized products, and Lyapunov spectra.

The N-step product of one-step blocks [[S_k - E, -I], [I, 0]] is kept in the
factored form  P = Q diag(exp(r)) S  with Q orthogonal, r the accumulated log
radii (diagonal of the triangular factor) and S unit upper triangular.  The
factorization is exact up to roundoff, so singular values and determinant
minors of very long products can be recovered without overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ConfigurationError, DisorderSample, DisorderSpec, StripGeometry, s_matrix, sample_disorder, split_stream

__all__ = [
    "NumericError",
    "one_step",
    "symplectic_form",
    "symplectic_defect",
    "CocycleAccumulator",
    "accumulate",
    "FrameShadow",
    "shadow_product",
    "LyapunovSpectrum",
    "lyapunov_spectrum",
    "recurrence_check",
    "MIN_COCYCLE_STEPS",
]

MIN_COCYCLE_STEPS = 16

_EXP_CLIP = 700.0  # largest exponent fed to np.exp, keeps inf out of the shear update
_BOOT_DOMAIN = 2  # stream tag for bootstrap resampling


class NumericError(ArithmeticError):
    """Non-finite values encountered in a cocycle product."""


def one_step(s_block: np.ndarray, energy: float) -> np.ndarray:
    """One-step transfer matrix [[S - E, -I], [I, 0]], unit determinant."""
    s_block = np.asarray(s_block, dtype=float)
    w = s_block.shape[0]
    t = np.zeros((2 * w, 2 * w))
    t[:w, :w] = s_block - energy * np.eye(w)
    t[:w, w:] = -np.eye(w)
    t[w:, :w] = np.eye(w)
    return t


def symplectic_form(width: int) -> np.ndarray:
    j = np.zeros((2 * width, 2 * width))
    j[:width, width:] = -np.eye(width)
    j[width:, :width] = np.eye(width)
    return j


def symplectic_defect(t: np.ndarray) -> float:
    """Operator-norm distance of T^t J T from J."""
    w = t.shape[0] // 2
    j = symplectic_form(w)
    return float(np.linalg.norm(t.T @ j @ t - j, 2))


def _qr_positive(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q, r = np.linalg.qr(a)
    signs = np.copysign(1.0, np.diag(r))
    return q * signs, r * signs[:, None]


@dataclass
class CocycleAccumulator:
    """Stabilized product state: P = frame . diag(exp(log_radii)) . shear."""

    frame: np.ndarray
    log_radii: np.ndarray
    shear: np.ndarray
    steps: int = 0

    @classmethod
    def identity(cls, width: int) -> "CocycleAccumulator":
        m = 2 * width
        return cls(frame=np.eye(m), log_radii=np.zeros(m), shear=np.eye(m), steps=0)

    @property
    def width(self) -> int:
        return self.frame.shape[0] // 2

    def copy(self) -> "CocycleAccumulator":
        return CocycleAccumulator(
            frame=self.frame.copy(),
            log_radii=self.log_radii.copy(),
            shear=self.shear.copy(),
            steps=self.steps,
        )

    def step(self, t: np.ndarray) -> None:
        if not np.all(np.isfinite(t)):
            raise NumericError("non-finite transfer matrix entries")
        q, r = _qr_positive(t @ self.frame)
        d = np.diag(r).copy()
        if np.any(d <= 0.0):
            raise NumericError("rank-deficient step in cocycle product")
        m = d.size
        iu, ju = np.triu_indices(m)
        expo = np.minimum(self.log_radii[ju] - self.log_radii[iu], _EXP_CLIP)
        sp = np.zeros((m, m))
        sp[iu, ju] = (r[iu, ju] / d[iu]) * np.exp(expo)
        np.fill_diagonal(sp, 1.0)
        self.shear = np.triu(sp @ self.shear)
        np.fill_diagonal(self.shear, 1.0)
        self.log_radii = self.log_radii + np.log(d)
        self.frame = q
        self.steps += 1
        if not (np.all(np.isfinite(self.log_radii)) and np.all(np.isfinite(self.shear))):
            raise NumericError("cocycle state lost finiteness")

    def log_singular_values(self) -> np.ndarray:
        """Log singular values of the accumulated product, sorted descending.

        Exact (up to roundoff) while the radii spread stays below ~700 in log;
        for larger spreads the smallest directions underflow and come back as
        -inf, and the raw log radii remain the meaningful growth estimates.
        """
        top = float(np.max(self.log_radii))
        graded = np.exp(self.log_radii - top)[:, None] * self.shear
        sv = np.linalg.svd(graded, compute_uv=False)
        with np.errstate(divide="ignore"):
            return np.sort(np.log(sv) + top)[::-1]


def accumulate(
    sample: DisorderSample,
    energy: float,
    n_steps: int,
    start: int = 0,
    init: CocycleAccumulator | None = None,
) -> CocycleAccumulator:
    """Stabilized product of one-step matrices for columns start+1 .. start+n_steps.

    Passing ``init`` chains a previous accumulator, so the product over [1, N]
    equals the product over [M+1, N] applied after the product over [1, M].
    """
    if start + n_steps > sample.potentials.shape[0]:
        raise ConfigurationError("accumulation range exceeds sampled extent")
    acc = CocycleAccumulator.identity(sample.geometry.width) if init is None else init.copy()
    for k in range(start + 1, start + n_steps + 1):
        acc.step(one_step(s_matrix(sample, k), energy))
    return acc


@dataclass(frozen=True)
class FrameShadow:
    """Log-scaled product applied to a column frame: P[u] = frame . signed exp scale.

    ``frame`` is 2W x k with orthonormal columns and ``log_scale`` accumulates
    log det of the triangular factors, so det of any k row selection of P[u]
    is det(frame[rows]) * exp(log_scale).
    """

    frame: np.ndarray
    log_scale: float
    steps: int


def shadow_product(
    sample: DisorderSample,
    energy: float,
    n_steps: int,
    init_frame: np.ndarray,
    start: int = 0,
) -> FrameShadow:
    """Carry a k-column shadow of the transfer product in log-scaled form."""
    if start + n_steps > sample.potentials.shape[0]:
        raise ConfigurationError("shadow range exceeds sampled extent")
    x = np.asarray(init_frame, dtype=float)
    if x.ndim != 2 or x.shape[0] != 2 * sample.geometry.width:
        raise ConfigurationError("init_frame must be 2W x k")
    q, r = _qr_positive(x)
    scale = float(np.sum(np.log(np.diag(r))))
    for k in range(start + 1, start + n_steps + 1):
        q, r = _qr_positive(one_step(s_matrix(sample, k), energy) @ q)
        d = np.diag(r)
        if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
            raise NumericError("rank-deficient shadow step")
        scale += float(np.sum(np.log(d)))
    return FrameShadow(frame=q, log_scale=scale, steps=n_steps)


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Top-W exponents with block-bootstrap error bars plus all 2W raw radii."""

    exponents: np.ndarray
    stderr: np.ndarray
    radii: np.ndarray
    n_steps: int
    burn_in: int

    @property
    def strictly_ordered(self) -> bool:
        return bool(np.all(np.diff(self.exponents) < 0))


def _radii_checkpoints(sample: DisorderSample, energy: float, edges: np.ndarray) -> np.ndarray:
    """Accumulated log radii of the QR cocycle at the given step counts.

    Lean inner loop: only the orthogonal frame and the running log radii are
    carried (no shear), and column signs are left unfixed since radii only
    need pivot magnitudes.
    """
    w = sample.geometry.width
    m = 2 * w
    t = np.zeros((m, m))
    t[w:, :w] = np.eye(w)
    t[:w, w:] = -np.eye(w)
    static_u = None
    if sample.u_law != "random_band":
        static_u = -sample.u_matrix(1) - energy * np.eye(w)
    pot = sample.potentials
    diag = np.arange(w)
    q = np.eye(m)
    radii = np.zeros(m)
    out = np.empty((len(edges), m))
    pos = 0
    while pos < len(edges) and edges[pos] == 0:
        out[pos] = 0.0
        pos += 1
    for k in range(int(edges[-1])):
        if static_u is not None:
            t[:w, :w] = static_u
        else:
            t[:w, :w] = -sample.u_matrix(k + 1) - energy * np.eye(w)
        t[diag, diag] += pot[k]
        q, r = np.linalg.qr(t @ q)
        d = np.abs(np.diagonal(r))
        if not np.all(d > 0.0):
            raise NumericError("rank-deficient step in cocycle product")
        radii += np.log(d)
        while pos < len(edges) and k + 1 == edges[pos]:
            out[pos] = radii
            pos += 1
    return out


def lyapunov_spectrum(
    spec: DisorderSpec,
    geometry: StripGeometry,
    energy: float,
    n_steps: int,
    seed: int,
    burn_in: int | None = None,
    n_blocks: int = 64,
    n_boot: int = 400,
) -> LyapunovSpectrum:
    """Estimate the non-negative Lyapunov exponents from one long product.

    The estimate is the mean per-step log growth after a burn-in window, which
    removes the O(1)/N transient of the raw radii.  Error bars come from a
    block bootstrap over contiguous segments of the post-burn-in increments.
    """
    if n_steps * geometry.width < MIN_COCYCLE_STEPS:
        raise ConfigurationError(
            f"n_steps * width must be at least {MIN_COCYCLE_STEPS}, got {n_steps * geometry.width}"
        )
    if burn_in is None:
        burn_in = min(n_steps // 8, 2000)
    work_geo = StripGeometry(geometry.width, geometry.bandwidth, n_steps)
    sample = sample_disorder(work_geo, spec, seed)
    span = n_steps - burn_in
    n_blocks = max(1, min(n_blocks, span))
    edges = np.unique(
        np.concatenate([[0, burn_in], burn_in + np.linspace(0, span, n_blocks + 1).astype(int), [n_steps]])
    )
    checkpoints = _radii_checkpoints(sample, energy, edges)
    r0 = checkpoints[list(edges).index(burn_in)]
    final = checkpoints[-1]
    block_edges = burn_in + np.linspace(0, span, n_blocks + 1).astype(int)
    block_rows = [list(edges).index(e) for e in block_edges]
    increments = np.diff(checkpoints[block_rows], axis=0)
    w = geometry.width
    gamma_all = (final - r0) / span
    rng = split_stream(seed, _BOOT_DOMAIN, 0)
    idx = rng.integers(0, len(increments), size=(n_boot, len(increments)))
    boot = increments[idx].sum(axis=1) / span
    stderr = boot.std(axis=0, ddof=1) if n_boot > 1 else np.zeros(2 * w)
    order = np.argsort(-gamma_all[:w])  # descending by construction, enforced anyway
    return LyapunovSpectrum(
        exponents=gamma_all[order],
        stderr=stderr[order],
        radii=final.copy(),
        n_steps=n_steps,
        burn_in=burn_in,
    )


def recurrence_check(
    sample: DisorderSample,
    energy: float,
    n_steps: int,
    initial: Sequence[float],
) -> float:
    """Gap between site-by-site iteration of H psi = E psi and the matrix product.

    The stencil route iterates psi_{k+1} = (S_k - E) psi_k - psi_{k-1} from
    (psi_1, psi_0) = initial; the matrix route applies the one-step factors to
    the same vector.  Returns the euclidean norm of the difference.
    """
    w = sample.geometry.width
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (2 * w,):
        raise ConfigurationError(f"initial vector must have length {2 * w}")
    psi_cur = initial[:w].copy()
    psi_prev = initial[w:].copy()
    for k in range(1, n_steps + 1):
        psi_cur, psi_prev = (s_matrix(sample, k) - energy * np.eye(w)) @ psi_cur - psi_prev, psi_cur
    stencil = np.concatenate([psi_cur, psi_prev])
    v = initial.copy()
    for k in range(1, n_steps + 1):
        v = one_step(s_matrix(sample, k), energy) @ v
    return float(np.linalg.norm(stencil - v))
