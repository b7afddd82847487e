"""W-th exterior power machinery: wedge bases, transfer minors, boundary operators.

The entries of the W-th exterior power of a 2W x 2W transfer product are its
W x W minors.  Minors of long products are evaluated through log-scaled column
shadows, never through naive products.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .determinants import SignedLogDet, logdet_direct, signed_logdet
from .model import ConfigurationError, DisorderSample, Region, assemble_hamiltonian
from .transfer import FrameShadow, shadow_product

__all__ = [
    "WedgeIndex",
    "WedgeFrame",
    "wedge_indices",
    "canonical_frame",
    "expand_standard",
    "wedge_inner",
    "wedge_coordinates",
    "minor",
    "ExteriorProduct",
    "BoundaryOperator",
    "boundary_operator",
    "boundary_logdet",
    "boundary_identity_check",
    "sylvester_franke_check",
    "frame_det_gap",
    "MAX_EXTERIOR_WIDTH",
]

MAX_EXTERIOR_WIDTH = 5  # binom(10, 5) = 252 is the largest materialized dimension


@dataclass(frozen=True)
class WedgeIndex:
    """A W-element subset of {1, .., 2W}, kept sorted."""

    elements: tuple[int, ...]
    width: int

    def __post_init__(self):
        if len(self.elements) != self.width:
            raise ConfigurationError("wedge index must have exactly W elements")
        if list(self.elements) != sorted(set(self.elements)):
            raise ConfigurationError("wedge index elements must be strictly increasing")
        if self.elements and (self.elements[0] < 1 or self.elements[-1] > 2 * self.width):
            raise ConfigurationError("wedge index elements must lie in [1, 2W]")

    @classmethod
    def of(cls, elements, width: int) -> "WedgeIndex":
        return cls(tuple(sorted(int(e) for e in elements)), width)

    def zero_based(self) -> np.ndarray:
        return np.asarray(self.elements, dtype=np.intp) - 1


def wedge_indices(width: int) -> list[WedgeIndex]:
    return [WedgeIndex(c, width) for c in itertools.combinations(range(1, 2 * width + 1), width)]


@dataclass(frozen=True)
class WedgeFrame:
    """Decomposable wedge vector stored as a 2W x W column matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def width(self) -> int:
        return self.matrix.shape[1]

    @property
    def top(self) -> np.ndarray:
        return self.matrix[: self.width]

    @property
    def bottom(self) -> np.ndarray:
        return self.matrix[self.width :]


def _pairing(alpha: WedgeIndex) -> dict[int, int]:
    """Order-preserving bijection from [1, W] minus alpha onto alpha above W."""
    w = alpha.width
    lower_missing = [i for i in range(1, w + 1) if i not in alpha.elements]
    upper_present = [a for a in alpha.elements if a > w]
    return dict(zip(lower_missing, upper_present))


def canonical_frame(alpha: WedgeIndex) -> WedgeFrame:
    """Basis frame with identity top block and a contraction as bottom block.

    Column i is e_i when i is in alpha, and e_i + e_{phi(i)} otherwise, with
    phi the order-preserving pairing into the upper half of alpha.
    """
    w = alpha.width
    phi = _pairing(alpha)
    m = np.zeros((2 * w, w))
    for i in range(1, w + 1):
        m[i - 1, i - 1] = 1.0
        if i not in alpha.elements:
            m[phi[i] - 1, i - 1] = 1.0
    return WedgeFrame(matrix=m)


def _sort_parity(seq) -> int:
    """Sign of the permutation sorting seq ascending (distinct entries)."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def expand_standard(alpha: WedgeIndex) -> dict[WedgeIndex, int]:
    """Coefficients c in {-1, 0, +1} with e_alpha = sum c_beta u_beta.

    Expanding each mixed column (e_i + e_phi(i)) - e_i of the canonical frames
    produces one signed canonical frame per subset of the upper-half elements
    of alpha; the permutation sign comes from reordering the wedge slots.
    """
    w = alpha.width
    phi = _pairing(alpha)
    phi_inv = {v: k for k, v in phi.items()}
    lower = [a for a in alpha.elements if a <= w]
    upper = [a for a in alpha.elements if a > w]
    slots = lower + [phi_inv[a] for a in upper]
    base_sign = _sort_parity(slots)
    coeffs: dict[WedgeIndex, int] = {}
    for r in range(len(upper) + 1):
        for picked in itertools.combinations(upper, r):
            beta_elems = set(lower)
            beta_elems.update(phi_inv[a] for a in picked)
            beta_elems.update(a for a in upper if a not in picked)
            beta = WedgeIndex.of(beta_elems, w)
            coeffs[beta] = base_sign * (-1) ** r
    return coeffs


def wedge_inner(u, v) -> float:
    """Inner product of decomposable wedge vectors, det([u]^t [v])."""
    mu = u.matrix if isinstance(u, WedgeFrame) else np.asarray(u, dtype=float)
    mv = v.matrix if isinstance(v, WedgeFrame) else np.asarray(v, dtype=float)
    return float(np.linalg.det(mu.T @ mv))


def wedge_coordinates(frame, width: int) -> np.ndarray:
    """Coordinates of a decomposable vector in the standard wedge basis."""
    m = frame.matrix if isinstance(frame, WedgeFrame) else np.asarray(frame, dtype=float)
    return np.array([np.linalg.det(m[idx.zero_based(), :]) for idx in wedge_indices(width)])


def _standard_selection(alpha: WedgeIndex) -> np.ndarray:
    m = np.zeros((2 * alpha.width, alpha.width))
    m[alpha.zero_based(), np.arange(alpha.width)] = 1.0
    return m


def minor(beta: WedgeIndex, alpha: WedgeIndex, transfer) -> SignedLogDet:
    """SignedLogDet of the (beta, alpha) minor of a transfer matrix or product.

    ``transfer`` is either a dense 2W x 2W array or a FrameShadow built from
    the standard columns of alpha (log-scaled product route).
    """
    if isinstance(transfer, FrameShadow):
        rows = transfer.frame[beta.zero_based(), :]
        block = signed_logdet(rows) if rows.shape[0] > 1 else SignedLogDet.from_value(rows[0, 0])
        if block.sign == 0:
            return SignedLogDet.zero()
        return SignedLogDet(block.sign, block.log_abs + transfer.log_scale)
    t = np.asarray(transfer, dtype=float)
    sub = t[np.ix_(beta.zero_based(), alpha.zero_based())]
    if sub.shape == (1, 1):
        return SignedLogDet.from_value(sub[0, 0])
    return signed_logdet(sub)


class ExteriorProduct:
    """All W x W minors of an N-step transfer product, shadows cached per column set."""

    def __init__(self, sample: DisorderSample, energy: float, n_steps: int):
        width = sample.geometry.width
        if width > MAX_EXTERIOR_WIDTH:
            raise ConfigurationError(
                f"exterior power materialized only for width <= {MAX_EXTERIOR_WIDTH}"
            )
        self.sample = sample
        self.energy = energy
        self.n_steps = n_steps
        self.width = width
        self._shadows: dict[WedgeIndex, FrameShadow] = {}

    def shadow(self, alpha: WedgeIndex) -> FrameShadow:
        if alpha not in self._shadows:
            self._shadows[alpha] = shadow_product(
                self.sample, self.energy, self.n_steps, _standard_selection(alpha)
            )
        return self._shadows[alpha]

    def minor(self, beta: WedgeIndex, alpha: WedgeIndex) -> SignedLogDet:
        return minor(beta, alpha, self.shadow(alpha))

    def log_abs_det(self) -> float:
        """log |det| of the exterior power, assembled in log-scaled form.

        Column alpha of the exterior power carries the common scale of its
        shadow; factoring the scales out leaves a matrix of frame-row
        determinants bounded by one, whose log det is added back.
        """
        idxs = wedge_indices(self.width)
        g = np.empty((len(idxs), len(idxs)))
        scale = 0.0
        for j, alpha in enumerate(idxs):
            sh = self.shadow(alpha)
            scale += sh.log_scale
            for i, beta in enumerate(idxs):
                rows = sh.frame[beta.zero_based(), :]
                g[i, j] = np.linalg.det(rows) if rows.shape[0] > 1 else rows[0, 0]
        sign, log_abs = np.linalg.slogdet(g)
        if sign == 0.0:
            return -math.inf
        return float(log_abs + scale)


@dataclass(frozen=True)
class BoundaryOperator:
    """H_N with the first and last column blocks modified by frame data."""

    matrix: np.ndarray
    is_symmetric: bool

    def __post_init__(self):
        self.matrix.setflags(write=False)


def boundary_operator(
    sample: DisorderSample,
    u: WedgeFrame,
    v: WedgeFrame,
    n_steps: int,
) -> BoundaryOperator:
    """Operator whose spectrum encodes the boundary conditions carried by (u, v).

    The first diagonal block becomes S_1 - B_u A_u^{-1} and the last becomes
    S_N + (B_v A_v^{-1})^t; everything else matches the Dirichlet restriction.
    """
    w = sample.geometry.width
    if n_steps < 1 or n_steps > sample.potentials.shape[0]:
        raise ConfigurationError("n_steps outside the sampled extent")
    for name, frame in (("u", u), ("v", v)):
        if abs(np.linalg.det(frame.top)) < 1e-12:
            raise ConfigurationError(f"top block of frame {name} is singular")
    region = Region.rectangle(1, n_steps, 1, w)
    h = assemble_hamiltonian(sample, region).matrix.copy()
    corr_u = u.bottom @ np.linalg.inv(u.top)
    corr_v = v.bottom @ np.linalg.inv(v.top)
    h[:w, :w] -= corr_u
    h[-w:, -w:] += corr_v.T
    sym = bool(np.allclose(h, h.T, rtol=0.0, atol=1e-12))
    return BoundaryOperator(matrix=h, is_symmetric=sym)


def boundary_logdet(
    sample: DisorderSample,
    u: WedgeFrame,
    v: WedgeFrame,
    n_steps: int,
    energy: float,
) -> SignedLogDet:
    """SignedLogDet of the boundary-modified operator at energy E."""
    op = boundary_operator(sample, u, v, n_steps)
    return signed_logdet(op.matrix - energy * np.eye(op.matrix.shape[0]))


def boundary_identity_check(
    sample: DisorderSample,
    energy: float,
    n_steps: int,
    u: WedgeFrame,
    v: WedgeFrame,
) -> tuple[SignedLogDet, SignedLogDet]:
    """Both sides of det(A_u A_v) det(H_N(u,v) - E) = det([v]^t T_N [u]).

    The right-hand side runs through a log-scaled shadow of the product
    applied to [u], then contracts with [v]; the left side goes through the
    boundary-modified operator.  The two sides must agree.
    """
    det_au = signed_logdet(u.top) if u.width > 1 else SignedLogDet.from_value(u.top[0, 0])
    det_av = signed_logdet(v.top) if v.width > 1 else SignedLogDet.from_value(v.top[0, 0])
    lhs = det_au * det_av * boundary_logdet(sample, u, v, n_steps, energy)
    sh = shadow_product(sample, energy, n_steps, u.matrix)
    contracted = v.matrix.T @ sh.frame
    blk = signed_logdet(contracted) if contracted.shape[0] > 1 else SignedLogDet.from_value(contracted[0, 0])
    rhs = SignedLogDet.zero() if blk.sign == 0 else SignedLogDet(blk.sign, blk.log_abs + sh.log_scale)
    return lhs, rhs


def sylvester_franke_check(sample: DisorderSample, energy: float, n_steps: int) -> float:
    """|log |det| of the W-th exterior power| of the N-step product.

    The exterior power of a unit-determinant symplectic product has modulus
    one determinant, so the return value measures pure numerical drift and
    should stay below a small multiple of N.
    """
    ext = ExteriorProduct(sample, energy, n_steps)
    return abs(ext.log_abs_det())


def frame_det_gap(sample: DisorderSample, energy: float, n_steps: int) -> float:
    """Max over canonical frame pairs of log|det(u,v)-modified| - log|Dirichlet|.

    Enumerates all pairs of canonical frames (identity top blocks), so it is
    restricted to small widths.
    """
    w = sample.geometry.width
    if w > 4:
        raise ConfigurationError("frame pair enumeration restricted to width <= 4")
    region = Region.rectangle(1, n_steps, 1, w)
    base = logdet_direct(assemble_hamiltonian(sample, region), energy)
    frames = [canonical_frame(a) for a in wedge_indices(w)]
    gap = -math.inf
    for fu in frames:
        for fv in frames:
            val = boundary_logdet(sample, fu, fv, n_steps, energy)
            if val.sign == 0:
                continue
            gap = max(gap, val.log_abs - base.log_abs)
    return float(gap)
