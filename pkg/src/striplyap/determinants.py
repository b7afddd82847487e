"""Signed log determinants of H_region - E by three independent routes.

Everything is carried as (sign, log|det|) pairs so that regions with tens of
thousands of sites never overflow, and so that products of partial results
compose exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import (
    ConfigurationError,
    DisorderSample,
    HamiltonianMatrix,
    Region,
    assemble_hamiltonian,
    s_matrix,
)
from .transfer import accumulate

__all__ = [
    "SignedLogDet",
    "NearSingularError",
    "signed_logdet",
    "logdet_direct",
    "logdet_via_transfer",
    "logdet_via_schur",
    "site_shift",
]

PIVOT_FLOOR = 1e-300  # pivots below this count as exact zeros (safety net)


class NearSingularError(ArithmeticError):
    """Shifted Hamiltonian too close to singular for a resolvent evaluation."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


@dataclass(frozen=True)
class SignedLogDet:
    """Sign in {-1, 0, +1} plus log magnitude; sign 0 pairs with -inf."""

    sign: int
    log_abs: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or +1, got {self.sign}")
        if (self.sign == 0) != (self.log_abs == -math.inf):
            raise ValueError("sign 0 must pair with log_abs -inf and vice versa")

    @classmethod
    def zero(cls) -> "SignedLogDet":
        return cls(0, -math.inf)

    @classmethod
    def one(cls) -> "SignedLogDet":
        return cls(1, 0.0)

    @classmethod
    def from_value(cls, x: float) -> "SignedLogDet":
        if x == 0.0:
            return cls.zero()
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    def __mul__(self, other: "SignedLogDet") -> "SignedLogDet":
        if self.sign == 0 or other.sign == 0:
            return SignedLogDet.zero()
        return SignedLogDet(self.sign * other.sign, self.log_abs + other.log_abs)

    def value(self) -> float:
        """Plain float value; overflows to +-inf for large log_abs."""
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * math.exp(self.log_abs)
        except OverflowError:
            return self.sign * math.inf


def signed_logdet(matrix: np.ndarray) -> SignedLogDet:
    """SignedLogDet of an arbitrary square matrix via pivoted LU."""
    matrix = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("matrix has non-finite entries")
    sign, log_abs = np.linalg.slogdet(matrix)
    if sign == 0.0:
        return SignedLogDet.zero()
    return SignedLogDet(int(sign), float(log_abs))


def _ldl_signed_logdet(matrix: np.ndarray) -> tuple[SignedLogDet, float, float]:
    """Symmetric-indefinite route: returns (result, min pivot, max pivot).

    The pivots are the magnitudes of the 1x1 and 2x2 block determinants of the
    LDL^t factorization; their ratio doubles as a cheap condition estimate.
    """
    n = matrix.shape[0]
    _, d, _ = scipy.linalg.ldl(matrix)
    sign = 1
    log_abs = 0.0
    pivots = []
    i = 0
    while i < n:
        if i + 1 < n and d[i + 1, i] != 0.0:
            a, b, c = d[i, i], d[i + 1, i + 1], d[i + 1, i]
            det2 = a * b - c * c
            pivots.append(abs(det2))
            if abs(det2) < PIVOT_FLOOR:
                return SignedLogDet.zero(), 0.0, max(pivots) if pivots else 0.0
            sign *= 1 if det2 > 0 else -1
            log_abs += math.log(abs(det2))
            i += 2
        else:
            p = d[i, i]
            pivots.append(abs(p))
            if abs(p) < PIVOT_FLOOR:
                return SignedLogDet.zero(), 0.0, max(pivots) if pivots else 0.0
            sign *= 1 if p > 0 else -1
            log_abs += math.log(abs(p))
            i += 1
    return SignedLogDet(sign, log_abs), min(pivots), max(pivots)


def logdet_direct(
    hamiltonian: HamiltonianMatrix | np.ndarray,
    energy: float,
    with_condition: bool = False,
):
    """SignedLogDet of H - E through a symmetric-indefinite factorization.

    With ``with_condition=True`` also returns max|pivot|/min|pivot|, a crude
    estimate of how close E sits to the spectrum.
    """
    h = hamiltonian.matrix if isinstance(hamiltonian, HamiltonianMatrix) else np.asarray(hamiltonian, dtype=float)
    if not np.all(np.isfinite(h)):
        raise ValueError("Hamiltonian has non-finite entries")
    if h.shape[0] != h.shape[1] or not np.array_equal(h, h.T):
        raise ValueError("logdet_direct expects an exactly symmetric matrix")
    shifted = h - energy * np.eye(h.shape[0])
    result, pmin, pmax = _ldl_signed_logdet(shifted)
    if with_condition:
        cond = math.inf if pmin == 0.0 else pmax / pmin
        return result, cond
    return result


def _rectangle_steps(sample: DisorderSample, n_steps: int | None) -> int:
    n = sample.potentials.shape[0] if n_steps is None else n_steps
    if n < 1 or n > sample.potentials.shape[0]:
        raise ConfigurationError("n_steps outside the sampled extent")
    return n


def logdet_via_transfer(sample: DisorderSample, energy: float, n_steps: int | None = None) -> SignedLogDet:
    """Determinant of the top-left W x W block of the N-step transfer product.

    For the full rectangle [1, N] x [1, W] this block determinant equals
    det(H_N - E).  The block is recovered from the stabilized factorization
    P = Q diag(exp(r)) S: the first W columns of the triangular factor are
    upper triangular, so det(P[:W, :W]) = det(Q[:W, :W]) * exp(r_1 + .. + r_W).
    """
    n = _rectangle_steps(sample, n_steps)
    w = sample.geometry.width
    acc = accumulate(sample, energy, n)
    block = signed_logdet(acc.frame[:w, :w]) if w > 1 else SignedLogDet.from_value(acc.frame[0, 0])
    if block.sign == 0:
        return SignedLogDet.zero()
    return SignedLogDet(block.sign, block.log_abs + float(np.sum(acc.log_radii[:w])))


def logdet_via_schur(
    sample: DisorderSample,
    energy: float,
    n_steps: int | None = None,
    return_info: bool = False,
):
    """Column-sweep determinant via the block recursion B_k = S_k - E - B_{k-1}^{-1}.

    Each B_k is the Schur complement of the leading (k-1) column blocks, so
    det(H_N - E) is the product of det(B_k).  If an intermediate block is
    numerically singular the routine falls back to the direct factorization
    and reports it through the info flag.
    """
    n = _rectangle_steps(sample, n_steps)
    w = sample.geometry.width
    eye = np.eye(w)
    result = SignedLogDet.one()
    b = None
    fallback = False
    for k in range(1, n + 1):
        block = s_matrix(sample, k) - energy * eye
        if b is not None:
            try:
                binv = np.linalg.inv(b)
            except np.linalg.LinAlgError:
                fallback = True
                break
            if not np.all(np.isfinite(binv)) or np.linalg.cond(b) > 1e14:
                fallback = True
                break
            block = block - binv
        result = result * signed_logdet(block)
        b = block
        if result.sign == 0:
            fallback = True
            break
    if fallback:
        region = Region.rectangle(1, n, 1, w)
        result = logdet_direct(assemble_hamiltonian(sample, region), energy)
    if return_info:
        return result, fallback
    return result


def _gamma_row(sample: DisorderSample, region_sites, k: tuple[int, int]) -> np.ndarray:
    """Coupling row of site k against the listed sites (same sample)."""
    n0, w0 = k
    u = sample.u_matrix(n0)
    d = sample.geometry.bandwidth
    row = np.zeros(len(region_sites))
    for j, (n, w) in enumerate(region_sites):
        if w == w0 and abs(n - n0) == 1:
            row[j] = -1.0
        elif n == n0 and 0 < abs(w - w0) <= d:
            row[j] = -u[w0 - 1, w - 1]
    return row


def site_shift(
    sample: DisorderSample,
    region: Region,
    k: tuple[int, int],
    energy: float,
) -> float:
    """The scalar xi with det(H_region - E) = (V_k - xi) det(H_{region minus k} - E).

    Obtained from the Schur complement of the single site k: the coupling row
    against the rest of the region applied to the resolvent of the punctured
    Hamiltonian, plus the diagonal coupling and the energy.
    """
    if k not in region:
        raise ConfigurationError(f"site {k} not in region")
    u_kk = float(sample.u_matrix(k[0])[k[1] - 1, k[1] - 1])
    if region.size == 1:
        return u_kk + energy
    rest = region.without_site(k)
    h = assemble_hamiltonian(sample, rest)
    shifted = h.matrix - energy * np.eye(rest.size)
    cond = float(np.linalg.cond(shifted))
    if not np.isfinite(cond) or cond > 1e14:
        raise NearSingularError("punctured Hamiltonian nearly singular at this energy", cond)
    gamma = _gamma_row(sample, h.sites, k)
    x = np.linalg.solve(shifted, gamma)
    return u_kk + energy + float(gamma @ x)
