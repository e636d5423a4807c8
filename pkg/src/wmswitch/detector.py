"""Streaming watermark-consistency test statistics and their concentration bounds.

Per measurement sample n the detector observer yields a residual
r_n = C1 xhat_n - y1_n. With the lagged watermark e_{n-k'-1} the test matrix
splits into three blocks, all centered so that their no-attack expectation
vanishes:

    Phi1_N = (1/N) sum r_n r_n^T - (1/N) sum E[r_n r_n^T]
    Phi2_N = (1/N) sum r_n e_{n-k'-1}^T
    Phi3_N = (1/N) sum (e_{n-k'-1} e_{n-k'-1}^T - Sigma_E)

Samples with n <= k' contribute nothing to Phi2/Phi3 (the lag is undefined);
the divisor stays the full N.

The expectation correction and the concentration constants are deterministic
given (model, gains): E[r_n r_n^T] = C M_n C^T + Sigma_zeta with
M_{n+1} = F M_n F^T + Sigma_W + L Sigma_zeta L^T for F = A + L1 C1, and the
residual bound K-bar follows its geometric series. A DetectorTrack computes
these once per configuration; TestAccumulator holds only the per-trial sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import (
    DimensionMismatchError,
    as_vector,
    solve_discrete_lyapunov,
    spectral_norm,
)
from .plant import ControllerConfig, PlantModel, compute_kprime

POWER_DECAY_CAP = 10_000


class InvalidRhoError(ValueError):
    """Threshold exponent must satisfy 1 + rho > 0."""


@dataclass(frozen=True)
class BoundConstants:
    """Concentration constants at a given sample count N."""

    c1: float
    c2: float
    c3: float
    S_cap: float
    kbar_sup: float


def watermark_second_moment_var(e_support: np.ndarray) -> np.ndarray:
    """V_e = E[(e e^T)^2] - Sigma_E^2 for the per-coordinate uniform watermark.

    Independence and symmetry make V_e diagonal:
    V_e[i,i] = E[e_i^4] + sum_{j!=i} E[e_i^2] E[e_j^2] - E[e_i^2]^2
    with E[e_i^2] = s_i^2/3 and E[e_i^4] = s_i^4/5.
    """
    s2 = as_vector(e_support) ** 2
    second = s2 / 3.0
    fourth = s2**2 / 5.0
    diag = fourth + second * (np.sum(second) - second) - second**2
    return np.diag(diag)


class DetectorTrack:
    """Deterministic per-configuration recursions shared by every trial.

    Tables are indexed by sample count and extended lazily:
      mean_prefix[N] = sum_{k<N} (C M_k C^T + Sigma_zeta)
      kbar[k]        = K-bar_k   (kbar[0] = K_z)
      kbar4_prefix[N], c2_prefix[N] = running concentration sums.
    """

    def __init__(self, model: PlantModel, ctl: ControllerConfig):
        self.model = model
        self.ctl = ctl
        self.kprime = compute_kprime(model.A, model.B, ctl.K, model.C1)
        self.F = model.A + ctl.L1 @ model.C1
        self.C = model.C1
        self.L = ctl.L1
        self.Sigma_zeta = model.Sigma_zeta
        self.Sigma_E = ctl.Sigma_E
        self.Qtilde = model.Sigma_W + ctl.L1 @ model.Sigma_zeta @ ctl.L1.T
        self.K_w = model.K_w
        self.K_z = model.K_z
        self.K_e = ctl.K_e
        self._tr_Sigma_E = float(np.trace(self.Sigma_E))
        self._norm_Sigma_E = spectral_norm(self.Sigma_E)
        p, m = model.p, model.m
        self._M_hist = [np.zeros((p, p))]
        self._powF = np.eye(p)
        self._kbar = [self.K_z]
        self._mean_prefix = [np.zeros((m, m))]
        self._mean_norms: list[float] = []
        self._kbar4_prefix = [0.0]
        self._c2_prefix = [0.0]
        base = self.K_e**2 * np.eye(model.q) - self.Sigma_E
        self.c3_per_sample = spectral_norm(base @ base + watermark_second_moment_var(ctl.e_support))
        self._sup: tuple[float, float, float] | None = None

    # -- lazy extension ------------------------------------------------

    def extend_to(self, n: int) -> None:
        while len(self._mean_norms) < n:
            self._advance()

    def _advance(self) -> None:
        k = len(self._mean_norms)
        M_k = self._M_hist[k]
        term = self.C @ M_k @ self.C.T + self.Sigma_zeta
        term_norm = spectral_norm(term)
        self._mean_norms.append(term_norm)
        self._mean_prefix.append(self._mean_prefix[k] + term)
        kbar_k = self._kbar[k]
        self._kbar4_prefix.append(self._kbar4_prefix[k] + kbar_k**4)
        p2 = (self.K_e**2 + self._tr_Sigma_E) * term_norm
        p2_prime = kbar_k**2 * (self.K_e**2 + self._norm_Sigma_E)
        self._c2_prefix.append(self._c2_prefix[k] + max(p2, p2_prime))
        # advance recursions from k to k+1 (powF enters as F^k)
        cf = self.C @ self._powF
        self._kbar.append(kbar_k + spectral_norm(cf) * self.K_w + spectral_norm(cf @ self.L) * self.K_z)
        self._M_hist.append(self.F @ M_k @ self.F.T + self.Qtilde)
        self._powF = self.F @ self._powF

    # -- lookups -------------------------------------------------------

    def M_at(self, n: int) -> np.ndarray:
        self.extend_to(n)
        return self._M_hist[n]

    def kbar_at(self, n: int) -> float:
        self.extend_to(n)
        return self._kbar[n]

    def mean_prefix_at(self, n: int) -> np.ndarray:
        self.extend_to(n)
        return self._mean_prefix[n]

    def c1_at(self, n: int) -> float:
        self.extend_to(n)
        return 8.0 * self._kbar4_prefix[n]

    def c2_at(self, n: int) -> float:
        self.extend_to(n)
        return self._c2_prefix[n]

    def c3_at(self, n: int) -> float:
        return n * self.c3_per_sample

    # -- uniform-in-N caps ---------------------------------------------

    def _power_tail(self) -> tuple[int, float]:
        """(j_star, tail) with sum_{j >= j_star} ||F^j|| <= tail, from computed powers.

        j_star is the first power with ||F^{j_star}|| <= 1/2; splitting any
        j = q*j_star + r and using submultiplicativity gives the geometric
        envelope ||F^j|| <= (max_{r<j_star} ||F^r||) * ||F^{j_star}||^q, whose
        tail sum is (sum_{r<j_star} ||F^r||) * rho / (1 - rho).
        """
        norms = [1.0]
        powF = np.eye(self.F.shape[0])
        for j in range(1, POWER_DECAY_CAP + 1):
            powF = powF @ self.F
            nj = spectral_norm(powF)
            if nj <= 0.5:
                return j, sum(norms) * nj / (1.0 - nj)
            norms.append(nj)
        raise RuntimeError("observer matrix powers do not contract; gains unstable?")

    def sup_constants(self) -> tuple[float, float, float]:
        """(kbar_sup, S_cap, mean_norm_sup): uniform-in-N bound ingredients.

        kbar_sup adds the geometric tail bound to the exactly computed partial
        series, so K-bar_n <= kbar_sup for every n. S_cap dominates each
        c_j(N)/N: the Phi1 term via kbar_sup, the Phi2 term via the limiting
        expectation C M_inf C^T + Sigma_zeta (the M recursion is monotone in
        the semidefinite order), and the Phi3 term is constant per sample.
        """
        if self._sup is None:
            j_star, tail = self._power_tail()
            c_norm = spectral_norm(self.C)
            l_norm = spectral_norm(self.L)
            kbar_sup = self.kbar_at(j_star) + (c_norm * self.K_w + c_norm * l_norm * self.K_z) * tail
            M_inf = solve_discrete_lyapunov(self.F, self.Qtilde)
            mean_sup = spectral_norm(self.C @ M_inf @ self.C.T + self.Sigma_zeta)
            s1 = 8.0 * kbar_sup**4
            s2 = max(
                (self.K_e**2 + self._tr_Sigma_E) * mean_sup,
                kbar_sup**2 * (self.K_e**2 + self._norm_Sigma_E),
            )
            s_cap = max(s1, s2, self.c3_per_sample)
            self._sup = (kbar_sup, s_cap, mean_sup)
        return self._sup


class TestAccumulator:
    """Per-trial streaming sums behind Phi1/Phi2/Phi3."""

    __test__ = False  # not a pytest class, despite the name

    def __init__(self, model: PlantModel, ctl: ControllerConfig, track: DetectorTrack | None = None):
        self.track = track if track is not None else DetectorTrack(model, ctl)
        m, q = model.m, model.q
        self.m = m
        self.q = q
        self.n = 0
        self.S1 = np.zeros((m, m))
        self.S2 = np.zeros((m, q))
        self.S3 = np.zeros((q, q))

    def update(self, residual: np.ndarray, lagged_watermark: np.ndarray | None = None) -> "TestAccumulator":
        """Consume one sample; lagged watermark must be present iff n >= k'+1."""
        if residual.shape != (self.m,):
            raise DimensionMismatchError(f"residual must have shape ({self.m},)")
        has_lag = lagged_watermark is not None
        if has_lag != (self.n >= self.track.kprime + 1):
            raise DimensionMismatchError(
                f"lagged watermark must be supplied exactly for samples n >= k'+1 (n={self.n})"
            )
        self.track.extend_to(self.n + 1)
        self.S1 += np.outer(residual, residual)
        if has_lag:
            if lagged_watermark.shape != (self.q,):
                raise DimensionMismatchError(f"watermark must have shape ({self.q},)")
            self.S2 += np.outer(residual, lagged_watermark)
            self.S3 += np.outer(lagged_watermark, lagged_watermark) - self.track.Sigma_E
        self.n += 1
        return self

    def phi1(self) -> np.ndarray:
        return (self.S1 - self.track.mean_prefix_at(self.n)) / self.n

    def phi2(self) -> np.ndarray:
        return self.S2 / self.n

    def phi3(self) -> np.ndarray:
        return self.S3 / self.n

    def phi1_norm(self) -> float:
        return spectral_norm(self.phi1())

    def phi2_norm(self) -> float:
        return spectral_norm(self.phi2())

    def phi3_norm(self) -> float:
        return spectral_norm(self.phi3())

    def bound_constants(self) -> BoundConstants:
        kbar_sup, s_cap, _ = self.track.sup_constants()
        return BoundConstants(
            c1=bound_c1(self),
            c2=bound_c2(self),
            c3=bound_c3(self.n, self.track.ctl),
            S_cap=s_cap,
            kbar_sup=kbar_sup,
        )


def kbar(acc: TestAccumulator) -> float:
    """Current residual bound K-bar_N (K-bar_0 = K_z)."""
    return acc.track.kbar_at(acc.n)


def bound_c1(acc: TestAccumulator) -> float:
    """c1_N = 8 sum_{k<N} K-bar_k^4."""
    return acc.track.c1_at(acc.n)


def bound_c2(acc: TestAccumulator) -> float:
    """c2_N = sum_{k<N} max{P_k^2, P'_k^2} (bounded-differences constants)."""
    return acc.track.c2_at(acc.n)


def bound_c3(n: int, ctl: ControllerConfig) -> float:
    """c3_N = N * ||(K_e^2 I - Sigma_E)^2 + V_e|| for the uniform watermark."""
    eye = np.eye(ctl.e_support.shape[0])
    base = ctl.K_e**2 * eye - ctl.Sigma_E
    return n * spectral_norm(base @ base + watermark_second_moment_var(ctl.e_support))


def threshold(n: int, rho: float, c_over_n: float) -> float:
    """Decision threshold sqrt((1+rho) * (c_N/N) * log(N) / N).

    Returns +inf for N < 2: no decision before two samples.
    """
    if 1.0 + rho <= 0.0:
        raise InvalidRhoError(f"1 + rho must be positive, got rho={rho}")
    if n < 2:
        return math.inf
    return math.sqrt((1.0 + rho) * c_over_n * math.log(n) / n)


def hoeffding_tail(t: float, n: int, c: float, dim: int) -> float:
    """Concentration tail bound dim * exp(-N^2 t^2 / c), clamped to [0, 1]."""
    if c <= 0.0:
        return 0.0 if t > 0.0 else 1.0
    return min(1.0, dim * math.exp(-(n**2) * t * t / c))
