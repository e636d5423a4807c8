"""Closed-loop switched LTI simulation with watermarked control and dual sensors.

The plant is x_{n+1} = A x_n + B u_n + w_n with two simultaneous measurement
streams: sensor 1 (accurate, attackable, noise zeta) and sensor 2 (protected,
noise eta). The applied input is u_n = K x'_n + e_n where x' is the control
observer's estimate and e_n is the private watermark. A second, never-switching
observer tracks the sensor-1 stream and produces the residuals the detector
consumes.

All noise is i.i.d. uniform on symmetric per-coordinate boxes. Randomness is
counter-based (Philox) with one 64-bit base seed; sub-streams are derived from
fixed offsets so that paired runs (e.g. attacked vs. unattacked with the same
seed) consume identical process/sensor/watermark noise:

    stream 0: process noise w        stream 3: watermark e
    stream 1: sensor-1 noise zeta    stream 4: attack draws
    stream 2: sensor-2 noise eta     (4,0): measurement-side, (4,1): replay omega
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import (
    DimensionMismatchError,
    NotSchurStableError,
    as_matrix,
    as_vector,
    is_schur_stable,
    solve_discrete_lyapunov,
    spectral_norm,
)

KPRIME_TOL = 1e-12
DWELL_PSD_TOL = 1e-9
DWELL_SEARCH_CAP = 10**6

STREAM_PROCESS = 0
STREAM_SENSOR1 = 1
STREAM_SENSOR2 = 2
STREAM_WATERMARK = 3
STREAM_ATTACK = 4


class NoExcitationPathError(ValueError):
    """The watermark cannot reach the measured output: C (A+BK)^k B = 0 for all k < p."""


class StabilizationFailedError(ValueError):
    pass


class DwellSearchExceededError(RuntimeError):
    pass


def _support_covariance(support: np.ndarray) -> np.ndarray:
    # Uniform on [-s, s] has variance s^2/3 per coordinate.
    return np.diag(support**2 / 3.0)


@dataclass(frozen=True)
class PlantModel:
    """State-space matrices, dual sensor maps, and bounded-noise supports."""

    A: np.ndarray
    B: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    w_support: np.ndarray
    zeta_support: np.ndarray
    eta_support: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.A)
        p = a.shape[0]
        if a.shape[1] != p:
            raise DimensionMismatchError("A must be square")
        b = as_matrix(self.B, rows=p)
        c1 = as_matrix(self.C1, cols=p)
        c2 = as_matrix(self.C2, cols=p)
        if c2.shape[0] != c1.shape[0]:
            raise DimensionMismatchError("C1 and C2 must have the same number of rows")
        w = as_vector(self.w_support, p)
        z = as_vector(self.zeta_support, c1.shape[0])
        h = as_vector(self.eta_support, c1.shape[0])
        for name, v in (("w_support", w), ("zeta_support", z), ("eta_support", h)):
            if np.any(v < 0):
                raise ValueError(f"{name} must be nonnegative")
        if np.any(z**2 > h**2 + 1e-15):
            raise ValueError("sensor-1 covariance must satisfy Sigma_zeta <= Sigma_eta")
        for name, val in (("A", a), ("B", b), ("C1", c1), ("C2", c2),
                          ("w_support", w), ("zeta_support", z), ("eta_support", h)):
            object.__setattr__(self, name, val)

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @property
    def q(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.C1.shape[0]

    @property
    def K_w(self) -> float:
        return float(np.linalg.norm(self.w_support))

    @property
    def K_z(self) -> float:
        return float(np.linalg.norm(self.zeta_support))

    @property
    def Sigma_W(self) -> np.ndarray:
        return _support_covariance(self.w_support)

    @property
    def Sigma_zeta(self) -> np.ndarray:
        return _support_covariance(self.zeta_support)

    @property
    def Sigma_eta(self) -> np.ndarray:
        return _support_covariance(self.eta_support)

    def C(self, alpha: int) -> np.ndarray:
        return self.C1 if alpha == 1 else self.C2


@dataclass(frozen=True)
class ControllerConfig:
    """Feedback gain, per-sensor observer gains, and the watermark support."""

    K: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    e_support: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "K", as_matrix(self.K))
        object.__setattr__(self, "L1", as_matrix(self.L1))
        object.__setattr__(self, "L2", as_matrix(self.L2))
        object.__setattr__(self, "e_support", as_vector(self.e_support))
        if np.any(self.e_support < 0):
            raise ValueError("e_support must be nonnegative")

    @property
    def K_e(self) -> float:
        return float(np.linalg.norm(self.e_support))

    @property
    def Sigma_E(self) -> np.ndarray:
        return _support_covariance(self.e_support)

    def L(self, alpha: int) -> np.ndarray:
        return self.L1 if alpha == 1 else self.L2


def sample_bounded_noise(rng: np.random.Generator, support: np.ndarray, size=None) -> np.ndarray:
    """i.i.d. uniform draw on [-support_i, +support_i] per coordinate.

    With size=(n, d) returns n stacked draws consuming the stream in the same
    order as n single draws would (verified property of the uniform sampler).
    """
    support = np.asarray(support, dtype=float)
    if size is None:
        return rng.uniform(-support, support, size=support.shape[0])
    return rng.uniform(-support, support, size=size)


class _BufferedNoise:
    """Chunked reader over one sub-stream; bit-identical to per-step draws."""

    def __init__(self, rng: np.random.Generator, support: np.ndarray, chunk: int = 1024):
        self._rng = rng
        self._support = np.asarray(support, dtype=float)
        self._chunk = chunk
        self._buf = np.empty((0, self._support.shape[0]))
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos >= self._buf.shape[0]:
            self._buf = sample_bounded_noise(
                self._rng, self._support, size=(self._chunk, self._support.shape[0])
            )
            self._pos = 0
        row = self._buf[self._pos]
        self._pos += 1
        return row


def _stream_rng(seed: int, trial_id: int, *key: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial_id, *key)))
    )


class NoiseStreams:
    """Per-trial noise sub-streams, all derived from (seed, trial_id)."""

    def __init__(self, model: PlantModel, e_support: np.ndarray, seed: int, trial_id: int = 0):
        self.seed = seed
        self.trial_id = trial_id
        self.w = _BufferedNoise(_stream_rng(seed, trial_id, STREAM_PROCESS), model.w_support)
        self.zeta = _BufferedNoise(_stream_rng(seed, trial_id, STREAM_SENSOR1), model.zeta_support)
        self.eta = _BufferedNoise(_stream_rng(seed, trial_id, STREAM_SENSOR2), model.eta_support)
        self.e = _BufferedNoise(_stream_rng(seed, trial_id, STREAM_WATERMARK), e_support)
        # Attack-side generators stay unbuffered: supports belong to AttackSpec.
        self.attack_meas = _stream_rng(seed, trial_id, STREAM_ATTACK, 0)
        self.attack_process = _stream_rng(seed, trial_id, STREAM_ATTACK, 1)


@dataclass
class SimState:
    """One trial's mutable simulation state."""

    n: int
    x: np.ndarray
    x_ctl: np.ndarray
    x_det: np.ndarray
    alpha: int
    kprime: int
    e_history: deque = field(repr=False)
    rng: NoiseStreams = field(repr=False)


@dataclass(frozen=True)
class StepOutput:
    y_switched: np.ndarray
    y_sensor1: np.ndarray
    residual: np.ndarray
    u: np.ndarray
    watermark: np.ndarray
    lagged_watermark: np.ndarray | None
    attack_v: np.ndarray


def compute_kprime(A: np.ndarray, B: np.ndarray, K: np.ndarray, C: np.ndarray) -> int:
    """Smallest k with C (A+BK)^k B nonzero (watermark-to-output delay).

    By Cayley-Hamilton the search can stop at k = p-1: if all those products
    vanish, the watermark never reaches the measured output.
    """
    A = as_matrix(A)
    p = A.shape[0]
    acl = A + as_matrix(B) @ as_matrix(K)
    Cpow = as_matrix(C)
    B = as_matrix(B)
    for k in range(p):
        if spectral_norm(Cpow @ B) > KPRIME_TOL:
            return k
        Cpow = Cpow @ acl
    raise NoExcitationPathError("C (A+BK)^k B vanishes for all k < state dimension")


def init_sim_state(
    model: PlantModel,
    ctl: ControllerConfig,
    seed: int,
    trial_id: int = 0,
    alpha0: int = 1,
    x0: np.ndarray | None = None,
) -> SimState:
    """Fresh trial state; x0 = x'_0 = xhat_0 = 0 unless overridden."""
    kprime = compute_kprime(model.A, model.B, ctl.K, model.C1)
    x0 = np.zeros(model.p) if x0 is None else as_vector(x0, model.p)
    return SimState(
        n=0,
        x=x0.copy(),
        x_ctl=x0.copy(),
        x_det=x0.copy(),
        alpha=alpha0,
        kprime=kprime,
        e_history=deque(maxlen=kprime + 2),
        rng=NoiseStreams(model, ctl.e_support, seed, trial_id),
    )


def step(
    state: SimState,
    model: PlantModel,
    ctl: ControllerConfig,
    alpha: int,
    attacker=None,
) -> tuple[SimState, StepOutput]:
    """Advance the closed loop one step under mode ``alpha``.

    The attack vector corrupts the sensor-1 stream, and hence the switched
    stream only while alpha = 1. The detector observer is driven by the
    sensor-1 stream and the *actual* applied input u_n, which makes the error
    recursion delta_{n+1} = (A + L1 C1) delta_n - w_n - L1 zeta_n exact in
    every mode.
    """
    n = state.n
    rng = state.rng

    e = rng.e.next()
    u = ctl.K @ state.x_ctl + e

    w = rng.w.next()
    zeta = rng.zeta.next()
    eta = rng.eta.next()

    meas1_clean = model.C1 @ state.x
    if attacker is not None:
        v = attacker.value(n, rng, meas1_clean, zeta)
    else:
        v = np.zeros(model.m)

    y_sensor1 = meas1_clean + zeta + v
    if alpha == 1:
        y_switched = y_sensor1
    else:
        y_switched = model.C2 @ state.x + eta

    residual = model.C1 @ state.x_det - y_sensor1

    A, B = model.A, model.B
    bu = B @ u
    L_alpha = ctl.L(alpha)
    C_alpha = model.C(alpha)
    state.x_ctl = A @ state.x_ctl + bu + L_alpha @ (C_alpha @ state.x_ctl - y_switched)
    state.x_det = A @ state.x_det + bu + ctl.L1 @ (model.C1 @ state.x_det - y_sensor1)
    state.x = A @ state.x + bu + w

    state.e_history.append(e)
    lagged = None
    if n >= state.kprime + 1:
        lagged = state.e_history[0]

    state.alpha = alpha
    state.n = n + 1
    return state, StepOutput(
        y_switched=y_switched,
        y_sensor1=y_sensor1,
        residual=residual,
        u=u,
        watermark=e,
        lagged_watermark=lagged,
        attack_v=v,
    )


def build_augmented_matrices(
    model: PlantModel, ctl: ControllerConfig, alpha: int
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-loop block matrices for mode alpha.

    Returns (in the (x, x') coordinates and the (x, x'-x) coordinates):
        [[A, BK], [-LC, A+BK+LC]]   and   [[A+BK, BK], [0, A+LC]]
    The second is block upper-triangular, so its spectrum is the union of the
    state-feedback and observer spectra.
    """
    A, B = model.A, model.B
    K = ctl.K
    L = ctl.L(alpha)
    C = model.C(alpha)
    if L.shape != (model.p, model.m):
        raise DimensionMismatchError(f"observer gain must be {(model.p, model.m)}, got {L.shape}")
    bk = B @ K
    lc = L @ C
    upper = np.block([[A, bk], [-lc, A + bk + lc]])
    tri = np.block([[A + bk, bk], [np.zeros((model.p, model.p)), A + lc]])
    return upper, tri


def dwell_time_tau(A_aug_1: np.ndarray, A_aug_0: np.ndarray) -> int:
    """Minimum steps to remain at alpha = 0 before switching back to 1.

    With P solving A1 P A1^T - P = -I, returns the smallest t >= 1 such that
    A0^t P (A0^t)^T - P <= -I (tested as lambda_max(A0^t P A0^t^T - P + I)
    below DWELL_PSD_TOL). Such a t exists because A0 is Schur stable.
    """
    A1 = as_matrix(A_aug_1)
    A0 = as_matrix(A_aug_0)
    if not is_schur_stable(A0):
        raise NotSchurStableError("alpha=0 augmented matrix is not Schur stable")
    P = solve_discrete_lyapunov(A1, np.eye(A1.shape[0]))
    if A0.shape != P.shape:
        raise DimensionMismatchError("augmented matrices must share dimensions")
    A0t = A0.copy()
    for t in range(1, DWELL_SEARCH_CAP + 1):
        gap = A0t @ P @ A0t.T - P + np.eye(P.shape[0])
        if float(np.linalg.eigvalsh(0.5 * (gap + gap.T))[-1]) <= DWELL_PSD_TOL:
            return t
        A0t = A0t @ A0
    raise DwellSearchExceededError(f"no dwell time found within {DWELL_SEARCH_CAP} steps")


def lqr_gain(A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Discrete LQR gain K with u = K x (note sign: A + BK is the closed loop)."""
    P = scipy.linalg.solve_discrete_are(A, B, Q, R)
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def design_or_validate_gains(
    model: PlantModel,
    gains: ControllerConfig | None = None,
    e_support: np.ndarray | None = None,
) -> ControllerConfig:
    """Validate supplied gains, or synthesize them by unit-weight LQR.

    Observer gains come from the dual problem (A^T, C^T); the watermark
    support must accompany synthesized gains via ``e_support``.
    """
    if gains is None:
        if e_support is None:
            raise ValueError("e_support is required when synthesizing gains")
        A, B = model.A, model.B
        p = model.p
        try:
            K = lqr_gain(A, B, np.eye(p), np.eye(model.q))
            Ls = []
            for C in (model.C1, model.C2):
                Kd = lqr_gain(A.T, C.T, np.eye(p), np.eye(model.m))
                Ls.append(Kd.T)
        except np.linalg.LinAlgError as exc:
            raise StabilizationFailedError(f"LQR synthesis failed: {exc}") from exc
        gains = ControllerConfig(K=K, L1=Ls[0], L2=Ls[1], e_support=as_vector(e_support))

    checks = [
        ("A + B K", model.A + model.B @ gains.K),
        ("A + L1 C1", model.A + gains.L1 @ model.C1),
        ("A + L2 C2", model.A + gains.L2 @ model.C2),
    ]
    for what, mat in checks:
        if not is_schur_stable(mat):
            raise StabilizationFailedError(f"{what} is not Schur stable")
    return gains
