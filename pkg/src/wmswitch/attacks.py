"""Attack-vector generation for the vulnerable sensor stream, plus diagnostics.

Two attack families:

* perturbation: v_n i.i.d. uniform on a per-coordinate box;
* (generalized) replay: v_n = C xi_n + zeta'_n - gamma (C x_n + z_n), where
  xi re-simulates the nominal closed loop xi_{n+1} = (A+BK) xi_n + omega_n
  from its own initial condition. gamma = 1 is the pure replay: the attacked
  measurement becomes C xi_n + zeta'_n with the true signal fully cancelled.

The cumulative disturbance seen by the detector is
V_n = C sum_{k<n} Lbar_k v_k - v_n with Lbar_k = -(A+LC)^{n-1-k} L, maintained
here by the recursion s_{n+1} = (A+LC) s_n - L v_n so that V_n = C s_n - v_n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import DimensionMismatchError, as_vector
from .plant import ControllerConfig, NoiseStreams, PlantModel, sample_bounded_noise

ATTACK_KINDS = ("none", "perturbation", "replay")


class MissingReplayStateError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    """Configuration of the sensor-1 attack; kind 'none' means v_n = 0."""

    kind: str = "none"
    perturbation_halfwidth: np.ndarray | None = None
    replay_gamma: float = 1.0
    replay_xi0: np.ndarray | None = None
    replay_omega_halfwidth: np.ndarray | None = None
    replay_zeta_halfwidth: np.ndarray | None = None
    start_step: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"attack kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if self.kind == "perturbation":
            if self.perturbation_halfwidth is None:
                raise ValueError("perturbation attack requires perturbation_halfwidth")
            hw = as_vector(self.perturbation_halfwidth)
            if np.any(hw < 0):
                raise ValueError("perturbation_halfwidth must be nonnegative")
            object.__setattr__(self, "perturbation_halfwidth", hw)
        if self.start_step < 0:
            raise ValueError("start_step must be >= 0")

    @property
    def active(self) -> bool:
        return self.kind != "none"

    def resolved_for(self, model: PlantModel) -> "AttackSpec":
        """Fill replay defaults (zero xi0, 2.5e-4 noise boxes) from model dims."""
        if self.kind != "replay":
            return self
        xi0 = np.zeros(model.p) if self.replay_xi0 is None else as_vector(self.replay_xi0, model.p)
        omega = (
            np.full(model.p, 2.5e-4)
            if self.replay_omega_halfwidth is None
            else as_vector(self.replay_omega_halfwidth, model.p)
        )
        zeta = (
            np.full(model.m, 2.5e-4)
            if self.replay_zeta_halfwidth is None
            else as_vector(self.replay_zeta_halfwidth, model.m)
        )
        return AttackSpec(
            kind="replay",
            replay_gamma=self.replay_gamma,
            replay_xi0=xi0,
            replay_omega_halfwidth=omega,
            replay_zeta_halfwidth=zeta,
            start_step=self.start_step,
        )


def attack_value(
    spec: AttackSpec,
    n: int,
    rng: NoiseStreams,
    true_meas_noiseless: np.ndarray,
    true_noise: np.ndarray,
    replay_state: np.ndarray | None,
    closed_loop: np.ndarray | None = None,
    sensor_map: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Attack vector v_n and the successor replay state (None unless replaying).

    ``closed_loop`` (A+BK) and ``sensor_map`` (C1) are required for replay.
    Replay draws its measurement-noise from the attack measurement stream and
    its process noise from the attack process stream, so plant noise pairing
    between attacked and unattacked runs is preserved.
    """
    m = true_meas_noiseless.shape[0]
    if not spec.active or n < spec.start_step:
        return np.zeros(m), replay_state
    if spec.kind == "perturbation":
        return sample_bounded_noise(rng.attack_meas, spec.perturbation_halfwidth), None
    # replay
    if n == spec.start_step:
        replay_state = spec.replay_xi0
    if replay_state is None:
        raise MissingReplayStateError("replay attack is active but has no replay state")
    if closed_loop is None or sensor_map is None:
        raise ValueError("replay attack requires closed_loop and sensor_map matrices")
    zeta_fake = sample_bounded_noise(rng.attack_meas, spec.replay_zeta_halfwidth)
    omega = sample_bounded_noise(rng.attack_process, spec.replay_omega_halfwidth)
    v = sensor_map @ replay_state + zeta_fake - spec.replay_gamma * (true_meas_noiseless + true_noise)
    next_state = closed_loop @ replay_state + omega
    return v, next_state


class Attacker:
    """Stateful per-trial wrapper around attack_value used by the step loop."""

    def __init__(self, spec: AttackSpec, model: PlantModel, ctl: ControllerConfig):
        self.spec = spec.resolved_for(model)
        self._closed_loop = model.A + model.B @ ctl.K
        self._sensor_map = model.C1
        self._replay_state: np.ndarray | None = None

    def value(self, n: int, rng: NoiseStreams, meas_noiseless: np.ndarray, noise: np.ndarray) -> np.ndarray:
        v, self._replay_state = attack_value(
            self.spec,
            n,
            rng,
            meas_noiseless,
            noise,
            self._replay_state,
            closed_loop=self._closed_loop,
            sensor_map=self._sensor_map,
        )
        return v

    def active_at(self, n: int) -> bool:
        return self.spec.active and n >= self.spec.start_step


@dataclass
class AttackDiagnostics:
    """Running V_n sequence and its norm sum (the G of the tolerance premise).

    For bounded-support attacks the supremum over N of sum_{k<N} ||V_k||
    equals the final running sum, so G_estimate just mirrors it.
    """

    model: PlantModel
    ctl: ControllerConfig
    V_history: list = field(default_factory=list)
    running_sum_normV: float = 0.0

    def __post_init__(self):
        self._F = self.model.A + self.ctl.L1 @ self.model.C1
        self._L = self.ctl.L1
        self._C = self.model.C1
        self._s = np.zeros(self.model.p)

    @property
    def G_estimate(self) -> float:
        return self.running_sum_normV


def update_diagnostics(diag: AttackDiagnostics, v_n: np.ndarray) -> AttackDiagnostics:
    """Append V_n = C s_n - v_n and advance s_{n+1} = (A+LC) s_n - L v_n."""
    if v_n.shape != (diag.model.m,):
        raise DimensionMismatchError(f"attack vector must have shape ({diag.model.m},)")
    V_n = diag._C @ diag._s - v_n
    diag.V_history.append(V_n)
    diag.running_sum_normV += float(np.linalg.norm(V_n))
    diag._s = diag._F @ diag._s - diag._L @ v_n
    return diag
