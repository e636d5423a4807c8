"""Scenario configs, trial execution, and Monte Carlo batches with CSV output.

A scenario bundles a plant model (the lane-keeping preset or a custom one),
controller gains (frozen preset gains, supplied, or synthesized), an attack,
and the detection-threshold parameters. Trials are deterministic in
(seed, trial_id) and embarrassingly parallel; attacked and unattacked runs
with the same seed consume identical process/sensor/watermark noise streams,
so trajectory differences isolate the attack's effect.

CSV schemas (written with shortest round-trip float formatting):

  trials.csv  trial_id, detected_at, switch_count, false_switches,
              max_lateral_dev, seed
  steps.csv   trial_id, n, alpha, phi1_norm, phi2_norm, phi3_norm, t1, t2,
              y_lateral, attack_active
  sweep.csv   rho, trials, detection_rate, mean_detection_time,
              median_detection_time, false_switch_rate

Each file starts with a comment line ``# wmswitch-csv schema_version=1
kind=<name>`` that downstream readers can use to validate compatibility.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import AttackDiagnostics, Attacker, AttackSpec, update_diagnostics
from .detector import DetectorTrack, TestAccumulator, threshold
from .plant import (
    ControllerConfig,
    PlantModel,
    build_augmented_matrices,
    design_or_validate_gains,
    dwell_time_tau,
    init_sim_state,
    step,
)
from .switching import DEFAULT_WARMUP, SwitchState, decide

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
CONFIG_SCHEMA_VERSION = 1

TRIALS_COLUMNS = ["trial_id", "detected_at", "switch_count", "false_switches", "max_lateral_dev", "seed"]
STEPS_COLUMNS = [
    "trial_id", "n", "alpha", "phi1_norm", "phi2_norm", "phi3_norm", "t1", "t2",
    "y_lateral", "attack_active",
]
SWEEP_COLUMNS = [
    "rho", "trials", "detection_rate", "mean_detection_time", "median_detection_time",
    "false_switch_rate",
]
EVENTS_COLUMNS = ["trial_id", "step", "from_alpha", "to_alpha"]
ATTACK_DIAG_COLUMNS = ["trial_id", "g_estimate"]

_GAINS_FILE = Path(__file__).parent / "data" / "lane_keeping_gains.json"


class ConfigError(ValueError):
    pass


def lane_keeping_preset() -> PlantModel:
    """Kinematic lane-keeping model: straight trajectory at 10 m/s, 0.05 s steps.

    State [heading_err, lateral_err, distance, wheel_angle, velocity], inputs
    [steering, acceleration]; both sensors see the first three states.
    """
    A = np.array(
        [
            [1.0, 0.0, 0.0, 0.1, 0.0],
            [0.5, 1.0, 0.0, 0.025, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.5],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [1.0 / 400, 0.0],
            [1.0 / 2400, 0.0],
            [0.0, 1.0 / 800],
            [1.0 / 20, 0.0],
            [0.0, 1.0 / 20],
        ]
    )
    C = np.hstack([np.eye(3), np.zeros((3, 2))])
    return PlantModel(
        A=A,
        B=B,
        C1=C,
        C2=C.copy(),
        w_support=np.full(5, 2.5e-4),
        zeta_support=np.full(3, 1e-2),
        eta_support=np.full(3, 2e-2),
    )


LANE_KEEPING_E_SUPPORT = np.array([2.0, 2.0])


def synthesize_lane_keeping_gains() -> ControllerConfig:
    return design_or_validate_gains(lane_keeping_preset(), e_support=LANE_KEEPING_E_SUPPORT)


def lane_keeping_gains() -> ControllerConfig:
    """Frozen reference gains for the preset (committed, reproducible numbers)."""
    with open(_GAINS_FILE) as fh:
        data = json.load(fh)
    return ControllerConfig(
        K=np.array(data["K"]),
        L1=np.array(data["L1"]),
        L2=np.array(data["L2"]),
        e_support=np.array(data["e_support"]),
    )


def _matrix_to_lists(m: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(m)]


def save_gains(ctl: ControllerConfig, path) -> None:
    payload = {
        "K": _matrix_to_lists(ctl.K),
        "L1": _matrix_to_lists(ctl.L1),
        "L2": _matrix_to_lists(ctl.L2),
        "e_support": [float(v) for v in ctl.e_support],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce a batch of trials."""

    model: str | PlantModel = "lane_keeping"
    gains: ControllerConfig | None = None
    e_support: np.ndarray | None = None
    attack: AttackSpec = field(default_factory=AttackSpec)
    rho1: float = -0.98
    rho2: float = -0.98
    c1_over_n: float | None = None
    c2_over_n: float | None = None
    single_s_threshold: bool = False
    steps: int = 1000
    trials: int = 1
    seed: int = 0
    warmup: int = DEFAULT_WARMUP
    dwell_override: int | None = None
    initial_alpha: int = 1
    switching_enabled: bool = True
    rule_variant: str = "detection"
    compute_deviation: bool = True
    lateral_index: int | None = None
    log_step_trials: tuple = (0,)
    rho_grid: tuple | None = None
    workers: int = 1

    def __post_init__(self):
        if self.steps < 2:
            raise ConfigError("steps must be >= 2")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for name, rho in (("rho1", self.rho1), ("rho2", self.rho2)):
            if 1.0 + rho <= 0.0:
                raise ConfigError(f"{name} must satisfy 1 + rho > 0")
            if rho <= 0.0:
                logger.warning(
                    "%s = %.3g <= 0: finite-false-switch guarantee does not apply", name, rho
                )
        if self.initial_alpha not in (0, 1):
            raise ConfigError("initial_alpha must be 0 or 1")
        if self.warmup < 0:
            raise ConfigError("warmup must be >= 0")


def config_to_dict(config: ScenarioConfig) -> dict:
    d: dict = {"schema_version": CONFIG_SCHEMA_VERSION}
    if isinstance(config.model, str):
        d["model"] = config.model
    else:
        m = config.model
        d["model"] = {
            "A": _matrix_to_lists(m.A),
            "B": _matrix_to_lists(m.B),
            "C1": _matrix_to_lists(m.C1),
            "C2": _matrix_to_lists(m.C2),
            "w_support": list(map(float, m.w_support)),
            "zeta_support": list(map(float, m.zeta_support)),
            "eta_support": list(map(float, m.eta_support)),
        }
    if config.gains is not None:
        g = config.gains
        d["gains"] = {
            "K": _matrix_to_lists(g.K),
            "L1": _matrix_to_lists(g.L1),
            "L2": _matrix_to_lists(g.L2),
            "e_support": list(map(float, g.e_support)),
        }
    if config.e_support is not None:
        d["e_support"] = list(map(float, config.e_support))
    a = config.attack
    d["attack"] = {"kind": a.kind, "start_step": a.start_step}
    if a.kind == "perturbation":
        d["attack"]["perturbation_halfwidth"] = list(map(float, a.perturbation_halfwidth))
    if a.kind == "replay":
        d["attack"]["replay_gamma"] = a.replay_gamma
        for key, val in (
            ("replay_xi0", a.replay_xi0),
            ("replay_omega_halfwidth", a.replay_omega_halfwidth),
            ("replay_zeta_halfwidth", a.replay_zeta_halfwidth),
        ):
            if val is not None:
                d["attack"][key] = list(map(float, val))
    for name in (
        "rho1", "rho2", "c1_over_n", "c2_over_n", "single_s_threshold", "steps", "trials",
        "seed", "warmup", "dwell_override", "initial_alpha", "switching_enabled",
        "rule_variant", "compute_deviation", "lateral_index", "workers",
    ):
        d[name] = getattr(config, name)
    d["log_step_trials"] = list(config.log_step_trials)
    if config.rho_grid is not None:
        d["rho_grid"] = list(config.rho_grid)
    return d


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    version = data.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version!r}")
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(data) - known - {"schema_version"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict = {}
    model = data.get("model", "lane_keeping")
    if isinstance(model, str):
        if model != "lane_keeping":
            raise ConfigError(f"unknown model preset {model!r}")
        kwargs["model"] = model
    else:
        try:
            kwargs["model"] = PlantModel(
                A=np.array(model["A"]),
                B=np.array(model["B"]),
                C1=np.array(model["C1"]),
                C2=np.array(model["C2"]),
                w_support=np.array(model["w_support"]),
                zeta_support=np.array(model["zeta_support"]),
                eta_support=np.array(model["eta_support"]),
            )
        except KeyError as exc:
            raise ConfigError(f"model block missing field {exc}") from exc
    if data.get("gains") is not None:
        g = data["gains"]
        try:
            kwargs["gains"] = ControllerConfig(
                K=np.array(g["K"]),
                L1=np.array(g["L1"]),
                L2=np.array(g["L2"]),
                e_support=np.array(g["e_support"]),
            )
        except KeyError as exc:
            raise ConfigError(f"gains block missing field {exc}") from exc
    if data.get("e_support") is not None:
        kwargs["e_support"] = np.array(data["e_support"], dtype=float)
    attack = data.get("attack", {"kind": "none"})
    akw = dict(attack)
    for key in ("perturbation_halfwidth", "replay_xi0", "replay_omega_halfwidth", "replay_zeta_halfwidth"):
        if akw.get(key) is not None:
            akw[key] = np.array(akw[key], dtype=float)
    try:
        kwargs["attack"] = AttackSpec(**akw)
    except TypeError as exc:
        raise ConfigError(f"bad attack block: {exc}") from exc
    for name in (
        "rho1", "rho2", "c1_over_n", "c2_over_n", "single_s_threshold", "steps", "trials",
        "seed", "warmup", "dwell_override", "initial_alpha", "switching_enabled",
        "rule_variant", "compute_deviation", "lateral_index", "workers",
    ):
        if name in data:
            kwargs[name] = data[name]
    if "log_step_trials" in data:
        kwargs["log_step_trials"] = tuple(data["log_step_trials"])
    if data.get("rho_grid") is not None:
        kwargs["rho_grid"] = tuple(data["rho_grid"])
    return ScenarioConfig(**kwargs)


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(data)


@dataclass
class StepLog:
    """Columnar per-step record for one trial."""

    n: np.ndarray
    alpha: np.ndarray
    phi1_norm: np.ndarray
    phi2_norm: np.ndarray
    phi3_norm: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    y_lateral: np.ndarray
    attack_active: np.ndarray


@dataclass
class TrialResult:
    trial_id: int
    detected_at: int | None
    switch_count: int
    false_switches: int
    max_lateral_dev: float
    seed: int
    switch_log: tuple = ()
    attack_g_estimate: float | None = None
    step_log: StepLog | None = None


class TrialRuntime:
    """Per-configuration precomputation shared across trials.

    Resolves model and gains, computes the watermark lag, the dwell time from
    the augmented closed-loop matrices, extends the detector track to the
    trial length, and tabulates both decision thresholds for every sample
    count (they are deterministic given the configuration).
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        if isinstance(config.model, str):
            self.model = lane_keeping_preset()
            self.ctl = config.gains if config.gains is not None else lane_keeping_gains()
            self.ctl = design_or_validate_gains(self.model, self.ctl)
        else:
            self.model = config.model
            self.ctl = design_or_validate_gains(self.model, config.gains, e_support=config.e_support)
        self.attack = config.attack.resolved_for(self.model)
        self.track = DetectorTrack(self.model, self.ctl)
        self.track.extend_to(config.steps)
        if config.dwell_override is not None:
            self.tau = int(config.dwell_override)
        else:
            _, aug1 = build_augmented_matrices(self.model, self.ctl, alpha=1)
            _, aug0 = build_augmented_matrices(self.model, self.ctl, alpha=0)
            self.tau = dwell_time_tau(aug1, aug0)
        if config.lateral_index is not None:
            self.lateral_index = config.lateral_index
        else:
            self.lateral_index = 1 if self.model.p > 1 else 0
        self.t1 = self._threshold_table(config.rho1, config.c1_over_n, self.track.c1_at)
        self.t2 = self._threshold_table(config.rho2, config.c2_over_n, self.track.c2_at)

    def _threshold_table(self, rho: float, c_over_n: float | None, c_at) -> np.ndarray:
        n_max = self.config.steps
        table = np.full(n_max + 1, math.inf)
        if self.config.single_s_threshold:
            _, s_cap, _ = self.track.sup_constants()
            for n in range(2, n_max + 1):
                table[n] = threshold(n, rho, s_cap)
        elif c_over_n is not None:
            for n in range(2, n_max + 1):
                table[n] = threshold(n, rho, c_over_n)
        else:
            for n in range(2, n_max + 1):
                table[n] = threshold(n, rho, c_at(n) / n)
        return table


def baseline_lateral_trace(runtime: TrialRuntime, trial_id: int) -> np.ndarray:
    """Unattacked twin trajectory (alpha fixed, no detector): lateral error per step.

    Shares the plant noise streams with the attacked trial of the same id, so
    the difference between the two traces is attributable to the attack alone.
    """
    config = runtime.config
    model, ctl = runtime.model, runtime.ctl
    state = init_sim_state(model, ctl, config.seed, trial_id, alpha0=config.initial_alpha)
    idx = runtime.lateral_index
    trace = np.empty(config.steps)
    for n in range(config.steps):
        trace[n] = state.x[idx]
        state, _ = step(state, model, ctl, config.initial_alpha, None)
    return trace


def run_trial(
    config: ScenarioConfig,
    trial_id: int,
    runtime: TrialRuntime | None = None,
    record_steps: bool = False,
) -> TrialResult:
    """Execute one trial: plant + detector + switching policy + attack."""
    rt = runtime if runtime is not None else TrialRuntime(config)
    model, ctl = rt.model, rt.ctl
    steps_total = config.steps
    attacker = Attacker(rt.attack, model, ctl) if rt.attack.active else None

    baseline = None
    if attacker is not None and config.compute_deviation:
        baseline = baseline_lateral_trace(rt, trial_id)

    state = init_sim_state(model, ctl, config.seed, trial_id, alpha0=config.initial_alpha)
    acc = TestAccumulator(model, ctl, track=rt.track)
    diag = AttackDiagnostics(model, ctl) if attacker is not None else None
    sw = SwitchState(
        alpha=config.initial_alpha,
        tau=rt.tau,
        warmup=config.warmup,
        rule_variant=config.rule_variant,
    )
    switching = config.switching_enabled
    t1_table, t2_table = rt.t1, rt.t2
    lat_idx = rt.lateral_index

    log = None
    if record_steps:
        log = {key: np.empty(steps_total) for key in
               ("alpha", "phi1_norm", "phi2_norm", "phi3_norm", "t1", "t2", "y_lateral", "attack_active")}

    detected_at = None
    false_switches = 0
    max_dev = 0.0

    for n in range(steps_total):
        alpha = sw.alpha if switching else config.initial_alpha
        y_lat = state.x[lat_idx]
        attack_on = attacker.active_at(n) if attacker is not None else False
        state, out = step(state, model, ctl, alpha, attacker)
        acc.update(out.residual, out.lagged_watermark)
        if diag is not None:
            update_diagnostics(diag, out.attack_v)
        N = acc.n
        f1 = acc.phi1_norm()
        f2 = acc.phi2_norm()
        t1 = t1_table[N]
        t2 = t2_table[N]
        if switching:
            prev_alpha = sw.alpha
            sw = decide(sw, f1, f2, t1, t2)
            if prev_alpha == 1 and sw.alpha == 0:
                if detected_at is None:
                    detected_at = n
                if not attack_on:
                    false_switches += 1
        if baseline is not None:
            dev = abs(y_lat - baseline[n])
            if dev > max_dev:
                max_dev = dev
        if log is not None:
            log["alpha"][n] = alpha
            log["phi1_norm"][n] = f1
            log["phi2_norm"][n] = f2
            log["phi3_norm"][n] = acc.phi3_norm()
            log["t1"][n] = t1
            log["t2"][n] = t2
            log["y_lateral"][n] = y_lat
            log["attack_active"][n] = attack_on

    step_log = None
    if log is not None:
        step_log = StepLog(n=np.arange(steps_total), **{k: v for k, v in log.items()})
    return TrialResult(
        trial_id=trial_id,
        detected_at=detected_at,
        switch_count=len(sw.switch_log),
        false_switches=false_switches,
        max_lateral_dev=max_dev,
        seed=config.seed,
        switch_log=sw.switch_log,
        attack_g_estimate=None if diag is None else diag.G_estimate,
        step_log=step_log,
    )


# -- parallel workers ----------------------------------------------------

_WORKER_RUNTIME: TrialRuntime | None = None


def _init_worker(config_dict: dict) -> None:
    global _WORKER_RUNTIME
    _WORKER_RUNTIME = TrialRuntime(config_from_dict(config_dict))


def _run_worker(args: tuple) -> TrialResult:
    trial_id, record_steps = args
    return run_trial(_WORKER_RUNTIME.config, trial_id, _WORKER_RUNTIME, record_steps)


def run_batch(config: ScenarioConfig, runtime: TrialRuntime | None = None) -> list[TrialResult]:
    """All trials of a config, sorted by trial_id; parallelism never changes output."""
    record = set(config.log_step_trials)
    tasks = [(tid, tid in record) for tid in range(config.trials)]
    if config.workers <= 1:
        rt = runtime if runtime is not None else TrialRuntime(config)
        results = [run_trial(config, tid, rt, rec) for tid, rec in tasks]
    else:
        config_dict = config_to_dict(config)
        with ProcessPoolExecutor(
            max_workers=config.workers, initializer=_init_worker, initargs=(config_dict,)
        ) as pool:
            results = list(pool.map(_run_worker, tasks, chunksize=8))
    return sorted(results, key=lambda r: r.trial_id)


# -- CSV output ------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path, kind: str, columns: list[str], rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(f"# wmswitch-csv schema_version={CSV_SCHEMA_VERSION} kind={kind}\n")
            writer = csv.writer(fh)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise IOError(f"failed to write {path}: {exc}") from exc


def write_trials_csv(path, results: list[TrialResult]) -> None:
    rows = (
        (r.trial_id, r.detected_at, r.switch_count, r.false_switches, r.max_lateral_dev, r.seed)
        for r in results
    )
    _write_csv(path, "trials", TRIALS_COLUMNS, rows)


def write_steps_csv(path, results: list[TrialResult]) -> None:
    def rows():
        for r in results:
            if r.step_log is None:
                continue
            s = r.step_log
            for i in range(len(s.n)):
                yield (
                    r.trial_id, int(s.n[i]), int(s.alpha[i]), s.phi1_norm[i], s.phi2_norm[i],
                    s.phi3_norm[i], s.t1[i], s.t2[i], s.y_lateral[i], int(s.attack_active[i]),
                )
    _write_csv(path, "steps", STEPS_COLUMNS, rows())


def write_events_csv(path, results: list[TrialResult]) -> None:
    rows = (
        (r.trial_id, step, src, dst)
        for r in results
        for step, src, dst in r.switch_log
    )
    _write_csv(path, "events", EVENTS_COLUMNS, rows)


def write_attack_diag_csv(path, results: list[TrialResult]) -> None:
    rows = (
        (r.trial_id, r.attack_g_estimate)
        for r in results
        if r.attack_g_estimate is not None
    )
    _write_csv(path, "attack_diag", ATTACK_DIAG_COLUMNS, rows)


def summarize(results: list[TrialResult], rho: float) -> dict:
    detected = [r.detected_at for r in results if r.detected_at is not None]
    n = len(results)
    return {
        "rho": rho,
        "trials": n,
        "detection_rate": len(detected) / n,
        "mean_detection_time": float(np.mean(detected)) if detected else None,
        "median_detection_time": float(np.median(detected)) if detected else None,
        "false_switch_rate": sum(1 for r in results if r.false_switches > 0) / n,
    }


def write_sweep_csv(path, summaries: list[dict]) -> None:
    rows = ((s[c] for c in SWEEP_COLUMNS) for s in summaries)
    _write_csv(path, "sweep", SWEEP_COLUMNS, rows)


def run_monte_carlo(config: ScenarioConfig, out_dir) -> dict:
    """Run the configured batch (or rho sweep) and write CSVs into out_dir.

    Returns a dict of output file paths. With a rho grid configured, each grid
    value reruns the batch with rho1 = rho2 = rho and the per-rho trial files
    sit next to the sweep summary.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict = {}
    if config.rho_grid is not None:
        summaries = []
        for rho in config.rho_grid:
            sub = dataclasses.replace(config, rho1=rho, rho2=rho, rho_grid=None)
            results = run_batch(sub)
            trial_path = out / f"trials_rho_{rho:+.4g}.csv"
            write_trials_csv(trial_path, results)
            paths[f"trials_rho_{rho:+.4g}"] = trial_path
            summaries.append(summarize(results, rho))
        sweep_path = out / "sweep.csv"
        write_sweep_csv(sweep_path, summaries)
        paths["sweep"] = sweep_path
        return paths

    results = run_batch(config)
    trials_path = out / "trials.csv"
    write_trials_csv(trials_path, results)
    paths["trials"] = trials_path
    events_path = out / "events.csv"
    write_events_csv(events_path, results)
    paths["events"] = events_path
    if any(r.attack_g_estimate is not None for r in results):
        diag_path = out / "attack_diag.csv"
        write_attack_diag_csv(diag_path, results)
        paths["attack_diag"] = diag_path
    if any(r.step_log is not None for r in results):
        steps_path = out / "steps.csv"
        write_steps_csv(steps_path, results)
        paths["steps"] = steps_path
    return paths
