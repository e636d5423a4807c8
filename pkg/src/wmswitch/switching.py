"""Sensor-switching decision rule with a dwell-time constraint.

A threshold violation (either test statistic at or above its threshold) sends
the loop to the protected sensor (alpha = 0). Returning to the accurate sensor
(alpha = 1) requires at least tau consecutive quiet steps at alpha = 0, which
keeps the switched closed loop stable.

The default rule is the detection-consistent reading of the decision bullets;
the literal printed variant (violations drive alpha toward 1) is kept behind
``rule_variant="printed_literal"`` for comparison runs only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

DEFAULT_WARMUP = 4


@dataclass(frozen=True)
class SwitchState:
    """Immutable policy state; decide() returns the successor."""

    alpha: int = 1
    steps_in_zero: int = 0
    tau: int = 1
    step: int = 0
    warmup: int = DEFAULT_WARMUP
    rule_variant: str = "detection"
    switch_log: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.alpha not in (0, 1):
            raise ValueError("alpha must be 0 or 1")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if self.rule_variant not in ("detection", "printed_literal"):
            raise ValueError(f"unknown rule variant {self.rule_variant!r}")


def decide(
    state: SwitchState,
    phi1_norm: float,
    phi2_norm: float,
    t1: float,
    t2: float,
) -> SwitchState:
    """One decision step: compare statistics to thresholds, honor dwell time.

    Decisions during the first ``warmup`` steps are suppressed (the statistics
    are meaningless at tiny sample counts); dwell counting still runs.
    """
    if state.rule_variant == "printed_literal":
        # Literal bullets: both statistics large => alpha 1, otherwise 0.
        want_one = phi1_norm >= t1 and phi2_norm >= t2
        violation = not want_one
    else:
        violation = phi1_norm >= t1 or phi2_norm >= t2

    alpha = state.alpha
    steps_in_zero = state.steps_in_zero
    log = state.switch_log
    suppressed = state.step < state.warmup

    if alpha == 1:
        if violation and not suppressed:
            alpha = 0
            steps_in_zero = 0
            log = log + ((state.step, 1, 0),)
    else:
        steps_in_zero += 1
        if steps_in_zero >= state.tau and not violation and not suppressed:
            alpha = 1
            log = log + ((state.step, 0, 1),)
            steps_in_zero = 0

    return replace(
        state,
        alpha=alpha,
        steps_in_zero=steps_in_zero,
        step=state.step + 1,
        switch_log=log,
    )


def dwell_violations(switch_log, tau: int) -> int:
    """Count 0->1 transitions that were not preceded by >= tau steps at 0.

    A run that starts at alpha = 0 has an implicit entry into mode 0 before
    step 0, so the elapsed dwell for a first 0->1 with no logged 1->0 is
    step + 1.
    """
    violations = 0
    last_to_zero = -1
    for step, src, dst in switch_log:
        if src == 1 and dst == 0:
            last_to_zero = step
        elif src == 0 and dst == 1:
            if step - last_to_zero < tau:
                violations += 1
    return violations
