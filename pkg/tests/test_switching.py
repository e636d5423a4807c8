import numpy as np
import pytest

from wmswitch.switching import SwitchState, decide, dwell_violations


def quiet(state):
    return decide(state, 0.0, 0.0, 1.0, 1.0)


def violating(state):
    return decide(state, 2.0, 0.0, 1.0, 1.0)


def test_alarm_switches_to_protected():
    state = SwitchState(alpha=1, tau=3, warmup=0)
    state = violating(state)
    assert state.alpha == 0
    assert state.switch_log == ((0, 1, 0),)


def test_phi2_alone_triggers():
    state = SwitchState(alpha=1, tau=3, warmup=0)
    state = decide(state, 0.0, 5.0, 1.0, 1.0)
    assert state.alpha == 0


def test_threshold_tie_counts_as_violation():
    state = SwitchState(alpha=1, tau=1, warmup=0)
    state = decide(state, 1.0, 0.0, 1.0, 1.0)
    assert state.alpha == 0


def test_dwell_unmet_stays_protected():
    state = SwitchState(alpha=0, tau=5, warmup=0)
    for _ in range(3):
        state = quiet(state)
    assert state.alpha == 0
    assert state.steps_in_zero == 3


def test_recovery_after_dwell():
    state = SwitchState(alpha=0, tau=5, warmup=0)
    for _ in range(5):
        state = quiet(state)
    assert state.alpha == 1
    assert state.switch_log[-1][1:] == (0, 1)


def test_violation_blocks_recovery_without_resetting_dwell():
    state = SwitchState(alpha=0, tau=3, warmup=0)
    state = quiet(state)
    state = quiet(state)
    state = violating(state)  # dwell satisfied at this step, but alarm active
    assert state.alpha == 0
    state = quiet(state)
    assert state.alpha == 1


def test_warmup_suppresses_decisions():
    state = SwitchState(alpha=1, tau=1, warmup=4)
    for _ in range(4):
        state = violating(state)
        assert state.alpha == 1
    state = violating(state)
    assert state.alpha == 0
    assert state.switch_log == ((4, 1, 0),)


def test_quiet_forever_stays_accurate():
    state = SwitchState(alpha=1, tau=2, warmup=0)
    for _ in range(500):
        state = quiet(state)
    assert state.alpha == 1
    assert state.switch_log == ()


def test_monotone_alarm_response():
    rng = np.random.default_rng(8)
    state = SwitchState(alpha=1, tau=4, warmup=0)
    for _ in range(300):
        phi1, phi2 = rng.uniform(0, 2, size=2)
        state = decide(state, phi1, phi2, 1.0, 1.0)
        if phi1 >= 1.0 or phi2 >= 1.0:
            assert state.alpha == 0


def test_printed_literal_variant_mirrors_rule():
    state = SwitchState(alpha=0, tau=1, warmup=0, rule_variant="printed_literal")
    # both statistics above thresholds drives alpha toward 1 in this variant
    state = decide(state, 2.0, 2.0, 1.0, 1.0)
    assert state.alpha == 1
    state = decide(state, 0.0, 2.0, 1.0, 1.0)
    assert state.alpha == 0


def test_invalid_construction():
    with pytest.raises(ValueError):
        SwitchState(alpha=2)
    with pytest.raises(ValueError):
        SwitchState(tau=0)
    with pytest.raises(ValueError):
        SwitchState(rule_variant="bogus")


def test_dwell_invariant_fuzz():
    # one long adversarial stream of randomized statistics and thresholds
    rng = np.random.default_rng(123)
    n = 200_000
    phis = rng.uniform(0, 2, size=(n, 2))
    thresholds = rng.uniform(0.5, 1.5, size=(n, 2))
    state = SwitchState(alpha=1, tau=int(rng.integers(1, 20)), warmup=0)
    for i in range(n):
        state = decide(state, phis[i, 0], phis[i, 1], thresholds[i, 0], thresholds[i, 1])
    assert dwell_violations(state.switch_log, state.tau) == 0
