import numpy as np
import pytest

from occlight.control import (
    ControlCommand,
    RequirementSpec,
    batch_control,
    individual_control,
    optimize_dimmer,
    optimize_onoff,
    perfect_localization_control,
    verify,
)
from occlight.env import GridSpec, RoomLayout, build_state_space
from occlight.lighting import AttenuationField, LuminaireSpec, SystemPowerConfig, illumination_matrix

from oracles import brute_force_onoff, random_instance

CFG = SystemPowerConfig(0.0)


def _fixed(h_rows, f=10000.0, watts=100.0):
    """Luminaires with hand-set attenuation; h_rows[l] lists h per position."""
    lums = [LuminaireSpec(f"L{l}", (l, 0.0, 2.7), f, watts / f) for l in range(len(h_rows))]
    fields = [AttenuationField(l.id, np.array(h, dtype=float)) for l, h in zip(lums, h_rows)]
    return lums, fields


def test_no_user_all_off():
    lums, fields = _fixed([[0.05], [0.05]])
    cmd = optimize_onoff(lums, fields, np.zeros(1), [], SystemPowerConfig(30.0))
    assert cmd.n_on == 0 and cmd.power == 30.0 and cmd.feasible


def test_single_light_selected():
    lums, fields = _fixed([[0.0], [0.05], [0.0]])  # only L1 gives 500 lux
    for mode in ("exhaustive", "greedy"):
        cmd = optimize_onoff(lums, fields, np.zeros(1), [RequirementSpec([0], 400.0)], CFG, mode)
        assert cmd.sw.tolist() == [0.0, 1.0, 0.0]
        assert cmd.power == pytest.approx(100.0)


def test_margin_makes_constraint_strict():
    lums, fields = _fixed([[0.04]])  # exactly 400 lux: not strictly above
    cmd = optimize_onoff(lums, fields, np.zeros(1), [RequirementSpec([0], 400.0)], CFG)
    assert not cmd.feasible and cmd.sw.tolist() == [1.0]
    cmd = optimize_onoff(lums, fields, np.full(1, 1.0), [RequirementSpec([0], 400.0)], CFG)
    assert cmd.feasible


def test_lexicographic_tie_break():
    lums, fields = _fixed([[0.05], [0.05]])  # identical lights
    cmd = optimize_onoff(lums, fields, np.zeros(1), [RequirementSpec([0], 400.0)], CFG)
    assert cmd.sw.tolist() == [0.0, 1.0]  # (0, 1) precedes (1, 0)


def test_greedy_tie_lowest_index():
    lums, fields = _fixed([[0.05], [0.05]])
    cmd = optimize_onoff(lums, fields, np.zeros(1), [RequirementSpec([0], 400.0)], CFG, "greedy")
    assert cmd.sw.tolist() == [1.0, 0.0]


def test_overrides_per_position():
    lums, fields = _fixed([[0.05, 0.0], [0.0, 0.05]])
    req = RequirementSpec([0, 1], 400.0, overrides={1: 100.0})
    env = np.array([0.0, 200.0])
    cmd = optimize_onoff(lums, fields, env, [req], CFG)
    assert cmd.sw.tolist() == [1.0, 0.0]


def test_dimension_mismatch():
    lums, fields = _fixed([[0.05], [0.05]])
    with pytest.raises(ValueError):
        optimize_onoff(lums, fields[:1], np.zeros(1), [], CFG)
    with pytest.raises(ValueError):
        optimize_onoff(lums, fields, np.zeros(3), [], CFG)
    with pytest.raises(ValueError):
        optimize_onoff(lums, fields, np.zeros(1), [], CFG, "simplex")


def test_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(40):
        space, lums, fields, env, reqs = random_instance(rng)
        A = illumination_matrix(fields, lums)
        cost = np.array([l.r * l.f_full for l in lums])
        ref = brute_force_onoff(A, env, reqs[0].region, 400.0, cost)
        cmd = optimize_onoff(lums, fields, env, reqs, CFG)
        if ref is None:
            assert not cmd.feasible
        else:
            assert cmd.feasible and np.array_equal(cmd.sw, ref)
            assert verify(lums, fields, env, reqs, cmd.sw)


def test_dimmer_examples():
    lums, fields = _fixed([[0.05], [0.05]])
    cmd = optimize_dimmer(lums, fields, np.array([500.0]), [RequirementSpec([0], 400.0)], CFG)
    assert cmd.sw.tolist() == [0.0, 0.0] and cmd.feasible
    lums, fields = _fixed([[0.05]])
    cmd = optimize_dimmer(lums, fields, np.array([100.0]), [RequirementSpec([0], 400.0)], CFG)
    # (F_min + margin - F_en) / (F_full h)
    assert cmd.sw[0] == pytest.approx((401.0 - 100.0) / 500.0, abs=1e-9)
    cmd = optimize_dimmer(lums, fields, np.zeros(1), [RequirementSpec([0], 600.0)], CFG)
    assert not cmd.feasible and cmd.sw.tolist() == [1.0]


def test_dimmer_lexicographic_among_optima():
    lums, fields = _fixed([[0.05], [0.05]])  # any split of the load is optimal
    cmd = optimize_dimmer(lums, fields, np.zeros(1), [RequirementSpec([0], 400.0)], CFG)
    assert cmd.sw[0] == pytest.approx(0.0, abs=1e-9)
    assert cmd.sw[1] == pytest.approx(401.0 / 500.0, abs=1e-9)


def test_dimmer_below_binary():
    rng = np.random.default_rng(11)
    for _ in range(30):
        _, lums, fields, env, reqs = random_instance(rng)
        b = optimize_onoff(lums, fields, env, reqs, CFG)
        d = optimize_dimmer(lums, fields, env, reqs, CFG)
        assert d.feasible == b.feasible
        if b.feasible:
            assert d.power <= b.power + 1e-6
            assert verify(lums, fields, env, reqs, d.sw)


def test_adding_positions_never_cheaper():
    rng = np.random.default_rng(5)
    for _ in range(20):
        space, lums, fields, env, reqs = random_instance(rng)
        extra = RequirementSpec([int(rng.integers(space.n_positions))], 400.0)
        a = optimize_onoff(lums, fields, env, reqs, CFG)
        b = optimize_onoff(lums, fields, env, reqs + [extra], CFG)
        if b.feasible:
            assert b.power >= a.power - 1e-9


def test_batch():
    lums, _ = _fixed([[0.05]] * 7)
    assert batch_control(lums, CFG, 10.0, 10.0).power == pytest.approx(700.0)
    assert batch_control(lums, CFG, 0.0, 31.0).n_on == 0
    assert batch_control(lums, CFG, 0.0, 15.0, delay=30.0).n_on == 7
    assert batch_control(lums, CFG, -np.inf, 0.0).n_on == 0


def test_individual():
    lums, _ = _fixed([[0.05]] * 3)
    cmd = individual_control(lums, CFG, [-np.inf, 5.0, -np.inf], 5.0)
    assert cmd.sw.tolist() == [0.0, 1.0, 0.0]
    assert individual_control(lums, CFG, [-np.inf] * 3, 5.0).n_on == 0
    with pytest.raises(ValueError):
        individual_control(lums, CFG, [0.0], 5.0)


def test_perfect_is_singleton_onoff():
    rng = np.random.default_rng(3)
    _, lums, fields, env, _ = random_instance(rng, 6)
    a = perfect_localization_control(lums, fields, env, 4, CFG)
    b = optimize_onoff(lums, fields, env, [RequirementSpec([4], 400.0)], CFG)
    assert np.array_equal(a.sw, b.sw)
    assert perfect_localization_control(lums, fields, env, None, CFG).n_on == 0


def test_requirement_validation():
    with pytest.raises(ValueError):
        RequirementSpec([0], 0.0)
