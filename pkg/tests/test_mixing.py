import json

import numpy as np
import pytest

from coopsgd.errors import ConfigError, DimensionError
from coopsgd.matrix import j_matrix
from coopsgd.mixing import (MixingSchedule, build_dataset_proportional, build_easgd, build_uniform,
                            consensus_deviation_sq, delta_of, from_json, is_consensus,
                            random_family_matrix, restrict_to, to_json, validate)
from coopsgd.selection import SelectionSet

from conftest import random_column_stochastic


def test_uniform_all_selected():
    mm = build_uniform(4, range(4))
    assert np.all(mm.w == 0.25)


def test_uniform_two_of_four():
    # clients 2 and 4 in one-based numbering
    mm = build_uniform(4, [1, 3])
    expected = np.zeros((4, 4))
    for i in (1, 3):
        for j in (1, 3):
            expected[i, j] = 0.5
    assert np.array_equal(mm.w, expected)
    assert validate(mm)


def test_uniform_single():
    assert np.array_equal(build_uniform(1, [0]).w, [[1.0]])


def test_uniform_with_auxiliary():
    mm = build_uniform(5, [0, 2], v=1)
    assert mm.participants == (0, 2, 4)
    assert validate(mm)
    assert np.allclose(mm.w[np.ix_([0, 2, 4], [0, 2, 4])], 1 / 3)


def test_uniform_rejects_bad_selection():
    with pytest.raises(ConfigError):
        build_uniform(3, [])
    with pytest.raises(ConfigError):
        build_uniform(3, [5])


def test_dataset_proportional():
    assert np.allclose(build_dataset_proportional([1, 1, 1, 1], range(4)).w, 0.25)
    w = build_dataset_proportional([1, 3], [0, 1]).w
    assert np.allclose(w, [[0.25, 0.25], [0.75, 0.75]])
    assert np.allclose(w.sum(axis=0), 1.0)


def test_dataset_proportional_rows_are_size_fractions():
    sizes = [10, 20, 30, 40]
    w = build_dataset_proportional(sizes, range(4)).w
    for i, s in enumerate(sizes):
        assert np.allclose(w[i], s / 100)


def test_validate_verdicts():
    assert validate(j_matrix(3))
    bad = j_matrix(3)
    bad[0, 1] -= 0.1
    v = validate(bad)
    assert not v and v.violation == "column-sum"
    neg = np.array([[1.5, 0.5], [-0.5, 0.5]])
    assert validate(neg).violation == "nonnegative"
    assert validate(np.ones((2, 3))).violation == "shape"


def test_validate_zero_column_for_unselected():
    mm = build_uniform(3, [0, 2])
    assert validate(mm)
    assert np.all(mm.w[:, 1] == 0)


def test_validate_selection_mismatch():
    mm = build_uniform(3, [0, 2])
    forged = type(mm)(mm.w, (0, 1), 3)
    assert validate(forged).violation == "selection-mismatch"


def test_delta_uniform_is_zero():
    for n in range(2, 9):
        assert delta_of(j_matrix(n), 1.0) == pytest.approx(0.0, abs=1e-12)


def test_delta_extreme_matrix():
    n, c = 5, 0.6
    w = np.eye(n)
    assert delta_of(w, c) == pytest.approx(c * (n - 1))


def test_delta_hand_value():
    # one column's two smallest entries are 0.1 and 0.2; others are uniform
    w = np.full((4, 4), 0.25)
    w[:, 0] = [0.1, 0.2, 0.3, 0.4]
    assert delta_of(w, 1.0) == pytest.approx(3 * (1 - 16 * 0.02), rel=1e-12)


def test_delta_structural_zero_toggle():
    mm = build_uniform(4, [0, 1])
    # with zeros counted, uniform-over-selected looks maximally non-uniform
    assert delta_of(mm, 0.5) == pytest.approx(0.5 * 3)
    # skipping structural zeros leaves only the 1/2, 1/2 entries of each column
    assert delta_of(mm, 0.5, count_structural_zeros=False) == pytest.approx(0.0)


def test_delta_needs_two_rows():
    with pytest.raises(DimensionError):
        delta_of([[1.0]], 1.0)


def test_consensus_deviation_cases(rng):
    assert consensus_deviation_sq(j_matrix(4)) == pytest.approx(0.0, abs=1e-15)
    assert consensus_deviation_sq(np.eye(2)) == pytest.approx(1.0)
    for _ in range(50):
        w = random_column_stochastic(rng, 5)
        assert consensus_deviation_sq(w) <= delta_of(w, 1.0) + 1e-9


def test_literal_norm_exceeds_deviation_by_zero_columns(rng):
    # ||W^T - J||^2 = ||W^T (I - J)||^2 + (#zero columns)/n for column-stochastic W
    for _ in range(100):
        n = int(rng.integers(2, 8))
        k = int(rng.integers(1, n + 1))
        members = sorted(rng.choice(n, k, replace=False))
        w = restrict_to(random_column_stochastic(rng, n), members, n).w
        literal = float(np.sum((w.T - j_matrix(n)) ** 2))
        assert literal == pytest.approx(consensus_deviation_sq(w) + (n - k) / n, abs=1e-12)


def test_is_consensus():
    assert is_consensus(j_matrix(3))
    assert is_consensus(build_uniform(4, [1, 2]).w)
    assert not is_consensus(np.eye(3))
    assert is_consensus(build_dataset_proportional([1, 2, 3], range(3)).w) is False


def test_easgd_matrix_is_column_stochastic():
    mm = build_easgd(3, 0.2)
    assert validate(mm.w)
    assert mm.n == 4 and mm.v == 1


def test_random_family_is_valid_and_keyed():
    a = random_family_matrix(6, 5, [0, 3], seed=7, round=2)
    b = random_family_matrix(6, 5, [0, 3], seed=7, round=2)
    c = random_family_matrix(6, 5, [0, 3], seed=7, round=3)
    assert np.array_equal(a.w, b.w)
    assert not np.array_equal(a.w, c.w)
    assert validate(a)


def test_random_family_blend_controls_delta():
    near = random_family_matrix(8, 8, range(8), 0, 0, blend=1e-6)
    assert delta_of(near, 1.0) < 1e-3
    assert delta_of(random_family_matrix(8, 8, range(8), 0, 0), 1.0) > delta_of(near, 1.0)


def test_schedule_emits_identity_off_period():
    sched = MixingSchedule("uniform-J", tau=3, m=4)
    sel = SelectionSet(0, (0, 1, 2, 3))
    assert np.array_equal(sched.s_matrix(1, sel), np.eye(4))
    assert np.array_equal(sched.s_matrix(2, sel), np.eye(4))
    assert np.array_equal(sched.s_matrix(3, sel), j_matrix(4))


def test_schedule_periodic_list_cycles():
    w1 = j_matrix(2)
    w2 = np.eye(2)
    sched = MixingSchedule("periodic-list", tau=1, m=2, matrices=[w1, w2])
    sel = SelectionSet(0, (0, 1))
    assert np.array_equal(sched.mixing_at(1, sel).w, w1)
    assert np.array_equal(sched.mixing_at(2, sel).w, w2)
    assert np.array_equal(sched.mixing_at(3, sel).w, w1)


def test_schedule_static_respects_selection():
    sched = MixingSchedule("static", tau=2, m=3, matrices=[j_matrix(3)])
    mm = sched.mixing_at(2, SelectionSet(0, (0, 2)))
    assert np.all(mm.w[:, 1] == 0)


def test_schedule_validation_errors():
    with pytest.raises(ConfigError, match="mixing.matrix"):
        MixingSchedule("static", tau=1, m=2, matrices=[[[0.5, 0.2], [0.5, 0.2]]])
    with pytest.raises(ConfigError):
        MixingSchedule("static", tau=1, m=2)
    with pytest.raises(ConfigError):
        MixingSchedule("bogus")
    with pytest.raises(ConfigError):
        MixingSchedule("uniform-J", tau=0)


def test_json_round_trip():
    mm = build_uniform(4, [0, 2])
    doc = to_json(mm)
    data = json.loads(doc)
    assert data["dim"] == 4
    # column-major: second column belongs to the unselected client
    assert data["columns"][1] == [0.0] * 4
    back = from_json(doc)
    assert np.array_equal(back.w, mm.w)
    assert back.selected == (0, 2)


def test_json_rejects_invalid():
    with pytest.raises(ConfigError):
        from_json({"dim": 2, "columns": [[0.5, 0.4], [0.5, 0.5]]})
    with pytest.raises(ConfigError):
        from_json({"columns": []})
