import numpy as np
import pytest

from coopsgd.errors import ConfigError, DivergenceError
from coopsgd.matrix import j_matrix
from coopsgd.mixing import MixingSchedule
from coopsgd.objectives import GradientOracle, make_quadratic, linear_spectrum
from coopsgd.selection import SelectionPolicy, SelectionSet
from coopsgd.trainer import (CSV_HEADER, RunConfig, StateMatrix, averaged_model, consensus_error,
                             easgd_update, initial_model, read_trace_csv, run, step, summary,
                             write_summary_json, write_trace_csv)


def _all(m):
    return SelectionSet(0, tuple(range(m)))


def test_step_zero_lr_identity(scalar_pair, rng):
    x = StateMatrix(rng.standard_normal((1, 2)), 2)
    with pytest.raises(ConfigError):
        step(x, GradientOracle(scalar_pair), np.eye(2), _all(2), -1.0, 1)
    out = step(x, GradientOracle(scalar_pair), np.eye(2), _all(2), 0.0, 1)
    assert np.array_equal(out.data, x.data)


def test_step_single_client_plain_sgd():
    s = make_quadratic(3, 1, [1.0, 2.0, 3.0], 0.0, 0)
    x = StateMatrix(np.ones((3, 1)), 1)
    out = step(x, GradientOracle(s), np.eye(1), _all(1), 0.1, 1)
    assert np.allclose(out.data[:, 0], 1.0 - 0.1 * (s.A @ np.ones(3) - s.b[0]))


def test_step_with_j_gives_equal_columns(rng):
    s = make_quadratic(4, 5, linear_spectrum(4, 0.1, 1), 0.3, 1, sigma=0.2)
    x = StateMatrix(rng.standard_normal((4, 5)), 5)
    out = step(x, GradientOracle(s, 0.2, 3), j_matrix(5), _all(5), 0.1, 4)
    assert np.allclose(out.data, out.data[:, :1], atol=1e-14)


def test_step_zeroes_unselected_before_mixing(rng):
    s = make_quadratic(2, 3, [1.0, 1.0], 0.0, 0)
    x = StateMatrix(rng.standard_normal((2, 3)), 3)
    out = step(x, GradientOracle(s), np.eye(3), SelectionSet(0, (0, 2)), 0.1, 1)
    assert np.all(out.data[:, 1] == 0)


def test_averaged_model_cases(rng):
    w = rng.standard_normal(3)
    x = np.tile(w[:, None], (1, 4))
    assert np.allclose(averaged_model(x), w)
    x[:, 1] = 0
    assert np.allclose(averaged_model(x), w * 3 / 4)
    assert np.array_equal(averaged_model(np.zeros((2, 3))), np.zeros(2))
    y = rng.standard_normal((3, 5))
    naive = [sum(y[i, j] for j in range(5)) / 5 for i in range(3)]
    assert np.allclose(averaged_model(StateMatrix(y, 4)), naive)


def test_consensus_error(rng):
    assert consensus_error(np.ones((2, 3))) == 0.0
    x = np.array([[0.0, 2.0]])
    assert consensus_error(x) == pytest.approx(2.0)


def test_easgd_update_alpha_zero(rng):
    x = rng.standard_normal((2, 3))
    g = rng.standard_normal((2, 3))
    z = rng.standard_normal(2)
    xn, zn = easgd_update(x, z, g, 0.1, 0.0, k=2, tau=1)
    assert np.allclose(xn, x - 0.1 * g)
    assert np.array_equal(zn, z)


def test_easgd_update_full_pull(rng):
    x = rng.standard_normal((2, 4))
    z = rng.standard_normal(2)
    _, zn = easgd_update(x, z, np.zeros((2, 4)), 0.1, 0.25, k=3, tau=3)
    assert np.allclose(zn, x.mean(axis=1), atol=1e-15)


def test_easgd_update_scalar_hand_values():
    xn, zn = easgd_update([[0.1, 0.3]], [0.0], [[-0.9, -2.7]], 0.1, 0.25, k=2, tau=2)
    # x_i - eta g_i - alpha (x_i - z);  z + m alpha (xbar - z)
    assert np.allclose(xn, [[0.1 + 0.09 - 0.025, 0.3 + 0.27 - 0.075]], atol=1e-15)
    assert np.allclose(zn, [0.25 * 2 * 0.2], atol=1e-15)


def test_easgd_update_off_period_and_limits(rng):
    x = rng.standard_normal((1, 2))
    xn, zn = easgd_update(x, [5.0], np.zeros((1, 2)), 0.1, 0.25, k=1, tau=2)
    assert np.array_equal(xn, x) and zn[0] == 5.0
    with pytest.raises(ConfigError):
        easgd_update(x, [0.0], x, 0.1, 0.75, k=2, tau=2)


def test_single_round_scalar_reference(scalar_pair):
    cfg = RunConfig("unified", eta=0.1, tau=2, K=2)
    tr = run(cfg, scalar_pair)
    # clients follow x <- x - 0.1 (x - b_i) for two steps, then average
    assert np.allclose(tr.final_state.data, [[0.38, 0.38]], atol=1e-15)
    assert consensus_error(tr.final_state) == 0.0
    u = [0.0, 0.2]
    for rec, uk in zip(tr.records, u):
        assert rec.loss == pytest.approx(0.5 * uk * uk - 2 * uk, abs=1e-15)
    assert [r.aggregated for r in tr.records] == [False, True]


def test_special_cases_bit_identical(iid_quadratic):
    s = iid_quadratic
    orc = lambda: GradientOracle(s, 0.1, 5)
    base = dict(eta=0.3, K=40, tau=7)
    t1 = run(RunConfig("fully-sync", **base), s, orc())
    t2 = run(RunConfig("psasgd", **{**base, "tau": 1}), s, orc())
    dp = MixingSchedule("static", 1, 8, matrices=[j_matrix(8)])
    t3 = run(RunConfig("dpsgd", schedule=dp, **base), s, orc())
    for other in (t2, t3):
        assert [r.loss for r in other.records] == [r.loss for r in t1.records]
        assert np.array_equal(other.final_state.data, t1.final_state.data)


def test_identity_residual_small(iid_quadratic):
    sched = MixingSchedule("seeded-random-family", 3, 8, 1, seed=2)
    cfg = RunConfig("unified", eta=0.2, tau=3, K=30, v=1, schedule=sched,
                    selection=SelectionPolicy("per-round-random", 0.5, 1))
    tr = run(cfg, iid_quadratic, GradientOracle(iid_quadratic, 0.1, 0))
    assert tr.max_identity_residual < 1e-12


def test_runtime_unselected_keep_stale_model():
    s = make_quadratic(2, 3, [1.0, 1.0], 0.5, 0)
    sched = MixingSchedule("static", 1, 3, matrices=[np.eye(3)])
    cfg = RunConfig("unified", eta=0.1, tau=1, K=3, schedule=sched,
                    selection=SelectionPolicy("static-random", 2 / 3, 0), init="scaled")
    tr = run(cfg, s)
    idle = [j for j in range(3) if j not in tr.records[0].selected][0]
    start = initial_model(2, "scaled", 1.0, 0)
    assert np.array_equal(tr.final_state.data[:, idle], start)


def test_single_selected_client_is_broadcast(scalar_pair):
    # restricted to one client, any matrix is rank one and the aggregate reaches everyone
    sched = MixingSchedule("static", 1, 2, matrices=[np.eye(2)])
    cfg = RunConfig("unified", eta=0.1, tau=1, K=3, schedule=sched,
                    selection=SelectionPolicy("static-random", 0.5, 0), init="scaled")
    data = run(cfg, scalar_pair).final_state.data
    assert data[0, 0] == data[0, 1]


def test_runtime_broadcast_after_consensus(iid_quadratic):
    cfg = RunConfig("psasgd", eta=0.1, tau=2, K=4,
                    selection=SelectionPolicy("per-round-random", 0.25, 3))
    tr = run(cfg, iid_quadratic, GradientOracle(iid_quadratic, 0.1, 0))
    data = tr.final_state.data
    assert np.allclose(data, data[:, :1], atol=0)


def test_runconfig_validation():
    with pytest.raises(ConfigError, match="run.algorithm"):
        RunConfig("magic")
    with pytest.raises(ConfigError, match="run.eta"):
        RunConfig(eta=0.0)
    with pytest.raises(ConfigError, match="run.K"):
        RunConfig(K=0)
    with pytest.raises(ConfigError):
        RunConfig("dpsgd")
    with pytest.raises(ConfigError):
        RunConfig("easgd", selection=SelectionPolicy("per-round-random", 0.5))
    with pytest.raises(ConfigError):
        RunConfig(init="ones")


def test_easgd_alpha_checked(scalar_pair):
    with pytest.raises(ConfigError):
        run(RunConfig("easgd", eta=0.1, alpha=0.0), scalar_pair)


def test_schedule_size_mismatch(scalar_pair):
    cfg = RunConfig("unified", schedule=MixingSchedule("uniform-J", 1, 3))
    with pytest.raises(ConfigError):
        run(cfg, scalar_pair)


def test_divergence_detected(scalar_pair):
    with pytest.raises(DivergenceError) as exc:
        run(RunConfig("fully-sync", eta=5.0, K=200), scalar_pair)
    assert exc.value.k < 200
    assert len(exc.value.trace) == exc.value.k


def test_initial_model_scaling():
    base = initial_model(4, "scaled", 1.0, 3)
    assert np.allclose(initial_model(4, "scaled", 1.3, 3), 1.3 * base)
    assert np.array_equal(initial_model(4, "zero"), np.zeros(4))


def test_trace_csv_round_trip(tmp_path, iid_quadratic):
    cfg = RunConfig("psasgd", eta=0.1, tau=2, K=5, selection=SelectionPolicy("per-round-random", 0.5, 0))
    tr = run(cfg, iid_quadratic)
    path = tmp_path / "t.csv"
    write_trace_csv(tr, path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    rows = read_trace_csv(path)
    assert [r["k"] for r in rows] == [1, 2, 3, 4, 5]
    assert rows[1]["aggregated"] and not rows[0]["aggregated"]
    assert rows[2]["selected"] == tr.records[2].selected
    assert rows[3]["loss"] == tr.records[3].loss
    write_summary_json(tr, cfg, tmp_path / "s.json")
    assert summary(tr, cfg)["iterations"] == 5
