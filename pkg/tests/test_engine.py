import numpy as np
import pytest
from numpy.testing import assert_allclose

from dgossip.engine import (
    ClientState,
    ExperimentRunner,
    ExperimentSetup,
    build_setup,
    gossip_mix,
    ole_init,
    run_experiment,
)
from dgossip.engine.base import BaseGraph
from dgossip.engine.graph import RoundGraph
from dgossip.engine.ops import client_rng, fixed_order_mean, sample_participants
from dgossip.localopt import OptState, local_train
from dgossip.metrics import records_frame
from dgossip.topology import TopologySchedule, TopologySpec, build_mixing, chebyshev_modified
from dgossip.utils import DGossipException, DivergenceError


def test_ole_init_examples():
    assert_allclose(ole_init(np.array([1.0, 2.0]), np.array([0.0, 2.0]), 0.25), [1.25, 2.0])
    x = np.array([1.0, -3.0])
    assert np.array_equal(ole_init(x, np.array([5.0, 5.0]), 0.0), x)
    assert np.array_equal(ole_init(x, x, 0.7), x)
    with pytest.raises(DGossipException):
        ole_init(np.zeros(2), np.zeros(3), 0.1)


def test_gossip_mix_examples():
    w = build_mixing(TopologySpec(kind="fully_connected", m=2))
    assert_allclose(gossip_mix(np.array([[2.0], [0.0]]), w), [[1.0], [1.0]])

    ring = build_mixing(TopologySpec(kind="ring", m=5))
    same = np.tile([3.0, -1.0], (5, 1))
    assert_allclose(gossip_mix(same, ring), same, atol=1e-15)

    rng = np.random.default_rng(0)
    z = rng.standard_normal((5, 3))
    assert_allclose(gossip_mix(z, ring).mean(axis=0), z.mean(axis=0), atol=1e-12)
    with pytest.raises(DGossipException):
        gossip_mix(np.zeros((4, 3)), ring)


def test_fixed_order_mean():
    rows = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 9.0]])
    assert_allclose(fixed_order_mean(rows), [3.0, 5.0])


def test_sample_participants():
    picked = sample_participants(seed=1, round_index=3, m=10, fraction=0.25)
    assert len(picked) == 3
    assert picked == sorted(set(picked))
    assert picked == sample_participants(seed=1, round_index=3, m=10, fraction=0.25)
    assert sample_participants(seed=1, round_index=0, m=10, fraction=1.0) == list(range(10))
    assert len(sample_participants(seed=1, round_index=0, m=100, fraction=0.1)) == 10


def test_oled_with_zero_beta_matches_dfedavg(logistic_config):
    oled = run_experiment(logistic_config(algorithm="oled_sgd", beta=0.0, rounds=50))
    dfedavg = run_experiment(logistic_config(algorithm="dfedavg", rounds=50))
    assert records_frame(oled.records).equals(records_frame(dfedavg.records))
    for a, b in zip(oled.clients, dfedavg.clients):
        assert np.array_equal(a.x_mixed, b.x_mixed)


def test_runs_are_deterministic(logistic_config):
    cfg = logistic_config(algorithm="oled_sam")
    first, second = run_experiment(cfg), run_experiment(cfg)
    assert records_frame(first.records).equals(records_frame(second.records))


def test_worker_count_does_not_change_results(logistic_config):
    cfg = logistic_config(algorithm="dfedsam", rounds=10)
    serial = run_experiment(cfg, workers=1)
    threaded = run_experiment(cfg, workers=4)
    assert records_frame(serial.records).equals(records_frame(threaded.records))
    for a, b in zip(serial.clients, threaded.clients):
        assert np.array_equal(a.x_mixed, b.x_mixed)


def test_ole_start_is_modified_gossip(quadratic_config):
    cfg = quadratic_config(beta=0.3)
    runner = ExperimentRunner(build_setup(cfg))
    w = runner.mixing_at(0)
    first = runner.run_round(runner.initial_states(), 0, w)
    second = runner.run_round(first.clients, 1, w)
    expected = chebyshev_modified(w, 0.3).w @ first.locals
    assert_allclose(second.starts, expected, rtol=0, atol=1e-10)


def test_ole_start_matches_modified_matrix_on_random_rounds():
    rng = np.random.default_rng(11)
    for trial in range(50):
        w = build_mixing(TopologySpec(kind="random_k", m=8, k=2, seed=trial))
        beta = float(rng.uniform(0.0, 0.9))
        z = rng.standard_normal((8, 4))
        x = gossip_mix(z, w)
        starts = np.stack([ole_init(x[i], z[i], beta) for i in range(8)])
        assert_allclose(starts, gossip_mix(z, chebyshev_modified(w, beta)), rtol=0, atol=1e-10)


def test_average_is_preserved(quadratic_config):
    cfg = quadratic_config(beta=0.2, rounds=100)
    runner = ExperimentRunner(build_setup(cfg))
    states = runner.initial_states()
    for t in range(cfg.rounds):
        before = np.stack([s.x_mixed for s in states]).mean(axis=0)
        outcome = runner.run_round(states, t, runner.mixing_at(t))
        if t > 0:
            assert_allclose(outcome.starts.mean(axis=0), before, rtol=0, atol=1e-10)
        after = np.stack([s.x_mixed for s in outcome.clients]).mean(axis=0)
        assert_allclose(after, outcome.locals.mean(axis=0), rtol=0, atol=1e-12)
        states = outcome.clients


def test_time_varying_topology_runs(quadratic_config):
    cfg = quadratic_config(topology={"kind": "random_k", "k": 2})
    runner = ExperimentRunner(build_setup(cfg))
    assert runner.mixing_at(0).m == 8
    assert np.array_equal(runner.mixing_at(3).w, build_mixing(cfg.topology, 3).w)
    result = runner.run()
    assert len(result.records) == cfg.rounds
    assert all(np.isfinite(r.consensus) for r in result.records)


def test_single_client_is_local_training(quadratic_config):
    cfg = quadratic_config(algorithm="dfedavg", clients=1, rounds=1)
    assert cfg.topology is None
    setup = build_setup(cfg)
    runner = ExperimentRunner(setup)
    outcome = runner.run_round(runner.initial_states(), 0, runner.mixing_at(0))
    expected = local_train(
        setup.spec, setup.x0, setup.shards[0], cfg.local_steps, cfg.optimizer, 0.05, client_rng(cfg.seed, 0, 0)
    )
    assert np.array_equal(outcome.clients[0].x_mixed, expected.x)
    assert outcome.record.consensus == 0.0


def test_update_energies_single_step(identity_quadratic, placeholder_shard, quadratic_config):
    cfg = quadratic_config(
        algorithm="dfedavg", clients=1, rounds=1, local_steps=1, diagnostics=True,
        model={"kind": "quadratic", "dim": 1}, optimizer={"eta0": 0.1, "decay": 1.0},
    )
    setup = ExperimentSetup(cfg, identity_quadratic(1), [placeholder_shard()], np.array([1.0]), TopologySchedule(None))
    result = ExperimentRunner(setup).run()
    record = result.records[0]
    assert record.v1 == 0.0
    assert record.v2 == pytest.approx(0.01, abs=1e-15)


def test_central_round(quadratic_config):
    cfg = quadratic_config(algorithm="fedavg", participation=0.25)
    runner = ExperimentRunner(build_setup(cfg))
    outcome = runner.run_round(runner.initial_states(), 0, runner.mixing_at(0))
    assert runner.mixing_at(0) is None
    assert len(outcome.participants) == 2
    assert outcome.participants == sorted(outcome.participants)
    models = np.stack([c.x_mixed for c in outcome.clients])
    assert np.all(models == models[0])
    assert_allclose(models[0], outcome.locals.mean(axis=0), atol=1e-15)
    assert outcome.record.consensus == 0.0
    for c in outcome.clients:
        if c.shard_id in outcome.participants:
            slot = outcome.participants.index(c.shard_id)
            assert np.array_equal(c.z_prev, outcome.locals[slot])


def test_zero_rounds(quadratic_config):
    result = run_experiment(quadratic_config(rounds=0))
    assert result.records == []
    assert result.summary["final"] is None
    assert result.summary["best_acc"] == result.summary["initial"]["test_acc"]


def test_eval_every(quadratic_config):
    result = run_experiment(quadratic_config(rounds=10, eval_every=4))
    assert [r.t for r in result.records] == [0, 4, 8, 9]


def test_divergence_reports_round(quadratic_config):
    with pytest.raises(DivergenceError) as exc:
        run_experiment(quadratic_config(rounds=300, optimizer={"eta0": 10.0, "decay": 1.0}))
    assert exc.value.round is not None
    assert exc.value.client is not None


def test_rejects_wrong_client_count(quadratic_config):
    runner = ExperimentRunner(build_setup(quadratic_config()))
    states = runner.initial_states()[:-1]
    with pytest.raises(DGossipException):
        runner.run_round(states, 0, runner.mixing_at(0))


def test_initial_states_share_x0(logistic_config):
    setup = build_setup(logistic_config())
    states = ExperimentRunner(setup).initial_states()
    assert all(isinstance(s, ClientState) and np.array_equal(s.x_mixed, setup.x0) for s in states)
    assert all(s.opt_state == OptState() for s in states)


def test_round_graph_contract(quadratic_config):
    assert BaseGraph.__abstractmethods__ == frozenset({"_build_graph"})
    compiled = RoundGraph({"setup": build_setup(quadratic_config()), "workers": 1}).get_compiled_graph()
    assert compiled.checkpointer is None
    assert {"input_node", "ole_init_node", "participant_node", "local_train_node", "gossip_node",
            "aggregate_node", "output_node"} <= set(compiled.nodes)
