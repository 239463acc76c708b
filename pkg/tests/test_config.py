import logging
from pathlib import Path

import pytest

from dgossip.schemas import AlgorithmKind, ExperimentConfig, load_experiment, parse_experiment
from dgossip.localopt import OptimizerMethod
from dgossip.utils import (
    ConfigError,
    DivergenceError,
    StorageError,
    apply_env,
    apply_overrides,
    flatten_keys,
    get_module_logger,
    load_config,
    parse_override,
    set_dotted,
)


def test_parse_override_values():
    assert parse_override("beta=0.2") == ("beta", 0.2)
    assert parse_override("topology.kind=ring") == ("topology.kind", "ring")
    assert parse_override("targets=[0.6, 0.7]") == ("targets", [0.6, 0.7])
    assert parse_override("optimizer.method=null") == ("optimizer.method", None)
    with pytest.raises(ConfigError):
        parse_override("beta")


def test_set_dotted_copies():
    tree = {"optimizer": {"eta0": 0.1}}
    updated = set_dotted(tree, "optimizer.lambda", 0.3)
    assert updated == {"optimizer": {"eta0": 0.1, "lambda": 0.3}}
    assert tree == {"optimizer": {"eta0": 0.1}}
    with pytest.raises(ConfigError):
        set_dotted({"beta": 0.1}, "beta.x", 1)


def test_apply_overrides_and_env(monkeypatch):
    tree = apply_overrides({"seed": 1}, ["seed=4", "model.kind=mlp"])
    assert tree == {"seed": 4, "model": {"kind": "mlp"}}
    monkeypatch.setenv("DGOSSIP_SEED", "9")
    assert apply_env(tree)["seed"] == 9
    monkeypatch.setenv("DGOSSIP_SEED", "nine")
    with pytest.raises(ConfigError):
        apply_env(tree)


def test_flatten_keys():
    assert flatten_keys({"a": 1, "b": {"c": 2}}) == ["a", "b", "b.c"]


def test_load_config(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("algorithm: dfedavg\nclients: 4\n")
    assert load_config(path) == {"algorithm": "dfedavg", "clients": 4}
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "list.yaml")
    with pytest.raises(StorageError):
        load_config(tmp_path / "absent.yaml")


def test_defaults_fill_topology():
    cfg = parse_experiment({"clients": 16, "seed": 3, "topology": {"kind": "ring"}})
    assert cfg.topology.m == 16 and cfg.topology.seed == 3
    assert cfg.algorithm == AlgorithmKind.OLED_SAM
    assert cfg.optimizer.method == OptimizerMethod.SAM


@pytest.mark.parametrize("beta", [1.0, 1.2])
def test_beta_must_be_below_one(beta):
    with pytest.raises(ConfigError) as exc:
        parse_experiment({"beta": beta, "clients": 4, "topology": {"kind": "ring"}})
    assert "beta must be < 1" in exc.value.detail


def test_non_oled_kinds_drop_beta():
    cfg = parse_experiment({"algorithm": "dfedavg", "beta": 0.5, "clients": 4, "topology": {"kind": "ring"}})
    assert cfg.beta == 0.0


def test_dpsgd_forces_single_step():
    cfg = parse_experiment({"algorithm": "dpsgd", "local_steps": 5, "clients": 4, "topology": {"kind": "ring"}})
    assert cfg.local_steps == 1


def test_central_kinds_drop_topology():
    cfg = parse_experiment({"algorithm": "fedsam", "clients": 10, "topology": {"kind": "ring"}})
    assert cfg.topology is None
    assert cfg.is_central


def test_conflicting_method():
    with pytest.raises(ConfigError, match="conflicts"):
        parse_experiment({"algorithm": "dfedavg", "clients": 4, "topology": {"kind": "ring"}, "optimizer": {"method": "sam"}})


def test_topology_size_must_match():
    with pytest.raises(ConfigError):
        parse_experiment({"clients": 8, "topology": {"kind": "ring", "m": 4}})


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_experiment({"clients": 4, "topology": {"kind": "ring"}, "optimiser": {}})
    assert "optimiser" in exc.value.detail


def test_echo_round_trip():
    cfg = parse_experiment(
        {"algorithm": "oled_sam", "beta": 0.9, "clients": 9, "topology": {"kind": "grid"}, "optimizer": {"lambda": 0.05}}
    )
    echoed = cfg.echo()
    assert echoed["optimizer"]["lambda"] == 0.05
    assert ExperimentConfig.model_validate(echoed) == cfg


def test_load_experiment(tmp_path, monkeypatch):
    path = tmp_path / "exp.yaml"
    path.write_text("algorithm: oled_sgd\nclients: 4\nbeta: 0.3\ntopology:\n  kind: ring\n")
    cfg = load_experiment(path, ["optimizer.lambda=0.2", "rounds=7"])
    assert cfg.rounds == 7 and cfg.optimizer.lam == 0.2
    monkeypatch.setenv("DGOSSIP_SEED", "11")
    assert load_experiment(path).seed == 11
    assert load_experiment(path, use_env=False).seed == 0


def test_shipped_config_is_valid():
    cfg = load_experiment(Path(__file__).resolve().parents[1] / "config.yaml", use_env=False)
    assert cfg.algorithm == AlgorithmKind.OLED_SAM
    assert cfg.topology.m == cfg.clients


def test_errors_carry_exit_codes():
    assert ConfigError(6000, "x").exit_code == 2
    assert StorageError(7000, "x").exit_code == 4
    error = DivergenceError(3002, "Non-finite loss or gradient", client=4)
    located = error.at_round(12)
    assert located.exit_code == 3
    assert (located.round, located.client) == (12, 4)
    assert str(located).startswith("[3002] Non-finite loss or gradient")


def test_module_logger_name():
    logger = get_module_logger()
    assert logger.name.startswith("dgossip.")
    assert not logger.propagate
    assert any(isinstance(h, logging.StreamHandler) for h in logger.handlers)


def test_explicit_seed_override_beats_environment(tmp_path, monkeypatch):
    path = tmp_path / "exp.yaml"
    path.write_text("clients: 4\nseed: 1\ntopology:\n  kind: ring\n")
    monkeypatch.setenv("DGOSSIP_SEED", "11")
    assert load_experiment(path).seed == 11
    assert load_experiment(path, ["seed=5"]).seed == 5
