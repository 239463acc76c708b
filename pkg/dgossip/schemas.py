"""Experiment configuration: the validated tree every subcommand runs from."""

from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dgossip.data import DatasetConfig, PartitionConfig
from dgossip.localopt import OptimizerConfig, OptimizerMethod
from dgossip.model import ModelConfig
from dgossip.topology import TopologySpec
from dgossip.utils import ConfigError, apply_env, apply_overrides, get_module_logger, load_config

logger = get_module_logger()


class AlgorithmKind(str, Enum):
    OLED_SGD = "oled_sgd"
    OLED_SAM = "oled_sam"
    DFEDAVG = "dfedavg"
    DFEDAVGM = "dfedavgm"
    DFEDSAM = "dfedsam"
    DPSGD = "dpsgd"
    FEDAVG = "fedavg"
    FEDSAM = "fedsam"

    @property
    def is_central(self) -> bool:
        return self in (AlgorithmKind.FEDAVG, AlgorithmKind.FEDSAM)

    @property
    def is_oled(self) -> bool:
        return self in (AlgorithmKind.OLED_SGD, AlgorithmKind.OLED_SAM)

    @property
    def method(self) -> OptimizerMethod:
        return ALGORITHM_METHODS[self]


ALGORITHM_METHODS: Dict[AlgorithmKind, OptimizerMethod] = {
    AlgorithmKind.OLED_SGD: OptimizerMethod.SGD,
    AlgorithmKind.OLED_SAM: OptimizerMethod.SAM,
    AlgorithmKind.DFEDAVG: OptimizerMethod.SGD,
    AlgorithmKind.DFEDAVGM: OptimizerMethod.SGD_MOMENTUM,
    AlgorithmKind.DFEDSAM: OptimizerMethod.SAM,
    AlgorithmKind.DPSGD: OptimizerMethod.SGD,
    AlgorithmKind.FEDAVG: OptimizerMethod.SGD,
    AlgorithmKind.FEDSAM: OptimizerMethod.SAM,
}


class ExperimentConfig(BaseModel):
    algorithm: AlgorithmKind = Field(default=AlgorithmKind.OLED_SAM, description="Training algorithm")
    beta: float = Field(default=0.0, ge=0.0, description="Ole parameter (Oled kinds only)")
    clients: int = Field(default=100, ge=1, description="Number of clients m")
    rounds: int = Field(default=500, ge=0, description="Communication rounds T")
    local_steps: int = Field(default=5, ge=1, description="Local steps K per round")
    participation: float = Field(default=0.1, gt=0.0, le=1.0, description="Sampled fraction (central kinds)")
    seed: int = Field(default=0, ge=0, description="Experiment seed")
    eval_every: int = Field(default=1, ge=1, description="Evaluate metrics every n rounds")
    diagnostics: bool = Field(default=False, description="Record V1/V2 update energies")
    targets: List[float] = Field(default_factory=list, description="Accuracy targets for rounds-to-target")
    topology: Optional[TopologySpec] = Field(default=None, description="Communication graph (decentralized kinds)")
    model: ModelConfig = Field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="before")
    @classmethod
    def fill_topology(cls, data: Any) -> Any:
        """topology.m defaults to clients, topology.seed to seed; central kinds and m=1 drop it."""
        if not isinstance(data, dict):
            return data
        data = dict(data)
        algorithm = data.get("algorithm", AlgorithmKind.OLED_SAM)
        clients = data.get("clients", cls.model_fields["clients"].default)
        try:
            central = AlgorithmKind(algorithm).is_central
        except ValueError:
            return data
        topology = data.get("topology")
        if central or clients == 1:
            data["topology"] = None
        elif topology is None or isinstance(topology, dict):
            topology = dict(topology or {})
            topology.setdefault("m", clients)
            topology.setdefault("seed", data.get("seed", 0))
            data["topology"] = topology
        return data

    @model_validator(mode="after")
    def normalise(self) -> "ExperimentConfig":
        if self.beta >= 1.0:
            raise ValueError(f"beta must be < 1, got {self.beta}")
        if self.topology is not None and self.topology.m != self.clients:
            raise ValueError(f"topology.m={self.topology.m} disagrees with clients={self.clients}")

        if not self.algorithm.is_oled and self.beta != 0.0:
            logger.info(f"{self.algorithm.value}: beta forced to 0")
            self.beta = 0.0

        method = self.algorithm.method
        if self.optimizer.method is not None and self.optimizer.method != method:
            raise ValueError(
                f"optimizer.method={self.optimizer.method.value} conflicts with algorithm {self.algorithm.value}"
            )
        if self.optimizer.method is None:
            self.optimizer = self.optimizer.model_copy(update={"method": method})

        if self.algorithm == AlgorithmKind.DPSGD and self.local_steps != 1:
            logger.info("dpsgd: local_steps forced to 1")
            self.local_steps = 1
        return self

    @property
    def is_central(self) -> bool:
        return self.algorithm.is_central

    def echo(self) -> Dict[str, Any]:
        """JSON-ready dump that re-parses to an identical config."""
        return self.model_dump(mode="json", by_alias=True)


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{key}: {item['msg']}")
    return "; ".join(parts)


def parse_experiment(tree: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(tree)
    except ValidationError as e:
        raise ConfigError(6010, "Invalid experiment config", _describe(e)) from e


def load_experiment(
    path: str | Path, overrides: Iterable[str] = (), use_env: bool = True
) -> ExperimentConfig:
    """YAML file → environment → dotted overrides → validated config (an explicit ``--set seed`` wins)."""
    tree = load_config(path)
    if use_env:
        tree = apply_env(tree)
    return parse_experiment(apply_overrides(tree, overrides))
