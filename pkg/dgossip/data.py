"""Labeled datasets and their partition across clients (IID, Dirichlet, Pathological)."""

import io
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dgossip.utils import ConfigError, StorageError, get_module_logger

logger = get_module_logger()

PATHOLOGICAL_MAX_RESAMPLES = 100_000


class PartitionScheme(str, Enum):
    IID = "iid"
    DIRICHLET = "dirichlet"
    PATHOLOGICAL = "pathological"


class DatasetSource(str, Enum):
    SYNTHETIC = "synthetic"
    CSV = "csv"


class DatasetConfig(BaseModel):
    source: DatasetSource = Field(default=DatasetSource.SYNTHETIC, description="Where samples come from")
    classes: int = Field(default=10, ge=2, description="Number of Gaussian clusters (synthetic)")
    dim: int = Field(default=10, ge=1, description="Feature dimension (synthetic)")
    per_class: int = Field(default=100, ge=1, description="Training samples per class (synthetic)")
    test_per_class: int = Field(default=50, ge=1, description="Held-out samples per class (synthetic)")
    cluster_spread: float = Field(default=1.0, ge=0.0, description="Isotropic std of each cluster")
    path: Optional[str] = Field(default=None, description="Training CSV (csv source)")
    test_path: Optional[str] = Field(default=None, description="Held-out CSV (csv source)")

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def check_source(self) -> "DatasetConfig":
        if self.source == DatasetSource.CSV and not self.path:
            raise ValueError("csv dataset requires path")
        return self


class PartitionConfig(BaseModel):
    scheme: PartitionScheme = Field(default=PartitionScheme.DIRICHLET, description="Partition rule")
    alpha: float = Field(default=0.3, gt=0.0, description="Dirichlet concentration")
    classes_per_client: int = Field(default=2, ge=1, description="Pathological classes per client")

    model_config = ConfigDict(extra="forbid")


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = "dataset"

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ConfigError(2001, "Features and labels disagree in shape", self.name)
        if self.labels.size == 0:
            raise ConfigError(2002, "empty dataset", self.name)
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ConfigError(2003, "Label out of range", f"{self.name} C={self.num_classes}")

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def with_sample(self, row: int, features: np.ndarray, label: int) -> "LabeledDataset":
        """Copy of the dataset whose row ``row`` is replaced."""
        new_features = self.features.copy()
        new_labels = self.labels.copy()
        new_features[row] = features
        new_labels[row] = label
        return LabeledDataset(new_features, new_labels, self.num_classes, f"{self.name}~{row}")


@dataclass(frozen=True)
class Shard:
    """One client's view of the training data."""

    client_id: int
    features: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])


@dataclass(frozen=True)
class PartitionPlan:
    assignments: Tuple[np.ndarray, ...]
    scheme: str
    seed: int

    @property
    def m(self) -> int:
        return len(self.assignments)

    def shards(self, ds: LabeledDataset) -> List[Shard]:
        return [
            Shard(i, ds.features[idx], ds.labels[idx]) for i, idx in enumerate(self.assignments)
        ]

    def label_histograms(self, ds: LabeledDataset) -> np.ndarray:
        return np.stack(
            [np.bincount(ds.labels[idx], minlength=ds.num_classes) for idx in self.assignments]
        )

    def heterogeneity(self, ds: LabeledDataset) -> float:
        """Mean total-variation distance of client label distributions to the global one."""
        hist = self.label_histograms(ds).astype(float)
        local = hist / hist.sum(axis=1, keepdims=True)
        overall = ds.class_counts() / ds.n
        return float(np.mean(0.5 * np.abs(local - overall).sum(axis=1)))

    def to_json(self) -> Dict[str, Any]:
        return {
            "scheme": self.scheme,
            "seed": self.seed,
            "clients": {str(i): idx.tolist() for i, idx in enumerate(self.assignments)},
        }

    def dump(self, path: Path) -> None:
        try:
            with open(path, "w") as f:
                json.dump(self.to_json(), f)
        except OSError as e:
            raise StorageError(7001, "Could not write partition plan", str(e)) from e


def generate_synthetic(
    C: int,
    d: int,
    per_class: int,
    cluster_spread: float,
    seed: int,
    sample_stream: int = 0,
    name: str = "synthetic",
) -> LabeledDataset:
    """
    Gaussian clusters around unit-norm random means scaled by 2.

    Class means depend only on ``seed``; ``sample_stream`` selects an independent
    sample draw around the same means (0 continues the mean generator, any other
    value gives a disjoint held-out draw).
    """
    if C < 2 or d < 1 or per_class < 1:
        raise ConfigError(2004, "Invalid synthetic dataset shape", f"C={C} d={d} per_class={per_class}")

    rng = np.random.default_rng(seed)
    means = rng.standard_normal((C, d))
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    means = 2.0 * means / np.where(norms > 0, norms, 1.0)

    sample_rng = rng if sample_stream == 0 else np.random.default_rng([seed, sample_stream])
    noise = sample_rng.standard_normal((C * per_class, d))
    labels = np.repeat(np.arange(C), per_class)
    features = means[labels] + cluster_spread * noise
    return LabeledDataset(features, labels, C, name)


def _field_count_mismatch(text: str) -> Optional[int]:
    """1-based line number of the first non-blank row whose field count differs from the header."""
    lines = [(n, line) for n, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not lines:
        return None
    width = lines[0][1].count(",") + 1
    for n, line in lines[1:]:
        if line.count(",") + 1 != width:
            return n
    return None


def load_csv(path: str | Path) -> LabeledDataset:
    """Read ``f1,...,fd,label`` rows (one header line)."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as e:
        raise StorageError(7002, "Dataset file not found", str(path)) from e

    # pandas pads short rows with empty strings, so widths are checked on the raw lines
    mismatch = _field_count_mismatch(text)
    if mismatch is not None:
        raise ConfigError(2006, "Inconsistent column count", f"{path}: row {mismatch}")
    try:
        frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise ConfigError(2005, "empty dataset", str(path)) from e
    except pd.errors.ParserError as e:
        raise ConfigError(2006, "Inconsistent column count", f"{path}: {e}") from e

    if frame.shape[0] == 0:
        raise ConfigError(2005, "empty dataset", str(path))
    if frame.shape[1] < 2:
        raise ConfigError(2006, "Inconsistent column count", f"{path}: need features and label")

    values = frame.apply(pd.to_numeric, errors="coerce")
    bad_rows = np.flatnonzero(values.isna().any(axis=1).to_numpy())
    if bad_rows.size:
        # +2: one header line, 1-based row numbers
        raise ConfigError(2007, "Could not parse row", f"{path}: row {int(bad_rows[0]) + 2}")

    raw_labels = values.iloc[:, -1].to_numpy(dtype=float)
    if np.any(raw_labels != np.floor(raw_labels)):
        row = int(np.flatnonzero(raw_labels != np.floor(raw_labels))[0])
        raise ConfigError(2008, "Label is not an integer", f"{path}: row {row + 2}")
    if np.any(raw_labels < 0):
        row = int(np.flatnonzero(raw_labels < 0)[0])
        raise ConfigError(2009, "Negative label", f"{path}: row {row + 2}")

    labels = raw_labels.astype(np.int64)
    features = values.iloc[:, :-1].to_numpy(dtype=float)
    return LabeledDataset(features, labels, int(labels.max()) + 1, path.stem)


def _check_clients(ds: LabeledDataset, m: int) -> None:
    if m < 1:
        raise ConfigError(2010, "Need at least one client", f"m={m}")
    if ds.n < m:
        raise ConfigError(2011, "Dataset smaller than client count", f"n={ds.n} m={m}")


def _plan(buckets: List[List[int]], scheme: str, seed: int) -> PartitionPlan:
    return PartitionPlan(
        assignments=tuple(np.sort(np.asarray(b, dtype=np.int64)) for b in buckets),
        scheme=scheme,
        seed=seed,
    )


def _largest_remainder(shares: np.ndarray, total: int) -> np.ndarray:
    raw = shares * total
    counts = np.floor(raw).astype(np.int64)
    remainder = total - int(counts.sum())
    if remainder > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def partition_iid(ds: LabeledDataset, m: int, seed: int) -> PartitionPlan:
    _check_clients(ds, m)
    rng = np.random.default_rng(seed)
    order = rng.permutation(ds.n)
    return _plan([order[i::m].tolist() for i in range(m)], "iid", seed)


def partition_dirichlet(ds: LabeledDataset, m: int, alpha: float, seed: int) -> PartitionPlan:
    if alpha <= 0:
        raise ConfigError(2012, "alpha must be positive", f"alpha={alpha}")
    _check_clients(ds, m)
    rng = np.random.default_rng(seed)
    buckets: List[List[int]] = [[] for _ in range(m)]

    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        shares = rng.dirichlet(np.full(m, alpha))
        if not np.all(np.isfinite(shares)) or shares.sum() <= 0:
            # every gamma draw underflowed; the limit is a single owner
            shares = np.zeros(m)
            shares[rng.integers(m)] = 1.0
        counts = _largest_remainder(shares, members.size)
        for client, chunk in enumerate(np.split(members, np.cumsum(counts)[:-1])):
            buckets[client].extend(chunk.tolist())

    # Steal one sample from the largest shard for every empty client
    for client in range(m):
        if not buckets[client]:
            donor = int(np.argmax([len(b) for b in buckets]))
            buckets[client].append(buckets[donor].pop())

    return _plan(buckets, f"dirichlet({alpha})", seed)


def partition_pathological(
    ds: LabeledDataset, m: int, classes_per_client: int, seed: int
) -> PartitionPlan:
    C = ds.num_classes
    if not 1 <= classes_per_client <= C:
        raise ConfigError(2013, "classes_per_client out of range", f"{classes_per_client} not in [1, {C}]")
    if m * classes_per_client < C:
        raise ConfigError(2014, "Pathological partition infeasible", f"m*classes_per_client={m * classes_per_client} < C={C}")
    _check_clients(ds, m)
    rng = np.random.default_rng(seed)

    for _ in range(PATHOLOGICAL_MAX_RESAMPLES):
        owned = [rng.choice(C, size=classes_per_client, replace=False) for _ in range(m)]
        if np.unique(np.concatenate(owned)).size == C:
            break
    else:
        raise ConfigError(2015, "Could not cover every class", f"after {PATHOLOGICAL_MAX_RESAMPLES} draws")

    buckets: List[List[int]] = [[] for _ in range(m)]
    for c in range(C):
        holders = [i for i in range(m) if c in owned[i]]
        members = rng.permutation(np.flatnonzero(ds.labels == c))
        if members.size < len(holders):
            raise ConfigError(2016, "Class too small for its holders", f"class {c}: {members.size} samples, {len(holders)} clients")
        for client, chunk in zip(holders, np.array_split(members, len(holders))):
            buckets[client].extend(chunk.tolist())

    return _plan(buckets, f"pathological({classes_per_client})", seed)


def partition(ds: LabeledDataset, m: int, cfg: PartitionConfig, seed: int) -> PartitionPlan:
    if cfg.scheme == PartitionScheme.IID:
        plan = partition_iid(ds, m, seed)
    elif cfg.scheme == PartitionScheme.DIRICHLET:
        plan = partition_dirichlet(ds, m, cfg.alpha, seed)
    else:
        plan = partition_pathological(ds, m, cfg.classes_per_client, seed)
    logger.info(f"partition {plan.scheme}: m={m} heterogeneity(TV)={plan.heterogeneity(ds):.4f}")
    return plan


def load_datasets(cfg: DatasetConfig, seed: int) -> Tuple[LabeledDataset, LabeledDataset]:
    """Training and held-out sets for a config."""
    if cfg.source == DatasetSource.CSV:
        train = load_csv(cfg.path)
        if not cfg.test_path:
            logger.warning("No test_path given: evaluating on the training set")
            return train, train
        test = load_csv(cfg.test_path)
        C = max(train.num_classes, test.num_classes)
        return (
            LabeledDataset(train.features, train.labels, C, train.name),
            LabeledDataset(test.features, test.labels, C, test.name),
        )

    train = generate_synthetic(cfg.classes, cfg.dim, cfg.per_class, cfg.cluster_spread, seed, name="train")
    test = generate_synthetic(
        cfg.classes, cfg.dim, cfg.test_per_class, cfg.cluster_spread, seed, sample_stream=1, name="test"
    )
    return train, test
