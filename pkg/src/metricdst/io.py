"""Dataset CSV, experiment config JSON, results CSV and diagnostics JSON-lines."""
from __future__ import annotations

import csv
import dataclasses
import json
import os
import re
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Dataset, DataError

RESULT_COLUMNS = ("experiment", "dataset", "method", "fold", "metric", "value", "seed")
_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")


def fmt_float(x) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- datasets -----------------------------------------------------------------

def read_dataset(path) -> Dataset:
    """Parse a dataset CSV.

    Optional ``id`` and ``label`` columns are recognised by name; every
    other column is a real-valued feature. An empty label cell marks an
    unlabeled row (stored as label -1).
    """
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    id_col = header.index("id") if "id" in header else None
    label_col = header.index("label") if "label" in header else None
    feat_cols = [i for i, h in enumerate(header) if i not in (id_col, label_col)]
    feats, labels, ids = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            vals = [float(row[i]) for i in feat_cols]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad feature value ({exc})") from None
        if not all(np.isfinite(vals)):
            raise DataError(f"{path}:{lineno}: non-finite feature value")
        feats.append(vals)
        if label_col is not None:
            cell = row[label_col].strip()
            if cell == "":
                labels.append(-1)
            elif cell in ("0", "1"):
                labels.append(int(cell))
            else:
                raise DataError(f"{path}:{lineno}: non-binary label {cell!r}")
        if id_col is not None:
            ids.append(row[id_col].strip())
    x = np.asarray(feats, dtype=np.float64).reshape(len(feats), len(feat_cols))
    return Dataset(x, np.asarray(labels, dtype=np.int64) if label_col is not None else None,
                   tuple(ids) if id_col is not None else None)


def dataset_to_csv(dataset: Dataset) -> str:
    lines = []
    names = [f"x{j}" for j in range(dataset.n_features)]
    has_labels = dataset.labels is not None
    lines.append(",".join(["id"] + (["label"] if has_labels else []) + names))
    for i in range(dataset.n_samples):
        sid = dataset.ids[i]
        if not _ID_RE.match(sid):
            raise DataError(f"sample id {sid!r} must match [A-Za-z0-9_-]+")
        cells = [sid]
        if has_labels:
            lab = int(dataset.labels[i])
            cells.append("" if lab < 0 else str(lab))
        cells.extend(fmt_float(v) for v in dataset.features[i])
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_dataset(dataset: Dataset, path) -> None:
    atomic_write_text(path, dataset_to_csv(dataset))


def read_indices(path) -> list:
    """One-column index CSV with header ``index``."""
    with Path(path).open(encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "index":
        raise DataError(f"{path}: expected header 'index'")
    return [int(v) for v in lines[1:]]


def write_indices(indices, path) -> None:
    atomic_write_text(path, "index\n" + "".join(f"{int(i)}\n" for i in indices))


# -- config -------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetSection:
    name: Optional[str] = None
    path: Optional[str] = None
    generator: Optional[str] = None
    n_samples: int = 2000
    noise: float = 0.1
    n_features: int = 16
    n_informative: Optional[int] = None
    informative_fraction: float = 1.0
    clusters_per_class: int = 2
    hypercube_side: float = 3.0
    cluster_stddev: float = 1.0
    seed: Optional[int] = None


@dataclass(frozen=True)
class BiasSection:
    kind: str = "delta"
    n_select: int = 100
    delta_points: tuple = ((0.0, 0.0), (0.0, 0.0))
    strength: float = 2.0
    bias_ratio: float = 0.9
    linkage: str = "ward"
    standardize: bool = True


@dataclass(frozen=True)
class ModelSection:
    hidden_dim: int = 8
    out_dim: int = 2
    k: int = 5
    retrain_fresh: bool = False
    batch_size: int = 64
    m_pos: float = 0.25
    m_neg: float = 1.0
    learning_rate: float = 1e-3
    max_epochs: int = 100
    patience: int = 10
    min_improvement: float = 1e-6


@dataclass(frozen=True)
class SelfTrainSection:
    p: Optional[int] = None
    mu: float = 0.9
    max_iterations: int = 100
    patience: int = 5
    attempt_cap_multiplier: int = 50


@dataclass(frozen=True)
class EvalSection:
    n_folds: int = 10
    labeled_fraction: float = 0.3
    validation_fraction: float = 0.2
    validation_source: str = "labeled"
    test_fraction: float = 0.2
    balance: bool = False
    metrics: tuple = ("auroc",)
    methods: tuple = ("supervised_nobias", "supervised_bias", "supervised_random",
                      "metric_st", "metric_dst")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "experiment"
    seed: int = 0
    dataset: DatasetSection = field(default_factory=DatasetSection)
    bias: BiasSection = field(default_factory=BiasSection)
    model: ModelSection = field(default_factory=ModelSection)
    selftrain: SelfTrainSection = field(default_factory=SelfTrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _tupleize(v):
    if isinstance(v, list):
        return tuple(_tupleize(x) for x in v)
    return v


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise DataError(f"config section {where!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise DataError(f"unknown config key(s) in {where!r}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        sub = f.default_factory if f.default_factory is not dataclasses.MISSING else None
        if sub is not None and dataclasses.is_dataclass(sub):
            kwargs[name] = _build(sub, value, f"{where}.{name}" if where else name)
        else:
            kwargs[name] = _tupleize(value)
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "")


def merge_config(base: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Deep-merge ``overrides`` onto ``base`` and re-validate."""
    doc = base.to_dict()
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key].update(value)
        else:
            doc[key] = value
    return config_from_dict(doc)


def read_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)


def write_config(config: ExperimentConfig, path) -> None:
    atomic_write_text(path, json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


# -- results ------------------------------------------------------------------

def results_to_csv(records, config: ExperimentConfig | None = None) -> str:
    lines = []
    if config is not None:
        lines.append("# config: " + config.to_json())
    lines.append(",".join(RESULT_COLUMNS))
    for r in records:
        lines.append(",".join([r.experiment, r.dataset, r.method, str(r.fold), r.metric,
                               fmt_float(r.value), str(r.seed)]))
    return "\n".join(lines) + "\n"


def write_results(records, path, config: ExperimentConfig | None = None) -> None:
    atomic_write_text(path, results_to_csv(records, config))


def read_results(path):
    """Results CSV rows as a list of dicts (comment lines skipped)."""
    from .experiment import MetricRecord

    with Path(path).open(encoding="utf-8", newline="") as fh:
        body = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
        raise DataError(f"{path}: unexpected results header {reader.fieldnames}")
    return [MetricRecord(row["experiment"], row["dataset"], row["method"], int(row["fold"]),
                         row["metric"], float(row["value"]), int(row["seed"]))
            for row in reader]


def write_diagnostics(entries, path) -> None:
    """One JSON object per line; ``entries`` are dicts or dataclass instances."""
    lines = []
    for e in entries:
        doc = asdict(e) if dataclasses.is_dataclass(e) else dict(e)
        lines.append(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    atomic_write_text(path, "".join(ln + "\n" for ln in lines))


def read_diagnostics(path) -> list:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(ln) for ln in fh if ln.strip()]
