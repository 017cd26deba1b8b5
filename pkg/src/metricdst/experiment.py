"""Experiment protocols: cross-validated bias benchmarks, single runs, grid search."""
from __future__ import annotations

import itertools
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import bias as biaslib
from .core import (Dataset, DataError, derive_seed, holdout_split, labeled_unlabeled_split,
                   stratified_kfold, undersample_to_balance)
from .datagen import (HypercubeSpec, MoonsSpec, generate_hypercube, generate_moons,
                      informative_count)
from .embedder import EmbeddingModel, TrainConfig, embed, train
from .io import ExperimentConfig, read_dataset
from .metrics import auprc, auroc, wilcoxon_signed_rank
from .pseudolabel import knn_confidences
from .selftrain import ModelConfig, SelfTrainConfig, run_self_training, selection_diversity

METHODS = ("supervised_nobias", "supervised_bias", "supervised_random", "metric_st",
           "metric_dst")
METRIC_FUNCS = {"auroc": auroc, "auprc": auprc}
# "labeled": one stratified carve from the labeled split, taken before bias
# selection and shared by all methods. "selection": carve from each method's
# own (possibly biased) training selection.
VALIDATION_SOURCES = ("labeled", "selection")


class MetricRecord(NamedTuple):
    experiment: str
    dataset: str
    method: str
    fold: int
    metric: str
    value: float
    seed: int


@dataclass
class FoldOutcome:
    fold: int
    records: list
    diagnostics: list
    diversity: dict
    split: dict


@dataclass
class ExperimentOutcome:
    records: list
    diagnostics: list
    diversity: dict
    splits: list


# -- config plumbing ------------------------------------------------------------

def dataset_name(cfg: ExperimentConfig) -> str:
    d = cfg.dataset
    if d.name:
        return d.name
    if d.path:
        return str(d.path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    if d.generator == "hypercube":
        f = d.n_informative or informative_count(d.n_features, d.informative_fraction)
        return f"hypercube{d.n_features}_{f}"
    return d.generator or "dataset"


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.dataset
    seed = cfg.seed if d.seed is None else d.seed
    if d.path and d.generator:
        raise DataError("dataset: give either path or generator, not both")
    if d.path:
        return read_dataset(d.path)
    if d.generator == "moons":
        return generate_moons(MoonsSpec(d.n_samples, d.noise, seed))
    if d.generator == "hypercube":
        f = d.n_informative or informative_count(d.n_features, d.informative_fraction)
        return generate_hypercube(HypercubeSpec(d.n_samples, d.n_features, f,
                                                d.clusters_per_class, d.hypercube_side,
                                                d.cluster_stddev, seed))
    raise DataError("dataset: need a path or generator in {'moons', 'hypercube'}")


def model_config(cfg: ExperimentConfig, seed: int) -> ModelConfig:
    m = cfg.model
    tc = TrainConfig(batch_size=m.batch_size, m_pos=m.m_pos, m_neg=m.m_neg,
                     learning_rate=m.learning_rate, max_epochs=m.max_epochs,
                     patience=m.patience, min_improvement=m.min_improvement, seed=seed)
    return ModelConfig(hidden_dim=m.hidden_dim, out_dim=m.out_dim, k=m.k,
                       retrain_fresh=m.retrain_fresh, train=tc)


def selftrain_config(cfg: ExperimentConfig, strategy: str, seed: int) -> SelfTrainConfig:
    s = cfg.selftrain
    return SelfTrainConfig(p=s.p, mu=s.mu, max_iterations=s.max_iterations,
                           patience=s.patience, strategy=strategy,
                           attempt_cap_multiplier=s.attempt_cap_multiplier, seed=seed)


def apply_bias(dataset: Dataset, candidates, cfg: ExperimentConfig, seed: int) -> list:
    b = cfg.bias
    if b.kind == "none":
        return sorted(int(i) for i in candidates)
    if b.kind == "delta":
        spec = biaslib.DeltaBiasSpec(b.delta_points, b.n_select, b.strength)
        return biaslib.delta_bias_select(dataset, candidates, spec, seed)
    if b.kind == "hierarchy":
        if b.n_select % 2:
            raise DataError("bias.n_select must be even (class-balanced)")
        spec = biaslib.HierarchyBiasSpec(b.n_select // 2, b.bias_ratio, b.linkage,
                                         b.standardize)
        return biaslib.hierarchy_bias_select(dataset, candidates, spec, seed)
    if b.kind == "random":
        return biaslib.random_select(candidates, dataset, b.n_select, seed)
    raise DataError(f"unknown bias kind {b.kind!r}")


# -- training helpers ------------------------------------------------------------

def fit_supervised(x, y, mcfg: ModelConfig) -> EmbeddingModel:
    init = EmbeddingModel.initialize(x.shape[1], mcfg.hidden_dim, mcfg.out_dim,
                                     seed=mcfg.train.seed)
    return train(init, x, y, mcfg.train, seed_key=("iter", 0)).model


def score(model: EmbeddingModel, ref_x, ref_y, test_x, k: int) -> np.ndarray:
    conf, _ = knn_confidences(embed(model, test_x), embed(model, ref_x), ref_y, k)
    return conf


def _metrics(conf, y_true, names):
    return {name: METRIC_FUNCS[name](conf, y_true) for name in names}


# -- benchmark protocol ----------------------------------------------------------

def _check_validation_source(source):
    if source not in VALIDATION_SOURCES:
        raise DataError(f"eval.validation_source must be one of {VALIDATION_SOURCES}")


def run_fold(dataset: Dataset, split, fold: int, cfg: ExperimentConfig) -> FoldOutcome:
    """All requested methods on one fold, sharing splits and carve-outs."""
    x = dataset.features
    y = dataset.require_labels()
    ev = cfg.eval
    fseed = derive_seed(cfg.seed, "fold", fold)
    lu = labeled_unlabeled_split(split.train, ev.labeled_fraction, dataset, fseed, split.test)
    labeled = np.asarray(lu.labeled)
    unlabeled = np.asarray(lu.unlabeled)
    test = np.asarray(split.test)
    if ev.validation_source == "labeled":
        pool, shared_val = holdout_split(labeled, ev.validation_fraction, y, fseed, "validation")
        pool = np.asarray(pool)
    else:
        pool = labeled
    biased = np.asarray(apply_bias(dataset, pool, cfg, fseed))
    selections = {"nobias": pool, "bias": biased}
    if "supervised_random" in ev.methods:
        selections["random"] = np.asarray(
            biaslib.random_select(pool, dataset, len(biased), fseed))
    if ev.validation_source == "labeled":
        carved = {name: (sel, shared_val) for name, sel in selections.items()}
    else:
        carved = {name: holdout_split(sel, ev.validation_fraction, y, fseed, name)
                  for name, sel in selections.items()}
    mcfg = model_config(cfg, fseed)
    name = dataset_name(cfg)
    records, diags, diversity = [], [], {}

    def emit(method, conf):
        for metric, value in _metrics(conf, y[test], ev.metrics).items():
            records.append(MetricRecord(cfg.experiment, name, method, fold, metric,
                                        float(value), cfg.seed))

    sup_models = {}
    for method, sel in (("supervised_nobias", "nobias"), ("supervised_bias", "bias"),
                        ("supervised_random", "random")):
        needed = method in ev.methods or (sel == "bias" and (
            "metric_st" in ev.methods or "metric_dst" in ev.methods))
        if not needed:
            continue
        fit_idx, _ = carved[sel]
        model = fit_supervised(x[fit_idx], y[fit_idx], mcfg)
        sup_models[sel] = model
        if method in ev.methods:
            emit(method, score(model, x[fit_idx], y[fit_idx], x[test], mcfg.k))

    fit_idx, val_idx = carved["bias"]
    for method, strategy in (("metric_st", "ST"), ("metric_dst", "DST")):
        if method not in ev.methods:
            continue
        res = run_self_training(
            x[fit_idx], y[fit_idx], x[unlabeled], x[val_idx], y[val_idx],
            model_config=mcfg, config=selftrain_config(cfg, strategy, fseed),
            pool_indices=unlabeled, initial_model=sup_models["bias"])
        emit(method, res.predict_confidence(x[test], mcfg.k))
        diversity[method] = selection_diversity(res.records)
        for rec in res.records:
            entry = {"experiment": cfg.experiment, "dataset": name, "method": method,
                     "fold": fold, "best_iteration": res.best_iteration,
                     "stop_reason": res.stop_reason}
            entry.update(asdict(rec))
            diags.append(entry)
    split_info = {"test": [int(i) for i in test], "labeled": [int(i) for i in labeled],
                  "unlabeled": [int(i) for i in unlabeled],
                  "biased": [int(i) for i in biased],
                  "validation": [int(i) for i in carved["bias"][1]]}
    return FoldOutcome(fold, records, diags, diversity, split_info)


def _fold_task(args):
    dataset, split, fold, cfg = args
    return run_fold(dataset, split, fold, cfg)


def run_benchmark_experiment(dataset: Dataset, cfg: ExperimentConfig, jobs: int = 1,
                             progress=None) -> ExperimentOutcome:
    """Stratified k-fold protocol; every method sees identical folds and splits."""
    for m in cfg.eval.methods:
        if m not in METHODS:
            raise DataError(f"unknown method {m!r}")
    for m in cfg.eval.metrics:
        if m not in METRIC_FUNCS:
            raise DataError(f"unknown metric {m!r}")
    _check_validation_source(cfg.eval.validation_source)
    splits = stratified_kfold(dataset, cfg.eval.n_folds, cfg.seed)
    tasks = [(dataset, s, f, cfg) for f, s in enumerate(splits)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_fold_task, tasks))
    else:
        outcomes = []
        for t in tasks:
            outcomes.append(_fold_task(t))
            if progress:
                progress(f"fold {t[2] + 1}/{len(tasks)} done")
    outcomes.sort(key=lambda o: o.fold)
    records = [r for o in outcomes for r in o.records]
    diags = [d for o in outcomes for d in o.diagnostics]
    diversity = {o.fold: o.diversity for o in outcomes}
    return ExperimentOutcome(records, diags, diversity, [o.split for o in outcomes])


def values_by_method(records, metric: str = "auroc") -> dict:
    out = {}
    for r in sorted(records, key=lambda r: (r.method, r.fold)):
        if r.metric == metric:
            out.setdefault(r.method, []).append(r.value)
    return out


def summarize(records, reference: str = "supervised_bias") -> dict:
    """Per-method medians and two-sided Wilcoxon p-values against ``reference``."""
    summary = {}
    for metric in sorted({r.metric for r in records}):
        vals = values_by_method(records, metric)
        per_method = {}
        for method, v in vals.items():
            entry = {"median": float(statistics.median(v)), "n": len(v), "values": v}
            if method != reference and reference in vals and len(vals[reference]) == len(v):
                try:
                    w = wilcoxon_signed_rank(v, vals[reference])
                    entry["wilcoxon_vs_" + reference] = {
                        "statistic": w.statistic, "pvalue": float(w.pvalue),
                        "method": w.method}
                except DataError as exc:
                    entry["wilcoxon_vs_" + reference] = {"pvalue": None, "note": str(exc)}
            per_method[method] = entry
        summary[metric] = per_method
    return summary


def format_report(summary: dict, reference: str = "supervised_bias") -> str:
    lines = []
    for metric, per_method in summary.items():
        lines.append(f"{metric}:")
        lines.append(f"  {'method':<20} {'median':>8} {'n':>4} {'p vs ' + reference:>24}")
        for method in sorted(per_method, key=lambda m: (METHODS + (m,)).index(m)):
            e = per_method[method]
            w = e.get("wilcoxon_vs_" + reference)
            p = "-" if not w or w.get("pvalue") is None else f"{w['pvalue']:.4g}"
            lines.append(f"  {method:<20} {e['median']:>8.4f} {e['n']:>4} {p:>24}")
    return "\n".join(lines)


# -- single split (holdout) protocol ----------------------------------------------

def run_single(dataset: Dataset, cfg: ExperimentConfig, method: str = "metric_dst",
               run: int = 0, return_result: bool = False):
    """One holdout run on the labeled rows; unlabeled file rows form the pool.

    A file without unlabeled rows uses the training rows left out of the
    selection as the pool (their labels are never read).

    The labeled rows are split into train/test (``eval.test_fraction``,
    stratified), optionally class-balanced by undersampling, biased per
    ``bias`` and carved for validation (``eval.validation_fraction``).
    """
    if method not in ("supervised", "metric_st", "metric_dst"):
        raise DataError("method must be supervised, metric_st or metric_dst")
    y = dataset.require_labels()
    x = dataset.features
    ev = cfg.eval
    rseed = derive_seed(cfg.seed, "run", run)
    labeled = dataset.labeled_indices()
    train_idx, test_idx = holdout_split(labeled, ev.test_fraction, y, rseed, "test")
    if ev.balance:
        train_idx = np.asarray(undersample_to_balance(dataset, train_idx, derive_seed(rseed, 1)))
        test_idx = np.asarray(undersample_to_balance(dataset, test_idx, derive_seed(rseed, 2)))
    _check_validation_source(ev.validation_source)
    if ev.validation_source == "labeled":
        train_idx, val_idx = holdout_split(train_idx, ev.validation_fraction, y, rseed,
                                           "validation")
        fit_idx = np.asarray(apply_bias(dataset, train_idx, cfg, rseed))
    else:
        sel = np.asarray(apply_bias(dataset, train_idx, cfg, rseed))
        fit_idx, val_idx = holdout_split(sel, ev.validation_fraction, y, rseed, "validation")
    fit_idx, val_idx = np.asarray(fit_idx), np.asarray(val_idx)
    pool = np.asarray(dataset.unlabeled_indices(), dtype=np.int64)
    if pool.size == 0:
        # fully labeled file: unselected training rows act as the unlabeled pool
        pool = np.setdiff1d(train_idx, np.concatenate([fit_idx, val_idx]))
    mcfg = model_config(cfg, rseed)
    base = fit_supervised(x[fit_idx], y[fit_idx], mcfg)
    if method == "supervised":
        conf = score(base, x[fit_idx], y[fit_idx], x[test_idx], mcfg.k)
        result = None
    else:
        strategy = "ST" if method == "metric_st" else "DST"
        result = run_self_training(x[fit_idx], y[fit_idx], x[pool], x[val_idx], y[val_idx],
                                   model_config=mcfg,
                                   config=selftrain_config(cfg, strategy, rseed),
                                   pool_indices=pool, initial_model=base)
        conf = result.predict_confidence(x[test_idx], mcfg.k)
    out = {"method": method, "run": run, "n_train": int(len(fit_idx)),
           "n_validation": int(len(val_idx)), "n_test": int(len(test_idx)),
           "n_pool": int(len(pool))}
    out.update(_metrics(conf, y[test_idx], ev.metrics))
    if return_result:
        return out, result
    return out


# -- grid search -----------------------------------------------------------------

def grid_cells(param_grid: dict) -> list:
    """Cartesian product in deterministic order (keys sorted, values as given)."""
    if not param_grid:
        raise DataError("param_grid is empty")
    keys = sorted(param_grid)
    for k in keys:
        if not list(param_grid[k]):
            raise DataError(f"param_grid[{k!r}] has no values")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(param_grid[k] for k in keys))]


def grid_search(param_grid: dict, objective, jobs: int = 1):
    """Cell minimising ``objective(cell)``; ties keep the earliest cell.

    With ``jobs > 1`` cells are evaluated in worker processes, so
    ``objective`` must be picklable. Returns ``(best_cell, [(cell, loss), ...])``.
    """
    cells = grid_cells(param_grid)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            losses = list(pool.map(objective, cells))
    else:
        losses = [objective(c) for c in cells]
    evaluated = [(c, float(v)) for c, v in zip(cells, losses)]
    best, best_loss = evaluated[0][0], np.inf
    for cell, loss in evaluated:
        if loss < best_loss:
            best, best_loss = cell, loss
    return best, evaluated


class SelfTrainObjective:
    """Grid objective over ``selftrain`` keys (e.g. mu, p).

    Runs :func:`run_single` with the cell merged into the config and returns
    the best validation loss reached by the self-training run.
    """

    def __init__(self, dataset: Dataset, cfg: ExperimentConfig, strategy: str = "DST",
                 run: int = 0):
        self.dataset, self.cfg, self.strategy, self.run = dataset, cfg, strategy, run

    def __call__(self, cell) -> float:
        from .io import merge_config

        c = merge_config(self.cfg, {"selftrain": dict(cell)})
        method = "metric_st" if self.strategy == "ST" else "metric_dst"
        _, res = run_single(self.dataset, c, method, self.run, return_result=True)
        losses = [res.initial_validation_loss] + [r.validation_loss for r in res.records]
        losses = [v for v in losses if v is not None]
        return min(losses) if losses else np.inf


def selftrain_validation_objective(dataset: Dataset, cfg: ExperimentConfig,
                                   strategy: str = "DST", run: int = 0):
    return SelfTrainObjective(dataset, cfg, strategy, run)


__all__ = [
    "METHODS", "MetricRecord", "ExperimentOutcome", "build_dataset", "run_fold",
    "run_benchmark_experiment", "summarize", "format_report", "run_single", "grid_cells",
    "grid_search", "SelfTrainObjective", "selftrain_validation_objective",
    "values_by_method",
]
