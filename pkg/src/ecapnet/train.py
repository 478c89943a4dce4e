"""Training loop, cross-validation, metrics, and the transfer experiment."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .errors import ConfigError, EmptyEvalSet, NonFiniteLoss, TooFewSamples
from .graph import FeatureGraph, batch_graphs, build_graph
from .mesh import compute_attributes
from .model import EcapNet, ModelConfig
from .synth import SynthSample

ECAP_THRESHOLD = 4.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 16
    lr: float = 0.001
    weight_decay: float = 0.05  # synthetic-only profile; mixed profile uses 0
    dropout: float = 0.1
    seed: int = 0
    folds: int = 10

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.folds) <= 0 or self.lr < 0:
            raise ConfigError("epochs, batch_size, folds must be positive "
                              "and lr non-negative")


@dataclass
class EvalReport:
    per_sample_mae: list
    mae: float                      # vertex-weighted aggregate
    tp: int
    fp: int
    tn: int
    fn: int
    theta: float
    folds: list = field(default_factory=list)  # optional per-fold summaries

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tpr"] = self.tpr
        return d


def sample_to_graph(sample: SynthSample) -> tuple[FeatureGraph, np.ndarray]:
    g = build_graph(sample.mesh, compute_attributes(sample.mesh))
    return g, sample.ecap.ecap


def prepare(samples) -> list:
    """Precompute (graph, targets) pairs once so epochs reuse them."""
    return [sample_to_graph(s) for s in samples]


def train(model: EcapNet, samples, config: TrainConfig):
    """Train in place; returns the per-epoch mean-loss history."""
    if not samples:
        raise EmptyEvalSet("training set is empty")
    pairs = samples if isinstance(samples[0], tuple) else prepare(samples)
    rng = np.random.default_rng(config.seed)
    model.dropout_rng = np.random.default_rng(config.seed + 1)
    opt = Adam(model.parameters(), lr=config.lr,
               weight_decay=config.weight_decay)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(pairs))
        losses = []
        for bi, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            graphs = [pairs[i][0] for i in idx]
            targets = [pairs[i][1] for i in idx]
            batch = batch_graphs(graphs, targets)
            pred = model.forward(batch, training=True)
            loss = ad.l1_loss(pred, Tensor(batch.targets[:, None]))
            if not np.isfinite(loss.data):
                raise NonFiniteLoss(f"epoch {epoch}, batch {bi}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data) * batch.n_nodes)
        n_total = sum(pairs[i][1].size for i in order)
        history.append(sum(losses) / n_total)
    return history


def evaluate(model: EcapNet, samples, theta: float = ECAP_THRESHOLD) -> EvalReport:
    if not samples:
        raise EmptyEvalSet("evaluation set is empty")
    pairs = samples if isinstance(samples[0], tuple) else prepare(samples)
    per_sample, tp = [], 0
    fp = tn = fn = 0
    total_abs, total_n = 0.0, 0
    for g, target in pairs:
        pred = model.predict(g)[:, 0]
        err = np.abs(pred - target)
        per_sample.append(float(err.mean()))
        total_abs += float(err.sum())
        total_n += target.size
        p_pos = pred > theta
        t_pos = target > theta
        tp += int(np.count_nonzero(p_pos & t_pos))
        fp += int(np.count_nonzero(p_pos & ~t_pos))
        tn += int(np.count_nonzero(~p_pos & ~t_pos))
        fn += int(np.count_nonzero(~p_pos & t_pos))
    return EvalReport(per_sample_mae=per_sample, mae=total_abs / total_n,
                      tp=tp, fp=fp, tn=tn, fn=fn, theta=theta)


def fold_assignment(n: int, folds: int, seed: int, manifest_hash: str = ""):
    """Deterministic fold of each sample, a function of (seed, hash) only."""
    if n < folds:
        raise TooFewSamples(f"{n} samples for {folds} folds")
    digest = hashlib.sha256(f"{seed}:{manifest_hash}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    order = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    for f in range(folds):
        assignment[order[f::folds]] = f
    return assignment


def cross_validate(samples, config: TrainConfig,
                   model_config: ModelConfig | None = None,
                   manifest_hash: str = "", theta: float = ECAP_THRESHOLD):
    """Fresh model per fold; returns (per-fold reports, aggregate report)."""
    model_config = model_config or ModelConfig()
    pairs = samples if samples and isinstance(samples[0], tuple) \
        else prepare(samples)
    assignment = fold_assignment(len(pairs), config.folds, config.seed,
                                 manifest_hash)
    reports = []
    agg_abs = agg_n = 0
    tp = fp = tn = fn = 0
    per_sample = []
    for f in range(config.folds):
        test = [pairs[i] for i in range(len(pairs)) if assignment[i] == f]
        tr = [pairs[i] for i in range(len(pairs)) if assignment[i] != f]
        model = EcapNet(model_config, seed=config.seed + f)
        train(model, tr, config)
        rep = evaluate(model, test, theta=theta)
        reports.append(rep)
        n_f = sum(t.size for _, t in test)
        agg_abs += rep.mae * n_f
        agg_n += n_f
        tp, fp = tp + rep.tp, fp + rep.fp
        tn, fn = tn + rep.tn, fn + rep.fn
        per_sample += rep.per_sample_mae
    aggregate = EvalReport(
        per_sample_mae=per_sample, mae=agg_abs / agg_n,
        tp=tp, fp=fp, tn=tn, fn=fn, theta=theta,
        folds=[{"fold": f, "mae": r.mae, "tpr": r.tpr}
               for f, r in enumerate(reports)])
    return reports, aggregate


def constant_predictor_mae(train_pairs, test_pairs) -> float:
    """MAE of always predicting the mean of the training targets."""
    mean = np.concatenate([t for _, t in train_pairs]).mean()
    errs = np.concatenate([np.abs(t - mean) for _, t in test_pairs])
    return float(errs.mean())


def transfer_experiment(train_samples, test_in, test_out,
                        config: TrainConfig,
                        model_config: ModelConfig | None = None) -> dict:
    """Train on one regime, test in- and out-of-distribution."""
    model_config = model_config or ModelConfig()
    model = EcapNet(model_config, seed=config.seed)
    history = train(model, train_samples, config)
    rep_in = evaluate(model, test_in)
    rep_out = evaluate(model, test_out)
    ratio = rep_out.mae / rep_in.mae if rep_in.mae > 0 else float("inf")
    return {
        "schema": "transfer-v1",
        "mae_in": rep_in.mae,
        "mae_out": rep_out.mae,
        "ratio": ratio,
        "final_train_loss": history[-1],
        "report_in": rep_in.to_dict(),
        "report_out": rep_out.to_dict(),
    }


# -- metrics files ---------------------------------------------------------


def write_history_csv(history, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss\n")
        for e, loss in enumerate(history):
            fh.write(f"{e},{loss:.17g}\n")


def write_metrics_csv(reports, path) -> None:
    """One row per (fold, sample): fold,sample,mae,tp,fp,tn,fn."""
    with open(path, "w") as fh:
        fh.write("fold,sample,mae,tp,fp,tn,fn\n")
        for f, rep in enumerate(reports):
            for s, mae in enumerate(rep.per_sample_mae):
                fh.write(f"{f},{s},{mae:.17g},{rep.tp},{rep.fp},"
                         f"{rep.tn},{rep.fn}\n")


def write_summary_json(report: EvalReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
