"""Seed-level drivers: one self-training run with baseline bookkeeping, the
desk-scale gain benchmark, and the noisy-oracle bias benchmark."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .augment import AugmentConfig, Augmentor
from .core import Dataset, EnsembleState, Split, carve_pretrain_samples, make_open_world_split
from .datasets import generate_dataset
from .learners import BaseLearner, LogisticLearner, NoisyOracleLearner
from .metrics import distribution_stats, error_ratio_track, evaluate, oracle_view
from .orchestrator import RoundRecord, RunConfig, check_invariants, run, warmup
from .selector import inter_consistency, intersect, intra_from_predictions


@dataclass(frozen=True)
class AugmentScales:
    """Augmentation strengths relative to the per-feature standard deviation."""

    weak_scale: float = 0.05
    strong_scale: float = 0.5
    strong_dropout_prob: float = 0.2

    def build(self, dataset: Dataset, seed: int) -> Augmentor:
        feats = np.concatenate([dataset.labeled.features, dataset.unlabeled.features])
        return Augmentor(
            AugmentConfig.from_data(feats, self.weak_scale, self.strong_scale, self.strong_dropout_prob, seed)
        )


@dataclass
class SeedResult:
    seed: int
    num_classes: int
    baseline: dict  # evaluation after warm-up, before any pseudo-label
    final: dict
    history: list[RoundRecord]
    invariant_violations: list[str]
    unlabeled_count: int

    @property
    def baseline_model_mean(self) -> float:
        return float(np.mean([m["overall_accuracy"] for m in self.baseline["models"]]))

    @property
    def final_model_mean(self) -> float:
        return float(np.mean([m["overall_accuracy"] for m in self.final["models"]]))

    def history_rows(self) -> list[dict]:
        return [{"seed": self.seed, **row} for rec in self.history for row in rec.to_rows()]

    def plot_data(self, alpha: float) -> dict:
        return plot_data(self.history, self.num_classes, alpha)

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "rounds": len(self.history),
            "unlabeled_count": self.unlabeled_count,
            "baseline": self.baseline,
            "final": self.final,
            "baseline_model_mean_accuracy": self.baseline_model_mean,
            "final_model_mean_accuracy": self.final_model_mean,
            "invariant_violations": self.invariant_violations,
        }


def _snapshot_eval(learners: Sequence[BaseLearner], dataset: Dataset) -> dict:
    C, base = dataset.num_classes, dataset.base_classes
    return {
        "ensemble": evaluate(list(learners), dataset.test, base, C).to_dict(),
        "models": [evaluate(m, dataset.test, base, C).to_dict() for m in learners],
    }


def execute(
    dataset: Dataset,
    learners: Sequence[BaseLearner],
    pretrain: Sequence[Split | None],
    cfg: RunConfig,
    scales: AugmentScales,
    seed: int,
) -> SeedResult:
    """Pretrain, warm up, evaluate the labeled-only baseline, then self-train."""
    for learner, sample in zip(learners, pretrain):
        if sample is not None:
            learner.pretrain(sample)
    state = EnsembleState(list(learners))
    warmup(state, dataset, cfg)
    baseline = _snapshot_eval(learners, dataset)
    history = run(state, dataset, cfg, scales.build(dataset, seed), oracle_view(dataset))
    return SeedResult(
        seed=seed,
        num_classes=dataset.num_classes,
        baseline=baseline,
        final=_snapshot_eval(learners, dataset),
        history=history,
        invariant_violations=check_invariants(history, cfg),
        unlabeled_count=len(dataset.unlabeled),
    )


def plot_data(history: list[RoundRecord], num_classes: int, alpha: float) -> dict:
    """Per-round pseudo-label accuracy, class shares and error-ratio pairs."""
    K = len(history[0].models) if history else 0

    def shares(counts):
        if counts is None:
            return None
        total = sum(counts)
        return [c / total for c in counts] if total else None

    rows = []
    for rec in history:
        for m in rec.models:
            rows.append({
                "round": rec.round,
                "model": m.model,
                "updated": m.updated,
                "pseudo_label_accuracy": m.pl_accuracy,
                "peer_accuracy": m.peer_accuracy,
                "inter_shares": shares(m.inter_class_counts),
                "intersection_shares": shares(m.pl_class_counts),
                "final_shares": shares(m.final_class_counts),
            })
    ratios = [
        {"model": j, **asdict(p)} for j in range(K) for p in error_ratio_track(history, j, alpha)
    ]
    return {"num_classes": num_classes, "rounds": rows, "error_ratio_pairs": ratios}


# desk-scale gain benchmark ------------------------------------------------


def _gain_run_config() -> RunConfig:
    return RunConfig(
        K=3, alpha=2.0, warmup_epochs=30, selftrain_epochs=50, learning_rate=0.1,
        round_mode="snapshot", seed=0,
    )


@dataclass(frozen=True)
class GainSetup:
    """Blobs with C=10, d=16, 4 labeled shots per class and 500 unlabeled.

    Each of the 60 training examples per class goes to pretraining (2 per
    learner), the labeled shots, or the unlabeled pool.
    """

    num_classes: int = 10
    dim: int = 16
    per_class: int = 60
    test_per_class: int = 200
    separation: float = 4.0
    shots_per_class: int = 4
    pretrain_per_class: int = 2
    l2: float = 0.1
    pretrain_epochs: int = 200
    pretrain_lr: float = 0.1
    scales: AugmentScales = AugmentScales(weak_scale=0.05, strong_scale=3.0, strong_dropout_prob=0.8)
    run: RunConfig = field(default_factory=_gain_run_config)

    def run_config(self, seed: int) -> RunConfig:
        return RunConfig.from_dict({**self.run.to_dict(), "seed": seed})


def gain_run(seed: int, setup: GainSetup | None = None) -> SeedResult:
    setup = setup or GainSetup()
    cfg = setup.run_config(seed)
    pool = generate_dataset("blobs", {
        "num_classes": setup.num_classes,
        "dim": setup.dim,
        "per_class": setup.per_class,
        "test_per_class": setup.test_per_class,
        "separation": setup.separation,
    }, seed)
    pool, samples = carve_pretrain_samples(pool, setup.pretrain_per_class, cfg.K, seed)
    dataset = make_open_world_split(pool, 1.0, setup.shots_per_class, seed)
    learners = [
        LogisticLearner(setup.num_classes, l2=setup.l2, pretrain_epochs=setup.pretrain_epochs,
                        pretrain_lr=setup.pretrain_lr, seed=seed * cfg.K + k)
        for k in range(cfg.K)
    ]
    return execute(dataset, learners, samples, cfg, setup.scales, seed)


def gain_payload(result: SeedResult, setup: GainSetup | None = None) -> dict:
    setup = setup or GainSetup()
    return {
        "summary": result.summary(),
        "history": result.history_rows(),
        "plot_data": result.plot_data(setup.run.alpha),
    }


# noisy-oracle bias benchmark ---------------------------------------------


@dataclass(frozen=True)
class BiasSetup:
    """Three latent-score oracles; oracle 0 over-predicts ``biased_class``.

    The biased oracle is nearly always right on its favored class and sends
    ``bias_mass`` of its errors on other classes there. Its favored-class
    predictions sit far from the decision threshold, so strong views rarely
    flip them.
    """

    num_classes: int = 10
    n_unlabeled: int = 20000
    accuracy: float = 0.5
    biased_class: int = 0
    biased_class_accuracy: float = 0.99
    bias_mass: float = 0.7
    weak_sigma: float = 0.05
    strong_sigma: float = 0.5
    round: int = 1
    vote_mode: str = "paper"


@dataclass
class BiasResult:
    seed: int
    raw_shares: list[list[float]]  # per oracle, class shares of its orig predictions
    raw_max_share: list[float]
    inter_max_share: list[float | None]  # per leave-one-out target
    intersection_max_share: list[float | None]
    inter_size: list[int]
    intersection_size: list[int]

    def to_dict(self) -> dict:
        return asdict(self)


def bias_oracles(truth: dict[int, int], setup: BiasSetup, seed: int) -> list[NoisyOracleLearner]:
    C, b = setup.num_classes, setup.biased_class
    confusion = np.ones((C, C))
    # mass on b for rows y != b, after the diagonal is removed
    confusion[:, b] = setup.bias_mass * (C - 2) / (1 - setup.bias_mass)
    per_class = np.full(C, setup.accuracy)
    per_class[b] = setup.biased_class_accuracy
    common = dict(weak_sigma=setup.weak_sigma, strong_sigma=setup.strong_sigma)
    return [
        NoisyOracleLearner(truth, C, per_class, confusion=confusion, seed=seed * 3, **common),
        NoisyOracleLearner(truth, C, setup.accuracy, seed=seed * 3 + 1, **common),
        NoisyOracleLearner(truth, C, setup.accuracy, seed=seed * 3 + 2, **common),
    ]


def bias_run(seed: int, setup: BiasSetup | None = None) -> BiasResult:
    """Class-distribution bias of D_Inter versus D_Inter ∩ D_Intra for each
    leave-one-out target, on one round of views."""
    setup = setup or BiasSetup()
    C, N = setup.num_classes, setup.n_unlabeled
    rng = np.random.default_rng(seed)
    ids = np.arange(N, dtype=np.int64)
    truth = dict(zip(ids.tolist(), rng.integers(0, C, N).tolist()))
    oracles = bias_oracles(truth, setup, seed)
    batch = Split(ids, np.zeros((N, 1)))
    preds = [
        {v: o.predict_batch(batch, view=v, round=setup.round) for v in ("orig", "weak", "strong")}
        for o in oracles
    ]
    raw = [distribution_stats(p["orig"], C) for p in preds]
    out = BiasResult(seed, [list(s.shares) for s in raw], [s.max_share for s in raw], [], [], [], [])
    K = len(oracles)
    for j in range(K):
        peers = [k for k in range(K) if k != j]
        orig = np.stack([preds[k]["orig"] for k in peers])
        inter = inter_consistency(ids, orig, K, setup.vote_mode, C)
        intra = intra_from_predictions(
            ids, orig, np.stack([preds[k]["weak"] for k in peers]), np.stack([preds[k]["strong"] for k in peers])
        )
        pl = intersect(inter, intra)
        out.inter_max_share.append(distribution_stats(inter, C).max_share)
        out.intersection_max_share.append(distribution_stats(pl, C).max_share)
        out.inter_size.append(len(inter))
        out.intersection_size.append(len(pl))
    return out
