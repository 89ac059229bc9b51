"""The self-training loop: warm-up, then rounds of per-model selection,
error-aware gating and fine-tuning until no model updates."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .augment import AugmentConfig, Augmentor
from .core import Dataset, EnsembleState, Split
from .errors import InvalidParams, InvalidState, NoConsensus
from .metrics import OracleView, distribution_stats, evaluate, peer_accuracy_on, pseudo_label_accuracy
from .selector import (
    BUDGET_MODES,
    VOTE_MODES,
    bootstrap_count,
    budget,
    inter_consistency,
    intersect,
    intra_from_predictions,
    lower_bound_ok,
    measure_error,
    ratio_power,
    subsample,
)

log = logging.getLogger(__name__)

ROUND_MODES = ("sequential", "snapshot")


@dataclass
class RunConfig:
    K: int = 3
    alpha: float = 1.0
    warmup_epochs: int = 20
    selftrain_epochs: int = 5
    learning_rate: float = 0.1
    max_rounds: int = 50
    round_mode: str = "sequential"
    vote_mode: str = "paper"
    budget_mode: str = "theorem"
    stratified: bool = False
    error_floor: float | None = None  # None: 1 / (2 |D_L|)
    count_no_consensus: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.K < 3:
            raise InvalidParams(f"K must be >= 3, got {self.K}")
        if self.alpha <= 0:
            raise InvalidParams("alpha must be positive")
        if self.warmup_epochs < 0 or self.selftrain_epochs < 0 or self.max_rounds < 0:
            raise InvalidParams("epoch and round counts must be non-negative")
        if self.learning_rate <= 0:
            raise InvalidParams("learning_rate must be positive")
        if self.round_mode not in ROUND_MODES:
            raise InvalidParams(f"round_mode must be one of {ROUND_MODES}")
        if self.vote_mode not in VOTE_MODES:
            raise InvalidParams(f"vote_mode must be one of {VOTE_MODES}")
        if self.budget_mode not in BUDGET_MODES:
            raise InvalidParams(f"budget_mode must be one of {BUDGET_MODES}")
        if self.error_floor is not None and not 0 < self.error_floor < 1:
            raise InvalidParams("error_floor must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidParams(f"unknown run options {sorted(unknown)}")
        return cls(**d)


@dataclass
class ModelRound:
    """What happened to one ensemble member in one round.

    ``status`` is one of no_consensus, no_improvement, gate_failed,
    too_few, updated. Oracle-derived fields are None without an oracle view.
    """

    model: int
    status: str
    prev_error: float
    prev_count: int
    measured_error: float | None = None
    consensus_count: int | None = None
    floor_applied: bool | None = None
    effective_prev_count: int | None = None
    bootstrapped: bool = False
    gate: bool = False
    budget: int | None = None
    n_inter: int | None = None
    n_intra: int | None = None
    n_pl: int | None = None
    n_final: int | None = None
    inter_class_counts: list[int] | None = None
    pl_class_counts: list[int] | None = None
    final_class_counts: list[int] | None = None
    inter_accuracy: float | None = None
    pl_accuracy: float | None = None
    peer_accuracy: float | None = None
    test_accuracy: float | None = None

    @property
    def updated(self) -> bool:
        return self.status == "updated"


@dataclass
class RoundRecord:
    round: int
    models: list[ModelRound] = field(default_factory=list)
    overall_accuracy: float | None = None
    base_accuracy: float | None = None
    novel_accuracy: float | None = None
    harmonic_mean: float | None = None

    @property
    def any_updated(self) -> bool:
        return any(m.updated for m in self.models)

    def to_rows(self) -> list[dict]:
        """One flat record per model, round-level fields repeated."""
        head = {
            "round": self.round,
            "ensemble_overall_accuracy": self.overall_accuracy,
            "ensemble_base_accuracy": self.base_accuracy,
            "ensemble_novel_accuracy": self.novel_accuracy,
            "ensemble_harmonic_mean": self.harmonic_mean,
        }
        return [{**head, **asdict(m), "updated": m.updated} for m in self.models]


def default_augmentor(dataset: Dataset, seed: int) -> Augmentor:
    feats = np.concatenate([dataset.labeled.features, dataset.unlabeled.features])
    return Augmentor(AugmentConfig.from_data(feats, seed=seed))


def warmup(state: EnsembleState, dataset: Dataset, cfg: RunConfig) -> EnsembleState:
    """Fine-tune every learner on labeled data only, then reset bookkeeping."""
    for learner in state.learners:
        if cfg.warmup_epochs > 0:
            learner.fine_tune(dataset.labeled, cfg.warmup_epochs, cfg.learning_rate)
    state.reset_bookkeeping()
    return state


class _Predictions:
    """Per-model predictions on labeled data and the three unlabeled views."""

    def __init__(self, dataset: Dataset, augmentor: Augmentor, round: int):
        self.labeled_split = dataset.labeled
        self.views = {k: augmentor.view(dataset.unlabeled, k, round) for k in ("orig", "weak", "strong")}
        self.round = round

    def of(self, learner) -> dict[str, np.ndarray]:
        out = {"labeled": learner.predict_batch(self.labeled_split)}
        for kind, batch in self.views.items():
            out[kind] = learner.predict_batch(batch, view=kind, round=self.round)
        return out


def run_round(
    state: EnsembleState,
    dataset: Dataset,
    cfg: RunConfig,
    augmentor: Augmentor,
    oracle: OracleView | None = None,
) -> RoundRecord:
    """One pass over the K models (one iteration of the outer loop)."""
    state.round += 1
    t = state.round
    K, C = state.K, dataset.num_classes
    unl = dataset.unlabeled
    labeled_ids = set(dataset.labeled.ids.tolist())
    cache = _Predictions(dataset, augmentor, t)
    preds = [cache.of(m) for m in state.learners]
    record = RoundRecord(t)

    for j in range(K):
        state.update_flags[j] = False
        peers = [k for k in range(K) if k != j]
        rec = ModelRound(j, "no_improvement", state.prev_error[j], state.prev_count[j])
        record.models.append(rec)
        try:
            est = measure_error(
                dataset.labeled,
                np.stack([preds[k]["labeled"] for k in peers]),
                cfg.error_floor,
                mode=cfg.vote_mode,
                count_no_consensus=cfg.count_no_consensus,
                num_classes=C,
            )
        except NoConsensus:
            rec.status = "no_consensus"
            continue
        e_hat, e_prev = est.error_rate, state.prev_error[j]
        rec.measured_error, rec.consensus_count, rec.floor_applied = e_hat, est.consensus_count, est.floor_applied
        if not e_hat < e_prev:
            continue

        orig = np.stack([preds[k]["orig"] for k in peers])
        inter = inter_consistency(unl.ids, orig, K, cfg.vote_mode, C)
        intra = intra_from_predictions(
            unl.ids, orig, np.stack([preds[k]["weak"] for k in peers]), np.stack([preds[k]["strong"] for k in peers])
        )
        pl = intersect(inter, intra)
        rec.n_inter, rec.n_intra, rec.n_pl = len(inter), len(intra), len(pl)
        rec.inter_class_counts = list(distribution_stats(inter, C).class_counts)
        rec.pl_class_counts = list(distribution_stats(pl, C).class_counts)

        L_prev = state.prev_count[j]
        if L_prev == 0:
            # zero never satisfies the lower bound; start from its smallest valid value
            L_prev = bootstrap_count(e_prev, e_hat, t, cfg.alpha)
            rec.bootstrapped = True
        rec.effective_prev_count = L_prev
        rec.gate = lower_bound_ok(e_prev, e_hat, t, cfg.alpha, L_prev)
        if not rec.gate:
            rec.status = "gate_failed"
            continue
        rec.budget = budget(e_prev, e_hat, t, cfg.alpha, L_prev, cfg.budget_mode)
        n = min(rec.budget, len(pl))
        if n <= L_prev:
            rec.status = "too_few"
            continue

        final = subsample(pl, n, seed=(cfg.seed, j, t), stratified=cfg.stratified)
        if labeled_ids.intersection(final.entries):
            raise InvalidState("pseudo-labeled set contains labeled examples")
        train = Split.concat([dataset.labeled, final.as_split(unl)])
        state.learners[j].fine_tune(train, cfg.selftrain_epochs, cfg.learning_rate)
        state.prev_error[j] = e_hat
        state.prev_count[j] = len(final)
        state.update_flags[j] = True
        rec.status = "updated"
        rec.n_final = len(final)
        rec.final_class_counts = list(distribution_stats(final, C).class_counts)
        if oracle is not None:
            rec.inter_accuracy = pseudo_label_accuracy(inter, oracle)
            rec.pl_accuracy = pseudo_label_accuracy(final, oracle)
            rec.peer_accuracy = peer_accuracy_on(final, orig, unl.ids, oracle)
        if cfg.round_mode == "sequential":
            preds[j] = cache.of(state.learners[j])

    if len(dataset.test):
        for j, learner in enumerate(state.learners):
            record.models[j].test_accuracy = evaluate(learner, dataset.test, dataset.base_classes, C).overall_accuracy
        ens = evaluate(list(state.learners), dataset.test, dataset.base_classes, C)
        record.overall_accuracy = ens.overall_accuracy
        record.base_accuracy = ens.base_accuracy
        record.novel_accuracy = ens.novel_accuracy
        record.harmonic_mean = ens.harmonic_mean
    log.debug("round %d: %s", t, [m.status for m in record.models])
    return record


def run(
    state: EnsembleState,
    dataset: Dataset,
    cfg: RunConfig,
    augmentor: Augmentor | None = None,
    oracle: OracleView | None = None,
) -> list[RoundRecord]:
    """Repeat rounds until one passes with no update, or ``max_rounds``."""
    if state.K != cfg.K:
        raise InvalidParams(f"config expects K={cfg.K}, ensemble has {state.K}")
    augmentor = augmentor or default_augmentor(dataset, cfg.seed)
    history: list[RoundRecord] = []
    while state.round < cfg.max_rounds:
        rec = run_round(state, dataset, cfg, augmentor, oracle)
        history.append(rec)
        if not rec.any_updated:
            break
    return history


def check_invariants(history: list[RoundRecord], cfg: RunConfig) -> list[str]:
    """Violations of the per-model bookkeeping invariants in a run history."""
    problems = []
    K = len(history[0].models) if history else 0
    for j in range(K):
        last_e, last_n = None, None
        for rec in history:
            m = rec.models[j]
            if not m.updated:
                continue
            where = f"model {j} round {rec.round}"
            if last_e is not None and not m.measured_error < last_e:
                problems.append(f"{where}: accepted error {m.measured_error} not below {last_e}")
            if last_n is not None and not m.n_final > last_n:
                problems.append(f"{where}: count {m.n_final} not above {last_n}")
            if m.n_final > m.budget or m.n_final > m.n_pl:
                problems.append(f"{where}: {m.n_final} pseudo-labels exceed budget {m.budget} or pool {m.n_pl}")
            if m.n_final <= m.effective_prev_count:
                problems.append(f"{where}: count {m.n_final} does not exceed {m.effective_prev_count}")
            if cfg.budget_mode == "theorem":
                cap = ratio_power(m.prev_error, m.measured_error, rec.round, cfg.alpha) * m.effective_prev_count
                if not m.n_final < cap:
                    problems.append(f"{where}: count {m.n_final} breaks the upper bound {float(cap)}")
            last_e, last_n = m.measured_error, m.n_final
    return problems
