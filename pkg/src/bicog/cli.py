"""Command-line entry point.

    bicog run CONFIG [--seed S] [--out DIR]
    bicog pac --epsilon E --eta H --hypotheses F --delta D
    bicog lemma E_T E_PREV L_T L_PREV [--labeled L]
    bicog simulate --accuracy P [P ...] --classes C [--trials N]
    bicog gen GENERATOR [key=value ...] [--seed S] [--out FILE]

Exit codes: 0 success, 1 usage error, 2 data or configuration error.
The default output directory comes from ``BICOG_OUT_DIR`` (else ./bicog_out).
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import report
from .core import Dataset, carve_pretrain_samples, make_open_world_split, validate_dataset
from .datasets import GENERATORS, CsvSplitSpec, generate_dataset, load_csv
from .errors import BiCoGError, ConfigError, InvalidParams
from .experiments import AugmentScales, SeedResult, execute
from .learners import build_learner
from .orchestrator import RunConfig
from .theory import lemma1_holds, mc_vote_error, pac_sample_bound, sufficient_condition_holds

OUT_ENV = "BICOG_OUT_DIR"
DEFAULT_OUT = "bicog_out"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


# configuration --------------------------------------------------------------


@dataclass
class DatasetSpec:
    generator: str | None = None  # blobs when no csv_path is given
    params: dict = field(default_factory=dict)
    csv_path: str | None = None
    feature_columns: list[str] = field(default_factory=list)
    label_column: str | None = None
    split_column: str | None = None
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.generator is None and self.csv_path is None:
            self.generator = "blobs"


@dataclass
class SplitSpec:
    base_fraction: float = 1.0
    shots_per_class: int = 4
    pretrain_per_class: int = 0  # examples per class carved out for each learner's pretraining


@dataclass
class LearnerSpec:
    family: str = "logistic"
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    split: SplitSpec = field(default_factory=SplitSpec)
    learners: list[LearnerSpec] = field(default_factory=lambda: [LearnerSpec() for _ in range(3)])
    augment: AugmentScales = field(default_factory=AugmentScales)
    run: RunConfig = field(default_factory=RunConfig)
    output_dir: str | None = None
    seeds: list[int] = field(default_factory=lambda: [0])

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("seeds list must not be empty")
        if len(self.learners) != self.run.K:
            raise ConfigError(f"{len(self.learners)} learner slots for K={self.run.K}")
        d = self.dataset
        if (d.generator is None) == (d.csv_path is None):
            raise ConfigError("dataset needs exactly one of generator or csv_path")
        if d.generator is not None and d.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {d.generator!r}")
        if d.csv_path is not None and (not d.feature_columns or not d.label_column):
            raise ConfigError("csv datasets need feature_columns and label_column")
        if self.split.pretrain_per_class < 0:
            raise ConfigError("pretrain_per_class must be >= 0")
        if d.csv_path is not None and self.split.pretrain_per_class:
            raise ConfigError("pretrain_per_class applies to generated datasets only")

    def to_dict(self) -> dict:
        return {
            "dataset": asdict(self.dataset),
            "split": asdict(self.split),
            "learners": [asdict(s) for s in self.learners],
            "augment": asdict(self.augment),
            "run": self.run.to_dict(),
            "output_dir": self.output_dir,
            "seeds": list(self.seeds),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        known = {"dataset", "split", "learners", "augment", "run", "output_dir", "seeds"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        try:
            run = RunConfig.from_dict(raw.get("run") or {})
            learners = raw.get("learners", [{}] * run.K)
            if isinstance(learners, dict):  # one spec replicated K times
                count = learners.get("count", run.K)
                spec = {k: v for k, v in learners.items() if k != "count"}
                learners = [spec] * count
            cfg = cls(
                dataset=DatasetSpec(**(raw.get("dataset") or {})),
                split=SplitSpec(**(raw.get("split") or {})),
                learners=[LearnerSpec(**s) for s in learners],
                augment=AugmentScales(**(raw.get("augment") or {})),
                run=run,
                output_dir=raw.get("output_dir"),
                seeds=[int(s) for s in raw.get("seeds", [0])],
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config: {exc}") from None
        cfg.validate()
        return cfg

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> ExperimentConfig:
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        return cls.from_dict(raw or {})


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return ExperimentConfig.loads(text)


# running --------------------------------------------------------------------


def build_dataset(cfg: ExperimentConfig, seed: int) -> tuple[Dataset, dict | None]:
    d = cfg.dataset
    if d.csv_path is not None:
        spec = CsvSplitSpec(cfg.split.base_fraction, cfg.split.shots_per_class, d.test_fraction, seed)
        return load_csv(d.csv_path, d.feature_columns, d.label_column, d.split_column, spec)
    return generate_dataset(d.generator, d.params, seed), None


def run_seed(cfg: ExperimentConfig, seed: int) -> tuple[SeedResult, dict | None]:
    dataset, label_map = build_dataset(cfg, seed)
    K = cfg.run.K
    samples: list = [None] * K
    if cfg.dataset.csv_path is None:
        pool = dataset
        if cfg.split.pretrain_per_class > 0:
            pool, samples = carve_pretrain_samples(pool, cfg.split.pretrain_per_class, K, seed)
        dataset = make_open_world_split(pool, cfg.split.base_fraction, cfg.split.shots_per_class, seed)
    # without a carved sample, learners start from the labeled split
    samples = [s if s is not None else dataset.labeled for s in samples]
    problems = validate_dataset(dataset)
    if problems:
        raise InvalidParams("; ".join(problems))
    try:
        learners = [
            build_learner(s.family, dataset.num_classes, seed=seed * K + k, **s.params)
            for k, s in enumerate(cfg.learners)
        ]
    except TypeError as exc:
        raise ConfigError(f"bad learner parameters: {exc}") from None
    run_cfg = RunConfig.from_dict({**cfg.run.to_dict(), "seed": seed})
    return execute(dataset, learners, samples, run_cfg, cfg.augment, seed), label_map


def aggregate(results: Sequence[SeedResult]) -> dict:
    def stats(values):
        vals = [v for v in values if v is not None]
        if not vals:
            return {"mean": None, "std": None, "n": 0}
        return {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "n": len(vals)}

    return {
        "seeds": [r.seed for r in results],
        "final_overall_accuracy": stats([r.final["ensemble"]["overall_accuracy"] for r in results]),
        "final_harmonic_mean": stats([r.final["ensemble"]["harmonic_mean"] for r in results]),
        "final_model_mean_accuracy": stats([r.final_model_mean for r in results]),
        "baseline_overall_accuracy": stats([r.baseline["ensemble"]["overall_accuracy"] for r in results]),
        "baseline_harmonic_mean": stats([r.baseline["ensemble"]["harmonic_mean"] for r in results]),
        "baseline_model_mean_accuracy": stats([r.baseline_model_mean for r in results]),
        "rounds": stats([len(r.history) for r in results]),
        "invariant_violations": sum(len(r.invariant_violations) for r in results),
    }


def run_experiment(cfg: ExperimentConfig, out_dir: Path, timestamp: bool = True) -> list[SeedResult]:
    """Run every seed, then write all reports.

    Nothing is written until every seed has finished, so a failing run
    leaves no partial output behind.
    """
    outputs = [run_seed(cfg, seed) for seed in cfg.seeds]
    out_dir.mkdir(parents=True, exist_ok=True)
    for result, label_map in outputs:
        seed_dir = out_dir / f"seed_{result.seed}"
        seed_dir.mkdir(exist_ok=True)
        report.write_jsonl(seed_dir / "history.jsonl", result.history_rows())
        report.write_json(seed_dir / "plot_data.json", result.plot_data(cfg.run.alpha))
        summary = result.summary()
        if label_map is not None:
            summary["label_map"] = label_map
        report.write_json(seed_dir / "summary.json", summary)
    payload = {"config": cfg.to_dict(), **aggregate([r for r, _ in outputs])}
    if timestamp:
        payload["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    report.write_json(out_dir / "aggregate.json", payload)
    return [r for r, _ in outputs]


def default_out_dir(cfg_out: str | None = None) -> Path:
    return Path(cfg_out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


# calculators ----------------------------------------------------------------


def _emit(values: dict, fmt: str, stream) -> None:
    if fmt == "machine":
        stream.write(report.dumps(values) + "\n")
    else:
        stream.write("\n".join(f"{k}: {v}" for k, v in values.items()) + "\n")


def cmd_pac(args, stream) -> int:
    if not args.eta < 0.5 or args.eta < 0:
        raise UsageError("eta must lie in [0, 0.5)")
    if args.epsilon <= 0 or args.hypotheses < 1 or not 0 < args.delta < 1:
        raise UsageError("need epsilon > 0, hypotheses >= 1 and delta in (0, 1)")
    m = pac_sample_bound(args.epsilon, args.eta, args.hypotheses, args.delta)
    _emit({"epsilon": args.epsilon, "eta": args.eta, "hypotheses": args.hypotheses,
           "delta": args.delta, "m": m}, args.format, stream)
    return EXIT_OK


def cmd_lemma(args, stream) -> int:
    if args.e_prev <= 0 or args.l_t <= 0 or args.l_prev < 0 or not 0 <= args.e_t <= 1:
        raise UsageError("need 0 <= e_t <= 1, e_prev > 0, L_t > 0 and L_prev >= 0")
    out = {"e_t": args.e_t, "e_prev": args.e_prev, "L_t": args.l_t, "L_prev": args.l_prev,
           "holds": lemma1_holds(args.e_t, args.e_prev, args.l_t, args.l_prev)}
    if args.labeled is not None:
        cond = sufficient_condition_holds(args.e_t, args.e_prev, args.l_t, args.l_prev, args.labeled)
        out.update(sufficient=cond.holds, lhs=cond.lhs, rhs=cond.rhs)
    _emit(out, args.format, stream)
    return EXIT_OK


def cmd_simulate(args, stream) -> int:
    if any(not 0 <= p <= 1 for p in args.accuracy) or args.classes < 2 or args.trials < 1:
        raise UsageError("need accuracies in [0, 1], classes >= 2 and trials >= 1")
    est = mc_vote_error(args.accuracy, args.classes, args.trials, seed=args.seed, mode=args.vote_mode)
    _emit({"accuracy": list(args.accuracy), "classes": args.classes, "trials": args.trials,
           "seed": args.seed, "conditional_error": est.conditional_error if est.accepted else None,
           "acceptance_rate": est.acceptance_rate}, args.format, stream)
    return EXIT_OK


def _parse_params(pairs: Sequence[str]) -> dict:
    params: dict[str, Any] = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        params[key] = yaml.safe_load(value)
    return params


def dataset_csv(dataset: Dataset) -> str:
    """CSV text with feature columns f0.., a label column and a split column."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"f{i}" for i in range(dataset.dim)] + ["label", "split"])
    hidden = dataset._hidden_labels
    parts = [
        ("labeled", dataset.labeled, dataset.labeled.labels),
        ("unlabeled", dataset.unlabeled, hidden),
        ("test", dataset.test, dataset.test.labels),
    ]
    for role, split, labels in parts:
        for x, y in zip(split.features, labels if labels is not None else []):
            writer.writerow([report._float(float(v)) for v in x] + [int(y), role])
    return buf.getvalue()


def cmd_gen(args, stream) -> int:
    params = _parse_params(args.params)
    pool = generate_dataset(args.generator, params, args.seed)
    dataset = make_open_world_split(pool, args.base_fraction, args.shots, args.seed)
    text = dataset_csv(dataset)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        _emit({"generator": args.generator, "seed": args.seed, "rows": text.count("\n") - 1,
               "path": str(args.out)}, args.format, stream)
    else:
        stream.write(text)
    return EXIT_OK


def cmd_run(args, stream) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    out_dir = Path(args.out) if args.out else default_out_dir(cfg.output_dir)
    results = run_experiment(cfg, out_dir)
    agg = aggregate(results)
    _emit({"out": str(out_dir), "seeds": len(results),
           "final_overall_accuracy": agg["final_overall_accuracy"]["mean"],
           "baseline_overall_accuracy": agg["baseline_overall_accuracy"]["mean"],
           "invariant_violations": agg["invariant_violations"]}, args.format, stream)
    return EXIT_OK


# argument parsing -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("text", "machine"), default="text")
    common.add_argument("--seed", type=int, default=None)

    parser = _Parser(prog="bicog", description="Bi-consistency guided self-training experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", parents=[common], help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pac", parents=[common], help="noisy-label PAC sample bound")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--hypotheses", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.set_defaults(func=cmd_pac)

    p = sub.add_parser("lemma", parents=[common], help="improvement condition check")
    p.add_argument("e_t", type=float)
    p.add_argument("e_prev", type=float)
    p.add_argument("l_t", type=int)
    p.add_argument("l_prev", type=int)
    p.add_argument("--labeled", type=int, default=None)
    p.set_defaults(func=cmd_lemma)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo vote error")
    p.add_argument("--accuracy", type=float, nargs="+", required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--vote-mode", choices=("paper", "strict"), default="paper")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset as CSV")
    p.add_argument("generator", choices=GENERATORS)
    p.add_argument("params", nargs="*", help="generator parameters as key=value")
    p.add_argument("--base-fraction", type=float, default=1.0)
    p.add_argument("--shots", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.seed is None and args.command in ("simulate", "gen"):
            args.seed = 0
        return args.func(args, stdout)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (BiCoGError, OSError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
