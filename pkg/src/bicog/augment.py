"""Weak and strong perturbations of feature vectors.

Weak views add small Gaussian noise; strong views add larger noise and then
zero each feature independently. Noise is keyed by (seed, example id, round,
view, feature index), so a view is a pure function of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._keyed import keyed_normal, keyed_uniform
from .core import Split
from .errors import InvalidParams

_WEAK, _STRONG = 1, 2
_NOISE, _DROP = 11, 12


@dataclass(frozen=True)
class AugmentConfig:
    """Perturbation strengths.

    Sigmas are either scalars or per-feature vectors. Use
    :meth:`from_data` for the default scales of 0.05 and 0.5 times the
    per-feature standard deviation.
    """

    weak_noise_sigma: float | tuple[float, ...] = 0.05
    strong_noise_sigma: float | tuple[float, ...] = 0.5
    strong_dropout_prob: float = 0.2
    seed: int = 0

    def __post_init__(self):
        for name in ("weak_noise_sigma", "strong_noise_sigma"):
            v = getattr(self, name)
            if not np.isscalar(v):
                object.__setattr__(self, name, tuple(float(x) for x in v))
        weak = np.asarray(self.weak_noise_sigma, dtype=np.float64)
        strong = np.asarray(self.strong_noise_sigma, dtype=np.float64)
        if (weak < 0).any():
            raise InvalidParams("weak_noise_sigma must be >= 0")
        if (strong < weak).any():
            raise InvalidParams("strong_noise_sigma must dominate weak_noise_sigma")
        if not 0.0 <= self.strong_dropout_prob < 1.0:
            raise InvalidParams("strong_dropout_prob must lie in [0, 1)")

    @classmethod
    def from_data(
        cls,
        features: np.ndarray,
        weak_scale: float = 0.05,
        strong_scale: float = 0.5,
        strong_dropout_prob: float = 0.2,
        seed: int = 0,
    ) -> AugmentConfig:
        std = np.asarray(features, dtype=np.float64).std(axis=0)
        return cls(
            tuple((weak_scale * std).tolist()),
            tuple((strong_scale * std).tolist()),
            strong_dropout_prob,
            seed,
        )


def _noise(features, example_ids, round, view, sigma, seed):
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    x2 = np.atleast_2d(x)
    ids = np.asarray(example_ids, dtype=np.int64).reshape(-1, 1)
    cols = np.arange(x2.shape[1], dtype=np.int64)[None, :]
    z = keyed_normal(seed, ids, round, view, _NOISE, cols)
    out = x2 + np.asarray(sigma, dtype=np.float64) * z
    return out, ids, cols, single


def weak(features, example_id, round: int, cfg: AugmentConfig) -> np.ndarray:
    """Weakly perturbed copy of ``features`` (one row per id)."""
    out, _, _, single = _noise(features, example_id, round, _WEAK, cfg.weak_noise_sigma, cfg.seed)
    return out[0] if single else out


def strong(features, example_id, round: int, cfg: AugmentConfig) -> np.ndarray:
    """Strongly perturbed copy: larger noise, then per-feature dropout."""
    out, ids, cols, single = _noise(
        features, example_id, round, _STRONG, cfg.strong_noise_sigma, cfg.seed
    )
    if cfg.strong_dropout_prob > 0:
        drop = keyed_uniform(cfg.seed, ids, round, _STRONG, _DROP, cols) < cfg.strong_dropout_prob
        out = np.where(drop, 0.0, out)
    return out[0] if single else out


class Augmentor:
    """Produces one weak and one strong view per (example, round).

    Views are cached per round so every ensemble member sees identical
    perturbed inputs.
    """

    def __init__(self, cfg: AugmentConfig):
        self.cfg = cfg
        self._cache: dict[tuple[int, str, bytes], Split] = {}

    def view(self, split: Split, kind: str, round: int) -> Split:
        if kind == "orig":
            return split
        key = (round, kind, split.ids.tobytes())
        if key not in self._cache:
            fn = weak if kind == "weak" else strong
            if len(split) == 0:
                feats = split.features
            else:
                feats = fn(split.features, split.ids, round, self.cfg)
            self._cache = {k: v for k, v in self._cache.items() if k[0] == round}
            self._cache[key] = split.with_features(feats)
        return self._cache[key]
