"""Run configuration: nested JSON files, named presets, flag overrides.

A config document has four sections (all optional, defaults below):

    {
      "regressor": {"n_a": 1, "n_b": 1, "q": 1},
      "model": {"n_modes": 2, "gate": "neural", "hidden": [10],
                 "variance": "pooled", "standardize_gate_input": false},
      "em": {"max_iters": 500, "loglik_tol": 1e-4, "n_restarts": 5,
              "seed": 0, "init_std": 10.0, "kmeans_init": true,
              "kmeans_space": "y",
              "adam": {"learning_rate": 0.01, "beta1": 0.9, "beta2": 0.999,
                        "epsilon": 1e-8, "epochs": 3, "batch_size": 100}},
      "data": {"n_samples": 6000, "noise_std": 0.2,
                "split": [4000, 1000, 1000]}
    }

The committed ``benchmark`` preset pins the reference setup: 6000 samples
split 4000/1000/1000, two modes, one hidden layer of 10 tanh units, Adam at
learning rate 0.01 for 3 epochs of 100-sample batches per M-step, up to 500
iterations at tolerance 1e-4, 5 restarts, initializer std 10.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

from .dataset import RegressorConfig
from .em import AdamConfig, EmConfig, ModelSpec


class ConfigError(Exception):
    """Invalid or unreadable run configuration."""


@dataclass
class RunConfig:
    regressor: RegressorConfig = field(
        default_factory=lambda: RegressorConfig(n_a=1, n_b=1, q=1)
    )
    spec: ModelSpec = field(default_factory=lambda: ModelSpec(n_modes=2))
    em: EmConfig = field(default_factory=EmConfig)
    n_samples: int = 6000
    noise_std: float = 0.2
    split: tuple[int, int, int] = (4000, 1000, 1000)


def _take(section: dict, key, default):
    return section[key] if key in section else default


def from_dict(doc: dict) -> RunConfig:
    """Build a RunConfig from a (possibly partial) nested dictionary."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - {"regressor", "model", "em", "data"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    try:
        reg = doc.get("regressor", {})
        regressor = RegressorConfig(
            n_a=_take(reg, "n_a", 1), n_b=_take(reg, "n_b", 1), q=_take(reg, "q", 1)
        )
        mod = doc.get("model", {})
        spec = ModelSpec(
            n_modes=_take(mod, "n_modes", 2),
            gate_type=_take(mod, "gate", "neural"),
            hidden_sizes=tuple(_take(mod, "hidden", [10])),
            variance_mode=_take(mod, "variance", "per_mode"),
            standardize_gate_input=_take(mod, "standardize_gate_input", False),
        )
        em_doc = doc.get("em", {})
        adam_doc = em_doc.get("adam", {})
        adam = AdamConfig(
            learning_rate=_take(adam_doc, "learning_rate", 0.01),
            beta1=_take(adam_doc, "beta1", 0.9),
            beta2=_take(adam_doc, "beta2", 0.999),
            epsilon=_take(adam_doc, "epsilon", 1e-8),
            epochs_per_m_step=_take(adam_doc, "epochs", 3),
            batch_size=_take(adam_doc, "batch_size", 100),
            shuffle_seed=_take(adam_doc, "shuffle_seed", 0),
        )
        em = EmConfig(
            max_iters=_take(em_doc, "max_iters", 500),
            loglik_tol=_take(em_doc, "loglik_tol", 1e-4),
            n_restarts=_take(em_doc, "n_restarts", 5),
            rng_seed=_take(em_doc, "seed", 0),
            init_std=_take(em_doc, "init_std", 10.0),
            adam=adam,
            kmeans_init=_take(em_doc, "kmeans_init", True),
            kmeans_space=_take(em_doc, "kmeans_space", "y"),
        )
        data = doc.get("data", {})
        split = tuple(_take(data, "split", (4000, 1000, 1000)))
        if len(split) != 3:
            raise ValueError("data.split must have three entries")
        return RunConfig(
            regressor=regressor,
            spec=spec,
            em=em,
            n_samples=_take(data, "n_samples", 6000),
            noise_std=_take(data, "noise_std", 0.2),
            split=split,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from None


def load_file(path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    return from_dict(doc)


def load_preset(name: str) -> RunConfig:
    """Load a named preset shipped with the package."""
    try:
        text = (
            resources.files("arxmix").joinpath(f"presets/{name}.json").read_text()
        )
    except FileNotFoundError:
        raise ConfigError(f"unknown preset {name!r}") from None
    return from_dict(json.loads(text))


def with_overrides(
    cfg: RunConfig, seed: int | None = None, restarts: int | None = None
) -> RunConfig:
    """Apply command-line overrides to the EM section."""
    em = cfg.em
    changes = {}
    if seed is not None:
        changes["rng_seed"] = seed
    if restarts is not None:
        changes["n_restarts"] = restarts
    if changes:
        em = replace(em, **changes)
    return RunConfig(
        regressor=cfg.regressor,
        spec=cfg.spec,
        em=em,
        n_samples=cfg.n_samples,
        noise_std=cfg.noise_std,
        split=cfg.split,
    )
