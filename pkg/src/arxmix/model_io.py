"""Versioned JSON persistence for fitted models.

Floats are serialized by ``json`` with ``repr`` precision, so a save/load
round trip reproduces every parameter bit-exactly.  Linear-gate models also
embed their polyhedral partition, one inequality matrix per region.
"""

from __future__ import annotations

import json

import numpy as np

from .arx import ArxMode
from .dataset import RegressorConfig
from .em import MixtureModel
from .gate import GateNetwork, LinearGate
from .pwarx import prarx_to_pwarx

FORMAT_NAME = "arxmix-model"
FORMAT_VERSION = 1


class ModelFileError(Exception):
    """Unreadable or structurally invalid model file."""


def _gate_to_dict(gate) -> dict:
    if isinstance(gate, LinearGate):
        return {"type": "linear", "coef": gate.coef.tolist()}
    return {
        "type": "neural",
        "weights": [w.tolist() for w in gate.weights],
        "biases": [b.tolist() for b in gate.biases],
    }


def _gate_from_dict(d: dict):
    if d["type"] == "linear":
        return LinearGate(np.array(d["coef"], dtype=float))
    if d["type"] == "neural":
        return GateNetwork(
            [np.array(w, dtype=float) for w in d["weights"]],
            [np.array(b, dtype=float) for b in d["biases"]],
        )
    raise ModelFileError(f"unknown gate type {d['type']!r}")


def save_model(
    model: MixtureModel,
    regressor: RegressorConfig,
    path,
    fit_meta: dict | None = None,
) -> None:
    """Write the model, its regressor configuration, and optional fit
    metadata (seed, iterations, final log-likelihood, ...) to JSON."""
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "regressor": {"n_a": regressor.n_a, "n_b": regressor.n_b, "q": regressor.q},
        "variance_mode": model.variance_mode,
        "modes": [
            {"theta": m.theta.tolist(), "sigma": m.sigma} for m in model.modes
        ],
        "gate": _gate_to_dict(model.gate),
        "gate_scaler": (
            None
            if model.gate_mean is None
            else {
                "mean": model.gate_mean.tolist(),
                "scale": model.gate_scale.tolist(),
            }
        ),
        "fit": fit_meta,
    }
    if isinstance(model.gate, LinearGate):
        partition = prarx_to_pwarx(model.gate)
        doc["partition"] = [h.tolist() for h in partition.halfspaces]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> tuple[MixtureModel, RegressorConfig, dict | None]:
    """Read a model file; returns (model, regressor config, fit metadata)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: not valid JSON: {exc}") from None
    if doc.get("format") != FORMAT_NAME:
        raise ModelFileError(f"{path}: not an {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFileError(
            f"{path}: unsupported version {doc.get('version')!r}"
        )
    try:
        regressor = RegressorConfig(**doc["regressor"])
        modes = [
            ArxMode(np.array(m["theta"], dtype=float), float(m["sigma"]))
            for m in doc["modes"]
        ]
        gate = _gate_from_dict(doc["gate"])
        scaler = doc.get("gate_scaler")
        model = MixtureModel(
            modes=modes,
            gate=gate,
            variance_mode=doc["variance_mode"],
            gate_mean=None if scaler is None else np.array(scaler["mean"]),
            gate_scale=None if scaler is None else np.array(scaler["scale"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelFileError(f"{path}: invalid model document: {exc}") from None
    return model, regressor, doc.get("fit")
