"""Deterministic piecewise form of a fitted mixture.

A linear gate is equivalent to a polyhedral partition of the extended
regressor space: mode s wins exactly where its logit is maximal, i.e.
where (eta_j - eta_s)' phi <= 0 for every j.  Neural gates have no such
representation, so converting one is an error rather than an
approximation.  Prediction picks the gate's argmax mode (ties to the
lowest index) or, optionally, the probability-weighted blend.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .em import MixtureModel
from .gate import LinearGate, probabilities


@dataclass
class PolyhedralPartition:
    """One inequality matrix per region over phi = [x 1].

    Region s is {phi : halfspaces[s] @ phi <= 0}.  ``strict[s]`` flags the
    rows meant as strict inequalities; membership tests treat every row as
    non-strict and leave boundary ties to the argmax convention.
    """

    halfspaces: list[np.ndarray]
    strict: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.strict:
            self.strict = [
                np.zeros(len(h), dtype=bool) for h in self.halfspaces
            ]
        widths = {h.shape[1] for h in self.halfspaces}
        if len(widths) != 1:
            raise ValueError("all region matrices must have r columns")

    @property
    def n_regions(self) -> int:
        return len(self.halfspaces)

    def contains(self, s: int, phi: np.ndarray) -> bool | np.ndarray:
        """Whether phi (single (r,) or batch (N, r)) lies in region s."""
        vals = np.atleast_2d(phi) @ self.halfspaces[s].T
        ok = (vals <= 0).all(axis=1)
        return bool(ok[0]) if np.asarray(phi).ndim == 1 else ok

    def assign(self, phi: np.ndarray) -> int | np.ndarray:
        """Lowest region index whose inequalities are satisfied; -1 when
        none is (possible only through floating-point ties)."""
        phi2 = np.atleast_2d(phi)
        out = np.full(len(phi2), -1, dtype=int)
        for s in range(self.n_regions - 1, -1, -1):
            out[self.contains(s, phi2)] = s
        return int(out[0]) if np.asarray(phi).ndim == 1 else out


def prarx_to_pwarx(gate: LinearGate) -> PolyhedralPartition:
    """Exact polyhedral partition of a linear gate.

    H_s stacks (eta_j - eta_s) for j = 1..S, with the anchored eta_S = 0
    row included; the all-zero row at j = s is kept so row j of every H_s
    refers to mode j.  The partition lives in the gate's own input
    coordinates: if the owning model standardizes gate inputs, apply that
    transform to x before building phi for membership tests.
    """
    if not isinstance(gate, LinearGate):
        raise TypeError(
            "only a linear gate has a polyhedral partition; the neural gate "
            "defines arbitrary regions"
        )
    rows = np.vstack([gate.coef, np.zeros(gate.coef.shape[1])])
    return PolyhedralPartition(
        halfspaces=[rows - rows[s] for s in range(len(rows))]
    )


def hard_assign(model: MixtureModel, x: np.ndarray) -> int | np.ndarray:
    """Index of the most probable mode for x ((r-1,) or (N, r-1)); exact
    ties go to the lowest index (np.argmax convention)."""
    logits = model.gate.logits(model.gate_input(np.asarray(x, dtype=float)))
    if logits.ndim == 1:
        return int(np.argmax(logits))
    return np.argmax(logits, axis=1)


def predict_output(
    model: MixtureModel, x: np.ndarray, weighted: bool = False
):
    """Predict y for regressor(s) x; returns (y_hat, mode index).

    Hard prediction (default) evaluates only the selected expert, making
    the map piecewise affine; ``weighted=True`` blends all experts by their
    gate probabilities, the smooth variant."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    phi = np.hstack([X, np.ones((len(X), 1))])
    mode_idx = np.atleast_1d(hard_assign(model, X))
    if weighted:
        probs = np.atleast_2d(probabilities(model.gate, model.gate_input(X)))
        preds = np.stack([phi @ m.theta for m in model.modes], axis=1)
        y_hat = (probs * preds).sum(axis=1)
    else:
        thetas = np.stack([m.theta for m in model.modes])
        y_hat = np.einsum("ij,ij->i", phi, thetas[mode_idx])
    if single:
        return float(y_hat[0]), int(mode_idx[0])
    return y_hat, mode_idx
