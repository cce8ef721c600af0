"""Generalized EM driver for the gated ARX mixture.

The E-step computes responsibilities from gate priors and per-mode Gaussian
densities, entirely in the log domain.  The M-step solves one weighted
least-squares problem per mode, refreshes the noise variance (per-mode MAP
or pooled MLE), then trains the gate on the responsibilities as soft
labels.  Because the gate step only improves its objective rather than
maximizing it, the whole procedure is a generalized EM and the observed
log-likelihood is non-decreasing up to the gate safeguard's slack.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .arx import (
    ArxMode,
    VariancePrior,
    map_variance,
    pooled_mle_variance,
    weighted_least_squares,
)
from .dataset import Dataset
from .gate import (
    AdamConfig,
    GateNetwork,
    GateTrainingError,
    LinearGate,
    init_gate,
    init_linear_gate,
    log_softmax,
    train_soft_labels,
)

# A loss/log-likelihood regression larger than this marks a failed restart.
MONOTONICITY_SLACK = 1e-6


class FitError(Exception):
    """EM could not produce a usable model."""


@dataclass
class MixtureModel:
    """Complete identifiable object: S experts plus a gate.

    ``variance_mode`` selects the M-step variance estimator ("per_mode" MAP
    or "pooled" MLE).  When gate inputs are standardized, ``gate_mean`` and
    ``gate_scale`` hold the training-set statistics applied before every
    gate evaluation.
    """

    modes: list[ArxMode]
    gate: GateNetwork | LinearGate
    variance_mode: str = "per_mode"
    gate_mean: np.ndarray | None = None
    gate_scale: np.ndarray | None = None

    def __post_init__(self):
        if len(self.modes) < 1:
            raise ValueError("a mixture needs at least one mode")
        if self.gate.n_modes != len(self.modes):
            raise ValueError(
                f"gate produces {self.gate.n_modes} modes but "
                f"{len(self.modes)} experts were given"
            )
        if self.variance_mode not in ("per_mode", "pooled"):
            raise ValueError(f"unknown variance_mode {self.variance_mode!r}")

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def r(self) -> int:
        return len(self.modes[0].theta)

    def gate_input(self, X: np.ndarray) -> np.ndarray:
        if self.gate_mean is None:
            return X
        return (X - self.gate_mean) / self.gate_scale

    def copy(self) -> "MixtureModel":
        return MixtureModel(
            modes=[ArxMode(m.theta.copy(), m.sigma) for m in self.modes],
            gate=self.gate.copy(),
            variance_mode=self.variance_mode,
            gate_mean=None if self.gate_mean is None else self.gate_mean.copy(),
            gate_scale=None if self.gate_scale is None else self.gate_scale.copy(),
        )


@dataclass(frozen=True)
class ModelSpec:
    """Structural choices for a fit: mode count, gate family and shape."""

    n_modes: int
    gate_type: str = "neural"  # "neural" | "linear"
    hidden_sizes: tuple[int, ...] = (10,)
    variance_mode: str = "per_mode"
    standardize_gate_input: bool = False

    def __post_init__(self):
        if self.n_modes < 2:
            raise ValueError("n_modes must be at least 2")
        if self.gate_type not in ("neural", "linear"):
            raise ValueError(f"unknown gate_type {self.gate_type!r}")


@dataclass(frozen=True)
class EmConfig:
    """Iteration control and initialization settings."""

    max_iters: int = 500
    loglik_tol: float = 1e-4
    n_restarts: int = 5
    rng_seed: int = 0
    init_std: float = 10.0
    adam: AdamConfig = field(default_factory=AdamConfig)
    kmeans_init: bool = True
    kmeans_space: str = "y"  # "y" | "joint"

    def __post_init__(self):
        if self.max_iters < 1 or self.n_restarts < 1:
            raise ValueError("max_iters and n_restarts must be positive")
        if not self.loglik_tol > 0:
            raise ValueError("loglik_tol must be positive")
        if self.kmeans_space not in ("y", "joint"):
            raise ValueError(f"unknown kmeans_space {self.kmeans_space!r}")


@dataclass
class EmTrace:
    """Per-iteration history of one EM run.

    Row i holds the observed log-likelihood computed by E-step i (with the
    parameters from M-step i-1) and the parameters produced by M-step i.
    """

    logliks: list[float] = field(default_factory=list)
    thetas: list[np.ndarray] = field(default_factory=list)
    sigmas: list[np.ndarray] = field(default_factory=list)
    gate_losses: list[float] = field(default_factory=list)
    termination: str = "running"
    final_loglik: float = -np.inf

    def __len__(self) -> int:
        return len(self.logliks)

    def to_csv(self, path) -> None:
        """Write the trace (iteration, loglik, thetas, sigmas, gate loss)."""
        n_modes, r = self.thetas[0].shape if self.thetas else (0, 0)
        header = ["iteration", "loglik"]
        for s in range(n_modes):
            header += [f"theta_{s + 1}_{j}" for j in range(r)]
        header += [f"sigma_{s + 1}" for s in range(n_modes)]
        header.append("gate_loss")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(self)):
                row = [str(i + 1), "%.17g" % self.logliks[i]]
                row += ["%.17g" % v for v in self.thetas[i].ravel()]
                row += ["%.17g" % v for v in self.sigmas[i]]
                row.append("%.17g" % self.gate_losses[i])
                writer.writerow(row)


@dataclass
class RestartSummary:
    seed: int
    n_iters: int
    final_loglik: float
    termination: str
    n_ridge_fallbacks: int = 0


@dataclass
class FitResult:
    model: MixtureModel
    trace: EmTrace
    restarts: list[RestartSummary]
    traces: list[EmTrace] = field(default_factory=list)

    @property
    def best_restart(self) -> RestartSummary:
        return max(self.restarts, key=lambda s: s.final_loglik)


def _log_joint(model: MixtureModel, data: Dataset) -> np.ndarray:
    """(N, S) matrix of log g_s(x_k) + log p(y_k | x_k, mode s)."""
    log_gate = log_softmax(model.gate.logits(model.gate_input(data.X)))
    out = np.empty_like(log_gate)
    with np.errstate(over="ignore"):  # huge residuals legitimately give -inf
        for s, mode in enumerate(model.modes):
            resid = data.y - data.Phi @ mode.theta
            out[:, s] = (
                -0.5 * np.log(2.0 * np.pi)
                - np.log(mode.sigma)
                - resid**2 / (2.0 * mode.sigma**2)
            )
    out += log_gate
    return out


def observed_loglik(model: MixtureModel, data: Dataset) -> float:
    """sum_k log sum_s g_s(x_k) p(y_k | x_k, mode s), via log-sum-exp."""
    joint = _log_joint(model, data)
    m = joint.max(axis=1, keepdims=True)
    ll = float((m + np.log(np.exp(joint - m).sum(axis=1, keepdims=True))).sum())
    if not np.isfinite(ll):
        raise FitError("observed log-likelihood is non-finite")
    return ll


def e_step(model: MixtureModel, data: Dataset) -> np.ndarray:
    """Responsibilities: per-row normalized joint, computed in log domain."""
    resp, _ = _e_step_with_loglik(model, data)
    return resp


def _e_step_with_loglik(
    model: MixtureModel, data: Dataset
) -> tuple[np.ndarray, float]:
    joint = _log_joint(model, data)
    m = joint.max(axis=1, keepdims=True)
    dead = ~np.isfinite(m[:, 0])
    if dead.any():
        k = int(np.flatnonzero(dead)[0])
        raise FitError(f"all mode densities vanished for sample {k}")
    lse = m + np.log(np.exp(joint - m).sum(axis=1, keepdims=True))
    ll = float(lse.sum())
    if not np.isfinite(ll):
        raise FitError("observed log-likelihood is non-finite")
    return np.exp(joint - lse), ll


def m_step(
    model: MixtureModel,
    data: Dataset,
    resp: np.ndarray,
    prior: VariancePrior | None = None,
    adam: AdamConfig | None = None,
    rng=None,
) -> tuple[MixtureModel, float, int]:
    """Update the model in place: experts by WLS, then variances, then the
    gate on soft labels.  Returns (model, gate loss, ridge fallback count).

    A mode whose responsibility mass falls below r (its parameter count)
    gets the ridge-stabilized solve directly instead of aborting the run.
    """
    if prior is None:
        prior = VariancePrior.from_targets(data.y)
    if adam is None:
        adam = AdamConfig()
    n_modes = model.n_modes
    r = model.r
    n_ridge = 0
    for s, mode in enumerate(model.modes):
        w = resp[:, s]
        degenerate = w.sum() < r
        n_ridge += degenerate
        mode.theta = weighted_least_squares(
            data.Phi, data.y, w, force_ridge=degenerate
        )

    residuals = np.stack(
        [data.y - data.Phi @ mode.theta for mode in model.modes], axis=1
    )
    if model.variance_mode == "pooled":
        sigma = float(np.sqrt(pooled_mle_variance(residuals, resp)))
        for mode in model.modes:
            mode.sigma = sigma
    else:
        for s, mode in enumerate(model.modes):
            mode.sigma = float(
                np.sqrt(map_variance(residuals[:, s], resp[:, s], prior, n_modes))
            )

    _, gate_loss = train_soft_labels(
        model.gate, model.gate_input(data.X), resp, adam, rng=rng
    )
    return model, gate_loss, n_ridge


def kmeans_1d(
    values: np.ndarray, k: int, rng, max_iters: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm on scalars with a seeded farthest-point start.

    The first center is a random data point; each further center is the
    point farthest from the chosen ones.  An emptied cluster is re-seeded
    at the farthest point.  Returns (centers, assignments).
    """
    values = np.asarray(values, dtype=float)
    if len(values) < k:
        raise ValueError(f"need at least {k} points for {k} clusters")
    centers = np.empty(k)
    centers[0] = values[rng.integers(len(values))]
    for s in range(1, k):
        dist = np.min(np.abs(values[:, None] - centers[None, :s]), axis=1)
        centers[s] = values[np.argmax(dist)]
    assign = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
    for _ in range(max_iters):
        new = centers.copy()
        for s in range(k):
            members = values[assign == s]
            if len(members) == 0:
                dist = np.min(np.abs(values[:, None] - centers[None, :]), axis=1)
                new[s] = values[np.argmax(dist)]
            else:
                new[s] = members.mean()
        new_assign = np.argmin(np.abs(values[:, None] - new[None, :]), axis=1)
        done = np.array_equal(new, centers)
        centers, assign = new, new_assign
        if done:
            break
    return centers, assign


def kmeans_bias_init(
    data: Dataset, n_modes: int, rng_seed, space: str = "y"
) -> list[ArxMode]:
    """Initial experts from k-means: slopes zero, bias = cluster center of
    the outputs, sigma = overall output standard deviation.

    ``space="joint"`` clusters the (x, y) rows instead and uses each
    cluster's mean output as the bias.
    """
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    r = data.r
    if space == "y":
        centers, _ = kmeans_1d(data.y, n_modes, rng)
    elif space == "joint":
        centers = _joint_kmeans_bias(data, n_modes, rng)
    else:
        raise ValueError(f"unknown k-means space {space!r}")
    sigma = max(float(data.y.std()), 1e-6)
    modes = []
    for s in range(n_modes):
        theta = np.zeros(r)
        theta[-1] = centers[s]
        modes.append(ArxMode(theta, sigma))
    return modes


def _joint_kmeans_bias(data: Dataset, k: int, rng) -> np.ndarray:
    """Lloyd's algorithm on the stacked (x, y) rows; returns the y-component
    of each final center."""
    pts = np.hstack([data.X, data.y[:, None]])
    n = len(pts)
    if n < k:
        raise ValueError(f"need at least {k} points for {k} clusters")
    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[rng.integers(n)]
    for s in range(1, k):
        dist = np.min(
            np.linalg.norm(pts[:, None, :] - centers[None, :s, :], axis=2), axis=1
        )
        centers[s] = pts[np.argmax(dist)]
    for _ in range(100):
        dist = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=2)
        assign = np.argmin(dist, axis=1)
        new = centers.copy()
        for s in range(k):
            members = pts[assign == s]
            if len(members) == 0:
                far = np.argmax(np.min(dist, axis=1))
                new[s] = pts[far]
            else:
                new[s] = members.mean(axis=0)
        if np.allclose(new, centers):
            break
        centers = new
    return centers[:, -1]


def init_model(
    data: Dataset, spec: ModelSpec, cfg: EmConfig, rng
) -> MixtureModel:
    """Fresh model for one restart: random gate, k-means (or small random)
    experts, optional gate-input standardization from training statistics."""
    n_in = data.X.shape[1]
    if spec.gate_type == "neural":
        sizes = [n_in, *spec.hidden_sizes, spec.n_modes - 1]
        gate = init_gate(sizes, cfg.init_std, rng)
    else:
        gate = init_linear_gate(spec.n_modes, data.r, cfg.init_std, rng)

    if cfg.kmeans_init:
        modes = kmeans_bias_init(data, spec.n_modes, rng, space=cfg.kmeans_space)
    else:
        sigma = max(float(data.y.std()), 1e-6)
        modes = [
            ArxMode(rng.normal(0.0, 0.1, size=data.r), sigma)
            for _ in range(spec.n_modes)
        ]

    gate_mean = gate_scale = None
    if spec.standardize_gate_input:
        gate_mean = data.X.mean(axis=0)
        gate_scale = data.X.std(axis=0)
        gate_scale = np.where(gate_scale > 0, gate_scale, 1.0)
    return MixtureModel(
        modes=modes,
        gate=gate,
        variance_mode=spec.variance_mode,
        gate_mean=gate_mean,
        gate_scale=gate_scale,
    )


def run_em(
    model: MixtureModel, data: Dataset, cfg: EmConfig, rng=None
) -> tuple[MixtureModel, EmTrace, int]:
    """Alternate E and M steps from the given initial model until the
    log-likelihood variation drops below tolerance or max_iters is hit.

    Returns (model, trace, ridge fallback count).  A log-likelihood drop
    beyond MONOTONICITY_SLACK raises FitError: the gate safeguard makes the
    procedure a generalized EM, so a real decrease means something broke.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    prior = VariancePrior.from_targets(data.y)
    trace = EmTrace()
    n_ridge = 0
    prev_ll = -np.inf
    for _ in range(cfg.max_iters):
        resp, ll = _e_step_with_loglik(model, data)
        if ll < prev_ll - MONOTONICITY_SLACK:
            raise FitError(f"log-likelihood decreased by {prev_ll - ll:.3e}")
        model, gate_loss, ridge = m_step(
            model, data, resp, prior, adam=cfg.adam, rng=rng
        )
        n_ridge += ridge
        trace.logliks.append(ll)
        trace.thetas.append(np.stack([m.theta for m in model.modes]))
        trace.sigmas.append(np.array([m.sigma for m in model.modes]))
        trace.gate_losses.append(gate_loss)
        if abs(ll - prev_ll) < cfg.loglik_tol:
            trace.termination = "converged"
            break
        prev_ll = ll
    else:
        trace.termination = "max_iters"
    trace.final_loglik = observed_loglik(model, data)
    if trace.final_loglik < trace.logliks[-1] - MONOTONICITY_SLACK:
        raise FitError("final log-likelihood fell below the last iteration")
    return model, trace, n_ridge


def fit(
    data: Dataset, cfg: EmConfig, spec: ModelSpec
) -> FitResult:
    """Multi-restart EM: run ``n_restarts`` independent fits seeded
    rng_seed + index and keep the one with the highest final observed
    log-likelihood.  Raises FitError if every restart failed."""
    if len(data) == 0:
        raise FitError("empty dataset")
    best: tuple[MixtureModel, EmTrace] | None = None
    summaries: list[RestartSummary] = []
    traces: list[EmTrace] = []
    for idx in range(cfg.n_restarts):
        seed = cfg.rng_seed + idx
        rng = np.random.default_rng(seed)
        model = init_model(data, spec, cfg, rng)
        try:
            model, trace, n_ridge = run_em(model, data, cfg, rng=rng)
        except (FitError, GateTrainingError) as exc:
            summaries.append(
                RestartSummary(seed, 0, -np.inf, f"failed: {exc}")
            )
            continue
        summaries.append(
            RestartSummary(
                seed, len(trace), trace.final_loglik, trace.termination, n_ridge
            )
        )
        traces.append(trace)
        if best is None or trace.final_loglik > best[1].final_loglik:
            best = (model, trace)
    if best is None:
        reasons = "; ".join(s.termination for s in summaries)
        raise FitError(f"all {cfg.n_restarts} restarts failed: {reasons}")
    return FitResult(model=best[0], trace=best[1], restarts=summaries,
                     traces=traces)


def permute_modes(model: MixtureModel, perm) -> MixtureModel:
    """Return a copy with modes reordered by ``perm`` (new index j takes old
    mode perm[j]) and the gate transformed so probabilities follow exactly.

    Anchoring is preserved by subtracting the logit of the mode that lands
    on the anchor slot, which leaves the softmax unchanged.
    """
    perm = list(perm)
    n = model.n_modes
    if sorted(perm) != list(range(n)):
        raise ValueError(f"perm must rearrange 0..{n - 1}, got {perm}")
    out = model.copy()
    if n == 1:
        return out
    out.modes = [out.modes[p] for p in perm]
    gate = out.gate
    if isinstance(gate, LinearGate):
        rows = np.vstack([gate.coef, np.zeros(gate.coef.shape[1])])
        anchor = rows[perm[-1]]
        gate.coef = np.array([rows[perm[j]] - anchor for j in range(n - 1)])
    else:
        w = np.hstack([gate.weights[-1], np.zeros((gate.weights[-1].shape[0], 1))])
        b = np.append(gate.biases[-1], 0.0)
        anchor_w, anchor_b = w[:, perm[-1]], b[perm[-1]]
        gate.weights[-1] = np.column_stack(
            [w[:, perm[j]] - anchor_w for j in range(n - 1)]
        )
        gate.biases[-1] = np.array([b[perm[j]] - anchor_b for j in range(n - 1)])
    return out
