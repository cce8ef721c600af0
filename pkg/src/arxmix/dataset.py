"""Regression datasets built from input/output time series.

A raw series (u_k, y_k) is turned into lagged regressor rows
x_k = [y_{k-1}, ..., y_{k-n_a}, u_{k-1}, ..., u_{k-n_b}] with targets y_k.
The extended regressor appends a constant 1 so the last coefficient of an
affine sub-model is its intercept.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class DataError(Exception):
    """Malformed series data or CSV content."""


@dataclass(frozen=True)
class RegressorConfig:
    """Lag structure of the regression problem.

    Parameters
    ----------
    n_a : int
        Number of output lags (>= 0).
    n_b : int
        Number of input lags (>= 0).
    q : int
        Input dimension (>= 1).
    """

    n_a: int
    n_b: int
    q: int = 1

    def __post_init__(self):
        if self.n_a < 0 or self.n_b < 0:
            raise ValueError("lag counts must be non-negative")
        if self.n_a + self.n_b < 1:
            raise ValueError("at least one lag is required (n_a + n_b >= 1)")
        if self.q < 1:
            raise ValueError("input dimension q must be positive")

    @property
    def r(self) -> int:
        """Extended regressor dimension n_a + q*n_b + 1."""
        return self.n_a + self.q * self.n_b + 1

    @property
    def max_lag(self) -> int:
        return max(self.n_a, self.n_b)


@dataclass
class SeriesData:
    """Raw input/output sequences, optionally with generating-mode labels.

    ``u`` is stored as an (N, q) array, ``y`` as (N,).  ``labels`` and
    ``regions`` (when present) give, per time step, the mode/region that
    generated y_k; entry 0 marks the initial condition, which no mode
    generated.
    """

    u: np.ndarray
    y: np.ndarray
    labels: np.ndarray | None = None
    regions: np.ndarray | None = None

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.ndim == 1:
            self.u = self.u[:, None]
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1:
            raise ValueError("y must be one-dimensional")
        if len(self.u) != len(self.y):
            raise DataError(
                f"u and y lengths differ ({len(self.u)} vs {len(self.y)})"
            )
        if not (np.isfinite(self.u).all() and np.isfinite(self.y).all()):
            raise DataError("series contains non-finite values")
        for name in ("labels", "regions"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=int)
                if len(arr) != len(self.y):
                    raise DataError(f"{name} length does not match series")
                setattr(self, name, arr)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def q(self) -> int:
        return self.u.shape[1]

    def section(self, start: int, stop: int) -> "SeriesData":
        """Contiguous sub-series [start, stop)."""
        return SeriesData(
            u=self.u[start:stop].copy(),
            y=self.y[start:stop].copy(),
            labels=None if self.labels is None else self.labels[start:stop].copy(),
            regions=None if self.regions is None else self.regions[start:stop].copy(),
        )


@dataclass
class Dataset:
    """Lag-aligned regression data.

    ``X`` holds the regressors (N x (r-1)), ``Phi`` the extended regressors
    with a trailing column of ones (N x r), ``y`` the targets.  ``labels``
    and ``regions``, when present, are the true generating mode/region per
    target row (benchmark evaluation only).  Arrays are read-only.
    """

    X: np.ndarray
    Phi: np.ndarray
    y: np.ndarray
    labels: np.ndarray | None = None
    regions: np.ndarray | None = None
    cfg: RegressorConfig | None = field(default=None, compare=False)

    def __post_init__(self):
        for arr in (self.X, self.Phi, self.y, self.labels, self.regions):
            if arr is not None:
                arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.y)

    @property
    def r(self) -> int:
        return self.Phi.shape[1]


def build_regressors(series: SeriesData, cfg: RegressorConfig) -> Dataset:
    """Build the lagged regressor matrix and targets from a raw series.

    The first max(n_a, n_b) samples are discarded: a row is emitted only
    when every lag it references exists.  Row k of ``X`` is
    [y_{k-1}, ..., y_{k-n_a}, u_{k-1}, ..., u_{k-n_b}] (input lags are
    q-vectors, flattened in lag order) and the target is y_k.

    Raises
    ------
    DataError
        If the series is shorter than max(n_a, n_b) + 1.
    """
    if series.q != cfg.q:
        raise ValueError(
            f"series input dimension {series.q} does not match config q={cfg.q}"
        )
    m = cfg.max_lag
    n = len(series) - m
    if n < 1:
        raise DataError(
            f"series of length {len(series)} too short for max lag {m}"
        )
    cols = []
    for i in range(1, cfg.n_a + 1):
        cols.append(series.y[m - i : m - i + n, None])
    for i in range(1, cfg.n_b + 1):
        cols.append(series.u[m - i : m - i + n, :])
    X = np.ascontiguousarray(np.hstack(cols))
    Phi = np.hstack([X, np.ones((n, 1))])
    y = series.y[m:].copy()
    labels = None if series.labels is None else series.labels[m:].copy()
    regions = None if series.regions is None else series.regions[m:].copy()
    return Dataset(X=X, Phi=Phi, y=y, labels=labels, regions=regions, cfg=cfg)


def split(
    dataset: Dataset, n_train: int, n_val: int, n_test: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Split a dataset into contiguous, time-ordered train/val/test parts.

    The sizes must be non-negative and sum to len(dataset); rows are never
    shuffled, so the test set is always the trailing block.
    """
    sizes = (n_train, n_val, n_test)
    if any(s < 0 for s in sizes):
        raise ValueError("split sizes must be non-negative")
    if sum(sizes) != len(dataset):
        raise ValueError(
            f"split sizes {sizes} do not sum to dataset length {len(dataset)}"
        )
    parts = []
    start = 0
    for size in sizes:
        sl = slice(start, start + size)
        parts.append(
            Dataset(
                X=dataset.X[sl].copy(),
                Phi=dataset.Phi[sl].copy(),
                y=dataset.y[sl].copy(),
                labels=None if dataset.labels is None else dataset.labels[sl].copy(),
                regions=None if dataset.regions is None else dataset.regions[sl].copy(),
                cfg=dataset.cfg,
            )
        )
        start += size
    return tuple(parts)


# CSV schema: header "k,u_1,...,u_q,y" with optional trailing "mode" and
# "region" columns.  Floats are written with 17 significant digits so a
# write/read round trip is value-exact.
_FLOAT_FMT = "%.17g"


def write_csv(series: SeriesData, path) -> None:
    """Write a series to CSV (schema ``k,u_1,...,u_q,y[,mode[,region]]``)."""
    q = series.q
    header = ["k"] + [f"u_{j + 1}" for j in range(q)] + ["y"]
    if series.labels is not None:
        header.append("mode")
        if series.regions is not None:
            header.append("region")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(series)):
            row = [str(k)]
            row += [_FLOAT_FMT % v for v in series.u[k]]
            row.append(_FLOAT_FMT % series.y[k])
            if series.labels is not None:
                row.append(str(int(series.labels[k])))
                if series.regions is not None:
                    row.append(str(int(series.regions[k])))
            writer.writerow(row)


def read_csv(path) -> SeriesData:
    """Read a series CSV written by :func:`write_csv` (or hand-made).

    Raises
    ------
    DataError
        On a missing/invalid header, a short row, or a non-numeric cell;
        the message names the offending line.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[0] != "k" or "y" not in header:
            raise DataError(
                f"{path}: expected header 'k,u_1,...,u_q,y[,mode[,region]]', got {header}"
            )
        y_pos = header.index("y")
        u_names = header[1:y_pos]
        if u_names != [f"u_{j + 1}" for j in range(len(u_names))] or not u_names:
            raise DataError(f"{path}: malformed input columns {u_names}")
        has_mode = "mode" in header
        has_region = "region" in header
        u_rows, y_vals, modes, regions = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {lineno}: expected {len(header)} cells, got {len(row)}"
                )
            try:
                u_rows.append([float(c) for c in row[1:y_pos]])
                y_vals.append(float(row[y_pos]))
                if has_mode:
                    modes.append(int(row[header.index('mode')]))
                if has_region:
                    regions.append(int(row[header.index('region')]))
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
    if not y_vals:
        raise DataError(f"{path}: no data rows")
    return SeriesData(
        u=np.array(u_rows),
        y=np.array(y_vals),
        labels=np.array(modes) if has_mode else None,
        regions=np.array(regions) if has_region else None,
    )
