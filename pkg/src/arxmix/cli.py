"""Command-line front end.

Four subcommands cover the whole workflow:

    arxmix generate --preset benchmark --out-dir runs/data
    arxmix fit      --preset benchmark --train runs/data/train.csv --out-dir runs/fit
    arxmix evaluate --model runs/fit/model.json --test runs/data/test.csv \
                    --true-thetas runs/data/true_thetas.json --out-dir runs/eval
    arxmix trials   --preset benchmark --n-trials 20 --out-dir runs/trials

Every command is deterministic given its configuration (seeds included) and
exits 0 on success, 2 on usage/configuration problems, 1 on runtime
failures, always with a categorized message on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import benchmark, config as config_mod, em, model_io
from .config import ConfigError, RunConfig
from .dataset import DataError, build_regressors, read_csv, write_csv
from .em import FitError
from .model_io import ModelFileError
from .pwarx import hard_assign, predict_output

USAGE_EXIT = 2
RUNTIME_EXIT = 1


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int = USAGE_EXIT):
        super().__init__(message)
        self.category = category
        self.code = code


def _resolve_config(args) -> RunConfig:
    if getattr(args, "config", None) and getattr(args, "preset", None):
        raise CliError("config", "--config and --preset are mutually exclusive")
    if getattr(args, "preset", None):
        cfg = config_mod.load_preset(args.preset)
    elif getattr(args, "config", None):
        cfg = config_mod.load_file(args.config)
    else:
        cfg = RunConfig()
    return config_mod.with_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        restarts=getattr(args, "restarts", None),
    )


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _display_theta(theta: np.ndarray) -> np.ndarray:
    """Reorder [coefs..., intercept] as [intercept, coefs...] for tables."""
    return np.concatenate([theta[-1:], theta[:-1]])


def _true_thetas_for(n_modes: int) -> np.ndarray | None:
    if n_modes == 2:
        return benchmark.TRUE_THETAS
    if n_modes == 3:
        return np.stack(benchmark.REGION_DYNAMICS)
    return None


def cmd_generate(args) -> int:
    cfg = _resolve_config(args)
    if cfg.n_samples < 1:
        raise CliError("config", "data.n_samples must be at least 1")
    if sum(cfg.split) != cfg.n_samples:
        raise CliError(
            "config",
            f"split {cfg.split} does not sum to n_samples {cfg.n_samples}",
        )
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else cfg.em.rng_seed
    series = benchmark.generate(cfg.n_samples, cfg.noise_std, seed)
    bounds = np.cumsum((0,) + cfg.split)
    names = ("train.csv", "val.csv", "test.csv")
    for name, a, b in zip(names, bounds[:-1], bounds[1:]):
        write_csv(series.section(int(a), int(b)), out / name)
        print(f"wrote {out / name} ({b - a} rows)")
    truth = {
        "format": "arxmix-true-thetas",
        "version": 1,
        "order": "coefficients in lag order, intercept last",
        "thetas": benchmark.TRUE_THETAS.tolist(),
        "region_thetas": [t.tolist() for t in benchmark.REGION_DYNAMICS],
    }
    with open(out / "true_thetas.json", "w") as fh:
        json.dump(truth, fh, indent=1)
        fh.write("\n")
    print(f"wrote {out / 'true_thetas.json'}")
    print(f"seed {seed}, noise std {cfg.noise_std}, split {cfg.split}")
    return 0


def cmd_fit(args) -> int:
    cfg = _resolve_config(args)
    train_path = Path(args.train)
    if not train_path.exists():
        raise CliError("io", f"training file not found: {train_path}")
    series = read_csv(train_path)
    data = build_regressors(series, cfg.regressor)
    out = _out_dir(args)
    try:
        result = em.fit(data, cfg.em, cfg.spec)
    except FitError as exc:
        raise CliError("fit", str(exc), RUNTIME_EXIT) from None
    best = result.best_restart
    model_io.save_model(
        result.model,
        cfg.regressor,
        out / "model.json",
        fit_meta={
            "seed": best.seed,
            "n_iters": best.n_iters,
            "final_loglik": best.final_loglik,
            "termination": best.termination,
            "n_restarts": cfg.em.n_restarts,
            "n_train": len(data),
        },
    )
    result.trace.to_csv(out / "trace.csv")
    with open(out / "restarts.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["seed", "n_iters", "final_loglik", "termination", "n_ridge_fallbacks"]
        )
        for s in result.restarts:
            writer.writerow(
                [s.seed, s.n_iters, "%.17g" % s.final_loglik, s.termination,
                 s.n_ridge_fallbacks]
            )
    for s in result.restarts:
        marker = " *" if s.seed == best.seed else ""
        print(
            f"restart seed={s.seed}: {s.n_iters} iters, "
            f"loglik={s.final_loglik:.4f}, {s.termination}{marker}"
        )
    print(f"wrote {out / 'model.json'}, {out / 'trace.csv'}, {out / 'restarts.csv'}")
    return 0


def _write_residuals_csv(path, data, resid, pred_modes, true_labels) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["row", "y", "y_hat", "residual", "mode_pred"]
        if true_labels is not None:
            header.append("mode_true")
        writer.writerow(header)
        for k in range(len(resid)):
            row = [
                str(k),
                "%.17g" % data.y[k],
                "%.17g" % (data.y[k] - resid[k]),
                "%.17g" % resid[k],
                str(int(pred_modes[k])),
            ]
            if true_labels is not None:
                row.append(str(int(true_labels[k])))
            writer.writerow(row)


def _write_mode_grid_csv(path, model) -> None:
    y_axis = np.linspace(-5.0, 5.0, 201)
    u_axis = np.linspace(-4.0, 4.0, 161)
    yy, uu = np.meshgrid(y_axis, u_axis, indexing="ij")
    pts = np.column_stack([yy.ravel(), uu.ravel()])
    modes = np.asarray(hard_assign(model, pts)) + 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y_prev", "u_prev", "mode"])
        for (yv, uv), mv in zip(pts, modes):
            writer.writerow(["%.10g" % yv, "%.10g" % uv, str(int(mv))])


def cmd_evaluate(args) -> int:
    model_path = Path(args.model)
    test_path = Path(args.test)
    for p in (model_path, test_path):
        if not p.exists():
            raise CliError("io", f"file not found: {p}")
    model, regressor, _ = model_io.load_model(model_path)
    series = read_csv(test_path)
    data = build_regressors(series, regressor)
    true_thetas = None
    if args.true_thetas:
        tt_path = Path(args.true_thetas)
        if not tt_path.exists():
            raise CliError("io", f"file not found: {tt_path}")
        with open(tt_path) as fh:
            doc = json.load(fh)
        try:
            true_thetas = np.array(doc["thetas"], dtype=float)
        except (KeyError, ValueError) as exc:
            raise CliError("data", f"{tt_path}: invalid true-theta file: {exc}")
        if len(true_thetas) != model.n_modes and "region_thetas" in doc:
            candidate = np.array(doc["region_thetas"], dtype=float)
            if len(candidate) == model.n_modes:
                true_thetas = candidate
        if len(true_thetas) != model.n_modes:
            raise CliError(
                "data",
                f"true-theta file has {len(true_thetas)} modes, model has "
                f"{model.n_modes}",
            )
    report, model = benchmark.evaluate(model, data, true_thetas)
    out = _out_dir(args)

    if args.weighted:
        y_hat, pred0 = predict_output(model, data.X, weighted=True)
        resid = data.y - y_hat
    else:
        resid = report.residual_values
        pred0 = np.asarray(hard_assign(model, data.X))
    truth = data.labels if model.n_modes == 2 else data.regions
    _write_residuals_csv(out / "residuals.csv", data, resid, pred0 + 1, truth)
    wrote = ["residuals.csv"]
    if model.r == 3:
        _write_mode_grid_csv(out / "mode_grid.csv", model)
        wrote.append("mode_grid.csv")
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)
        fh.write("\n")
    wrote.append("report.json")

    if report.f_theta is not None:
        print(f"parameter fit index: {report.f_theta:.4f}")
    else:
        print("parameter fit index: skipped (no --true-thetas)")
    if report.f_s is not None:
        print(f"mode fit index: {report.f_s:.4f}")
    else:
        print("mode fit index: skipped (test set has no usable labels)")
    print(f"sigma estimates: {', '.join('%.4f' % s for s in report.sigmas)}")
    print(f"residual std: {report.residual_values.std():.4f}")
    print(f"wrote {', '.join(str(out / w) for w in wrote)}")
    return 0


def cmd_trials(args) -> int:
    cfg = _resolve_config(args)
    if args.n_trials < 1:
        raise CliError("config", "--n-trials must be at least 1")
    if sum(cfg.split) != cfg.n_samples:
        raise CliError(
            "config",
            f"split {cfg.split} does not sum to n_samples {cfg.n_samples}",
        )
    out = _out_dir(args)
    base_seed = args.seed if args.seed is not None else cfg.em.rng_seed
    true_thetas = _true_thetas_for(cfg.spec.n_modes)
    rows = []
    for trial in range(args.n_trials):
        data_seed = base_seed + trial
        em_seed = base_seed + 1000 * trial
        series = benchmark.generate(cfg.n_samples, cfg.noise_std, data_seed)
        n_train, n_val, n_test = cfg.split
        train = build_regressors(series.section(0, n_train), cfg.regressor)
        test = build_regressors(
            series.section(n_train + n_val, cfg.n_samples), cfg.regressor
        )
        trial_em = replace(cfg.em, rng_seed=em_seed)
        try:
            result = em.fit(train, trial_em, cfg.spec)
        except FitError as exc:
            raise CliError(
                "fit", f"trial {trial} (seed {em_seed}): {exc}", RUNTIME_EXIT
            ) from None
        report, model = benchmark.evaluate(result.model, test, true_thetas)
        rows.append(
            {
                "trial": trial,
                "data_seed": data_seed,
                "em_seed": em_seed,
                "n_iters": result.best_restart.n_iters,
                "final_loglik": result.best_restart.final_loglik,
                "f_theta": report.f_theta,
                "f_s": report.f_s,
                "thetas": np.stack([m.theta for m in model.modes]),
                "sigmas": [m.sigma for m in model.modes],
            }
        )
        print(
            f"trial {trial}: loglik={result.best_restart.final_loglik:.2f} "
            f"iters={result.best_restart.n_iters}"
            + (f" f_theta={report.f_theta:.4f}" if report.f_theta is not None else "")
            + (f" f_s={report.f_s:.4f}" if report.f_s is not None else "")
        )

    n_modes = cfg.spec.n_modes
    r = cfg.regressor.r
    with open(out / "trials.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["trial", "data_seed", "em_seed", "n_iters", "final_loglik",
                  "f_theta", "f_s"]
        for s in range(n_modes):
            header += [f"theta_{s + 1}_c{j}" for j in range(r)]
        header += [f"sigma_{s + 1}" for s in range(n_modes)]
        writer.writerow(header)
        for row in rows:
            out_row = [
                row["trial"], row["data_seed"], row["em_seed"], row["n_iters"],
                "%.17g" % row["final_loglik"],
                "" if row["f_theta"] is None else "%.17g" % row["f_theta"],
                "" if row["f_s"] is None else "%.17g" % row["f_s"],
            ]
            for s in range(n_modes):
                out_row += [
                    "%.17g" % v for v in _display_theta(row["thetas"][s])
                ]
            out_row += ["%.17g" % v for v in row["sigmas"]]
            writer.writerow(out_row)

    # Summary table, intercept-first component order.
    print(f"\nstatistics over {args.n_trials} trials (intercept first):")
    for s in range(n_modes):
        stack = np.stack([_display_theta(row["thetas"][s]) for row in rows])
        mean = ", ".join("%.4f" % v for v in stack.mean(axis=0))
        std = ", ".join("%.2e" % v for v in stack.std(axis=0))
        line = f"theta_{s + 1}: mean [{mean}] std [{std}]"
        if true_thetas is not None:
            true = ", ".join("%.4g" % v for v in _display_theta(true_thetas[s]))
            line += f" true [{true}]"
        print(line)
    sig = np.array([row["sigmas"] for row in rows])
    if cfg.spec.variance_mode == "pooled":
        print(
            f"sigma: mean {sig[:, 0].mean():.4f} std {sig[:, 0].std():.2e} "
            "(noise standard deviation)"
        )
    else:
        for s in range(n_modes):
            print(
                f"sigma_{s + 1}: mean {sig[:, s].mean():.4f} "
                f"std {sig[:, s].std():.2e}"
            )
    if rows[0]["f_theta"] is not None:
        ft = np.array([row["f_theta"] for row in rows], dtype=float)
        print(f"f_theta: mean {ft.mean():.4f} min {ft.min():.4f}")
    if rows[0]["f_s"] is not None:
        fs = np.array([row["f_s"] for row in rows], dtype=float)
        print(f"f_s: mean {fs.mean():.4f} min {fs.min():.4f}")
    print(f"wrote {out / 'trials.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arxmix",
        description="Identify piecewise ARX models with a gated expert mixture.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, restarts=False):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--preset", help="named preset (e.g. 'benchmark')")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out-dir", required=True, help="output directory")
        if restarts:
            p.add_argument(
                "--restarts", type=int, default=None, help="restart count override"
            )

    p_gen = sub.add_parser("generate", help="simulate benchmark data files")
    add_common(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_fit = sub.add_parser("fit", help="fit a mixture to a training CSV")
    add_common(p_fit, restarts=True)
    p_fit.add_argument("--train", required=True, help="training series CSV")
    p_fit.set_defaults(func=cmd_fit)

    p_eval = sub.add_parser("evaluate", help="score a model file on a test CSV")
    p_eval.add_argument("--model", required=True, help="model JSON file")
    p_eval.add_argument("--test", required=True, help="test series CSV")
    p_eval.add_argument(
        "--true-thetas", default=None, help="JSON file with true coefficients"
    )
    p_eval.add_argument(
        "--weighted",
        action="store_true",
        help="probability-weighted predictions instead of hard assignment",
    )
    p_eval.add_argument("--out-dir", required=True, help="output directory")
    p_eval.set_defaults(func=cmd_evaluate)

    p_tri = sub.add_parser("trials", help="repeat generate+fit+evaluate")
    add_common(p_tri, restarts=True)
    p_tri.add_argument("--n-trials", type=int, required=True)
    p_tri.set_defaults(func=cmd_trials)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error ({exc.category}): {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error (config): {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (DataError, ModelFileError, ValueError) as exc:
        print(f"error (data): {exc}", file=sys.stderr)
        return USAGE_EXIT
    except FitError as exc:
        print(f"error (fit): {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    except OSError as exc:
        print(f"error (io): {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
