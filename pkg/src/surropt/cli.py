"""Command-line harness: sample, train, optimize, validate, benchmark.

Each subcommand reads a flat ``key = value`` config file (strict: unknown
keys are rejected) and writes CSV/text artifacts into ``--out``.  Exit
codes: 0 success, 2 convergence failure, 1 usage or I/O error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
import traceback

import numpy as np

from .problems import ProblemSpec, available_problems, benchmark_optimum, problem_spec
from .sampling import Dataset, SamplingConfig, adaptive_sample, lhs
from .sqp import SqpConfig, SqpResult, solve
from .surrogate import MlpSurrogate, TrainConfig, deserialize, serialize, train_mlp


class ConfigError(Exception):
    pass


# Schema: key -> (converter, target config section).  A single flat namespace
# keeps config files short; sections are only used to route values into the
# right dataclass.
def _hidden_dims(s: str) -> tuple[int, ...]:
    dims = tuple(int(v) for v in s.replace(",", " ").split())
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"bad hidden_dims: {s!r}")
    return dims


def _bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes"):
        return True
    if s.lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"bad boolean: {s!r}")


_SCHEMA = {
    "problem": (str, "run"),
    "n_trials": (int, "run"),
    "seed_base": (int, "run"),
    "validate": (_bool, "run"),
    "start": (str, "run"),  # "upper" | "lower" | comma-separated coordinates
    "budget": (int, "sampling"),
    "initial_fraction": (float, "sampling"),
    "bound_expansion": (float, "sampling"),
    "subregion_fraction": (float, "sampling"),
    "rounds": (int, "sampling"),
    "candidate_factor": (int, "sampling"),
    "hidden_dims": (_hidden_dims, "training"),
    "epochs": (int, "training"),
    "batch_size": (int, "training"),
    "learning_rate": (float, "training"),
    "validation_fraction": (float, "training"),
    "early_stop_patience": (int, "training"),
    "weight_decay": (float, "training"),
    "target_transform": (str, "training"),
    "transform_shift": (float, "training"),
    "eta": (float, "sqp"),
    "tol": (float, "sqp"),
    "beta": (float, "sqp"),
    "n_max": (int, "sqp"),
    "delta": (float, "sqp"),
    "max_iterations": (int, "sqp"),
    "hessian_mode": (str, "sqp"),
}


def parse_config(text: str) -> dict:
    """Parse ``key = value`` lines into {section: {key: value}}.

    Unknown keys fail fast; there are no silent defaults for typos.
    """
    out: dict[str, dict] = {"run": {}, "sampling": {}, "training": {}, "sqp": {}}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {ln}: unknown config key {key!r}")
        conv, section = _SCHEMA[key]
        if key in out[section]:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        try:
            out[section][key] = conv(val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {ln}: bad value for {key!r}: {exc}") from exc
    return out


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _sampling_config(cfg: dict, seed: int) -> SamplingConfig:
    kw = dict(cfg["sampling"])
    if "budget" not in kw:
        raise ConfigError("config must set 'budget'")
    return SamplingConfig(rng_seed=seed, **kw)


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(seed=seed, **cfg["training"])


def _sqp_config(cfg: dict) -> SqpConfig:
    return SqpConfig(**cfg["sqp"])


def _start_point(spec: ProblemSpec, cfg: dict):
    """Resolve the SQP starting point; default is the upper-bound corner."""
    raw = cfg["run"].get("start", "upper")
    if raw == "upper":
        return None  # solver default
    if raw == "lower":
        return spec.bounds_lo.astype(float).copy()
    x0 = np.array([float(v) for v in raw.replace(",", " ").split()])
    if x0.size != spec.dim_independent:
        raise ConfigError(
            f"start has {x0.size} coordinates, problem has {spec.dim_independent}"
        )
    return x0


def _require_problem(cfg: dict) -> ProblemSpec:
    pid = cfg["run"].get("problem")
    if not pid:
        raise ConfigError("config must set 'problem'")
    if pid not in available_problems():
        raise ConfigError(f"unknown problem {pid!r}; known: {', '.join(available_problems())}")
    return problem_spec(pid)


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _r2(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    ss_tot = float(np.sum((y_true - np.mean(y_true)) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(args) -> int:
    cfg = load_config(args.config)
    spec = _require_problem(cfg)
    scfg = _sampling_config(cfg, args.seed)
    data, model = adaptive_sample(spec, scfg)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "dataset.csv"), data.to_csv())
    report = [
        f"problem = {spec.id}",
        f"budget = {scfg.budget}",
        f"seed = {args.seed}",
        f"evaluations = {len(data)}",
        f"feasible_fraction = {data.feasible_fraction:.6f}",
        f"classifier = {'yes' if model is not None else 'no'}",
        f"fallback_global = {int(data.fallback_global)}",
    ]
    _write(os.path.join(args.out, "sampling_report.txt"), "\n".join(report) + "\n")
    print(f"wrote {len(data)} rows, feasible fraction {data.feasible_fraction:.4f}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else parse_config("")
    with open(args.data, encoding="utf-8") as fh:
        data = Dataset.from_csv(fh.read())
    mask = data.valid.astype(bool)
    X, Y = data.X[mask], data.Y[mask]
    if len(X) < 20:
        print("error: dataset too small (need >= 20 valid rows)", file=sys.stderr)
        return 1
    # hold out a test split before training so R2 is honest
    rng = np.random.default_rng(args.seed)
    perm = rng.permutation(len(X))
    n_test = max(1, int(round(0.15 * len(X))))
    test_idx, fit_idx = perm[:n_test], perm[n_test:]
    tcfg = _train_config(cfg, args.seed)
    m = train_mlp((X[fit_idx], Y[fit_idx]), tcfg)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "model.txt"), serialize(m))
    lines = [f"rows_fit = {len(fit_idx)}", f"rows_test = {n_test}"]
    pred_fit = m.predict_batch(X[fit_idx])
    pred_test = m.predict_batch(X[test_idx])
    for k in range(Y.shape[1]):
        mse_f = float(np.mean((pred_fit[:, k] - Y[fit_idx, k]) ** 2))
        mse_t = float(np.mean((pred_test[:, k] - Y[test_idx, k]) ** 2))
        lines.append(f"output{k}_train_mse = {mse_f:.6g}")
        lines.append(f"output{k}_test_mse = {mse_t:.6g}")
        lines.append(f"output{k}_train_r2 = {_r2(Y[fit_idx, k], pred_fit[:, k]):.6f}")
        lines.append(f"output{k}_test_r2 = {_r2(Y[test_idx, k], pred_test[:, k]):.6f}")
    _write(os.path.join(args.out, "train_metrics.txt"), "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def cmd_optimize(args) -> int:
    cfg = load_config(args.config) if args.config else parse_config("")
    spec = _require_problem(cfg) if cfg["run"].get("problem") else problem_spec(args.problem)
    with open(args.model, encoding="utf-8") as fh:
        m = deserialize(fh.read())
    if m.n_inputs != spec.dim_independent:
        print(
            f"error: model has {m.n_inputs} inputs, problem {spec.id} has "
            f"{spec.dim_independent}",
            file=sys.stderr,
        )
        return 1
    qcfg = _sqp_config(cfg)
    x0 = _start_point(spec, cfg)
    validate = cfg["run"].get("validate", args.validate)
    r = solve(spec, m, x0=x0, cfg=qcfg, validate=validate)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "trace.csv"), r.trace_csv())
    _write(os.path.join(args.out, "summary.txt"), _summary_text(spec, r))
    print(f"status={r.status} f_pred={r.f_pred:.6g}" + (
        f" f_true={r.f_true:.6g}" if r.f_true is not None else ""))
    return 0 if r.status.startswith("converged") else 2


def _summary_text(spec: ProblemSpec, r: SqpResult) -> str:
    lines = [
        f"problem = {spec.id}",
        f"status = {r.status}",
        "x_star = " + " ".join(f"{v:.17g}" for v in r.x),
        f"f_pred = {r.f_pred:.17g}",
        f"f_true = {'' if r.f_true is None else format(r.f_true, '.17g')}",
        f"iterations = {len(r.trace)}",
        f"validation_evaluations = {r.evaluations_used}",
    ]
    if spec.known_x is not None:
        lines.append(f"dist_to_optimum = {float(np.linalg.norm(r.x - spec.known_x)):.17g}")
    return "\n".join(lines) + "\n"


def cmd_validate(args) -> int:
    """Compare surrogate predictions against the true black box on fresh LHS points."""
    spec = problem_spec(args.problem)
    with open(args.model, encoding="utf-8") as fh:
        m = deserialize(fh.read())
    if m.n_inputs != spec.dim_independent:
        print("error: model/problem dimension mismatch", file=sys.stderr)
        return 1
    X = lhs(spec.bounds_lo, spec.bounds_hi, args.n, args.seed)
    ys, preds = [], []
    failures = 0
    for x in X:
        try:
            ys.append(spec.evaluate(x))
            preds.append(m.predict(x))
        except Exception:
            failures += 1
    Y, P = np.array(ys), np.array(preds)
    lines = [
        f"problem = {spec.id}",
        f"points = {args.n}",
        f"evaluations = {args.n}",
        f"failed_evaluations = {failures}",
    ]
    for k in range(Y.shape[1]):
        lines.append(f"output{k}_mse = {float(np.mean((P[:, k] - Y[:, k]) ** 2)):.6g}")
        lines.append(f"output{k}_r2 = {_r2(Y[:, k], P[:, k]):.6f}")
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "validation_report.txt"), "\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def run_trial(pid: str, cfg: dict, seed: int) -> dict:
    """One end-to-end trial: sample, train, optimize, validate the final point.

    Returns a plain dict so trials can cross process boundaries.
    """
    spec = problem_spec(pid)
    row = {"trial_seed": seed, "status": "error", "f_true": np.nan, "dist": np.nan,
           "evals_sampling": 0, "evals_validation": 0, "error": ""}
    try:
        data, _ = adaptive_sample(spec, _sampling_config(cfg, seed))
        m = train_mlp(data, _train_config(cfg, seed))
        r = solve(spec, m, x0=_start_point(spec, cfg), cfg=_sqp_config(cfg),
                  validate=cfg["run"].get("validate", True))
        row["status"] = r.status
        row["evals_sampling"] = len(data)
        row["evals_validation"] = r.evaluations_used
        if r.f_true is not None:
            row["f_true"] = r.f_true
        else:
            row["f_true"] = float(spec.evaluate(r.x)[0])
            row["evals_validation"] += 1
        if spec.known_x is not None:
            row["dist"] = float(np.linalg.norm(r.x - spec.known_x))
    except Exception as exc:  # a hard trial failure is recorded, run continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config)
    spec = _require_problem(cfg)
    n_trials = cfg["run"].get("n_trials", 1)
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    seed_base = cfg["run"].get("seed_base", args.seed)
    seeds = [seed_base + i for i in range(n_trials)]
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(run_trial, [spec.id] * n_trials, [cfg] * n_trials, seeds))
    else:
        rows = [run_trial(spec.id, cfg, s) for s in seeds]

    os.makedirs(args.out, exist_ok=True)
    hdr = "trial,seed,status,f_true,dist,evals_sampling,evals_validation,evals_total,error"
    lines = [hdr]
    for i, (s, row) in enumerate(zip(seeds, rows)):
        total = row["evals_sampling"] + row["evals_validation"]
        lines.append(
            f"{i},{s},{row['status']},{row['f_true']:.17g},{row['dist']:.17g},"
            f"{row['evals_sampling']},{row['evals_validation']},{total},"
            f"{row['error']}"
        )
    _write(os.path.join(args.out, "trials.csv"), "\n".join(lines) + "\n")

    ok = [r for r in rows if not r["error"]]
    f_vals = np.array([r["f_true"] for r in ok], dtype=float)
    totals = np.array([r["evals_sampling"] + r["evals_validation"] for r in ok], dtype=float)
    agg = [f"problem = {spec.id}", f"n_trials = {n_trials}", f"n_failed = {n_trials - len(ok)}"]
    if len(ok):
        agg += [
            f"f_true_median = {float(np.median(f_vals)):.17g}",
            f"f_true_q1 = {float(np.percentile(f_vals, 25)):.17g}",
            f"f_true_q3 = {float(np.percentile(f_vals, 75)):.17g}",
            f"f_true_min = {float(np.min(f_vals)):.17g}",
            f"f_true_max = {float(np.max(f_vals)):.17g}",
            f"evals_sampling_median = {float(np.median([r['evals_sampling'] for r in ok])):.17g}",
            f"evals_validation_median = {float(np.median([r['evals_validation'] for r in ok])):.17g}",
            f"evals_total_median = {float(np.median(totals)):.17g}",
        ]
        dists = np.array([r["dist"] for r in ok], dtype=float)
        if np.isfinite(dists).all():
            agg.append(f"dist_median = {float(np.median(dists)):.17g}")
    _write(os.path.join(args.out, "aggregates.txt"), "\n".join(agg) + "\n")
    print("\n".join(agg))
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="surropt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=".", help="output directory")

    sp = sub.add_parser("sample", help="adaptive sampling of a black-box problem")
    sp.add_argument("--config", required=True)
    common(sp)
    sp.set_defaults(fn=cmd_sample)

    sp = sub.add_parser("train", help="fit an MLP surrogate to a dataset CSV")
    sp.add_argument("--data", required=True, help="dataset CSV path")
    sp.add_argument("--config", default=None)
    common(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("optimize", help="run the SQP optimizer on a saved surrogate")
    sp.add_argument("--model", required=True, help="model file path")
    sp.add_argument("--problem", default=None, help="problem id (or set in config)")
    sp.add_argument("--config", default=None)
    sp.add_argument("--validate", action="store_true",
                    help="evaluate the true black box along the trace")
    common(sp)
    sp.set_defaults(fn=cmd_optimize)

    sp = sub.add_parser("validate", help="score a saved surrogate against the true black box")
    sp.add_argument("--model", required=True)
    sp.add_argument("--problem", required=True)
    sp.add_argument("--n", type=int, default=100, help="number of LHS test points")
    common(sp)
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("benchmark", help="repeated end-to-end trials with statistics")
    sp.add_argument("--config", required=True)
    sp.add_argument("--jobs", type=int, default=1, help="concurrent trials")
    common(sp)
    sp.set_defaults(fn=cmd_benchmark)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "problem", None) is None and args.command == "optimize" and args.config is None:
        print("error: optimize needs --problem or a config with 'problem'", file=sys.stderr)
        return 1
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        traceback.print_exc()
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
