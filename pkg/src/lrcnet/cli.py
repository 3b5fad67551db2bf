"""Command-line front door: data generation, training, checks, reports.

Subcommands
-----------
gen-data   write ground-truth trajectory CSVs plus a manifest
train      run a config-driven training experiment (multi-seed capable)
grad-check compare backpropagated gradients against finite differences
lipschitz  certify a checkpoint's Lipschitz constant (optionally measure it)
compare    train several models on several tasks and tabulate mean +/- std

Exit codes: 0 success, 1 check or criterion failure, 2 usage/config error.
Config files are JSON validated against the schemas below before any work
starts; unknown keys are rejected and errors name the offending field path.
Relative output paths resolve under $LRCNET_OUT_ROOT when it is set.  All
commands are deterministic for a fixed config and seed (wall-time fields
aside), so reruns reproduce their outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis, autodiff, models, solvers, tasks, train

__all__ = ["main", "entrypoint", "TRAIN_SCHEMA", "GRAD_CHECK_SCHEMA"]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

_MODEL_KINDS = sorted(models.MODEL_KINDS)

_SOLVER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scheme": {"enum": [solvers.EULER, solvers.HYBRID, solvers.RK4]},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "unfoldings": {"type": "integer", "minimum": 1},
    },
}

_MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": _MODEL_KINDS},
        "m": {"type": "integer", "minimum": 1},
        "elastance_kind": {"enum": ["asymmetric", "symmetric"]},
        "mlp_hidden": {"type": "array", "items": {"type": "integer", "minimum": 1}},
    },
}

_TRAINING_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "iterations": {"type": "integer", "minimum": 0},
        "batch_size": {"type": "integer", "minimum": 1},
        "window": {"type": "integer", "minimum": 2},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "optimizer": {"enum": ["adam", "adamw"]},
        "weight_decay": {"type": "number", "minimum": 0},
        "schedule": {"enum": ["cosine", "constant"]},
        "loss": {"enum": ["mse", "mean_l2"]},
        "eval_every": {"type": "integer", "minimum": 1},
        "protocol": {"enum": ["auto", "delay", "anchored"]},
        "transform": {"enum": ["none", "standardize", "log-standardize"]},
        "delta": {"type": "integer", "minimum": 1},
        "jitter": {"type": "number", "minimum": 0},
        "horizons": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "minItems": 3,
                "maxItems": 3,
                "prefixItems": [
                    {"type": "integer", "minimum": 1},
                    {"type": "integer", "minimum": 1},
                    {"type": "boolean"},
                ],
            },
        },
        "early_frac": {"type": "number", "minimum": 0, "maximum": 1},
        "early_cut": {"type": "integer", "minimum": 1},
        "ema": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "e_l_init": {"type": "number"},
    },
}

TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["task", "model", "out_dir"],
    "properties": {
        "task": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"type": "string"},
                "n_samples": {"type": "integer", "minimum": 2},
                "data": {"type": "string"},
            },
        },
        "model": _MODEL_SCHEMA,
        "solver": _SOLVER_SCHEMA,
        "training": _TRAINING_SCHEMA,
        "seeds": {"type": "array", "minItems": 1,
                  "items": {"type": "integer", "minimum": 0}},
        "out_dir": {"type": "string"},
    },
}

GRAD_CHECK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": _MODEL_KINDS},
                "m": {"type": "integer", "minimum": 1, "maximum": 8},
                "n": {"type": "integer", "minimum": 0, "maximum": 3},
                "k_out": {"type": "integer", "minimum": 1, "maximum": 4},
                "elastance_kind": {"enum": ["asymmetric", "symmetric"]},
                "mlp_hidden": {"type": "array",
                               "items": {"type": "integer", "minimum": 1,
                                         "maximum": 8}},
            },
        },
        "solver": _SOLVER_SCHEMA,
        "sequence": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "T": {"type": "integer", "minimum": 1, "maximum": 16},
                "batch": {"type": "integer", "minimum": 1, "maximum": 4},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "corrupt": {"type": "string"},
    },
}


def _usage_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _out_path(raw: str) -> Path:
    """Resolve an output path, honoring the LRCNET_OUT_ROOT override."""
    p = Path(raw)
    root = os.environ.get("LRCNET_OUT_ROOT")
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def _load_config(path: str, schema: dict) -> tuple[dict | None, str | None]:
    """Read and validate a JSON config; returns (config, error message)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        return None, f"cannot read config {path}: {exc}"
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        return None, f"config {path} is not valid JSON: {exc}"
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: e.json_path)
    if errors:
        first = errors[0]
        return None, f"config {path}: {first.json_path}: {first.message}"
    return doc, None


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _finite_or_none(x: float):
    return float(x) if np.isfinite(x) else None


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args) -> int:
    names = sorted(tasks.SYSTEMS)
    if args.system == "all":
        wanted = names
    elif args.system in tasks.SYSTEMS:
        wanted = [args.system]
    else:
        return _usage_error(
            f"unknown system {args.system!r}; valid names: {', '.join(names)} "
            "(or 'all')")
    out_dir = _out_path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _usage_error(f"cannot create output directory {out_dir}: {exc}")
    entries = []
    for name in wanted:
        system = tasks.SYSTEMS[name]
        traj = tasks.generate(name, n_samples=args.samples)
        csv_path = out_dir / f"{name}.csv"
        try:
            tasks.save_trajectory(csv_path, traj)
        except OSError as exc:
            return _usage_error(f"cannot write {csv_path}: {exc}")
        entries.append({
            "file": csv_path.name,
            "system": name,
            "n_samples": args.samples,
            "x0": list(np.asarray(system.x0, dtype=float)),
            "t_span": list(system.t_span),
            "rtol": 1e-9,
            "atol": 1e-12,
        })
        print(f"wrote {csv_path} ({args.samples} rows)")
    tasks.write_manifest(out_dir / "manifest.json", entries)
    print(f"wrote {out_dir / 'manifest.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _resolve_train_config(doc: dict) -> tuple[str, str, train.OdeTrainConfig, list[int]]:
    task_name = doc["task"]["name"]
    model = doc.get("model", {})
    kind = model["kind"]
    fields: dict = {}
    fields.update(doc.get("training", {}))
    if "horizons" in fields:
        fields["horizons"] = tuple(tuple(h) for h in fields["horizons"])
    solver = doc.get("solver", {})
    if "scheme" in solver:
        fields["scheme"] = solver["scheme"]
    if "dt" in solver:
        fields["dt"] = solver["dt"]
    if "unfoldings" in solver:
        fields["unfoldings"] = solver["unfoldings"]
    if "m" in model:
        fields["m"] = model["m"]
    if "elastance_kind" in model:
        fields["elastance_kind"] = model["elastance_kind"]
    if "mlp_hidden" in model:
        fields["mlp_hidden"] = tuple(model["mlp_hidden"])
    cfg = train.OdeTrainConfig(**fields)
    return task_name, kind, cfg, list(doc.get("seeds", [0]))


def _train_one_seed(traj, kind: str, cfg: train.OdeTrainConfig, seed: int,
                    task_name: str, seed_dir: Path) -> dict:
    from dataclasses import replace
    res = train.train_ode_task(traj, kind, replace(cfg, seed=seed))
    seed_dir.mkdir(parents=True, exist_ok=True)
    metadata = {
        "task": task_name,
        "protocol": res.extra.get("protocol"),
        "transform": res.extra.get("transform"),
        "dt": res.solver.dt,
        "scheme": res.solver.scheme,
        "unfoldings": res.solver.unfoldings,
        "h_bound": [float(v) for v in res.h_bound],
        "final_eval": _finite_or_none(res.final_eval),
    }
    for key in ("mu", "sd"):
        if key in res.extra:
            metadata[key] = [float(v) for v in np.atleast_1d(res.extra[key])]
    models.save_checkpoint(seed_dir / "checkpoint.json", res.model,
                           seed=seed, metadata=metadata)
    train.write_loss_curve(seed_dir / "curve.csv", res.curve)
    metrics = {
        "schema": "lrcnet-metrics-v1",
        "task": task_name,
        "model_kind": kind,
        "seed": seed,
        "final_train": _finite_or_none(res.final_train),
        "final_eval": _finite_or_none(res.final_eval),
        "wall_time_ms": res.wall_time_ms,
    }
    _write_json(seed_dir / "metrics.json", metrics)
    return metrics


def cmd_train(args) -> int:
    doc, err = _load_config(args.config, TRAIN_SCHEMA)
    if err:
        return _usage_error(err)
    task_name = doc["task"]["name"]
    data_path = doc["task"].get("data")
    try:
        if data_path is not None:
            traj = tasks.load_trajectory(_out_path(data_path))
        else:
            traj = tasks.generate(task_name,
                                  n_samples=doc["task"].get("n_samples", 1000))
    except (KeyError, ValueError, OSError) as exc:
        return _usage_error(str(exc))
    try:
        task_name, kind, cfg, seeds = _resolve_train_config(doc)
    except (TypeError, ValueError) as exc:
        return _usage_error(f"config {args.config}: {exc}")

    out_dir = _out_path(doc["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    from dataclasses import asdict
    resolved = dict(doc)
    resolved["resolved_training"] = {
        k: (list(v) if isinstance(v, tuple) else v)
        for k, v in asdict(cfg).items()
    }
    _write_json(out_dir / "config.resolved.json", resolved)

    per_seed = []
    for seed in seeds:
        try:
            metrics = _train_one_seed(traj, kind, cfg, seed, task_name,
                                      out_dir / f"seed{seed}")
        except (ValueError, FloatingPointError) as exc:
            return _usage_error(f"seed {seed}: {exc}")
        per_seed.append(metrics)
        shown = metrics["final_eval"]
        print(f"seed {seed}: final_eval "
              f"{'n/a' if shown is None else format(shown, '.6g')}")
    evals = [m["final_eval"] for m in per_seed if m["final_eval"] is not None]
    trains = [m["final_train"] for m in per_seed if m["final_train"] is not None]
    aggregate = {
        "schema": "lrcnet-aggregate-v1",
        "task": task_name,
        "model_kind": kind,
        "n_seeds": len(seeds),
        "seeds": seeds,
        "final_eval": {
            "mean": float(np.mean(evals)) if evals else None,
            "std": float(np.std(evals)) if evals else None,
            "values": evals,
        },
        "final_train": {
            "mean": float(np.mean(trains)) if trains else None,
            "std": float(np.std(trains)) if trains else None,
            "values": trains,
        },
    }
    _write_json(out_dir / "aggregate.json", aggregate)
    if evals:
        print(f"aggregate over {len(seeds)} seed(s): final_eval "
              f"{np.mean(evals):.6g} +/- {np.std(evals):.3g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# grad-check


def cmd_grad_check(args) -> int:
    doc, err = _load_config(args.config, GRAD_CHECK_SCHEMA)
    if err:
        return _usage_error(err)
    model_doc = doc["model"]
    kind = model_doc["kind"]
    m = model_doc.get("m", 3)
    n = model_doc.get("n", 2)
    k_out = model_doc.get("k_out", 2)
    seq = doc.get("sequence", {})
    t_len = seq.get("T", 8)
    batch = seq.get("batch", 2)
    solver_doc = doc.get("solver", {})
    cfg = solvers.SolverConfig(scheme=solver_doc.get("scheme", solvers.EULER),
                               dt=solver_doc.get("dt", 0.1),
                               unfoldings=solver_doc.get("unfoldings", 1))
    rng = np.random.default_rng(doc.get("seed", 0))
    if kind == "node_mlp":
        model = models.make_model(kind, m, 0, m, rng,
                                  mlp_hidden=tuple(model_doc.get("mlp_hidden", (4,))))
        init_obs = rng.standard_normal((batch, m))
        forward_kwargs = dict(init_obs=init_obs, n_steps=t_len,
                              dts=float(cfg.dt))
    else:
        model = models.make_model(kind, m, n, k_out, rng,
                                  elastance_kind=model_doc.get("elastance_kind"))
        inputs = rng.standard_normal((batch, t_len, n))
        dts = rng.uniform(0.5, 1.5, size=(batch, t_len))
        forward_kwargs = dict(inputs=inputs, dts=dts)
    out, rec = models.forward_sequence(model, cfg, traced=True, **forward_kwargs)
    targets = rng.standard_normal(out.shape)
    _, out_grad = train.mse_loss(out, targets)
    got = models.backward_sequence(rec, out_grad)
    want = models.finite_difference_model_gradient(
        model, cfg, lambda o: train.mse_loss(o, targets)[0], **forward_kwargs)
    corrupt = doc.get("corrupt")
    if corrupt is not None:
        if corrupt not in got:
            return _usage_error(
                f"corrupt target {corrupt!r} is not a parameter; "
                f"have {sorted(got)}")
        got[corrupt] = got[corrupt] * 2.0 + 0.1

    rows = []
    worst_name, worst_err = "", 0.0
    for name in sorted(got):
        err_val, _ = autodiff.max_relative_error({name: got[name]},
                                                 {name: want[name]})
        rows.append((name, err_val))
        if err_val >= worst_err:
            worst_name, worst_err = name, err_val
    width = max(len(r[0]) for r in rows)
    print(f"{'parameter':<{width}}  max_rel_err  verdict")
    tol = 1e-4
    for name, err_val in rows:
        verdict = "ok" if err_val <= tol else "FAIL"
        print(f"{name:<{width}}  {err_val:.3e}    {verdict}")
    if worst_err > tol:
        print(f"FAIL: worst parameter {worst_name} at {worst_err:.3e} > {tol}",
              file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"PASS: worst parameter {worst_name} at {worst_err:.3e} <= {tol}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# lipschitz


def cmd_lipschitz(args) -> int:
    try:
        model, info = models.load_checkpoint(args.checkpoint)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _usage_error(f"cannot load checkpoint {args.checkpoint}: {exc}")
    metadata = info.get("metadata") or {}
    if args.h_bound is not None:
        h_bound = np.full(model.m, args.h_bound, dtype=np.float64)
    elif "h_bound" in metadata:
        h_bound = np.asarray(metadata["h_bound"], dtype=np.float64)
    else:
        return _usage_error(
            "no h_bound: pass --h-bound or use a checkpoint whose metadata "
            "records one")
    dt = args.dt if args.dt is not None else metadata.get("dt")
    if dt is None:
        return _usage_error("no dt: pass --dt or use a checkpoint whose "
                            "metadata records one")
    w_range = tuple(args.w_range) if args.w_range else None
    try:
        report = analysis.lipschitz_bound(model, dt=float(dt), h_bound=h_bound,
                                          w_range=w_range)
    except (TypeError, ValueError) as exc:
        return _usage_error(str(exc))
    except RuntimeError as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    doc = report.to_json_dict()
    doc["checkpoint"] = str(args.checkpoint)
    if args.empirical:
        cfg = solvers.SolverConfig(scheme=solvers.EULER, dt=float(dt),
                                   unfoldings=1)
        scale = 0.9 * float(np.min(h_bound)) if np.min(h_bound) > 0 else 1.0
        probes = analysis.make_probe_set(
            model.m, model.n, args.probes, args.radius,
            np.random.default_rng(args.seed), scale=scale)
        doc["empirical"] = analysis.empirical_lipschitz(model, cfg, probes)
        doc["empirical_protocol"] = {
            "probes": args.probes, "radius": args.radius, "seed": args.seed,
            "scale": scale,
        }
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.out:
        out = _out_path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
        print(f"wrote {out}")
    else:
        print(text)
    if args.csv:
        csv_path = _out_path(args.csv)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        new = not csv_path.exists()
        with open(csv_path, "a") as fh:
            if new:
                fh.write(analysis.LIPSCHITZ_CSV_HEADER + "\n")
            fh.write(report.csv_row(Path(args.checkpoint).stem) + "\n")
        print(f"appended {csv_path}")
    print(f"lambda = {report.lam:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    task_list = args.tasks.split(",") if args.tasks else list(train.ODE_BENCHMARK_TASKS)
    model_list = args.models.split(",")
    seeds = [int(s) for s in args.seeds.split(",")]
    for kind in model_list:
        if kind not in models.MODEL_KINDS:
            return _usage_error(f"unknown model kind {kind!r}; "
                                f"valid kinds: {', '.join(_MODEL_KINDS)}")
    data_dir = _out_path(args.data)
    trajectories = {}
    for task_name in task_list:
        if task_name not in tasks.SYSTEMS:
            return _usage_error(f"unknown task {task_name!r}; valid names: "
                                f"{', '.join(sorted(tasks.SYSTEMS))}")
        csv_path = data_dir / f"{task_name}.csv"
        if not csv_path.exists():
            return _usage_error(
                f"no data for {task_name!r} at {csv_path}; generate it first: "
                f"lrcnet gen-data {task_name} {data_dir}")
        try:
            trajectories[task_name] = tasks.load_trajectory(csv_path)
        except ValueError as exc:
            return _usage_error(str(exc))

    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for task_name in task_list:
        for kind in model_list:
            evals = []
            for seed in seeds:
                cfg = train.ode_benchmark_config(task_name, kind, seed=seed)
                if args.iterations is not None:
                    from dataclasses import replace
                    cfg = replace(cfg, iterations=args.iterations,
                                  eval_every=max(1, args.iterations // 2))
                res = train.train_ode_task(trajectories[task_name], kind, cfg)
                evals.append(res.final_eval)
                seed_dir = out_dir / task_name / kind / f"seed{seed}"
                seed_dir.mkdir(parents=True, exist_ok=True)
                models.save_checkpoint(
                    seed_dir / "checkpoint.json", res.model, seed=seed,
                    metadata={
                        "task": task_name,
                        "transform": res.extra.get("transform"),
                        "dt": res.solver.dt,
                        "h_bound": [float(v) for v in res.h_bound],
                        "final_eval": _finite_or_none(res.final_eval),
                    })
                train.write_loss_curve(seed_dir / "curve.csv", res.curve)
            mean = float(np.mean(evals))
            std = float(np.std(evals))
            rows.append((task_name, kind, mean, std, len(seeds)))
            print(f"{task_name:14s} {kind:10s} {mean:.6g} +/- {std:.3g} "
                  f"(n={len(seeds)})", flush=True)
    lines = ["task,model,mean,std,n_seeds"]
    for task_name, kind, mean, std, n in rows:
        lines.append(f"{task_name},{kind},{mean:.17g},{std:.17g},{n}")
    results = out_dir / "results.csv"
    results.write_text("\n".join(lines) + "\n")
    print(f"wrote {results}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrcnet",
        description="liquid-cell toolkit: data generation, training, "
                    "gradient checks, Lipschitz certificates, comparisons")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write ground-truth trajectory CSVs")
    p.add_argument("system", help="system name or 'all'")
    p.add_argument("out_dir", help="output directory")
    p.add_argument("--samples", type=int, default=1000,
                   help="samples per trajectory (default 1000)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run a config-driven experiment")
    p.add_argument("config", help="path to a JSON experiment config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grad-check",
                       help="compare backprop against finite differences")
    p.add_argument("config", help="path to a JSON grad-check config")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("lipschitz",
                       help="certify a checkpoint's Lipschitz constant")
    p.add_argument("checkpoint", help="checkpoint JSON path")
    p.add_argument("--dt", type=float, default=None,
                   help="step size (default: checkpoint metadata)")
    p.add_argument("--h-bound", type=float, default=None,
                   help="scalar state envelope (default: checkpoint metadata)")
    p.add_argument("--w-range", type=float, nargs=2, default=None,
                   metavar=("LO", "HI"),
                   help="restrict elastance maxima to this preactivation range")
    p.add_argument("--empirical", action="store_true",
                   help="also measure the one-step Lipschitz quotient")
    p.add_argument("--probes", type=int, default=200,
                   help="probe pairs for --empirical (default 200)")
    p.add_argument("--radius", type=float, default=1e-3,
                   help="probe perturbation radius (default 1e-3)")
    p.add_argument("--seed", type=int, default=0, help="probe seed")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--csv", default=None, help="append a CSV summary row here")
    p.set_defaults(func=cmd_lipschitz)

    p = sub.add_parser("compare",
                       help="train models on tasks and tabulate mean +/- std")
    p.add_argument("--data", required=True,
                   help="directory of gen-data trajectory CSVs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tasks", default=None,
                   help="comma-separated task names (default: all six)")
    p.add_argument("--models", default="lrc,node_mlp",
                   help="comma-separated model kinds (default lrc,node_mlp)")
    p.add_argument("--seeds", default="0,1,2",
                   help="comma-separated seeds (default 0,1,2)")
    p.add_argument("--iterations", type=int, default=None,
                   help="override every recipe's iteration budget (smoke runs)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())
