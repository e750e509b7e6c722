"""Command-line entry point: ``graphbrackets <subcommand> ...``.

Every subcommand prints a JSON summary to stdout; file outputs go to the
paths given by ``--out`` / ``--out-dir``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import MODEL_KINDS, ConfigError, ExperimentConfig, GraphSpec, load_config

BRACKETS = ("hamiltonian", "gradient", "double_bracket", "metriplectic")
TRAJ_COLUMNS = ("t", "x1", "y1", "x2", "y2")


class CliError(Exception):
    pass


# --- helpers ---------------------------------------------------------------------

def _write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))


def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    over = {}
    for name in ("model", "epochs", "lr", "latent_dim", "hidden", "substeps", "horizon", "n_steps"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    attn = {}
    if getattr(args, "attention", None):
        attn["kind"] = args.attention
    if getattr(args, "positive_fn", None):
        attn["positive_fn"] = args.positive_fn
    if attn:
        try:
            over["attention"] = cfg.attention.with_(**attn)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if getattr(args, "rhs_scale", False):
        over["rhs_scale"] = True
    try:
        return cfg.replace(**over) if over else cfg
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# --- subcommands -----------------------------------------------------------------

def cmd_verify_structure(args) -> int:
    import jax

    from .attention import PreAttentionConfig, random_metric
    from .audit import structure_audit
    from .brackets import BracketSystem
    from .topology import erdos_renyi, load_graph

    rng = np.random.default_rng(args.seed)
    if args.graph:
        cx = load_graph(args.graph)
    else:
        # keep drawing until the graph has triangles and no isolated nodes
        for _ in range(100):
            cx = erdos_renyi(args.nodes, args.prob, rng)
            if cx.n_triangles and not (cx.degrees() == 0).any():
                break
        else:
            raise CliError("could not draw a triangle-containing graph; raise --prob")
    kinds = BRACKETS if args.bracket == "all" else (args.bracket.replace("-", "_"),)
    report = {"graph": {"nodes": cx.n_nodes, "edges": cx.n_edges, "triangles": cx.n_triangles},
              "seed": args.seed, "tolerance": args.tol, "brackets": {}}
    ok = True
    for i, kind in enumerate(kinds):
        system = BracketSystem(kind, PreAttentionConfig(args.attention), net_hidden=16)
        params = system.init_params(jax.random.PRNGKey(args.seed + i), args.features)
        metric = random_metric(cx, rng, args.spread) if args.random_metric else None
        t0 = time.perf_counter()
        res = structure_audit(system, params, cx, args.trials, metric=metric, seed=args.seed + i,
                              n_features=args.features)
        res["seconds"] = time.perf_counter() - t0
        res["max_violation"] = max(res["violations"].values())
        deg = [v for k, v in res["violations"].items() if k.startswith("degeneracy")]
        if deg:
            res["max_degeneracy_violation"] = max(deg)
        res["ok"] = res["max_violation"] <= args.tol
        ok &= res["ok"]
        report["brackets"][kind] = res
    report["ok"] = ok
    if args.out:
        _write_json(args.out, report)
    _emit(report)
    return 0 if ok or not args.strict else 1


def cmd_simulate_pendulum(args) -> int:
    from .pendulum import PendulumParams, simulate_pendulum

    kw = {}
    if args.k is not None:
        kw.update(k1=args.k, k2=args.k)
    if args.substeps is not None:
        kw["substeps"] = args.substeps
    prm = PendulumParams(T=args.T, n_snapshots=args.snapshots, **kw)
    traj = simulate_pendulum(prm)
    table = np.column_stack([traj.t, traj.xy])
    out = _write_csv(args.out, TRAJ_COLUMNS, table)
    E = traj.energy()
    summary = {"rows": len(table), "out": str(out), "seed": args.seed, "T": prm.T,
               "k1": prm.k1, "k2": prm.k2, "energy_initial": E[0], "energy_final": E[-1],
               "energy_max_increase": float(np.max(np.diff(E))) if len(E) > 1 else 0.0,
               "energy_drift": float(np.max(np.abs(E - E[0])))}
    if args.plot:
        from .plotting import plot_pendulum
        summary["figure"] = str(plot_pendulum(table, args.plot))
    if args.json:
        _write_json(args.json, summary)
    _emit(summary)
    return 0


def _pendulum_data(cfg: ExperimentConfig):
    from .pendulum import build_pendulum_graph, simulate_pendulum

    traj = simulate_pendulum(cfg.pendulum)
    return build_pendulum_graph(traj.xy, traj.t)


def _save_params(path, params) -> None:
    from jax.flatten_util import ravel_pytree

    flat, _ = ravel_pytree(params)
    np.savez(path, flat=np.asarray(flat))


def _load_params(path, template):
    import jax.numpy as jnp
    from jax.flatten_util import ravel_pytree

    _, unravel = ravel_pytree(template)
    flat = np.load(path)["flat"]
    return unravel(jnp.asarray(flat))


def _write_run_outputs(out_dir: Path, model, params, data, metrics, history=None) -> dict:
    from .models import energy_table, trajectory_table
    from .plotting import plot_energy, plot_loss, plot_pendulum

    true, pred = trajectory_table(model, params, data)
    rows = np.column_stack([true, pred[:, 1:]])
    header = TRAJ_COLUMNS + tuple(f"{c}_pred" for c in TRAJ_COLUMNS[1:])
    files = {"trajectory": str(_write_csv(out_dir / "trajectory.csv", header, rows)),
             "trajectory_figure": str(plot_pendulum(true, out_dir / "trajectory.png", pred))}
    et = energy_table(model, params, data)
    if et is not None:
        files["energy"] = str(_write_csv(out_dir / "energy.csv", ("t", "E", "S"), et))
        S = et[:, 2] if model.kind == "metriplectic" else None
        files["energy_figure"] = str(plot_energy(et[:, 0], et[:, 1], out_dir / "energy.png", S))
    if history:
        files["loss_figure"] = str(plot_loss(history, out_dir / "loss.png"))
    return files


def cmd_train(args) -> int:
    from .models import train_trajectory

    cfg = _base_config(args)
    if args.log_every:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
        cfg = cfg.replace(log_every=args.log_every)
    data = _pendulum_data(cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = train_trajectory(cfg, data)
    metrics = dict(result.metrics)
    metrics["files"] = _write_run_outputs(out_dir, result.model, result.params, data, metrics, result.history)
    _save_params(out_dir / "params.npz", result.params)
    _write_json(out_dir / "config.json", cfg.to_dict())
    _write_csv(out_dir / "history.csv", ("epoch", "total_mae"), result.history)
    _write_json(out_dir / "metrics.json", metrics)
    _emit(metrics)
    return 0


def cmd_eval(args) -> int:
    import jax

    from .models import build_model, evaluate

    run = Path(args.run_dir)
    for name in ("config.json", "params.npz"):
        if not (run / name).is_file():
            raise FileNotFoundError(f"missing {run / name}")
    cfg = ExperimentConfig.from_dict(json.loads((run / "config.json").read_text()))
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    data = _pendulum_data(cfg)
    model = build_model(cfg, data)
    params = _load_params(run / "params.npz", model.init_params(jax.random.PRNGKey(0)))
    metrics = evaluate(model, params, data)
    metrics.update(model=cfg.model, run_dir=str(run))
    out_dir = Path(args.out_dir) if args.out_dir else run
    metrics["files"] = _write_run_outputs(out_dir, model, params, data, metrics)
    _write_json(out_dir / "eval.json", metrics)
    _emit(metrics)
    return 0


def _graph_spec(args, cfg: ExperimentConfig) -> GraphSpec:
    spec = cfg.graph
    over = {}
    for name in ("nodes", "classes", "features", "p_in", "p_out", "noise"):
        v = getattr(args, name, None)
        if v is not None:
            key = {"nodes": "n_nodes", "classes": "n_classes", "features": "n_features",
                   "noise": "feature_noise"}.get(name, name)
            over[key] = v
    if args.separable:
        over["separable"] = True
    import dataclasses
    return dataclasses.replace(spec, **over) if over else spec


def cmd_classify(args) -> int:
    from .classify import planted_partition, train_node_classifier

    cfg = _base_config(args)
    spec = _graph_spec(args, cfg)
    data = planted_partition(spec, np.random.default_rng(cfg.seed))
    res = train_node_classifier(cfg, data)
    metrics = dict(res.metrics)
    metrics["graph"] = {"nodes": data.complex.n_nodes, "edges": data.complex.n_edges,
                        "triangles": data.complex.n_triangles, "separable": spec.separable}
    if args.out_dir:
        _write_json(Path(args.out_dir) / "metrics.json", metrics)
    _emit(metrics)
    return 0


def cmd_depth_study(args) -> int:
    from .classify import depth_study, planted_partition

    cfg = _base_config(args)
    spec = _graph_spec(args, cfg)
    data = planted_partition(spec, np.random.default_rng(cfg.seed))
    models = BRACKETS if args.models == "all" else tuple(m.strip() for m in args.models.split(","))
    studies = [depth_study(cfg.replace(model=m), data, args.steps, args.repeats) for m in models]
    summary = {"seed": cfg.seed, "horizon": cfg.horizon, "studies": studies,
               "max_spread_points": max(s["spread_points"] for s in studies)}
    if args.out_dir:
        from .plotting import plot_depth
        out = Path(args.out_dir)
        rows = [(s["model"], r["n_steps"], r["test_accuracy"], r["train_accuracy"])
                for s in studies for r in s["rows"]]
        _write_csv(out / "depth.csv", ("model", "n_steps", "test_accuracy", "train_accuracy"), rows)
        summary["figure"] = str(plot_depth(studies, out / "depth.png"))
        _write_json(out / "metrics.json", summary)
    _emit(summary)
    return 0


# --- parser ----------------------------------------------------------------------

def _common(p, config=True):
    p.add_argument("--seed", type=int, default=None if config else 0, help="random seed (default 0)")
    if config:
        p.add_argument("--config", help="TOML or JSON experiment config")


def _classify_flags(p):
    p.add_argument("--model", choices=BRACKETS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--T", dest="horizon", type=float, help="integration horizon")
    p.add_argument("--nodes", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--features", type=int)
    p.add_argument("--p-in", dest="p_in", type=float)
    p.add_argument("--p-out", dest="p_out", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--separable", action="store_true")
    p.add_argument("--attention")
    p.add_argument("--positive-fn", dest="positive_fn", choices=("exp", "squareplus"))
    p.add_argument("--out-dir")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphbrackets", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-structure", help="randomized audit of bracket identities")
    _common(p, config=False)
    p.add_argument("--bracket", default="all", help="one of %s or 'all'" % ", ".join(BRACKETS))
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--graph", help="edge list or JSON graph file")
    p.add_argument("--nodes", type=int, default=12)
    p.add_argument("--prob", type=float, default=0.5)
    p.add_argument("--features", type=int, default=4)
    p.add_argument("--attention", default="scaled_dot_product")
    p.add_argument("--random-metric", action="store_true",
                   help="audit against random log-normal inner products instead of attention")
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-11)
    p.add_argument("--strict", action="store_true", help="exit 1 if any violation exceeds --tol")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_structure)

    p = sub.add_parser("simulate-pendulum", help="damped double pendulum ground truth")
    _common(p, config=False)
    p.add_argument("--T", type=float, default=50.0)
    p.add_argument("--snapshots", type=int, default=500)
    p.add_argument("--k", type=float, help="damping for both joints (default 0.1)")
    p.add_argument("--substeps", type=int)
    p.add_argument("--out", default="traj.csv")
    p.add_argument("--json")
    p.add_argument("--plot")
    p.set_defaults(func=cmd_simulate_pendulum)

    p = sub.add_parser("train", help="learn the pendulum trajectory")
    _common(p)
    p.add_argument("--model", choices=MODEL_KINDS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--substeps", type=int)
    p.add_argument("--attention")
    p.add_argument("--positive-fn", dest="positive_fn", choices=("exp", "squareplus"))
    p.add_argument("--rhs-scale", action="store_true")
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--out-dir", default="runs/train")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="re-evaluate a saved training run")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("classify", help="node classification on a planted-partition graph")
    _common(p)
    _classify_flags(p)
    p.add_argument("--steps", dest="n_steps", type=int)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("depth-study", help="accuracy versus step count at fixed T")
    _common(p)
    _classify_flags(p)
    p.set_defaults(model=None)
    p.add_argument("--models", default="all")
    p.add_argument("--steps", type=lambda s: [int(v) for v in s.split(",")], default=[1, 2, 4, 8, 16])
    p.add_argument("--repeats", type=int, default=1, help="seeds averaged per step count")
    p.set_defaults(func=cmd_depth_study)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FileNotFoundError, ConfigError, CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
