"""Command-line harness: ``coed <generate|train|eval|spectral|wl|dirichlet>``.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io as cio
from .config import ConfigError, ExperimentConfig, TASKS, paper_scale, parse_config, task_defaults
from .datagen import IntegrationError
from .experiments import build_dataset, dirichlet_curves, lattice_graph, run_training
from .fuzzy_graph import GraphError, build_fuzzy_laplacian
from .nn.model import NonFiniteError
from .nn.train import TrainingDiverged, evaluate, per_sample_losses
from .spectral import SpectralError, eigendecompose, positional_encoding

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    """Bad combination of command-line inputs (reported as a config error)."""


# -- config resolution -----------------------------------------------------------


def resolve_config(args) -> ExperimentConfig:
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    task = getattr(args, "task", None)
    if task is None:
        probe = parse_config(text, base=ExperimentConfig()) if text else ExperimentConfig()
        task = probe.experiment.task
    cfg = parse_config(text, base=task_defaults(task)) if text else task_defaults(task)
    cfg.experiment = replace(cfg.experiment, task=task)
    if args.paper_scale:
        cfg = paper_scale(cfg)
    if args.seed is not None:
        cfg.experiment = replace(cfg.experiment, seed=args.seed)
    if args.out is not None:
        cfg.experiment = replace(cfg.experiment, out=args.out)
    if args.freeze_theta:
        cfg.train = replace(cfg.train, freeze_theta=True)
    if args.layerwise_theta:
        cfg.model = replace(cfg.model, layerwise_theta=True)
    return cfg.validate()


def _out_dir(cfg) -> Path:
    p = Path(cfg.experiment.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_dataset(cfg, explicit: Optional[str]):
    path = explicit or (cfg.experiment.dataset if cfg.experiment.task == "custom" else None)
    if path:
        return cio.read_dataset(path), str(path)
    default = Path(cfg.experiment.out) / "dataset.coedds"
    if default.exists():
        return cio.read_dataset(default), str(default)
    raise UsageError(f"no dataset given and {default} does not exist; run 'coed generate' first")


def _graph_source(args):
    """Graph from --graph, --checkpoint (learned angles) or a built-in lattice."""
    if getattr(args, "checkpoint", None):
        model = cio.read_checkpoint(args.checkpoint)
        return model.learned_graph(args.layer), model
    if getattr(args, "graph", None):
        return cio.read_graph(args.graph), None
    lattice = getattr(args, "lattice", None)
    if lattice:
        from .datagen import potential_field_phases, solenoidal_phases, triangular_lattice
        base = triangular_lattice(args.rows, args.cols)
        g = solenoidal_phases(base) if lattice == "solenoid" else potential_field_phases(base)
        return g, None
    raise UsageError("give --graph, --checkpoint or --lattice")


# -- commands --------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = resolve_config(args)
    if cfg.experiment.task == "custom":
        raise UsageError("task = custom has nothing to generate")
    out = _out_dir(cfg)
    ds = build_dataset(cfg)
    path = out / "dataset.coedds"
    cio.write_dataset(path, ds)
    if cfg.experiment.task == "lattice":
        cio.write_graph(out / "graph_true.fg", lattice_graph(cfg))
    cio.write_graph(out / "graph_input.fg", ds.graph)
    summary = {
        "task": cfg.experiment.task,
        "dataset": str(path),
        "n_samples": len(ds),
        "n_nodes": ds.n_nodes,
        "n_edges": ds.graph.n_edges,
        "feature_dim": ds.feature_dim,
        "target_dim": ds.target_dim,
        "split_sizes": ds.split_sizes(),
        "graph_hash": ds.graph.graph_hash(),
        "config": cfg.to_dict(),
    }
    _write_json(out / "dataset_summary.json", summary)
    if args.csv:
        (out / "dataset.csv").write_text(cio.dataset_csv(ds))
    print(json.dumps({k: summary[k] for k in ("dataset", "n_samples", "split_sizes")}))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(cfg)
    ds, ds_path = _load_dataset(cfg, args.dataset)
    name = args.name or ("model_frozen" if cfg.train.freeze_theta else "model")
    ckpt, hist, rep = out / f"{name}.coed", out / f"{name}_history.csv", out / f"{name}_report.json"
    log = (lambda h: print(f"epoch {h['epoch']:4d}  train {h['train_loss']:.6g}  "
                           f"val {h['val_loss']:.6g}  wait {h['patience_counter']}",
                           file=sys.stderr)) if args.verbose else None
    try:
        result, report = run_training(cfg, ds, log=log)
    except TrainingDiverged as exc:
        hist.write_text(cio.history_csv(exc.history))
        _write_json(rep, {"error": str(exc), "history": str(hist), "config_ini": cfg.to_ini(),
                          "config": cfg.to_dict()})
        raise
    cio.write_checkpoint(ckpt, result.model)
    hist.write_text(cio.history_csv(result.history))
    report.update({
        "dataset": ds_path,
        "checkpoint": str(ckpt),
        "history": str(hist),
        "epoch_seconds": [h["seconds"] for h in result.history],
        "config": cfg.to_dict(),
        "config_ini": cfg.to_ini(),
    })
    _write_json(rep, report)
    print(json.dumps({"report": str(rep), "losses": report["losses"],
                      "theta_recovery": None if report["theta_recovery"] is None else
                      {k: report["theta_recovery"][k] for k in ("pearson_r", "aligned_r")}}))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    model = cio.read_checkpoint(args.checkpoint)
    ds, ds_path = _load_dataset(cfg, args.dataset)
    if model.graph.graph_hash() != ds.graph.graph_hash():
        raise cio.FormatError("checkpoint and dataset were built on different graphs (hash mismatch)")
    splits = ["train", "val", "test"] if args.split == "all" else [args.split]
    metrics = {}
    for s in splits:
        if len(ds.indices(s)) == 0:
            raise UsageError(f"split {s!r} is empty")
        metrics[s] = evaluate(model, ds, s)
    if args.per_sample:
        with open(args.per_sample, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample", "split", "mse"])
            for s in splits:
                for k, v in zip(ds.indices(s), per_sample_losses(model, ds, s)):
                    w.writerow([int(k), s, repr(float(v))])
    result = {"checkpoint": args.checkpoint, "dataset": ds_path, "mse": metrics}
    if args.out is not None:
        _write_json(_out_dir(cfg) / f"eval_{args.split}.json", result)
    print(json.dumps(result))
    return EXIT_OK


def cmd_spectral(args) -> int:
    cfg = resolve_config(args)
    graph, _ = _graph_source(args)
    if not 1 <= args.k <= graph.n_nodes:
        raise UsageError(f"k must lie in [1, {graph.n_nodes}]")
    L = build_fuzzy_laplacian(graph)
    dec = eigendecompose(L)
    enc = positional_encoding(L, args.k)
    out = _out_dir(cfg)
    with open(out / "encoding.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["node_index"]
        for c in range(enc.k):
            head += [f"re_{c}", f"im_{c}", f"magnitude_{c}", f"phase_{c}"]
        w.writerow(head)
        for v in range(graph.n_nodes):
            row = [v]
            for c in range(enc.k):
                z = enc.matrix[v, c]
                row += [repr(float(z.real)), repr(float(z.imag)), repr(float(abs(z))),
                        repr(float(np.angle(z)))]
            w.writerow(row)
    lam = dec.eigenvalues
    report = {
        "eigenvalues": [[float(z.real), float(z.imag)] for z in lam],
        "form_residuals": [float(abs(z.real - z.imag)) for z in lam],
        "max_form_residual": dec.form_error(),
        "unitarity_error": dec.unitarity_error(),
        "residual": dec.residual,
        "encoding_eigenvalues": [[float(z.real), float(z.imag)] for z in enc.eigenvalues],
    }
    _write_json(out / "eigenvalues.json", report)
    print(json.dumps({"encoding": str(out / "encoding.csv"), "max_form_residual": report["max_form_residual"],
                      "unitarity_error": report["unitarity_error"]}))
    return EXIT_OK


def cmd_wl(args) -> int:
    from .wl import wl_isomorphism_test, wl_refine, weak_strong_pair
    cfg = resolve_config(args)
    if args.example == "weak-strong":
        g1, g2 = weak_strong_pair()
    else:
        if not args.graph1:
            raise UsageError("give --graph1 [--graph2] or --example weak-strong")
        g1 = cio.read_graph(args.graph1)
        g2 = cio.read_graph(args.graph2) if args.graph2 else None
    lines = []
    if g2 is None:
        for c in wl_refine(g1, args.form, args.max_iter):
            lines.append({"round": c.iteration, "colors": [list(h) for h in c.histogram]})
    else:
        v = wl_isomorphism_test(g1, g2, args.form, args.max_iter)
        for t, (h1, h2) in enumerate(v.rounds):
            lines.append({"round": t, "graph": 1, "colors": [list(h) for h in h1]})
            lines.append({"round": t, "graph": 2, "colors": [list(h) for h in h2]})
        lines.append({"verdict": v.verdict, "round": v.round, "form": args.form})
    text = "".join(json.dumps(ln) + "\n" for ln in lines)
    if args.out is not None:
        (_out_dir(cfg) / "wl.jsonl").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_dirichlet(args) -> int:
    cfg = resolve_config(args)
    graph, _ = _graph_source(args)
    if args.dataset:
        ds = cio.read_dataset(args.dataset)
        if ds.n_nodes != graph.n_nodes:
            raise UsageError("dataset and graph disagree in node count")
        idx = ds.indices(args.split)
        if len(idx) == 0:
            raise UsageError(f"split {args.split!r} is empty")
        feats = ds.features[idx[0]]
    else:
        rng = np.random.default_rng(cfg.experiment.seed)
        feats = rng.standard_normal((graph.n_nodes, args.feature_dim))
    curves = dirichlet_curves(graph, feats, args.n_convolutions)
    out = _out_dir(cfg)
    with open(out / "dirichlet.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hop", "undirected", "learned"])
        for h, (a, b) in enumerate(zip(curves["undirected"], curves["learned"])):
            w.writerow([h, repr(float(a)), repr(float(b))])
    print(json.dumps({"csv": str(out / "dirichlet.csv"),
                      "final": {"undirected": float(curves["undirected"][-1]),
                                "learned": float(curves["learned"][-1])}}))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="INI experiment config")
    p.add_argument("--seed", type=int, default=d(None), help="override experiment.seed")
    p.add_argument("--out", default=d(None), help="output directory (overrides experiment.out)")
    p.add_argument("--paper-scale", action="store_true", default=d(False),
                   help="use the published data sizes instead of desk scale")
    p.add_argument("--freeze-theta", action="store_true", default=d(False),
                   help="hold all angles at pi/4 (undirected control)")
    p.add_argument("--layerwise-theta", action="store_true", default=d(False),
                   help="learn one angle set per layer")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coed", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        return sp

    g = add("generate", "write a synthetic ensemble dataset")
    g.add_argument("--task", choices=[t for t in TASKS if t != "custom"])
    g.add_argument("--csv", action="store_true", help="also export dataset.csv")

    t = add("train", "train a model on a dataset")
    t.add_argument("--task", choices=TASKS)
    t.add_argument("--dataset", help="dataset file (default: OUT/dataset.coedds)")
    t.add_argument("--name", help="artifact base name (default: model or model_frozen)")
    t.add_argument("--verbose", "-v", action="store_true", help="log every epoch to stderr")

    e = add("eval", "evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset")
    e.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    e.add_argument("--per-sample", help="write per-sample losses to this CSV")

    s = add("spectral", "eigenvalues and positional encodings")
    _graph_args(s)
    s.add_argument("-k", type=int, default=1, help="number of encoding vectors")

    w = add("wl", "Weisfeiler-Leman refinement and isomorphism verdict")
    w.add_argument("--graph1")
    w.add_argument("--graph2")
    w.add_argument("--example", choices=["weak-strong"], help="use a built-in graph pair")
    w.add_argument("--form", default="weak", choices=["weak", "strong"])
    w.add_argument("--max-iter", type=int, default=100)

    d = add("dirichlet", "Dirichlet energy versus propagation count")
    _graph_args(d)
    d.add_argument("--dataset", help="take features from the first sample of --split")
    d.add_argument("--split", default="test")
    d.add_argument("--feature-dim", type=int, default=10, help="random features when no dataset")
    d.add_argument("--n-convolutions", type=int, default=10)
    return p


def _graph_args(p):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--graph", help="graph text file")
    src.add_argument("--checkpoint", help="use the learned angles of a checkpoint")
    src.add_argument("--lattice", choices=["potential", "solenoid"], help="built-in lattice")
    p.add_argument("--layer", type=int, default=0, help="angle set for layerwise checkpoints")
    p.add_argument("--rows", type=int, default=15)
    p.add_argument("--cols", type=int, default=15)


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval,
            "spectral": cmd_spectral, "wl": cmd_wl, "dirichlet": cmd_dirichlet}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError, GraphError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDiverged, NonFiniteError, IntegrationError, SpectralError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, cio.FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
