"""Glue between configs, generators, models and reports."""

from __future__ import annotations

import time
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .dataset import EnsembleDataset
from .datagen import (generate_lattice_ensemble, grn_perturbation_ensemble, grn_random,
                      potential_field_phases, solenoidal_phases, triangular_lattice)
from .fuzzy_graph import FuzzyDiGraph, QUARTER_PI
from .nn.model import CoEDModel
from .nn.train import TrainConfig, evaluate, train
from .spectral import energy_curve, propagation_operator


def lattice_graph(cfg: ExperimentConfig) -> FuzzyDiGraph:
    """Triangular lattice carrying the ground-truth angles of ``cfg.lattice.field``."""
    base = triangular_lattice(cfg.lattice.rows, cfg.lattice.cols)
    if cfg.lattice.field == "solenoid":
        return solenoidal_phases(base)
    return potential_field_phases(base)


def build_dataset(cfg: ExperimentConfig) -> EnsembleDataset:
    seed = cfg.experiment.seed
    if cfg.experiment.task == "lattice":
        la = cfg.lattice
        return generate_lattice_ensemble(lattice_graph(cfg), la.n_realizations, la.feature_dim,
                                         la.hops, seed=seed)
    if cfg.experiment.task == "grn":
        g = cfg.grn
        system = grn_random(g.n_genes, g.edge_prob, seed=seed)
        return grn_perturbation_ensemble(system, g.n_doubles, seed=seed, steps=g.steps,
                                         post_steps=g.post_steps, dt=g.dt)
    raise ValueError("task = custom reads its dataset from experiment.dataset")


def build_model(cfg: ExperimentConfig, dataset: EnsembleDataset, seed: Optional[int] = None) -> CoEDModel:
    m = cfg.model
    dims = [dataset.feature_dim] + [m.hidden] * (m.layers - 1) + [dataset.target_dim]
    return CoEDModel(dataset.graph, dims, alpha=m.alpha, use_self_feature=m.use_self_feature,
                     activation=m.activation, layerwise_theta=m.layerwise_theta,
                     seed=cfg.experiment.seed if seed is None else seed)


def train_config(cfg: ExperimentConfig, seed: Optional[int] = None) -> TrainConfig:
    t = cfg.train
    return TrainConfig(batch_size=t.batch_size, patience=t.patience, max_epochs=t.max_epochs,
                       lr=t.lr, lr_theta=t.lr_theta,
                       seed=cfg.experiment.seed if seed is None else seed,
                       layerwise_theta=cfg.model.layerwise_theta, freeze_theta=t.freeze_theta)


def theta_recovery(model: CoEDModel, dataset: EnsembleDataset) -> Optional[dict]:
    """Pearson correlation between learned and true angles, if the dataset has them.

    The CoED map is unchanged by ``theta -> pi/2 - theta`` together with
    swapping the in and out weights, so the sign of the correlation is not
    identifiable; ``aligned_r`` is the correlation after picking the better of
    the two equivalent orientations.
    """
    true = dataset.metadata.get("true_theta")
    if true is None:
        return None
    true = np.asarray(true, dtype=float)
    out = {"layers": []}
    sets = range(model.raw_phases.shape[0]) if model.fixed_theta is None else [0]
    for k in sets:
        th = model.theta(k)
        if np.std(th) == 0 or np.std(true) == 0:
            r = 0.0
        else:
            r = float(np.corrcoef(th, true)[0, 1])
        out["layers"].append({"pearson_r": r, "aligned_r": abs(r)})
    out["pearson_r"] = out["layers"][0]["pearson_r"]
    out["aligned_r"] = out["layers"][0]["aligned_r"]
    return out


def split_losses(model: CoEDModel, dataset: EnsembleDataset) -> dict:
    return {s: (evaluate(model, dataset, s) if len(dataset.indices(s)) else None)
            for s in ("train", "val", "test")}


def run_training(cfg: ExperimentConfig, dataset: EnsembleDataset, seed: Optional[int] = None,
                 log=None):
    """Train one model per ``cfg``; returns ``(TrainResult, report dict)``."""
    model = build_model(cfg, dataset, seed)
    tc = train_config(cfg, seed)
    t0 = time.perf_counter()
    result = train(model, dataset, tc, log=log)
    wall = time.perf_counter() - t0
    secs = [h["seconds"] for h in result.history]
    report = {
        "losses": split_losses(result.model, dataset),
        "best_epoch": result.best_epoch,
        "epochs_run": len(result.history),
        "theta_recovery": None if tc.freeze_theta else theta_recovery(result.model, dataset),
        "wall_seconds": wall,
        "epoch_seconds_mean": float(np.mean(secs)) if secs else 0.0,
        "n_parameters": result.model.n_parameters(),
        "n_nodes": dataset.n_nodes,
        "n_edges": dataset.graph.n_edges,
        "freeze_theta": tc.freeze_theta,
        "seed": tc.seed,
    }
    return result, report


def dirichlet_curves(graph: FuzzyDiGraph, features, n_convolutions: int = 10) -> dict:
    """Energy after 0..n propagations with the undirected and the directed operator.

    Both curves use the in-propagation matrix and are measured with the
    undirected energy, so they differ only through the edge directions.
    """
    undirected = graph.with_theta(np.full(graph.n_edges, QUARTER_PI))
    f = np.asarray(features, dtype=float)
    return {
        "undirected": energy_curve(f, undirected, propagation_operator(undirected), n_convolutions),
        "learned": energy_curve(f, graph, propagation_operator(graph), n_convolutions,
                                energy_graph=undirected),
    }
