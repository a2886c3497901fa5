"""File formats: graph text files, binary datasets and checkpoints, CSV exports.

All binary integers are little-endian u32 and all arrays little-endian f64 in
row-major order. JSON blocks are written with sorted keys so identical inputs
give identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path
from typing import Iterable, List, Mapping

import numpy as np

from .dataset import EnsembleDataset
from .fuzzy_graph import FuzzyDiGraph
from .nn.model import CoEDLayerParams, CoEDModel

GRAPH_HEADER = "FUZZYGRAPH"
GRAPH_VERSION = "v1"
CHECKPOINT_MAGIC = b"COED1"
DATASET_MAGIC = b"COEDDS1"


class FormatError(ValueError):
    """Raised on malformed or incompatible files."""


# -- helpers -------------------------------------------------------------------


def _u32(n: int) -> bytes:
    return struct.pack("<I", n)


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("unexpected end of file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def f64(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)

    def json(self):
        return json.loads(self.take(self.u32()).decode("utf-8"))

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes")


def _json_block(obj) -> bytes:
    raw = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _u32(len(raw)) + raw


def graph_to_dict(graph: FuzzyDiGraph) -> dict:
    return {
        "n_nodes": graph.n_nodes,
        "src": graph.src.tolist(),
        "dst": graph.dst.tolist(),
        "theta": graph.theta.tolist(),
        "positions": None if graph.positions is None else np.asarray(graph.positions).tolist(),
    }


def graph_from_dict(d: Mapping) -> FuzzyDiGraph:
    pos = d.get("positions")
    return FuzzyDiGraph(int(d["n_nodes"]), np.array(d["src"], dtype=np.int64),
                        np.array(d["dst"], dtype=np.int64), np.array(d["theta"], dtype=float),
                        None if pos is None else np.array(pos, dtype=float))


# -- graph text format -----------------------------------------------------------


def format_graph(graph: FuzzyDiGraph) -> str:
    lines = [f"{GRAPH_HEADER} {GRAPH_VERSION} {graph.n_nodes} {graph.n_edges}"]
    lines += [f"{i} {j} {t!r}" for i, j, t in graph.edges]
    if graph.positions is not None:
        lines += [f"POS {k} {float(x)!r} {float(y)!r}" for k, (x, y) in enumerate(graph.positions)]
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> FuzzyDiGraph:
    """Parse the text graph format; blank lines and ``#`` comments are skipped."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or rows[0][:2] != [GRAPH_HEADER, GRAPH_VERSION] or len(rows[0]) != 4:
        raise FormatError(f"expected header '{GRAPH_HEADER} {GRAPH_VERSION} <n_nodes> <n_edges>'")
    try:
        n, e = int(rows[0][2]), int(rows[0][3])
        edges, pos = [], {}
        for r in rows[1:]:
            if r[0] == "POS":
                if len(r) != 4:
                    raise FormatError("POS lines need an index and two coordinates")
                pos[int(r[1])] = (float(r[2]), float(r[3]))
            else:
                if len(r) != 3:
                    raise FormatError(f"bad edge line: {' '.join(r)}")
                edges.append((int(r[0]), int(r[1]), float(r[2])))
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(str(exc)) from exc
    if len(edges) != e:
        raise FormatError(f"header declares {e} edges, found {len(edges)}")
    positions = None
    if pos:
        if sorted(pos) != list(range(n)):
            raise FormatError("POS lines must cover every node exactly once")
        positions = np.array([pos[k] for k in range(n)], dtype=float)
    return FuzzyDiGraph.from_edges(n, edges, positions=positions)


def write_graph(path, graph: FuzzyDiGraph):
    Path(path).write_text(format_graph(graph))


def read_graph(path) -> FuzzyDiGraph:
    return parse_graph(Path(path).read_text())


# -- dataset ---------------------------------------------------------------------


def dataset_to_bytes(ds: EnsembleDataset) -> bytes:
    S, N, D = ds.features.shape
    meta = {
        "format": 1,
        "graph": graph_to_dict(ds.graph),
        "graph_hash": ds.graph.graph_hash(),
        "n_samples": S,
        "n_nodes": N,
        "feature_dim": D,
        "target_dim": ds.target_dim,
        "split": [str(s) for s in ds.split],
        "generator": ds.metadata,
    }
    parts = [DATASET_MAGIC, _json_block(meta)]
    for k in range(S):
        parts.append(_f64(ds.features[k]))
        parts.append(_f64(ds.targets[k]))
        parts.append(ds.masks[k].astype(np.uint8).tobytes())
    return b"".join(parts)


def dataset_from_bytes(data: bytes) -> EnsembleDataset:
    r = _Reader(data)
    if r.take(len(DATASET_MAGIC)) != DATASET_MAGIC:
        raise FormatError("not a dataset file (bad magic)")
    meta = r.json()
    S, N, D, T = meta["n_samples"], meta["n_nodes"], meta["feature_dim"], meta["target_dim"]
    x = np.empty((S, N, D))
    y = np.empty((S, N, T))
    m = np.empty((S, N), dtype=bool)
    for k in range(S):
        x[k] = r.f64((N, D))
        y[k] = r.f64((N, T))
        raw = np.frombuffer(r.take(N), dtype=np.uint8)
        if np.any(raw > 1):
            raise FormatError("mask bytes must be 0 or 1")
        m[k] = raw.astype(bool)
    r.done()
    graph = graph_from_dict(meta["graph"])
    if graph.graph_hash() != meta["graph_hash"]:
        raise FormatError("embedded graph does not match its hash")
    return EnsembleDataset(graph, x, y, m, np.array(meta["split"], dtype=object), meta["generator"])


def write_dataset(path, ds: EnsembleDataset):
    Path(path).write_bytes(dataset_to_bytes(ds))


def read_dataset(path) -> EnsembleDataset:
    return dataset_from_bytes(Path(path).read_bytes())


def dataset_csv(ds: EnsembleDataset) -> str:
    """Long-format CSV: sample, split, node, mask, x0.., y0.."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample", "split", "node", "mask"]
               + [f"x{d}" for d in range(ds.feature_dim)] + [f"y{d}" for d in range(ds.target_dim)])
    for k in range(len(ds)):
        for v in range(ds.n_nodes):
            w.writerow([k, ds.split[k], v, int(ds.masks[k, v])]
                       + [repr(float(a)) for a in ds.features[k, v]]
                       + [repr(float(a)) for a in ds.targets[k, v]])
    return buf.getvalue()


# -- checkpoint ------------------------------------------------------------------


def checkpoint_to_bytes(model: CoEDModel) -> bytes:
    """Serialize weights, phases and the model options.

    Layout: magic, u32 layer count, per layer ``u32 d_in, u32 d_out`` then
    ``w_self, w_in, w_out, bias``; phase block ``u8 layerwise, u32 n_sets,
    u32 n_edges`` then raw phases; finally a u32-length JSON block with the
    remaining options and the graph.
    """
    parts = [CHECKPOINT_MAGIC, _u32(model.n_layers)]
    for layer in model.layers:
        d_in, d_out = layer.shape
        parts += [_u32(d_in), _u32(d_out), _f64(layer.w_self), _f64(layer.w_in),
                  _f64(layer.w_out), _f64(layer.bias)]
    n_sets, E = model.raw_phases.shape
    parts += [bytes([int(model.layerwise_theta)]), _u32(n_sets), _u32(E), _f64(model.raw_phases)]
    opts = {
        "alpha": model.alpha,
        "activation": model.activation,
        "use_self_feature": model.use_self_feature,
        "final_activation": model.final_activation,
        "epsilon": model.epsilon,
        "normalization": model.normalization,
        "fixed_theta": None if model.fixed_theta is None else model.fixed_theta.tolist(),
        "graph_hash": model.graph.graph_hash(),
        "graph": graph_to_dict(model.graph),
    }
    parts.append(_json_block(opts))
    return b"".join(parts)


def checkpoint_from_bytes(data: bytes) -> CoEDModel:
    r = _Reader(data)
    if r.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    n_layers = r.u32()
    layers: List[CoEDLayerParams] = []
    for _ in range(n_layers):
        d_in, d_out = r.u32(), r.u32()
        ws, wi, wo = (r.f64((d_in, d_out)) for _ in range(3))
        layers.append(CoEDLayerParams(ws, wi, wo, r.f64((1, d_out))))
    layerwise = bool(r.u8())
    n_sets, E = r.u32(), r.u32()
    raw = r.f64((n_sets, E))
    opts = r.json()
    r.done()
    graph = graph_from_dict(opts["graph"])
    if graph.graph_hash() != opts["graph_hash"]:
        raise FormatError("embedded graph does not match its hash")
    if E != graph.n_edges:
        raise FormatError("phase count does not match the graph")
    if n_sets != (n_layers if layerwise else 1):
        raise FormatError("phase set count inconsistent with the layerwise flag")
    dims = [layers[0].shape[0]] + [l.shape[1] for l in layers]
    model = CoEDModel(graph, dims, alpha=opts["alpha"], use_self_feature=opts["use_self_feature"],
                      activation=opts["activation"], final_activation=opts["final_activation"],
                      layerwise_theta=layerwise, epsilon=opts["epsilon"],
                      normalization=opts.get("normalization", "symmetric"))
    model.layers = layers
    model.raw_phases = raw.copy()
    if opts["fixed_theta"] is not None:
        model.fixed_theta = np.array(opts["fixed_theta"], dtype=float)
    return model


def write_checkpoint(path, model: CoEDModel):
    Path(path).write_bytes(checkpoint_to_bytes(model))


def read_checkpoint(path) -> CoEDModel:
    return checkpoint_from_bytes(Path(path).read_bytes())


# -- CSV -------------------------------------------------------------------------


HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "patience_counter")


def history_csv(history: Iterable[Mapping]) -> str:
    """Loss history with full-precision floats; timing columns are left out."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_FIELDS)
    for h in history:
        w.writerow([int(h["epoch"]), repr(float(h["train_loss"])), repr(float(h["val_loss"])),
                    int(h["patience_counter"])])
    return buf.getvalue()


def read_history_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return [{"epoch": int(r["epoch"]), "train_loss": float(r["train_loss"]),
                 "val_loss": float(r["val_loss"]), "patience_counter": int(r["patience_counter"])}
                for r in csv.DictReader(fh)]
