"""Experiment configuration: INI files with typed, validated sections.

Example::

    [experiment]
    task = lattice
    seed = 3

    [train]
    lr = 0.001

Unknown sections or keys are rejected so typos never pass silently.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

TASKS = ("lattice", "grn", "custom")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentSection:
    task: str = "lattice"
    seed: int = 0
    out: str = "runs"
    dataset: str = ""          # path, required for task = custom


@dataclass
class LatticeSection:
    rows: int = 15
    cols: int = 15
    n_realizations: int = 200
    feature_dim: int = 10
    hops: int = 10
    field: str = "potential"   # potential | solenoid


@dataclass
class GrnSection:
    n_genes: int = 50
    edge_prob: float = 0.12
    n_doubles: int = 250
    steps: int = 250
    post_steps: int = 100
    dt: float = 0.05


@dataclass
class ModelSection:
    layers: int = 4
    hidden: int = 64
    alpha: float = 0.5
    use_self_feature: bool = True
    activation: str = "relu"
    layerwise_theta: bool = False


@dataclass
class TrainSection:
    lr: float = 1e-3
    lr_theta: float = 1e-2
    batch_size: int = 16
    patience: int = 20
    max_epochs: int = 500
    freeze_theta: bool = False


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    lattice: LatticeSection = field(default_factory=LatticeSection)
    grn: GrnSection = field(default_factory=GrnSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_ini(self) -> str:
        lines = []
        for sec in fields(self):
            lines.append(f"[{sec.name}]")
            for k, v in asdict(getattr(self, sec.name)).items():
                lines.append(f"{k} = {_format(v)}")
            lines.append("")
        return "\n".join(lines)

    def validate(self):
        e, la, g, m, t = self.experiment, self.lattice, self.grn, self.model, self.train
        checks = [
            (e.task in TASKS, f"experiment.task must be one of {TASKS}"),
            (e.seed >= 0, "experiment.seed must be nonnegative"),
            (e.task != "custom" or bool(e.dataset), "experiment.dataset is required for task = custom"),
            (la.rows >= 2 and la.cols >= 2, "lattice.rows and lattice.cols must be >= 2"),
            (la.n_realizations >= 3, "lattice.n_realizations must be >= 3"),
            (la.feature_dim >= 1, "lattice.feature_dim must be >= 1"),
            (la.hops >= 0, "lattice.hops must be >= 0"),
            (la.field in ("potential", "solenoid"), "lattice.field must be potential or solenoid"),
            (g.n_genes >= 2, "grn.n_genes must be >= 2"),
            (0.0 < g.edge_prob < 1.0, "grn.edge_prob must lie in (0, 1)"),
            (0 <= g.n_doubles <= g.n_genes * (g.n_genes - 1) // 2, "grn.n_doubles exceeds the number of pairs"),
            (g.steps >= 0 and g.post_steps >= 0, "grn step counts must be >= 0"),
            (g.dt > 0.0, "grn.dt must be positive"),
            (m.layers >= 1, "model.layers must be >= 1"),
            (m.hidden >= 1, "model.hidden must be >= 1"),
            (0.0 <= m.alpha <= 1.0, "model.alpha must lie in [0, 1]"),
            (m.activation in ("relu", "identity", "normalize"), "model.activation must be relu, identity or normalize"),
            (t.lr > 0.0 and t.lr_theta >= 0.0, "train learning rates must be positive"),
            (t.batch_size >= 1, "train.batch_size must be >= 1"),
            (t.patience >= 0, "train.patience must be >= 0"),
            (t.max_epochs >= 1, "train.max_epochs must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(value: str, typ, where: str):
    try:
        if typ is bool or typ == "bool":
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ is int or typ == "int":
            return int(value)
        if typ is float or typ == "float":
            return float(value)
        return value.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {value!r} as {typ}") from None


def paper_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """Swap the desk-scale data sizes and task hyperparameters for the published ones."""
    cfg = replace(cfg)
    cfg.lattice = replace(cfg.lattice, n_realizations=500)
    cfg.grn = replace(cfg.grn, n_genes=200, edge_prob=0.03, n_doubles=1000)
    return cfg


def task_defaults(task: str) -> ExperimentConfig:
    """Defaults per task.

    The lattice model row-normalizes like its generator; the GRN model uses
    the deeper, narrower setting with per-layer angles.
    """
    cfg = ExperimentConfig()
    cfg.experiment.task = task
    if task == "lattice":
        cfg.model = ModelSection(activation="normalize")
        cfg.train = TrainSection(lr=3e-3, lr_theta=1e-2, max_epochs=250)
    elif task == "grn":
        cfg.model = ModelSection(layers=5, hidden=32, layerwise_theta=True)
        cfg.train = TrainSection(lr=1e-3, lr_theta=1e-2, batch_size=8, patience=50)
    return cfg


def parse_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Overlay INI ``text`` on ``base`` (task defaults when omitted).

    Raises:
        ConfigError: on syntax errors, unknown sections or keys, bad values.
    """
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    if base is None:
        task = cp.get("experiment", "task", fallback="lattice").strip() if cp.has_section("experiment") else "lattice"
        if task not in TASKS:
            raise ConfigError(f"experiment.task must be one of {TASKS}")
        base = task_defaults(task)
    cfg = replace(base)
    names = {f.name: f for f in fields(ExperimentConfig)}
    for sec in cp.sections():
        if sec not in names:
            raise ConfigError(f"unknown section [{sec}]")
        current = getattr(cfg, sec)
        types = {f.name: f.type for f in fields(current)}
        updates = {}
        for key, value in cp.items(sec):
            if key not in types:
                raise ConfigError(f"unknown key {sec}.{key}")
            updates[key] = _coerce(value, types[key], f"{sec}.{key}")
        setattr(cfg, sec, replace(current, **updates))
    return cfg.validate()


def load_config(path: Optional[str]) -> ExperimentConfig:
    if path is None:
        return task_defaults("lattice").validate()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
