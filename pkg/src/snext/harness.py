"""
Experiment harness: INI configuration, CSV datasets, dispatch and outputs.

A configuration has four sections::

    [problem]    kind = quadratic | nn_csv, plus problem parameters
    [network]    agents, edge_probability, seed
    [algorithm]  name = snext | dsgd | csgd | csca, schedule, tau, solver
    [run]        iterations, seed, output, metric_period, ...

Every run writes into the output directory:

* ``metrics.csv``: one row per recorded iteration, fixed header
  ``iter,objective,consensus_err,stationarity,conservation_residual,alpha,rho,ms``
* ``checkpoint.txt``: final mean iterate, one decimal per line
* ``config.ini``: the fully resolved configuration
* ``weights.txt``: the mixing matrix
* ``summary.json``: final losses and run facts

``SNEXT_OUTPUT_DIR`` overrides ``run.output``.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import algorithm as alg
from . import baselines as bl
from . import graph
from . import nn
from . import problem as pb

OUTPUT_ENV = "SNEXT_OUTPUT_DIR"
METRICS_HEADER = alg.IterationMetrics.header()


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending ``section.key``."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class DatasetError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration

def _opt(default, key=None, **meta):
    return field(default=default, metadata={"key": key, **meta})


@dataclass
class ProblemConfig:
    kind: str = field(default="", metadata={"required": True})
    dim: int = 10
    condition_number: float = 10.0
    noise: float = 0.0
    box: float | None = None
    dataset: str = ""
    target: str = ""
    hidden: tuple = (30, 30)
    lam: float = _opt(1e-2, key="lambda")
    batch_size: int = 16


@dataclass
class NetworkConfig:
    agents: int = 6
    edge_probability: float = 0.5
    seed: int = 0


@dataclass
class AlgorithmConfig:
    name: str = "snext"
    alpha0: float = 0.01
    eps_alpha: float = 1e-3
    rho0: float = 0.9
    eps_rho: float = 5e-4
    tau: float = 1.0
    solver: str = "auto"


@dataclass
class RunSection:
    iterations: int = 1000
    seed: int = 0
    output: str = "runs/default"
    metric_period: int = 1
    wallclock: bool = True
    stop_stationarity: float = 1e-6
    stop_consensus: float = 1e-6


@dataclass
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    run: RunSection = field(default_factory=RunSection)


SECTIONS = {"problem": ProblemConfig, "network": NetworkConfig, "algorithm": AlgorithmConfig, "run": RunSection}


def _ini_key(f) -> str:
    return f.metadata.get("key") or f.name


def _convert(f, raw: str, where: str):
    raw = raw.strip()
    kind = str(f.type)
    try:
        if kind == "tuple":
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind.startswith("float"):
            if "None" in kind and raw.lower() in ("", "none"):
                return None
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(where, f"cannot parse {raw!r} as {kind}") from None


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _check_range(cfg: RunConfig):
    def need(cond, key, msg):
        if not cond:
            raise ConfigError(key, msg)

    p, n, a, r = cfg.problem, cfg.network, cfg.algorithm, cfg.run
    need(p.kind in ("quadratic", "nn_csv"), "problem.kind", f"must be 'quadratic' or 'nn_csv', got {p.kind!r}")
    if p.kind == "nn_csv":
        need(bool(p.dataset), "problem.dataset", "required when kind = nn_csv")
        need(bool(p.target), "problem.target", "required when kind = nn_csv")
    need(p.dim >= 1, "problem.dim", "must be >= 1")
    need(p.condition_number >= 1, "problem.condition_number", "must be >= 1")
    need(p.noise >= 0, "problem.noise", "must be >= 0")
    need(p.box is None or p.box > 0, "problem.box", "must be > 0 or none")
    need(len(p.hidden) >= 1 and all(h >= 1 for h in p.hidden), "problem.hidden", "need positive layer sizes")
    need(p.lam >= 0, "problem.lambda", "must be >= 0")
    need(p.batch_size >= 1, "problem.batch_size", "must be >= 1")
    need(n.agents >= 1, "network.agents", "must be >= 1")
    need(0 < n.edge_probability <= 1, "network.edge_probability", "must lie in (0, 1]")
    need(a.name in ("snext", "dsgd", "csgd", "csca"), "algorithm.name", "must be snext, dsgd, csgd or csca")
    need(0 < a.alpha0 <= 1, "algorithm.alpha0", f"must lie in (0, 1], got {a.alpha0}")
    need(0 < a.rho0 <= 1, "algorithm.rho0", f"must lie in (0, 1], got {a.rho0}")
    need(0 < a.eps_alpha < 1, "algorithm.eps_alpha", f"must lie in (0, 1), got {a.eps_alpha}")
    need(0 < a.eps_rho < 1, "algorithm.eps_rho", f"must lie in (0, 1), got {a.eps_rho}")
    need(a.tau > 0, "algorithm.tau", "must be > 0")
    need(a.solver in ("auto", "generic", "closed_form"), "algorithm.solver", "must be auto, generic or closed_form")
    need(r.iterations >= 1, "run.iterations", "must be >= 1")
    need(r.metric_period >= 1, "run.metric_period", "must be >= 1")
    need(r.seed >= 0 and n.seed >= 0, "run.seed", "seeds must be >= 0")


def parse_config(text: str) -> RunConfig:
    """
    Parse INI text into a fully resolved :class:`RunConfig`.

    Missing sections and keys take their defaults (alpha0 = 0.01,
    eps_alpha = 1e-3, rho0 = 0.9, eps_rho = 5e-4, lambda = 1e-2, six agents,
    two hidden layers of 30). Unknown sections or keys, unparsable values,
    out-of-range values and missing required keys raise :class:`ConfigError`
    naming the key.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError("<file>", str(err)) from None
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(section, "unknown section")
    parts = {}
    for section, cls in SECTIONS.items():
        values = dict(parser[section]) if parser.has_section(section) else {}
        by_key = {_ini_key(f): f for f in fields(cls)}
        for k in values:
            if k not in by_key:
                raise ConfigError(f"{section}.{k}", "unknown key")
        kwargs = {}
        for k, f in by_key.items():
            if k in values:
                kwargs[f.name] = _convert(f, values[k], f"{section}.{k}")
            elif f.metadata.get("required"):
                raise ConfigError(f"{section}.{k}", "missing required key")
        parts[section] = cls(**kwargs)
    cfg = RunConfig(**parts)
    _check_range(cfg)
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section in SECTIONS:
        obj = getattr(cfg, section)
        parser[section] = {_ini_key(f): _format(getattr(obj, f.name)) for f in fields(obj)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


TEMPLATES = {
    "quadratic": """\
[problem]
kind = quadratic
dim = 10
condition_number = 10
noise = 0.0
lambda = 0.01

[network]
agents = 6
edge_probability = 0.5
seed = 0

[algorithm]
name = snext

[run]
iterations = 2000
seed = 0
output = runs/quadratic
""",
    "nn": """\
# Neural-network regression on a CSV file: 6 agents, 2x30 tanh MLP,
# lambda = 1e-2, alpha0 = 0.01 / eps 1e-3, rho0 = 0.9 / eps 5e-4.
[problem]
kind = nn_csv
dataset = boston.csv
target = MEDV
hidden = 30,30
lambda = 0.01
batch_size = 16

[network]
agents = 6
edge_probability = 0.5
seed = 0

[algorithm]
name = snext
alpha0 = 0.01
eps_alpha = 0.001
rho0 = 0.9
eps_rho = 0.0005
tau = 1.0

[run]
iterations = 2000
seed = 0
output = runs/nn
""",
}


# --------------------------------------------------------------------------
# data

@dataclass
class Dataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    feature_names: list[str]
    mean: np.ndarray
    scale: np.ndarray

    @property
    def train(self):
        return self.X_train, self.y_train


def load_csv_dataset(path, target_column: str, seed: int = 0, test_fraction: float = 0.2) -> Dataset:
    """
    Read a numeric CSV with a header row and split it into train and test.

    Rows are split with a seeded permutation (``round(test_fraction * n)``
    test rows, at least one training row). Features are standardized with
    the training mean and population standard deviation; a constant feature
    gets scale 1 instead of producing NaNs. The target is left as is.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if target_column not in header:
        raise DatasetError(f"{path}: target column {target_column!r} not found")
    body = rows[1:]
    if not body:
        raise DatasetError(f"{path}: no data rows")
    data = np.empty((len(body), len(header)))
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise DatasetError(f"{path}: line {r + 2} has {len(row)} fields, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                data[r, c] = float(cell)
            except ValueError:
                raise DatasetError(f"{path}: non-numeric value {cell!r} at line {r + 2}, column {header[c]!r}") from None
    t = header.index(target_column)
    X = np.delete(data, t, axis=1)
    y = data[:, t]
    n = len(y)
    n_test = min(int(round(test_fraction * n)), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    test, train = order[:n_test], order[n_test:]
    mean = X[train].mean(axis=0)
    scale = X[train].std(axis=0)
    scale[scale == 0.0] = 1.0
    Xs = (X - mean) / scale
    return Dataset(Xs[train], y[train], Xs[test], y[test],
                   [h for k, h in enumerate(header) if k != t], mean, scale)


# --------------------------------------------------------------------------
# experiments

@dataclass
class ExperimentRecord:
    config: RunConfig
    metrics: list
    checkpoint: np.ndarray
    train_loss: float
    test_loss: float
    output_dir: Path | None = None
    extras: dict = field(default_factory=dict)


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


class MetricsWriter:
    """Appends metric rows to a CSV file, flushing after every row."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(METRICS_HEADER)
        self._last = -1

    def __call__(self, m: alg.IterationMetrics):
        if m.iter <= self._last:
            raise RuntimeError("metric rows must have strictly increasing iteration index")
        self._last = m.iter
        self._w.writerow([_fmt_cell(v) for v in m.row()])
        self._fh.flush()

    def close(self):
        self._fh.close()


def build_problem(cfg: RunConfig, base_dir=None):
    """Return ``(problem, x0, dataset or None)`` for a configuration."""
    p, seed = cfg.problem, cfg.run.seed
    agents = cfg.network.agents
    if p.kind == "quadratic":
        prob = pb.make_quadratic_instance(agents, p.dim, seed, p.condition_number, p.noise, p.lam, p.box)
        return prob, None, None
    path = Path(p.dataset)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    data = load_csv_dataset(path, p.target, seed)
    arch = nn.MLPArchitecture(data.X_train.shape[1], p.hidden)
    prob = pb.make_nn_regression_instance(data.train, agents, p.batch_size, arch, p.lam, seed)
    return prob, nn.init_weights(arch, seed), data


def run_experiment(cfg: RunConfig, base_dir=None) -> ExperimentRecord:
    """
    Execute one configured run and write its artifacts.

    `base_dir` resolves a relative dataset path (the CLI passes the config
    file's directory).
    """
    out = Path(os.environ.get(OUTPUT_ENV) or cfg.run.output)
    out.mkdir(parents=True, exist_ok=True)
    prob, x0, data = build_problem(cfg, base_dir)
    topo = graph.random_connected_graph(cfg.network.agents, cfg.network.edge_probability, cfg.network.seed)
    W = graph.metropolis_weights(topo)
    a, r = cfg.algorithm, cfg.run
    stop = alg.StopRule(r.stop_stationarity, r.stop_consensus)
    common = dict(stop_rule=stop, metric_period=r.metric_period, wallclock=r.wallclock)
    (out / "config.ini").write_text(serialize_config(cfg))
    graph.save_matrix(out / "weights.txt", W)
    writer = MetricsWriter(out / "metrics.csv")
    try:
        if a.name == "snext":
            sched = alg.StepSchedule(a.alpha0, a.eps_alpha, a.rho0, a.eps_rho)
            state = alg.initialize(prob, W, sched, x0, sca=alg.SCAConfig(tau=a.tau, solver=a.solver))
            traj, final = alg.run(state, r.iterations, on_metrics=writer, **common)
        elif a.name == "csca":
            sched = alg.StepSchedule(a.alpha0, a.eps_alpha, a.rho0, a.eps_rho)
            traj, final = bl.centralized_sca_run(prob, sched, r.iterations, x0,
                                                 alg.SCAConfig(tau=a.tau, solver=a.solver),
                                                 on_metrics=writer, **common)
        elif a.name == "dsgd":
            traj, final = bl.dsgd_run(prob, W, alg.DecaySequence(a.alpha0, a.eps_alpha), r.iterations, x0,
                                      on_metrics=writer, **common)
        else:
            traj, final = bl.centralized_sgd_run(prob, alg.DecaySequence(a.alpha0, a.eps_alpha), r.iterations,
                                                 x0, on_metrics=writer, **common)
    finally:
        writer.close()
    x_bar = final.x.mean(axis=0)
    nn.save_vector(out / "checkpoint.txt", x_bar)
    if data is not None:
        arch = prob.info["architecture"]
        train_loss = float(np.mean((data.y_train - nn.forward(arch, x_bar, data.X_train)) ** 2))
        test_loss = (float(np.mean((data.y_test - nn.forward(arch, x_bar, data.X_test)) ** 2))
                     if len(data.y_test) else float("nan"))
    else:
        train_loss = pb.full_objective(prob, x_bar, check=False)
        test_loss = float("nan")
    last = traj[-1]
    summary = {
        "algorithm": a.name,
        "iterations": final.t,
        "train_loss": train_loss,
        "test_loss": test_loss,
        "final": {k: v for k, v in asdict(last).items() if k != "ms"},
        "reference_samples": len(prob.reference_samples),
    }
    (out / "summary.json").write_text(json.dumps(_nan_to_none(summary), indent=2, sort_keys=True) + "\n")
    return ExperimentRecord(cfg, traj, x_bar, train_loss, test_loss, out, {"weights": W})


def _nan_to_none(obj: Any):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj
