"""Experiment runner: regenerates the figure and table data as CSV and checks the acceptance criteria.

Usage::

    neurocomp <experiment> [--key value]... [--config file] [--output path] [--check]
    neurocomp --check
    neurocomp --list

Each experiment has a fixed set of keys with defaults; a config file holds
``key = value`` lines, flags override the file and unknown keys are errors.
The output file is ``<dir>/<experiment>.csv`` where ``dir`` comes from the
NEUROCOMP_OUTPUT_DIR environment variable (default: current directory),
unless ``--output`` names a path. Header and footer lines start with ``#``;
everything else is deterministic for a given seed and configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import subprocess
import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import __version__
from . import anneal as an
from . import feedforward as ff
from . import hopfield as hf
from . import meanfield as mf
from . import rbf
from . import recurrent as rc
from . import reinforce as rl
from . import unsupervised as us
from .numerics import RandomStream, binomial_stderr, finite_diff_gradient

OUTPUT_DIR_ENV = "NEUROCOMP_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


def substream(seed: int, index: int) -> RandomStream:
    """Independent stream number `index` derived from a base seed."""
    return RandomStream(seed * 1_000_003 + index)


# --------------------------------------------------------------------------
# configuration


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` with both endpoints included (stop is kept if within half a step)."""
    parts = str(text).split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid {text!r} must look like start:stop:step")
    try:
        start, stop, step = (float(v) for v in parts)
    except ValueError as exc:
        raise ConfigError(f"grid {text!r} has a non-numeric field") from exc
    if step <= 0 or stop < start:
        raise ConfigError(f"grid {text!r} needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 0.5))
    return [round(start + k * step, 12) for k in range(n + 1)]


def _coerce(key: str, default, raw):
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {raw!r} as {type(default).__name__}") from exc
    return str(raw)


def _norm_key(key: str) -> str:
    return key.strip().lstrip("-").replace("_", "-")


def read_config_file(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[_norm_key(key)] = value.strip()
    return out


def resolve_config(experiment: "Experiment", file_values: dict, flag_values: dict) -> dict:
    cfg = dict(experiment.defaults)
    cfg.setdefault("seed", 0)
    for source in (file_values, flag_values):
        for key, value in source.items():
            k = _norm_key(key)
            if k not in cfg:
                known = ", ".join(sorted(cfg))
                raise ConfigError(f"unknown key {k!r} for {experiment.name} (known: {known})")
            cfg[k] = _coerce(k, cfg[k], value)
    return cfg


def version_string() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# --------------------------------------------------------------------------
# tables


@dataclass
class Table:
    columns: list
    rows: list
    footer: dict

    def body(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (tuple, list, np.ndarray)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def render(name: str, cfg: dict, table: Table) -> str:
    lines = [f"# experiment = {name}", f"# version = {version_string()}"]
    lines += [f"# {k} = {cfg[k]}" for k in sorted(cfg)]
    text = "\n".join(lines) + "\n" + table.body()
    text += "".join(f"# {k} = {_fmt(v)}\n" for k, v in table.footer.items())
    return text


# --------------------------------------------------------------------------
# experiments


@dataclass
class Experiment:
    name: str
    run: Callable[[dict], Table]
    defaults: dict
    criteria: tuple
    description: str


EXPERIMENTS: dict[str, Experiment] = {}


def experiment(name: str, criteria: tuple = (), **defaults):
    def wrap(fn):
        keys = {"seed": 0, **{_norm_key(k): v for k, v in defaults.items()}}
        EXPERIMENTS[name] = Experiment(name, fn, keys, criteria, (fn.__doc__ or "").strip())
        return fn

    return wrap


@experiment("hopfield-error", criteria=(1, 14), alpha_grid="0.05:0.30:0.05", N=1000, trials=100_000,
            method="binomial")
def exp_hopfield_error(cfg):
    """One-step error probability against storage capacity: Monte Carlo and erfc formula."""
    stream = RandomStream(cfg["seed"])
    rows = []
    for alpha in parse_grid(cfg["alpha-grid"]):
        p = max(1, int(round(alpha * cfg["N"])))
        est = hf.one_step_error_mc(cfg["N"], p, cfg["trials"], stream, cfg["method"])
        rows.append((alpha, p, est.value, hf.p_error_formula(p / cfg["N"]), est.stderr))
    return Table(["alpha", "p", "p_mc", "p_formula", "stderr"], rows, {})


@experiment("steady-error", criteria=(4,), alpha_grid="0.01:0.16:0.01")
def exp_steady_error(cfg):
    """One-step error probability and the zero-noise steady-state error from the mean-field y-equation."""
    rows = []
    for alpha in parse_grid(cfg["alpha-grid"]):
        m1, p_inf = mf.solve_deterministic(alpha)
        rows.append((alpha, hf.p_error_formula(alpha), p_inf, m1))
    return Table(["alpha", "p_one_step", "p_steady", "m1"], rows, {"alpha_c": mf.critical_capacity()})


@experiment("phase-diagram", criteria=(2, 3), beta_inv_grid="0.05:1.0:0.05", tol=1e-4)
def exp_phase_diagram(cfg):
    """Critical storage capacity alpha_c against noise level 1/beta."""
    pts = mf.phase_boundary_scan(parse_grid(cfg["beta-inv-grid"]), cfg["tol"])
    return Table(["beta_inv", "alpha_c"], [(p.beta_inv, p.alpha) for p in pts],
                 {"alpha_c_zero_noise": mf.critical_capacity()})


@experiment("mixed-order-parameter", criteria=(13,), beta_grid="0.5:3.0:0.1", N=1000, triples=2000)
def exp_mixed(cfg):
    """Symmetric three-pattern mixed state: mean-field m(beta) and the zero-noise overlap statistics."""
    rows = [(beta, mf.solve_mixed(beta)) for beta in parse_grid(cfg["beta-grid"])]
    mean, err = mixed_state_overlap_mean(cfg["N"], cfg["triples"], RandomStream(cfg["seed"]))
    return Table(["beta", "m_mixed"], rows, {"mean_overlap": mean, "mean_overlap_stderr": err})


def mixed_state_overlap_mean(N: int, triples: int, stream: RandomStream) -> tuple[float, float]:
    """Average overlap of sgn(xi^1 + xi^2 + xi^3) with its components over random pattern triples."""
    vals = []
    for _ in range(triples):
        pats = hf.PatternSet.random(3, N, stream)
        vals.extend(hf.pattern_overlaps(pats, hf.mixed_state(pats, [0, 1, 2])))
    vals = np.asarray(vals)
    # the three overlaps of one triple are correlated; use per-triple means for the error
    per_triple = vals.reshape(triples, 3).mean(axis=1)
    return float(vals.mean()), float(per_triple.std(ddof=1) / math.sqrt(triples))


@experiment("anneal-tsp", criteria=(5, 6), restarts=20, beta0=1.0, multiplier=1.15, sweeps=20, stages=40,
            kernel=an.METROPOLIS)
def exp_anneal_tsp(cfg):
    """Annealing restarts on the seven-city tour, compared with exhaustive enumeration."""
    stream = RandomStream(cfg["seed"])
    model = an.TSPModel(an.SEVEN_CITIES)
    sched = an.Schedule(cfg["beta0"], cfg["multiplier"], cfg["sweeps"], cfg["stages"])
    best, best_len, n_tours = an.exhaustive_tsp(an.SEVEN_CITIES)
    rows = []
    for r in range(cfg["restarts"]):
        res = an.anneal(model, model.random_config(stream), sched, stream, cfg["kernel"])
        tour = an.canonical_tour(res.best_config)
        rows.append((r, res.best_energy, "".join(an.CITY_NAMES[i] for i in tour), tour == best))
    return Table(["restart", "length", "tour", "optimal"], rows,
                 {"optimal_length": best_len, "optimal_tour": "".join(an.CITY_NAMES[i] for i in best),
                  "distinct_tours": n_tours})


@experiment("anneal-queens", restarts=10, k=8, beta0=0.5, multiplier=1.2, sweeps=50, stages=40)
def exp_anneal_queens(cfg):
    """k-queens by annealing over column permutations."""
    stream = RandomStream(cfg["seed"])
    model = an.KQueensModel(cfg["k"])
    sched = an.Schedule(cfg["beta0"], cfg["multiplier"], cfg["sweeps"], cfg["stages"])
    rows = []
    for r in range(cfg["restarts"]):
        res = an.anneal(model, model.random_config(stream), sched, stream, stop_energy=0.0)
        rows.append((r, res.best_energy, res.best_config, model.is_valid(res.best_config)))
    return Table(["restart", "energy", "columns", "valid"], rows, {})


@experiment("anneal-digest", criteria=(7,), L=10000, restarts=1000, beta0=1e-3, multiplier=1.2, sweeps=10,
            stages=40)
def exp_anneal_digest(cfg):
    """Double-digest restarts: energies reached and distinct zero-energy orderings found."""
    if cfg["L"] not in an.TABLE_DIGESTS:
        raise ConfigError(f"L must be one of {sorted(an.TABLE_DIGESTS)}")
    inst = an.TABLE_DIGESTS[cfg["L"]]
    found, rows = digest_restarts(inst, cfg, RandomStream(cfg["seed"]))
    footer = {"distinct_solutions_found": len(found)}
    if cfg["L"] == 10000:
        footer["exhaustive_solutions"] = len(an.exhaustive_digest_solutions(inst))
    return Table(["restart", "energy", "sigma", "mu"], rows, footer)


def digest_restarts(inst, cfg, stream):
    model = an.DigestModel(inst)
    sched = an.Schedule(cfg["beta0"], cfg["multiplier"], cfg["sweeps"], cfg["stages"])
    found = set()
    rows = []
    for r in range(cfg["restarts"]):
        res = an.anneal(model, model.random_config(stream), sched, stream, stop_energy=0.0)
        if res.best_energy <= 1e-9:
            found.add(res.best_config)
        rows.append((r, res.best_energy, res.best_config[0], res.best_config[1]))
    return found, rows


@experiment("train-mlp", eta=0.05, epochs=200, batch_size=10, hidden=8, patience=10, l2=0.0, momentum=0.0,
            samples=400, data="")
def exp_train_mlp(cfg):
    """Training and validation curves of a one-hidden-layer classifier with early stopping.

    Without a `data` file, two overlapping Gaussian clouds labelled 0 and 1 are used.
    """
    stream = RandomStream(cfg["seed"])
    if cfg["data"]:
        data = ff.read_labeled(cfg["data"])
    else:
        n = cfg["samples"] // 2
        X = np.vstack([stream.normal(size=(n, 2)) + [1.0, 0.0], stream.normal(size=(n, 2)) - [1.0, 0.0]])
        data = ff.LabeledSet(X, np.r_[np.ones(n), np.zeros(n)], ff.ZERO_ONE)
    order = stream.permutation(len(data))
    cut = int(0.75 * len(data))
    X, _ = ff.preprocess(data.inputs.reshape(len(data), -1))
    train = ff.LabeledSet(X[order[:cut]], data.targets[order[:cut]], data.convention)
    valid = ff.LabeledSet(X[order[cut:]], data.targets[order[cut:]], data.convention)
    n_out = train.targets.reshape(len(train), -1).shape[1]
    out_act, loss = (ff.SOFTMAX, ff.LOGLIKELIHOOD) if data.convention == ff.ONE_HOT else (ff.SIGMOID, ff.CROSS_ENTROPY)
    net = ff.dense_net([X.shape[1], cfg["hidden"], n_out], [ff.TANH, out_act], stream)
    tc = ff.TrainConfig(eta=cfg["eta"], momentum=cfg["momentum"], batch_size=cfg["batch-size"], l2=cfg["l2"],
                        epochs=cfg["epochs"], patience=cfg["patience"], loss=loss)
    log = ff.train(net, train, valid, tc, stream)
    rows = [(r.epoch, r.H_train, r.H_valid, r.C_train, r.C_valid) for r in log.records]
    return Table(["epoch", "H_train", "H_valid", "C_train", "C_valid"], rows, {"stopped_early": log.stopped_early})


@experiment("xor-pruning", criteria=(9,), hidden_grid="2:10:1", realisations=1000, steps=10_000, eta=0.1,
            init_std=0.1, max_norm=2.0)
def exp_xor_pruning(cfg):
    """XOR training success against hidden-layer size, plus networks pruned from 10 to 2 hidden units."""
    rows = []
    R = cfg["realisations"]
    for k, n in enumerate(parse_grid(cfg["hidden-grid"])):
        proto = ff.XorProtocol(int(n), cfg["steps"], R, cfg["eta"], cfg["init-std"], cfg["max-norm"])
        f = ff.xor_training_success(proto, substream(cfg["seed"], k))
        rows.append(("trained", int(n), f, binomial_stderr(f, R)))
    proto = ff.XorProtocol(2, cfg["steps"], R, cfg["eta"], cfg["init-std"], cfg["max-norm"])
    f = ff.xor_pruned_success(proto, 10, substream(cfg["seed"], 1000))
    rows.append(("pruned_from_10", 2, f, binomial_stderr(f, R)))
    return Table(["kind", "hidden", "success", "stderr"], rows, {})


@experiment("gradient-audit", criteria=(8,), instances=50)
def exp_gradient_audit(cfg):
    """Backpropagated gradients against central finite differences, worst relative error per case."""
    rows = gradient_audit(cfg["instances"], RandomStream(cfg["seed"]))
    return Table(["case", "instances", "worst_relative_error", "tolerance", "pass"],
                 [(r.case, r.instances, r.worst, r.tolerance, r.worst < r.tolerance) for r in rows], {})


@experiment("oja", criteria=(10,), data="example", seeds=10, steps=20_000, eta_start=0.005, eta_end=0.0002)
def exp_oja(cfg):
    """Oja's rule: final weight norm and angle to the leading eigenvector of <xi xi^T>, one row per seed."""
    rows = oja_runs(cfg["data"], cfg["seeds"], cfg["steps"], (cfg["eta-start"], cfg["eta-end"]), cfg["seed"])
    return Table(["seed", "norm", "angle_deg"], rows, {})


def _oja_source(data: str):
    if data == "example":
        return us.OJA_EXAMPLE_POINTS, np.array([1.0, 1.0]) / math.sqrt(2.0)
    if data == "gaussian":
        return us.gaussian_sampler(np.diag([4.0, 1.0])), np.array([1.0, 0.0])
    raise ConfigError("data must be 'example' or 'gaussian'")


def oja_runs(data: str, seeds: int, steps: int, eta, base_seed: int = 0):
    source, u1 = _oja_source(data)
    rows = []
    for s in range(seeds):
        res = us.oja_train(source, eta, steps, substream(base_seed, s))
        rows.append((s, float(np.linalg.norm(res.w)), us.angle_degrees(res.w, u1)))
    return rows


@experiment("sanger", rule="sanger", M=2, steps=30_000, eta_start=0.005, eta_end=0.0002, variances="4,2,1")
def exp_sanger(cfg):
    """Sanger's rule or Oja's M-rule on zero-mean Gaussian data with a diagonal covariance."""
    var = np.array([float(v) for v in cfg["variances"].split(",")])
    rule = {"sanger": us.sanger_step, "oja-m": us.oja_m_step}.get(cfg["rule"])
    if rule is None:
        raise ConfigError("rule must be 'sanger' or 'oja-m'")
    W = us.train_bank(rule, us.gaussian_sampler(np.diag(var)), cfg["M"], (cfg["eta-start"], cfg["eta-end"]),
                      cfg["steps"], RandomStream(cfg["seed"]))
    order = np.argsort(-var)
    rows = []
    for i, w in enumerate(W):
        e = np.zeros(len(var))
        e[order[i]] = 1.0
        rows.append((i, w, float(np.linalg.norm(w)), us.angle_degrees(w, e)))
    return Table(["unit", "weights", "norm", "angle_to_eigvec_deg"], rows, {})


@experiment("kohonen-density", criteria=(11,), units=200, density="ramp", edge=20, steps=0)
def exp_kohonen_density(cfg):
    """One-dimensional map density against the input density; the fitted exponent is in the footer."""
    fit = kohonen_density_run(cfg["units"], cfg["density"], cfg["edge"], cfg["steps"] or None,
                              RandomStream(cfg["seed"]))
    rows = list(zip(fit.w, fit.rho_hat, fit.P))
    return Table(["w", "rho_hat", "P"], rows, {"exponent": fit.exponent, "flat": fit.flat})


def kohonen_density_run(units: int, density: str, edge: int, steps, stream):
    if density == "ramp":
        sampler, P = us.ramp_sampler(), us.ramp_density
    elif density == "uniform":
        sampler, P = us.uniform_sampler(), (lambda x: np.ones_like(np.asarray(x, float)))
    else:
        raise ConfigError("density must be 'ramp' or 'uniform'")
    w0 = np.sort(us.init_from_data(units, sampler, stream)[:, 0])
    som = us.SelfOrganizingMap.line(units, w0)
    us.kohonen_train(som, sampler, steps, stream)
    return us.kohonen_density_exponent(som, P, edge)


@experiment("kohonen-map", rows=10, cols=10, steps=0, shape="parallelogram")
def exp_kohonen_map(cfg):
    """Two-dimensional map trained on a parallelogram or the unit square; weights per grid unit."""
    stream = RandomStream(cfg["seed"])
    if cfg["shape"] == "parallelogram":
        sampler = us.parallelogram_sampler()
    elif cfg["shape"] == "square":
        sampler = us.uniform_sampler(dim=2)
    else:
        raise ConfigError("shape must be 'parallelogram' or 'square'")
    som = us.SelfOrganizingMap.rectangle(cfg["rows"], cfg["cols"],
                                         us.init_from_data(cfg["rows"] * cfg["cols"], sampler, stream))
    us.kohonen_train(som, sampler, cfg["steps"] or None, stream)
    rows = [(i, r, w) for i, (r, w) in enumerate(zip(som.grid.astype(int), som.weights))]
    return Table(["unit", "grid", "weights"], rows, {"crossings": us.count_crossings(som)})


@experiment("cover", criteria=(12,), m=4, p_grid="1:12:1", trials=500)
def exp_cover(cfg):
    """Exact Cover probability P(p, m) against Monte-Carlo perceptron separability."""
    stream = RandomStream(cfg["seed"])
    rows = []
    for p in parse_grid(cfg["p-grid"]):
        p = int(p)
        exact = rbf.cover_probability(p, cfg["m"])
        est = rbf.separability_mc(p, cfg["m"], cfg["trials"], stream)
        rows.append((p, cfg["m"], str(exact), float(exact), est.fraction, est.stderr))
    return Table(["p", "m", "P_exact", "P_float", "P_mc", "stderr"], rows,
                 {"expected_max_separable": rbf.expected_max_separable(cfg["m"])})


@experiment("rbf-xor", steps=5000, eta_output=0.5)
def exp_rbf_xor(cfg):
    """XOR through two Gaussian units centred at (1,1) and (0,0) with exponent -|x - w|^2."""
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    data = ff.LabeledSet(X, [-1.0, 1.0, 1.0, -1.0])
    net = rbf.rbf_train(data, 2, 0.0, cfg["eta-output"], cfg["steps"], RandomStream(cfg["seed"]),
                        centers=[[1.0, 1.0], [0.0, 0.0]], widths=1.0 / math.sqrt(2.0), fit_threshold=True)
    U = rbf.rbf_embed(net, X)
    O = net.outputs(X)
    rows = [(x, u, t, o, 1 if o >= 0 else -1) for x, u, t, o in zip(X, U, data.targets, O)]
    return Table(["input", "u", "target", "output", "sign"], rows,
                 {"weights": net.weights, "threshold": net.threshold})


@experiment("arp-toy", seeds=10, steps=5000, patterns=20, beta=1.0, eta_plus=0.1, ratio=10.0)
def exp_arp(cfg):
    """Associative reward-penalty learning on linearly separable +-1 toy tasks, one row per seed."""
    rows = arp_runs(cfg)
    return Table(["seed", "final_error", "reward_rate_last_1000"], rows, {})


def arp_runs(cfg):
    rows = []
    for s in range(cfg["seeds"]):
        stream = substream(cfg["seed"], s)
        X, T = rl.toy_task(stream, cfg["patterns"])
        layer = rl.StochasticOutputLayer(np.zeros((1, X.shape[1])), cfg["beta"], cfg["eta-plus"],
                                         cfg["eta-plus"] / cfg["ratio"])
        run = rl.train_arp(layer, X, T, cfg["steps"], stream)
        tail = run.rewards[-1000:]
        rows.append((s, rl.deterministic_error(layer, X, T), float(np.mean(np.asarray(tail) > 0))))
    return rows


# --------------------------------------------------------------------------
# gradient audit


@dataclass
class AuditRow:
    case: str
    instances: int
    worst: float
    tolerance: float


def _worst_block_error(pairs) -> float:
    """Largest block relative error, each block floored at 1e-3 of the full gradient norm."""
    floor = max(1e-8, 1e-3 * math.sqrt(sum(float(np.sum(a * a)) for a, _ in pairs)))
    return max(float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor)) for a, b in pairs)


def _dense_case(stream, sizes, acts, loss, batch=4):
    net = ff.dense_net(sizes, acts, stream, std=0.8)
    for layer in net.layers:
        layer.thresholds[...] = stream.normal(size=layer.thresholds.shape) * 0.3
    x = stream.normal(size=(batch, sizes[0]))
    if loss == ff.LOGLIKELIHOOD:
        t = np.eye(sizes[-1])[stream.integers(0, sizes[-1], size=batch)]
    elif loss == ff.CROSS_ENTROPY:
        t = (stream.uniform(size=(batch, sizes[-1])) < 0.5).astype(float)
    else:
        t = stream.normal(size=(batch, sizes[-1]))
    return net, x, t


def _min_field(net, x):
    fp = ff.forward(net, x)
    return min(float(np.min(np.abs(b))) for b in fp.fields)


def _pool_gap(net, x, pool_index):
    """Smallest gap between the two largest entries of any pooling window."""
    fp = ff.forward(net, x)
    V = fp.outputs[pool_index]  # input to the pooling layer
    s = net.layers[pool_index].size
    B, C, H, W = V.shape
    blocks = V[:, :, : H - H % s, : W - W % s].reshape(B, C, H // s, s, W // s, s)
    blocks = np.sort(blocks.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // s, W // s, s * s), axis=-1)
    return float(np.min(blocks[..., -1] - blocks[..., -2]))


def _conv_case(stream, act):
    conv = ff.Conv2D(stream.normal(size=(2, 1, 3, 3)) * 0.5, stream.normal(size=2) * 0.2, 1, 1, act)
    net = ff.LayeredNet([conv, ff.MaxPool(2), ff.Dense(stream.normal(size=(2, 18)) * 0.4,
                                                        stream.normal(size=2) * 0.2, ff.SIGMOID)], (1, 6, 6))
    x = stream.normal(size=(3, 1, 6, 6))
    t = stream.normal(size=(3, 2)) * 0.5
    return net, x, t


def _batchnorm_case(stream):
    d1 = ff.Dense(stream.normal(size=(4, 3)) * 0.8, stream.normal(size=4) * 0.2, ff.IDENTITY)
    bn = ff.BatchNorm(1.0 + 0.3 * stream.normal(size=4), 0.3 * stream.normal(size=4), activation=ff.TANH)
    d2 = ff.Dense(stream.normal(size=(2, 4)) * 0.8, stream.normal(size=2) * 0.2, ff.SIGMOID)
    net = ff.LayeredNet([d1, bn, d2], (3,))
    x = stream.normal(size=(6, 3))
    t = (stream.uniform(size=(6, 2)) < 0.5).astype(float)
    return net, x, t


def _recurrent_case(stream):
    n, n_in = 4, 2
    net = rc.RecurrentNet(stream.normal(size=(n, n)) * 0.4, stream.normal(size=(n, n_in)) * 0.8,
                          stream.normal(size=n) * 0.3, output_units=[2, 3])
    x = stream.normal(size=n_in)
    y = stream.uniform(size=2)
    return net, x, y


RELAX = {"tol": 1e-15, "max_steps": 400_000}


def recurrent_gradient_error(net, x, y, h=1e-4) -> float:
    """Worst block error between recurrent backpropagation and re-relaxed finite differences."""
    V = rc.relax_states(net, x, **RELAX)
    D = rc.solve_errors(net, V, x, rc.output_errors(net, V, y))
    analytic = {"w_vv": -np.outer(D, V), "w_vx": -np.outer(D, x), "theta_v": D}
    pairs = []
    for name, g in analytic.items():
        arr = getattr(net, name)

        def f(p, arr=arr):
            saved = arr.copy()
            arr[...] = p
            val = rc.steady_energy(net, x, y, V0=V, **RELAX)
            arr[...] = saved
            return val

        pairs.append((g, finite_diff_gradient(f, arr.copy(), h)))
    return _worst_block_error(pairs)


def bptt_gradient_error(net, task, h=1e-5) -> float:
    g = rc.bptt_gradients(net, task)
    pairs = []
    for name in ("w_vv", "w_vx", "theta_v", "w_ov", "theta_o"):
        arr = getattr(net, name)

        def f(p, arr=arr):
            saved = arr.copy()
            arr[...] = p
            val = rc.sequence_energy(net, task)
            arr[...] = saved
            return val

        pairs.append((getattr(g, name), finite_diff_gradient(f, arr.copy(), h)))
    return _worst_block_error(pairs)


SMOOTH_TOL = 1e-6
KINK_TOL = 1e-5
KINK_MARGIN = 1e-3


def gradient_audit(instances: int, stream: RandomStream) -> list[AuditRow]:
    """Run every backpropagation route against finite differences on `instances` random cases."""
    cases = []

    def dense(sizes, acts, loss, tol, kink=False):
        def one():
            while True:
                net, x, t = _dense_case(stream, sizes, acts, loss)
                if not kink or _min_field(net, x) > KINK_MARGIN:
                    return ff.gradient_check(net, x, t, loss)
        return one, tol

    cases.append(("dense_tanh_quadratic", *dense([3, 5, 2], [ff.TANH, ff.TANH], ff.QUADRATIC, SMOOTH_TOL)))
    cases.append(("dense_sigmoid_cross_entropy",
                  *dense([3, 5, 2], [ff.SIGMOID, ff.SIGMOID], ff.CROSS_ENTROPY, SMOOTH_TOL)))
    cases.append(("dense_softmax_loglikelihood",
                  *dense([3, 5, 4], [ff.TANH, ff.SOFTMAX], ff.LOGLIKELIHOOD, SMOOTH_TOL)))
    cases.append(("dense_relu_quadratic", *dense([3, 6, 2], [ff.RELU, ff.IDENTITY], ff.QUADRATIC, KINK_TOL, True)))

    def conv(act, tol):
        def one():
            while True:
                net, x, t = _conv_case(stream, act)
                if _pool_gap(net, x, 1) > KINK_MARGIN and (act != ff.RELU or _min_field(net, x) > KINK_MARGIN):
                    return ff.gradient_check(net, x, t, ff.QUADRATIC)
        return one, tol

    cases.append(("conv_tanh_maxpool", *conv(ff.TANH, SMOOTH_TOL)))
    cases.append(("conv_relu_maxpool", *conv(ff.RELU, KINK_TOL)))

    def bn():
        net, x, t = _batchnorm_case(stream)
        return ff.gradient_check(net, x, t, ff.CROSS_ENTROPY, mode=ff.TRAIN)

    cases.append(("batchnorm_tanh_cross_entropy", bn, SMOOTH_TOL))

    def rec():
        return recurrent_gradient_error(*_recurrent_case(stream))

    cases.append(("recurrent_backprop", rec, SMOOTH_TOL))

    def bptt():
        net = rc.RecurrentNet.random(3, 2, 2, stream, std=0.6, activation=ff.TANH, output_activation=ff.SIGMOID)
        task = rc.SequenceTask(stream.normal(size=(5, 2)), stream.uniform(size=(5, 2)), stream.normal(size=3) * 0.5)
        return bptt_gradient_error(net, task)

    cases.append(("bptt_T5", bptt, SMOOTH_TOL))

    rows = []
    for name, fn, tol in cases:
        worst = max(fn() for _ in range(instances))
        rows.append(AuditRow(name, instances, worst, tol))
    return rows


# --------------------------------------------------------------------------
# acceptance criteria


@dataclass
class Outcome:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:2d} {self.title}: {self.detail} ({self.seconds:.1f} s)"


CRITERIA: dict[int, tuple[str, Callable[[int], tuple[bool, str]]]] = {}


def criterion(number: int, title: str):
    def wrap(fn):
        CRITERIA[number] = (title, fn)
        return fn

    return wrap


def _timed(limit: float, started: float, ok: bool, detail: str) -> tuple[bool, str]:
    elapsed = time.perf_counter() - started
    if elapsed > limit:
        return False, f"{detail}; runtime {elapsed:.1f} s exceeds {limit:.0f} s"
    return ok, detail


@criterion(1, "one-step error probability")
def check_one_step_error(seed: int = 0):
    t0 = time.perf_counter()
    N, p, trials = 1000, 185, 100_000
    est = hf.one_step_error_mc(N, p, trials, RandomStream(seed))
    formula = hf.p_error_formula(p / N)
    se = binomial_stderr(formula, trials)
    ok = abs(est.value - formula) < 3 * se
    return _timed(60, t0, ok, f"P_mc={est.value:.5f}, formula={formula:.5f}, 3 SE={3 * se:.5f}")


@criterion(2, "critical capacity")
def check_critical_capacity(seed: int = 0):
    t0 = time.perf_counter()
    a = mf.critical_capacity()
    ok = 0.1374 <= a <= 0.1384 and a < mf.REPLICA_ALPHA_C
    return _timed(5, t0, ok, f"alpha_c={a:.6f}, replica reference {mf.REPLICA_ALPHA_C}")


@criterion(3, "scalar mean-field")
def check_scalar_meanfield(seed: int = 0):
    grid = [0.5, 0.9, 1.0, 1.1, 2.0, 5.0]
    sols = {b: mf.solve_m1(b) for b in grid}
    exists_ok = all((sols[b] > 0) == (b > 1) for b in grid)
    oracle = brentq(lambda m: m - math.tanh(2.0 * m), 0.5, 1.0, xtol=1e-15, rtol=1e-15)
    diff = abs(sols[2.0] - oracle)
    ok = exists_ok and diff < 1e-10
    return ok, f"nonzero for beta>1 only: {exists_ok}; |m(2) - oracle| = {diff:.1e}"


@criterion(4, "deterministic-limit consistency")
def check_deterministic_limit(seed: int = 0):
    alpha = 1e-3
    ratio = mf.solve_deterministic(alpha)[1] / hf.p_error_formula(alpha)
    return abs(ratio - 1.0) < 0.02, f"ratio at alpha=1e-3 is {ratio:.6f}"


def _enumerable_models(stream):
    w = stream.normal(size=(3, 3))
    w = w + w.T
    np.fill_diagonal(w, 0.0)
    return [an.TwoLevelModel(0.0, 1.3), an.SpinFlipModel(w, stream.normal(size=3)),
            an.RingModel(list(stream.normal(size=12)))]


@criterion(5, "detailed balance and stationarity")
def check_detailed_balance(seed: int = 0):
    worst = 0.0
    for model in _enumerable_models(RandomStream(seed)):
        for kernel in (an.METROPOLIS, an.GLAUBER):
            for beta in (0.5, 1.0, 2.0):
                worst = max(worst, an.max_detailed_balance_residual(kernel, model, beta),
                            an.stationarity_residual(kernel, model, beta))
    return worst < 1e-12, f"largest residual {worst:.1e}"


@criterion(6, "TSP optimality")
def check_tsp(seed: int = 0):
    t0 = time.perf_counter()
    best, best_len, count = an.exhaustive_tsp(an.SEVEN_CITIES)
    cfg = dict(EXPERIMENTS["anneal-tsp"].defaults)
    hits = 0
    for run in range(10):
        cfg["seed"] = seed * 100 + run
        table = exp_anneal_tsp(cfg)
        winner = min(table.rows, key=lambda r: r[1])
        hits += bool(winner[3])
    ok = hits == 10 and count == 360
    return _timed(30, t0, ok, f"{hits}/10 runs found the optimum {best_len:.4f} among {count} tours")


@criterion(7, "double digest")
def check_digest(seed: int = 0):
    t0 = time.perf_counter()
    inst = an.TABLE_DIGESTS[10000]
    exhaustive = an.exhaustive_digest_solutions(inst)
    cfg = dict(EXPERIMENTS["anneal-digest"].defaults, seed=seed)
    found, rows = digest_restarts(inst, cfg, RandomStream(seed))
    zero = sum(1 for r in rows if r[1] <= 1e-9)
    ok = found == exhaustive and zero > 0
    return _timed(120, t0, ok, f"{zero} restarts reached H=0; {len(found)} distinct solutions found, "
                               f"{len(exhaustive)} by enumeration")


@criterion(8, "gradient audit")
def check_gradients(seed: int = 0):
    rows = gradient_audit(50, RandomStream(seed))
    bad = [r.case for r in rows if not r.worst < r.tolerance]
    worst = max(rows, key=lambda r: r.worst / r.tolerance)
    detail = f"{len(rows) - len(bad)}/{len(rows)} cases; tightest {worst.case} {worst.worst:.1e} < {worst.tolerance:.0e}"
    if bad:
        detail += f"; failing: {', '.join(bad)}"
    return not bad, detail


@criterion(9, "XOR pruning statistics")
def check_xor(seed: int = 0):
    t0 = time.perf_counter()
    f2 = ff.xor_training_success(ff.XorProtocol(hidden=2), substream(seed, 2))
    f10 = ff.xor_training_success(ff.XorProtocol(hidden=10), substream(seed, 10))
    fp = ff.xor_pruned_success(ff.XorProtocol(hidden=2), 10, substream(seed, 1000))
    ok = abs(f2 - 0.49) <= 0.10 and f10 >= 0.90 and fp >= 0.70
    return _timed(600, t0, ok, f"n=2: {f2:.3f} (target 0.49 +- 0.10), n=10: {f10:.3f}, pruned 10->2: {fp:.3f}")


@criterion(10, "Oja convergence")
def check_oja(seed: int = 0):
    parts = []
    ok = True
    for data in ("example", "gaussian"):
        rows = oja_runs(data, 10, 20_000, (0.005, 0.0002), seed)
        good = sum(1 for _, norm, ang in rows if abs(norm - 1.0) < 1e-2 and ang < 1.0)
        ok &= good >= 9
        parts.append(f"{data}: {good}/10")
    return ok, ", ".join(parts)


@criterion(11, "Kohonen density law")
def check_kohonen(seed: int = 0):
    t0 = time.perf_counter()
    fit = kohonen_density_run(200, "ramp", 20, None, RandomStream(seed))
    ok = abs(fit.exponent - 2.0 / 3.0) <= 0.10
    return _timed(120, t0, ok, f"exponent {fit.exponent:.3f} (target 0.667 +- 0.10)")


@criterion(12, "Cover's theorem")
def check_cover(seed: int = 0):
    half = all(rbf.cover_probability(2 * m, m) == Fraction(1, 2) for m in range(1, 11))
    mean_dev = max(abs(rbf.expected_max_separable(m) - 2 * m) for m in range(1, 11))
    est = rbf.separability_mc(8, 4, 2000, RandomStream(seed))
    ok = half and mean_dev < 1e-9 and abs(est.fraction - 0.5) <= 0.04
    return ok, f"P(2m,m)=1/2: {half}; max |<n>-2m| = {mean_dev:.1e}; MC P(8,4) = {est.fraction:.3f}"


@criterion(13, "mixed-state statistics")
def check_mixed(seed: int = 0):
    mean, err = mixed_state_overlap_mean(1000, 2000, RandomStream(seed))
    m_hi, m_lo = mf.solve_mixed(1.5), mf.solve_mixed(0.8)
    ok = abs(mean - 0.5) < 3 * err and m_hi > 1e-6 and m_lo == 0.0
    return ok, f"<s> = {mean:.4f} +- {err:.4f}; m(1.5) = {m_hi:.4f}, m(0.8) = {m_lo}"


@criterion(14, "energy monotonicity")
def check_energy_monotone(seed: int = 0):
    stream = RandomStream(seed)
    worst = -math.inf
    for _ in range(100):
        N = int(stream.integers(2, 11))
        p = int(stream.integers(1, max(2, N // 2) + 1))
        net = hf.hebb_weights(hf.PatternSet.random(p, N, stream))
        states = np.array(list(np.ndindex(*([2] * N)))) * 2 - 1
        H = np.array([hf.energy(net, s) for s in states])
        for i in range(N):
            new = np.array([hf.update_deterministic(net, s, hf.ASYNC_RANDOM, site=i) for s in states])
            dH = np.array([hf.energy(net, s) for s in new]) - H
            worst = max(worst, float(dH.max()))
    return worst <= 1e-12, f"largest energy change under an update {worst:.1e}"


def run_criterion(number: int, seed: int = 0) -> Outcome:
    title, fn = CRITERIA[number]
    t0 = time.perf_counter()
    ok, detail = fn(seed)
    return Outcome(number, title, bool(ok), detail, time.perf_counter() - t0)


def run_checks(numbers=None, seed: int = 0, out=sys.stdout) -> list[Outcome]:
    results = []
    for n in sorted(CRITERIA if numbers is None else numbers):
        res = run_criterion(n, seed)
        print(res.line(), file=out, flush=True)
        results.append(res)
    return results


# --------------------------------------------------------------------------
# command line


def run_experiment(name: str, cfg: dict, output: str | None = None) -> Path:
    exp = EXPERIMENTS[name]
    table = exp.run(cfg)
    if output:
        path = Path(output)
    else:
        path = Path(os.environ.get(OUTPUT_DIR_ENV, ".")) / f"{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(name, cfg, table))
    return path


def _split_flags(tokens: list[str]) -> dict:
    out = {}
    k = 0
    while k < len(tokens):
        tok = tokens[k]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
            k += 1
        else:
            if k + 1 >= len(tokens):
                raise ConfigError(f"{tok} needs a value")
            key, value = tok[2:], tokens[k + 1]
            k += 2
        out[_norm_key(key)] = value
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="neurocomp", description=__doc__.split("\n")[0],
                                     epilog="Experiment keys are passed as --key value; see --list.")
    parser.add_argument("experiment", nargs="?", help="experiment name (omit with --check to run every criterion)")
    parser.add_argument("--config", help="file of 'key = value' lines")
    parser.add_argument("--output", help="CSV path (default: $%s/<experiment>.csv)" % OUTPUT_DIR_ENV)
    parser.add_argument("--check", action="store_true", help="evaluate the acceptance criteria")
    parser.add_argument("--list", action="store_true", help="list experiments and their keys")
    args, rest = parser.parse_known_args(argv)

    if args.list:
        for exp in EXPERIMENTS.values():
            keys = ", ".join(f"{k}={v}" for k, v in exp.defaults.items())
            print(f"{exp.name}: {exp.description.splitlines()[0]}\n    {keys}")
        return 0
    if args.experiment is None:
        if not args.check:
            parser.print_usage(sys.stderr)
            return 2
        results = run_checks()
        return 0 if all(r.passed for r in results) else 1
    if args.experiment not in EXPERIMENTS:
        print(f"neurocomp: unknown experiment {args.experiment!r}; choose from {', '.join(EXPERIMENTS)}",
              file=sys.stderr)
        return 2
    exp = EXPERIMENTS[args.experiment]
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(exp, file_values, _split_flags(rest))
        path = run_experiment(exp.name, cfg, args.output)
    except ConfigError as exc:
        print(f"neurocomp: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"neurocomp: cannot write output: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    if args.check:
        results = run_checks(exp.criteria, cfg["seed"])
        return 0 if all(r.passed for r in results) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
