"""Command-line surface: solve, branch, eig, sweep, compare."""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import continuation as ct
from . import oracle, pinn, stability
from .lattice import StateField, build_spec, load_state, save_state, solution_norm, ModelParams
from .network import InputMode, NetworkShape, save_weights
from .solver import LMConfig, SolverFailure, SubsetSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_PARTIAL = 4
EXIT_IO = 5

DEFAULT_SHAPES = {1: "1,4,4,1", 2: "2,7,7,1", 3: "3,10,10,1",
                  4: "4,10,10,1", 5: "5,10,10,1"}


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "lattice": {"dim": int, "m": int, "centering": str, "c": float},
    "network": {"shape": str, "mode": str, "masked": bool},
    "model": {"mu": float},
    "solver": {"max_iter": int, "lambda0": float, "up_factor": float,
               "down_factor": float, "residual_tol": float, "step_tol": float},
    "subset": {"size": int, "seed": int, "mandatory_center": bool},
    "continuation": {"alpha": float, "beta1": float, "beta2": float,
                     "gamma": float, "delta": float, "drop_sqrt": bool,
                     "norm_target": float, "k_max": int, "mu1": float,
                     "mu2": float},
    "run": {"seed": int, "out": str, "workers": int},
}


@dataclass
class RunConfig:
    """Fully resolved settings for one CLI run."""

    dim: int = 1
    m: int = 10
    centering: str = "site"
    c: float = 0.05
    shape: str = ""
    mode: str = "fold_sorted"
    masked: bool = None
    mu: float = -0.1
    max_iter: int = 1000
    lambda0: float = 1e-3
    up_factor: float = 3.0
    down_factor: float = 0.3
    residual_tol: float = 0.0
    step_tol: float = 0.0
    subset_size: int = 0
    subset_seed: int = 0
    mandatory_center: bool = True
    alpha: float = 10.0
    beta1: float = None
    beta2: float = None
    gamma: float = None
    delta: float = None
    drop_sqrt: bool = False
    norm_target: float = None
    k_max: int = 5000
    mu1: float = None
    mu2: float = None
    seed: int = 0
    out: str = "out"
    workers: int = 1

    def spec(self):
        return build_spec(self.dim, self.m, self.centering, self.c)

    def net_shape(self):
        text = self.shape or DEFAULT_SHAPES[self.dim]
        shape = NetworkShape.from_string(text)
        if shape.d_in != self.dim:
            raise ConfigError(f"network shape {text} does not match dim={self.dim}")
        return shape

    def input_mode(self, absolute=False):
        masked = self.masked if self.masked is not None else self.dim == 5
        return InputMode(mode=self.mode, masked=masked, absolute=absolute)

    def lm_config(self):
        return LMConfig(lambda0=self.lambda0, up_factor=self.up_factor,
                        down_factor=self.down_factor, max_iter=self.max_iter,
                        residual_tol=self.residual_tol, step_tol=self.step_tol,
                        seed=self.seed)

    def continuation_params(self, mode):
        if mode == "norm":
            gamma = 0.01 if self.gamma is None else self.gamma
            p = ct.ContinuationParams(alpha=self.alpha,
                                      beta1=1.0 if self.beta1 is None else self.beta1,
                                      beta2=0.0, gamma=gamma, delta=0.0,
                                      norm_target=10.0 if self.norm_target is None else self.norm_target,
                                      k_max=self.k_max)
        else:
            p = ct.ContinuationParams(alpha=self.alpha,
                                      beta1=25.0 if self.beta1 is None else self.beta1,
                                      beta2=100.0 if self.beta2 is None else self.beta2,
                                      gamma=0.0,
                                      delta=1.0 if self.delta is None else self.delta,
                                      drop_sqrt=self.drop_sqrt,
                                      norm_target=40.0 if self.norm_target is None else self.norm_target,
                                      k_max=self.k_max)
        if self.mu1 is not None and self.mu2 is not None:
            p.mu_init = (self.mu1, self.mu2)
        return p


def _parse_bool(text):
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


_KEY_MAP = {
    ("lattice", "dim"): "dim", ("lattice", "m"): "m",
    ("lattice", "centering"): "centering", ("lattice", "c"): "c",
    ("network", "shape"): "shape", ("network", "mode"): "mode",
    ("network", "masked"): "masked",
    ("model", "mu"): "mu",
    ("solver", "max_iter"): "max_iter", ("solver", "lambda0"): "lambda0",
    ("solver", "up_factor"): "up_factor", ("solver", "down_factor"): "down_factor",
    ("solver", "residual_tol"): "residual_tol", ("solver", "step_tol"): "step_tol",
    ("subset", "size"): "subset_size", ("subset", "seed"): "subset_seed",
    ("subset", "mandatory_center"): "mandatory_center",
    ("continuation", "alpha"): "alpha", ("continuation", "beta1"): "beta1",
    ("continuation", "beta2"): "beta2", ("continuation", "gamma"): "gamma",
    ("continuation", "delta"): "delta", ("continuation", "drop_sqrt"): "drop_sqrt",
    ("continuation", "norm_target"): "norm_target",
    ("continuation", "k_max"): "k_max",
    ("continuation", "mu1"): "mu1", ("continuation", "mu2"): "mu2",
    ("run", "seed"): "seed", ("run", "out"): "out", ("run", "workers"): "workers",
}


def load_config_file(path, cfg: RunConfig) -> RunConfig:
    """Apply a sectioned key=value file; unknown sections or keys are rejected."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            typ = _SCHEMA[section][key]
            value = _parse_bool(raw) if typ is bool else typ(raw)
            setattr(cfg, _KEY_MAP[(section, key)], value)
    return cfg


def echo_config(cfg: RunConfig, out_dir):
    parser = configparser.ConfigParser()
    for (section, key), attr in _KEY_MAP.items():
        value = getattr(cfg, attr)
        if value is None:
            continue
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, repr(value) if isinstance(value, float) else str(value))
    with open(os.path.join(out_dir, "config.resolved.ini"), "w") as fh:
        parser.write(fh)


def _prepare_out(cfg: RunConfig):
    os.makedirs(cfg.out, exist_ok=True)
    echo_config(cfg, cfg.out)


def write_slice_csv(path, state: StateField, other: StateField = None):
    """Axis-0 profile through the lattice center (the u_{i,m,..,m} diagnostic)."""
    spec = state.spec
    mid = spec.m - 1
    sl = (slice(None),) + (mid,) * (spec.d - 1)
    values = state.values[sl]
    second = other.values[sl] if other is not None else None
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "u_pinn"] + (["u_direct"] if second is not None else []))
        for i, v in enumerate(values, start=1):
            row = [i, f"{v:.17g}"]
            if second is not None:
                row.append(f"{second[i - 1]:.17g}")
            writer.writerow(row)


def save_states(path, entries):
    """Concatenated StateField dumps: blocks separated by blank lines."""
    with open(path, "w") as fh:
        for k, state, mu in entries:
            spec = state.spec
            fh.write(f"{spec.d} {spec.n} {spec.centering} {spec.c:.17g} {mu:.17g} {k}\n")
            for idx in np.ndindex(*state.values.shape):
                coords = " ".join(str(i + 1) for i in idx)
                fh.write(f"{coords} {state.values[idx]:.17g}\n")
            fh.write("\n")


def load_states(path):
    """Inverse of save_states; yields (k, StateField, mu)."""
    entries = []
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    i = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        d, n = int(head[0]), int(head[1])
        centering, c, mu = head[2], float(head[3]), float(head[4])
        k = int(head[5]) if len(head) > 5 else 0
        m = (n + 1) // 2 if centering == "site" else n // 2
        spec = build_spec(d, m, centering, c)
        values = np.zeros((n,) * d)
        i += 1
        count = n ** d
        for _ in range(count):
            parts = lines[i].split()
            idx = tuple(int(pv) - 1 for pv in parts[:d])
            values[idx] = float(parts[d])
            i += 1
        entries.append((k, StateField(spec, values), mu))
    return entries


# -- subcommands -------------------------------------------------------------

def cmd_solve(cfg: RunConfig, compare_direct=False):
    _prepare_out(cfg)
    spec = cfg.spec()
    shape = cfg.net_shape()
    problem = pinn.PinnProblem(spec, shape, cfg.input_mode(), mu=cfg.mu)
    lm_cfg = cfg.lm_config()
    fit_cfg = LMConfig(max_iter=300, residual_tol=1e-22, seed=cfg.seed)
    w0, _ = pinn.fit_to_values(problem, pinn.bump_profile(spec), fit_cfg, seed=cfg.seed)
    sub = None
    if cfg.subset_size:
        mandatory = ()
        if cfg.mandatory_center:
            center = np.ravel_multi_index((spec.m - 2,) * spec.d, (spec.n - 2,) * spec.d)
            mandatory = (int(center),)
        sub = SubsetSpec(size=cfg.subset_size, mandatory=mandatory, seed=cfg.subset_seed)
    w, trace = pinn.solve_fixed_mu(problem, w0, lm_cfg, sub=sub)
    state = problem.to_state(w)
    save_state(os.path.join(cfg.out, "solution.txt"), state, cfg.mu)
    save_weights(os.path.join(cfg.out, "weights.txt"), shape, w, augmented=False)
    trace.write_csv(os.path.join(cfg.out, "trace.csv"))
    mse = problem.mse(w)
    direct_state = None
    if compare_direct:
        dstate, _ = oracle.direct_solve(spec, cfg.mu, state.interior_vector(),
                                        lm_cfg, allow_large=spec.d >= 4)
        direct_state = dstate
        save_state(os.path.join(cfg.out, "direct.txt"), dstate, cfg.mu)
        pinn.write_comparison_csv(os.path.join(cfg.out, "compare.csv"), state, dstate)
    write_slice_csv(os.path.join(cfg.out, "slice.csv"), state, direct_state)
    print(f"solve: mse={mse:.6e} iters={len(trace.records)} "
          f"norm={solution_norm(spec, state, ModelParams(cfg.mu)):.6f}")
    return EXIT_OK


def _branch_states(problem, result):
    return [(bp.k, problem.to_state(np.asarray(bp.w)), bp.mu) for bp in result.points]


def cmd_branch(cfg: RunConfig, mode, annotate="none", with_oracle=False):
    _prepare_out(cfg)
    spec = cfg.spec()
    shape = cfg.net_shape()
    problem = pinn.PinnProblem(spec, shape, cfg.input_mode(), mu=None)
    params = cfg.continuation_params(mode)
    lm_cfg = replace(cfg.lm_config(), max_iter=min(cfg.max_iter, 200))
    result = ct.trace_branch(problem, params, lm_cfg, seed=cfg.seed)
    if annotate != "none":
        stability.annotate_branch(result.points, annotate, problem=problem,
                                  spec=spec, shape=shape)
    ct.write_branch_csv(os.path.join(cfg.out, "branch.csv"), result, method="pinn")
    save_states(os.path.join(cfg.out, "states.txt"), _branch_states(problem, result))
    if with_oracle:
        dresult = oracle.direct_trace_branch(spec, params, lm_cfg)
        if annotate != "none":
            stability.annotate_branch(dresult.points, "oracle", spec=spec)
        ct.write_branch_csv(os.path.join(cfg.out, "direct_branch.csv"), dresult,
                            method="direct")
        dstates = [(bp.k, StateField.from_interior(spec, np.asarray(bp.w)), bp.mu)
                   for bp in dresult.points]
        save_states(os.path.join(cfg.out, "direct_states.txt"), dstates)
        if dresult.aborted:
            print(f"direct branch aborted: {dresult.message}")
            return EXIT_PARTIAL
    print(f"branch: {len(result.points)} points, folds={ct.count_folds(result.points)}, "
          f"final norm={result.points[-1].norm:.4f}")
    if result.aborted:
        print(f"branch aborted: {result.message}")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_eig(cfg: RunConfig, input_path, method="both", dump_vectors=False):
    _prepare_out(cfg)
    if not os.path.exists(input_path):
        raise ConfigError(f"input artifact {input_path} not found")
    entries = load_states(input_path)
    if not entries:
        raise ConfigError(f"no states found in {input_path}")
    rows = []
    cfg_lm = replace(cfg.lm_config(), max_iter=max(cfg.max_iter, 600))
    for k, state, mu in entries:
        spec = state.spec
        shape = NetworkShape.from_string(cfg.shape or DEFAULT_SHAPES[spec.d])
        lam_p = lam_o = None
        if method in ("pinn", "both"):
            try:
                res_p = stability.solve_largest_eigenpair(spec, state, mu, shape, cfg_lm)
                lam_p = res_p.lam
                if dump_vectors:
                    save_state(os.path.join(cfg.out, f"eigvec_{k}.txt"), res_p.v, mu)
            except stability.EigenFailure:
                lam_p = None
        if method in ("oracle", "both"):
            lam_o = oracle.direct_largest_eigenpair(spec, state, mu).lam
        lam_for_flag = lam_p if lam_p is not None else lam_o
        stable = None
        if lam_for_flag is not None:
            stable = stability.classify_stability(lam_for_flag) == "stable"
        norm = solution_norm(spec, state, ModelParams(mu))
        rows.append((k, mu, norm, lam_p, lam_o, stable))
    stability.write_eigen_csv(os.path.join(cfg.out, "eigen.csv"), rows)
    both = [r for r in rows if r[3] is not None and r[4] is not None]
    if both:
        worst = max(abs(r[3] - r[4]) for r in both)
        print(f"eig: {len(rows)} states, max |lambda_pinn - lambda_oracle| = {worst:.3e}")
    else:
        print(f"eig: {len(rows)} states")
    return EXIT_OK


# -- sweeps ------------------------------------------------------------------

def _sweep_alpha_task(args):
    (alpha, base) = args
    cfg = RunConfig(**base)
    spec = cfg.spec()
    problem = pinn.PinnProblem(spec, cfg.net_shape(), cfg.input_mode(), mu=None)
    params = cfg.continuation_params("norm")
    params.alpha = alpha
    params.mse_tol = None
    params.constraint_tol = None
    lm_cfg = replace(cfg.lm_config(), max_iter=min(cfg.max_iter, 60))
    t0 = time.perf_counter()
    result = ct.trace_branch(problem, params, lm_cfg, seed=cfg.seed)
    elapsed = time.perf_counter() - t0
    pts = result.points[2:]
    rmse = max(np.sqrt(bp.mse) for bp in pts) if pts else float("nan")
    con = max(abs(bp.constraint) / alpha for bp in pts) if pts else float("nan")
    out_dir = os.path.join(cfg.out, f"alpha_{alpha:.0e}")
    os.makedirs(out_dir, exist_ok=True)
    ct.write_branch_csv(os.path.join(out_dir, "branch.csv"), result, method="pinn")
    return [f"{alpha:.17g}", f"{rmse:.17g}", f"{con:.17g}", len(result.points),
            int(result.aborted), f"{elapsed:.3f}"]


def _sweep_gamma_task(args):
    (gamma, base) = args
    cfg = RunConfig(**base)
    spec = cfg.spec()
    problem = pinn.PinnProblem(spec, cfg.net_shape(), cfg.input_mode(), mu=None)
    params = cfg.continuation_params("norm")
    params.gamma = gamma
    lm_cfg = replace(cfg.lm_config(), max_iter=min(cfg.max_iter, 200))
    t0 = time.perf_counter()
    result = ct.trace_branch(problem, params, lm_cfg, seed=cfg.seed)
    elapsed = time.perf_counter() - t0
    tag = f"gamma_{gamma:.6f}".replace(".", "p")
    out_dir = os.path.join(cfg.out, tag)
    os.makedirs(out_dir, exist_ok=True)
    ct.write_branch_csv(os.path.join(out_dir, "branch.csv"), result, method="pinn")
    worst_mse = max(bp.mse for bp in result.points[2:])
    return [f"{gamma:.17g}", len(result.points), ct.count_folds(result.points),
            f"{worst_mse:.17g}", int(result.aborted), f"{elapsed:.3f}"]


def _sweep_width_task(args):
    (shape_text, base) = args
    cfg = RunConfig(**base)
    cfg.shape = shape_text
    spec = cfg.spec()
    shape = cfg.net_shape()
    problem = pinn.PinnProblem(spec, shape, cfg.input_mode(), mu=cfg.mu)
    fit_cfg = LMConfig(max_iter=300, residual_tol=1e-22, seed=cfg.seed)
    t0 = time.perf_counter()
    w0, _ = pinn.fit_to_values(problem, pinn.bump_profile(spec), fit_cfg, seed=cfg.seed)
    w, trace = pinn.solve_fixed_mu(problem, w0, cfg.lm_config())
    elapsed = time.perf_counter() - t0
    mse = problem.mse(w)
    return [shape_text, shape.n_params, f"{mse:.17g}", len(trace.records),
            f"{elapsed:.3f}"]


def _sweep_beta_task(args):
    ((beta1, beta2), base) = args
    cfg = RunConfig(**base)
    spec = cfg.spec()
    problem = pinn.PinnProblem(spec, cfg.net_shape(), cfg.input_mode(), mu=None)
    params = cfg.continuation_params("arclength")
    params.beta1, params.beta2 = beta1, beta2
    params.mu_init = (-0.10, -0.10 - 1.0 / beta2)
    lm_cfg = replace(cfg.lm_config(), max_iter=min(cfg.max_iter, 200))
    t0 = time.perf_counter()
    result = ct.trace_branch(problem, params, lm_cfg, seed=cfg.seed)
    elapsed = time.perf_counter() - t0
    tag = f"beta_{beta1:g}_{beta2:g}".replace(".", "p")
    out_dir = os.path.join(cfg.out, tag)
    os.makedirs(out_dir, exist_ok=True)
    ct.write_branch_csv(os.path.join(out_dir, "branch.csv"), result, method="pinn")
    return [f"{beta1:.17g}", f"{beta2:.17g}", len(result.points),
            ct.count_folds(result.points), int(result.aborted), f"{elapsed:.3f}"]


_SWEEP_TASKS = {"alpha": _sweep_alpha_task, "gamma": _sweep_gamma_task,
                "width": _sweep_width_task, "beta": _sweep_beta_task}
_SWEEP_HEADERS = {
    "alpha": ["alpha", "system_rmse", "constraint_over_alpha", "points", "aborted", "time_s"],
    "gamma": ["gamma", "points", "folds", "worst_mse", "aborted", "time_s"],
    "width": ["shape", "n_params", "mse", "iters", "time_s"],
    "beta": ["beta1", "beta2", "points", "folds", "aborted", "time_s"],
}

TABLE3_SHAPES = ["3,5,5,1", "3,10,5,1", "3,10,10,1", "3,15,10,1",
                 "3,15,15,1", "3,20,15,1", "3,20,20,1"]


def default_sweep_grid(kind, cfg: RunConfig):
    if kind == "alpha":
        return [10.0 ** e for e in range(-5, 6)]
    if kind == "gamma":
        return [10 / 100, 10 / 300, 10 / 1000, 10 / 3000]
    if kind == "width":
        return list(TABLE3_SHAPES)
    if kind == "beta":
        return [(25.0, 100.0), (12.5, 100.0), (25.0, 50.0)]
    raise ConfigError(f"unknown sweep kind {kind!r}")


def cmd_sweep(cfg: RunConfig, kind, values=None):
    _prepare_out(cfg)
    if kind not in _SWEEP_TASKS:
        raise ConfigError(f"unknown sweep kind {kind!r}")
    grid = values if values else default_sweep_grid(kind, cfg)
    base = cfg.__dict__.copy()
    tasks = [(g, base) for g in grid]
    task_fn = _SWEEP_TASKS[kind]
    rows = []
    failures = 0
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = list(pool.map(task_fn, tasks))
        for value, row in zip(grid, futures):
            rows.append(row)
    else:
        for task in tasks:
            try:
                rows.append(task_fn(task))
            except Exception as exc:  # record, keep sweeping
                failures += 1
                rows.append([str(task[0]), "failed", repr(exc)])
    with open(os.path.join(cfg.out, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SWEEP_HEADERS[kind])
        writer.writerows(rows)
    print(f"sweep {kind}: {len(rows)} grid points, {failures} failures")
    return EXIT_OK


def cmd_compare(cfg: RunConfig):
    _prepare_out(cfg)
    spec = cfg.spec()
    shape = cfg.net_shape()
    problem = pinn.PinnProblem(spec, shape, cfg.input_mode(), mu=cfg.mu)
    lm_cfg = cfg.lm_config()
    fit_cfg = LMConfig(max_iter=300, residual_tol=1e-22, seed=cfg.seed)
    w0, _ = pinn.fit_to_values(problem, pinn.bump_profile(spec), fit_cfg, seed=cfg.seed)
    w, _ = pinn.solve_fixed_mu(problem, w0, lm_cfg)
    state = problem.to_state(w)
    dstate, _ = oracle.direct_solve(spec, cfg.mu, state.interior_vector(), lm_cfg,
                                    allow_large=spec.d >= 4)
    save_state(os.path.join(cfg.out, "pinn.txt"), state, cfg.mu)
    save_state(os.path.join(cfg.out, "direct.txt"), dstate, cfg.mu)
    diff = pinn.write_comparison_csv(os.path.join(cfg.out, "compare.csv"),
                                     state, dstate)
    print(f"compare: max |pinn - direct| = {diff:.3e}")
    return EXIT_OK


# -- argument wiring ---------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--config", default=None, help="sectioned key=value file")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None)
    sp.add_argument("--dim", type=int, default=None)
    sp.add_argument("--m", type=int, default=None)
    sp.add_argument("--centering", choices=["site", "bond"], default=None)
    sp.add_argument("--c", type=float, default=None)
    sp.add_argument("--net", default=None, help="shape like 3,10,10,1")
    sp.add_argument("--input-mode", choices=["raw", "normalized", "fold_sorted"],
                    default=None)
    sp.add_argument("--iters", type=int, default=None)


def _resolve(args, command) -> RunConfig:
    cfg = RunConfig(out=f"out_{command}")
    if args.config:
        load_config_file(args.config, cfg)
    overrides = {
        "dim": args.dim, "m": args.m, "centering": args.centering, "c": args.c,
        "shape": args.net, "mode": args.input_mode, "seed": args.seed,
        "out": args.out, "max_iter": args.iters,
    }
    for attr, value in overrides.items():
        if value is not None:
            setattr(cfg, attr, value)
    for attr in ("mu", "alpha", "beta1", "beta2", "gamma", "delta",
                 "norm_target", "k_max", "subset_size", "workers", "mu1", "mu2"):
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, attr, value)
    cfg.spec()
    cfg.net_shape()
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(
        prog="acsnake",
        description="Steady states, snaking branches, and stability of the "
                    "discrete Allen-Cahn lattice via LM-trained networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="fixed-mu solve")
    _add_common(sp)
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--subset", dest="subset_size", type=int, default=None,
                    help="stochastic subset size (0 = full system)")
    sp.add_argument("--compare-direct", action="store_true")

    sp = sub.add_parser("branch", help="trace a snaking branch")
    _add_common(sp)
    sp.add_argument("--branch-mode", choices=["norm", "arclength"], default=None)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--beta1", type=float, default=None)
    sp.add_argument("--beta2", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--norm-target", dest="norm_target", type=float, default=None)
    sp.add_argument("--k-max", dest="k_max", type=int, default=None)
    sp.add_argument("--mu1", type=float, default=None)
    sp.add_argument("--mu2", type=float, default=None)
    sp.add_argument("--annotate", choices=["none", "pinn", "oracle"], default="none")
    sp.add_argument("--oracle", action="store_true", help="also trace the direct branch")

    sp = sub.add_parser("eig", help="eigenvalues for stored states")
    _add_common(sp)
    sp.add_argument("--input", required=True, help="states.txt or solution.txt artifact")
    sp.add_argument("--method", choices=["pinn", "oracle", "both"], default="both")
    sp.add_argument("--dump-vectors", action="store_true")

    sp = sub.add_parser("sweep", help="parameter sweeps (appendix studies)")
    _add_common(sp)
    sp.add_argument("--kind", choices=["alpha", "gamma", "width", "beta"], required=True)
    sp.add_argument("--mu", type=float, default=None)
    sp.add_argument("--values", default=None,
                    help="comma-separated grid (shapes for width, b1:b2 pairs for beta)")
    sp.add_argument("--norm-target", dest="norm_target", type=float, default=None)
    sp.add_argument("--workers", type=int, default=None)

    sp = sub.add_parser("compare", help="fixed-mu PINN vs direct solution")
    _add_common(sp)
    sp.add_argument("--mu", type=float, default=None)
    return parser


def _parse_sweep_values(kind, text):
    if text is None:
        return None
    parts = [p for p in text.split(",") if p]
    if kind == "width":
        return parts
    if kind == "beta":
        return [tuple(float(x) for x in p.split(":")) for p in parts]
    return [float(p) for p in parts]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args, args.command)
        if args.command == "solve":
            mu_default = -0.5 if cfg.dim >= 3 else -0.1
            if getattr(args, "mu", None) is None and cfg.mu == RunConfig.mu:
                cfg.mu = mu_default
            return cmd_solve(cfg, compare_direct=args.compare_direct)
        if args.command == "branch":
            mode = args.branch_mode or ("norm" if cfg.dim == 1 else "arclength")
            return cmd_branch(cfg, mode, annotate=args.annotate,
                              with_oracle=args.oracle)
        if args.command == "eig":
            return cmd_eig(cfg, args.input, method=args.method,
                           dump_vectors=args.dump_vectors)
        if args.command == "sweep":
            if args.kind == "width" and getattr(args, "mu", None) is None:
                cfg.mu = -0.5
                cfg.dim, cfg.m = 3, 8
                cfg.shape = ""
            values = _parse_sweep_values(args.kind, args.values)
            return cmd_sweep(cfg, args.kind, values=values)
        if args.command == "compare":
            if getattr(args, "mu", None) is None and cfg.dim >= 3:
                cfg.mu = -0.5
            return cmd_compare(cfg)
        raise ConfigError(f"unknown command {args.command}")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, ct.StepFailure, ct.BranchInitError,
            stability.EigenFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
