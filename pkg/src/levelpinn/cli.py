"""Configuration-driven command-line entry point.

Subcommands:
  solve       train one problem with one enforcement method, writing
              history.csv, fields.vtk, and summary.json
  study2d     run all five enforcement strategies on the 2D disk benchmark
              and tabulate interior/boundary errors
  bar1d       train strong-form and weak-form networks on the multiscale
              bar and export solution/loss curves
  geom-check  build a problem's quadrature geometry and report the oracles

Configs are INI files (key = value under [run]/[network]/[train]/[criteria]/
[method_params]); every catalog problem doubles as a preset carrying its
reference settings.  Exit codes: 0 success/converged, 2 usage error,
3 diverged, 4 stopped by safeguard without meeting the criteria.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .enforce import (
    ConvergenceCriteria,
    DivergedError,
    MethodParams,
    al_minimize,
    al_solve,
    lra_solve,
    minmax_solve,
    penalty_solve,
    sa_solve,
)
from .geometry import background_grid, interior_grid, marching_cubes
from .losses import Bar1dLosses, bar_exact_solution
from .metrics import boundary_error, interior_error
from .mlp import MlpParams, flatten_params, init_mlp, unflatten_params
from .optim import AdamState, adam_step
from .physics import build_geometry, catalog, get_problem
from .vtkio import write_point_cloud, write_polydata

__all__ = ["RunConfig", "UsageError", "load_config", "solve", "study2d", "bar1d",
           "geom_check", "main"]

METHODS = ("al", "lra", "penalty", "sa", "minmax", "strong1d", "weak1d")


class UsageError(ValueError):
    """Invalid configuration; reported with exit code 2."""


@dataclass
class RunConfig:
    """One run: problem, method, discretization, and training settings."""

    problem: str
    method: str
    grid_n: int = 75
    hidden_layers: int = 2
    width: int = 30
    lr: float = 5e-3
    epochs: int = 10_000
    max_epochs: int = 50_000
    seed: int = 0
    output_dir: str = "out"
    chunk: int = 4096
    criteria: dict = field(default_factory=dict)  # z_f, b_f, r_f for method=al
    method_params: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        problems = set(catalog())
        if self.problem not in problems:
            raise UsageError(f"problem must be one of {sorted(problems)}, "
                             f"got {self.problem!r}")
        if self.method not in METHODS:
            raise UsageError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method == "al" and not self.criteria:
            raise UsageError("method 'al' requires a [criteria] section "
                             "(z_f, b_f, r_f)")
        if self.method != "al" and self.criteria:
            raise UsageError(f"[criteria] only applies to method 'al', "
                             f"not {self.method!r}")
        for name in ("grid_n", "hidden_layers", "width", "epochs", "max_epochs",
                     "chunk"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive, got {getattr(self, name)}")
        if self.lr <= 0:
            raise UsageError(f"lr must be positive, got {self.lr}")
        if self.method in ("strong1d", "weak1d") and self.problem != "bar1d":
            raise UsageError(f"method {self.method!r} only applies to problem "
                             "'bar1d'")
        return self

    def layer_sizes(self, spec) -> list[int]:
        return [spec.space_dim] + [self.width] * self.hidden_layers + [spec.field_dim]

    def make_criteria(self) -> ConvergenceCriteria:
        return ConvergenceCriteria(
            z_f=float(self.criteria.get("z_f", 5e-3)),
            b_f=float(self.criteria.get("b_f", 1e-2)),
            r_f=float(self.criteria.get("r_f", 1e-2)),
            max_epochs=self.max_epochs,
        )

    def make_method_params(self) -> MethodParams:
        known = {"beta", "alpha", "gamma", "beta0", "lr_beta", "lr_lambda"}
        unknown = set(self.method_params) - known
        if unknown:
            raise UsageError(f"unknown method_params keys {sorted(unknown)}")
        return MethodParams(**{k: float(v) for k, v in self.method_params.items()})


def preset(problem: str) -> RunConfig:
    """Reference settings for a catalog problem."""
    spec = get_problem(problem)
    d = spec.defaults
    cfg = RunConfig(
        problem=problem,
        method="al" if problem not in ("bar1d", "sphere_check") else
        ("strong1d" if problem == "bar1d" else "al"),
        grid_n=d.get("grid_n", 75),
        hidden_layers=d.get("hidden_layers", 2),
        width=d.get("width", 30),
        lr=d.get("lr", 5e-3),
        epochs=d.get("epochs", 10_000),
    )
    if cfg.method == "al":
        cfg.criteria = {
            "z_f": d.get("z_f", 5e-3),
            "b_f": d.get("b_f", 1e-2),
            "r_f": d.get("r_f", 1e-2),
        }
    return cfg


_SECTION_FIELDS = {
    "run": ("problem", "method", "grid_n", "seed", "out"),
    "network": ("hidden_layers", "width"),
    "train": ("lr", "epochs", "max_epochs", "chunk"),
    "criteria": ("z_f", "b_f", "r_f"),
    "method_params": ("beta", "alpha", "gamma", "beta0", "lr_beta", "lr_lambda"),
}


def parse_config_file(path) -> RunConfig:
    """Read the INI grammar documented in the README."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise UsageError(f"cannot read config file {path}")
    for section in parser.sections():
        if section not in _SECTION_FIELDS:
            raise UsageError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SECTION_FIELDS[section]:
                raise UsageError(f"unknown key {key!r} in section [{section}]")
    if "run" not in parser or "problem" not in parser["run"]:
        raise UsageError("config needs [run] problem = <name>")

    run = parser["run"]
    if run["problem"] not in catalog():
        raise UsageError(f"problem must be one of {sorted(catalog())}, "
                         f"got {run['problem']!r}")
    base = preset(run["problem"])
    cfg = RunConfig(
        problem=run["problem"],
        method=run.get("method", base.method),
        grid_n=run.getint("grid_n", base.grid_n),
        seed=run.getint("seed", base.seed),
        output_dir=run.get("out", base.output_dir),
    )
    net = parser["network"] if "network" in parser else {}
    cfg.hidden_layers = int(net.get("hidden_layers", base.hidden_layers))
    cfg.width = int(net.get("width", base.width))
    train = parser["train"] if "train" in parser else {}
    cfg.lr = float(train.get("lr", base.lr))
    cfg.epochs = int(train.get("epochs", base.epochs))
    cfg.max_epochs = int(train.get("max_epochs", base.max_epochs))
    cfg.chunk = int(train.get("chunk", base.chunk))
    if "criteria" in parser:
        cfg.criteria = {k: float(v) for k, v in parser["criteria"].items()}
    elif cfg.method == "al":
        cfg.criteria = dict(base.criteria)
    if "method_params" in parser:
        cfg.method_params = {k: float(v) for k, v in parser["method_params"].items()}
    return cfg.validate()


def load_config(args) -> RunConfig:
    if args.config:
        cfg = parse_config_file(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        raise UsageError("provide --config PATH or --preset NAME")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.epochs is not None:
        cfg.epochs = args.epochs
        cfg.max_epochs = max(cfg.max_epochs, args.epochs)
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg.validate()


# --------------------------------------------------------------------------
# artifacts

HISTORY_COLUMNS = ("epoch", "outer_iter", "objective", "grad_norm",
                   "boundary_error", "interior_error", "beta_max")


def write_history_csv(path, history):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_COLUMNS)
        for i in range(len(history)):
            writer.writerow([
                history.epoch[i], history.outer_iter[i],
                f"{history.objective[i]:.12g}", f"{history.grad_norm[i]:.12g}",
                f"{history.boundary_error[i]:.12g}",
                f"{history.interior_error[i]:.12g}",
                f"{history.beta_max[i]:.12g}",
            ])


def write_fields_vtk(path, spec, interior, params, chunk=8192):
    from .losses import Assembler  # local import to avoid cycles at module load

    # u_hat = D * N evaluated chunked; exact field when available
    from .mlp import MODE_VALUE, forward_stack
    from .physics import solution_jets

    pts = interior.points
    uhat = np.empty((len(pts), spec.field_dim))
    for lo in range(0, len(pts), chunk):
        xc = pts[lo : lo + chunk]
        raw = forward_stack(params, xc, MODE_VALUE, keep=False).out
        uhat[lo : lo + len(xc)] = solution_jets(spec, xc, raw).value
    data = {"u_hat": uhat}
    if spec.exact is not None:
        u = spec.exact.value(pts)
        data["u_exact"] = u
        data["abs_error"] = np.linalg.norm(u - uhat, axis=1)
    write_point_cloud(path, pts, data, title=f"{spec.name} fields")


def write_summary_json(path, cfg, result):
    payload = {
        "problem": cfg.problem,
        "method": cfg.method,
        "interior_error": result["interior_error"],
        "boundary_error": result["boundary_error"],
        "epochs": result["epochs"],
        "wall_time_seconds": result["wall_time_seconds"],
        "converged": result["converged"],
        "stop_reason": result.get("stop_reason", ""),
        "config": asdict(cfg),
    }
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return payload


# --------------------------------------------------------------------------
# subcommand: solve


def _train_pde(cfg: RunConfig, spec, interior, partition, net):
    grids = (interior, partition)
    mp = cfg.make_method_params()
    if cfg.method == "al":
        params, state, history = al_solve(
            spec, grids, net, cfg.make_criteria(), cfg.lr, mp, chunk=cfg.chunk
        )
    else:
        solver = {"penalty": penalty_solve, "lra": lra_solve,
                  "sa": sa_solve, "minmax": minmax_solve}[cfg.method]
        params, state, history = solver(
            spec, grids, net, cfg.epochs, cfg.lr, mp, chunk=cfg.chunk
        )
        history.converged = True
    return params, state, history


def solve(cfg: RunConfig) -> int:
    """Train one configuration and write the run artifacts."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = get_problem(cfg.problem)
    t0 = time.perf_counter()

    if cfg.problem == "bar1d":
        return _solve_bar(cfg, spec, out, t0)
    if spec.operator is None:
        raise UsageError(f"problem {cfg.problem!r} is geometry-only; "
                         "use the geom-check subcommand")

    interior, partition = build_geometry(spec, cfg.grid_n)
    net = init_mlp(cfg.layer_sizes(spec), cfg.seed)
    params, state, history = _train_pde(cfg, spec, interior, partition, net)

    i_err = interior_error(params, spec, interior) if spec.exact else float("nan")
    b_err = boundary_error(params, spec, partition)
    wall = time.perf_counter() - t0
    write_history_csv(out / "history.csv", history)
    write_fields_vtk(out / "fields.vtk", spec, interior, params)
    result = {
        "interior_error": i_err,
        "boundary_error": b_err,
        "epochs": len(history),
        "wall_time_seconds": wall,
        "converged": bool(history.converged),
        "stop_reason": history.stop_reason,
    }
    write_summary_json(out / "summary.json", cfg, result)
    print(f"{cfg.problem}/{cfg.method}: interior_error={i_err:.3e} "
          f"boundary_error={b_err:.3e} epochs={len(history)} "
          f"converged={history.converged} ({history.stop_reason})")
    if cfg.method == "al" and not history.converged:
        return 4
    return 0


# --------------------------------------------------------------------------
# subcommand: bar1d


def _train_bar(which: str, net: MlpParams, epochs: int, lr: float,
               bar: Bar1dLosses):
    """Fixed-epoch ADAM on the strong or weak bar loss."""
    loss_fn = bar.strong if which == "strong" else bar.weak
    theta = flatten_params(net)
    adam = AdamState.fresh(len(theta), lr=lr)
    losses = []
    for epoch in range(epochs):
        params = unflatten_params(net.layer_sizes, theta)
        loss, grad = loss_fn(params)
        if not np.isfinite(loss):
            raise DivergedError(epoch, f"{which} bar loss became {loss!r}")
        losses.append(loss)
        theta = adam_step(adam, theta, grad)
    params = unflatten_params(net.layer_sizes, theta)
    return params, np.array(losses)


def _bar_rel_l1(bar_values, exact_values, weights):
    return float((np.abs(bar_values - exact_values) * weights).sum()
                 / (np.abs(exact_values) * weights).sum())


def _bar_solution_values(params, x):
    from .mlp import forward

    return np.sin(np.pi * x) * forward(params, x[:, None])[:, 0]


def _solve_bar(cfg: RunConfig, spec, out: Path, t0: float) -> int:
    if cfg.method not in ("strong1d", "weak1d"):
        raise UsageError("problem 'bar1d' uses method strong1d or weak1d")
    d = spec.defaults
    bar = Bar1dLosses(n_hat=d.get("n_hat", 18), n_quad=d.get("quad_points", 2001))
    net = init_mlp(cfg.layer_sizes(spec), cfg.seed)
    x_eval = np.linspace(0.0, 1.0, 1001)
    u_exact = bar_exact_solution(x_eval)
    which = "strong" if cfg.method == "strong1d" else "weak"
    params, losses = _train_bar(which, net, cfg.epochs, cfg.lr, bar)

    w = np.full(len(x_eval), x_eval[1] - x_eval[0])
    w[0] = w[-1] = 0.5 * (x_eval[1] - x_eval[0])
    uhat = _bar_solution_values(params, x_eval)
    err = _bar_rel_l1(uhat, u_exact, w)
    wall = time.perf_counter() - t0

    with open(out / "history.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("epoch", "loss"))
        for i, val in enumerate(losses):
            writer.writerow([i, f"{val:.12g}"])
    with open(out / "solutions.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("x", "u_exact", "u_hat"))
        for xi, ue, uh in zip(x_eval, u_exact, uhat):
            writer.writerow([f"{xi:.12g}", f"{ue:.12g}", f"{uh:.12g}"])
    result = {
        "interior_error": err, "boundary_error": 0.0, "epochs": cfg.epochs,
        "wall_time_seconds": wall, "converged": True, "stop_reason": "epochs",
    }
    write_summary_json(out / "summary.json", cfg, result)
    print(f"bar1d/{cfg.method}: rel_l1_error={err:.3e} final_loss={losses[-1]:.3e}")
    return 0


def bar1d(cfg: RunConfig) -> int:
    """Strong-versus-weak comparison artifact for the multiscale bar."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = get_problem("bar1d")
    d = spec.defaults
    bar = Bar1dLosses(n_hat=d.get("n_hat", 18), n_quad=d.get("quad_points", 2001))
    net = init_mlp(cfg.layer_sizes(spec), cfg.seed)
    x_eval = np.linspace(0.0, 1.0, 1001)
    u_exact = bar_exact_solution(x_eval)

    t0 = time.perf_counter()
    strong_params, strong_losses = _train_bar("strong", net, cfg.epochs, cfg.lr, bar)
    weak_params, weak_losses = _train_bar("weak", net, cfg.epochs, cfg.lr, bar)
    wall = time.perf_counter() - t0

    u_strong = _bar_solution_values(strong_params, x_eval)
    u_weak = _bar_solution_values(weak_params, x_eval)
    with open(out / "solutions.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("x", "u_exact", "u_strong", "u_weak"))
        for row in zip(x_eval, u_exact, u_strong, u_weak):
            writer.writerow([f"{v:.12g}" for v in row])
    with open(out / "losses.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("epoch", "strong_loss", "weak_loss"))
        for i, (ls, lw) in enumerate(zip(strong_losses, weak_losses)):
            writer.writerow([i, f"{ls:.12g}", f"{lw:.12g}"])

    w = np.full(len(x_eval), x_eval[1] - x_eval[0])
    w[0] = w[-1] = 0.5 * (x_eval[1] - x_eval[0])
    err_strong = _bar_rel_l1(u_strong, u_exact, w)
    err_weak = _bar_rel_l1(u_weak, u_exact, w)
    summary = {
        "strong_rel_l1_error": err_strong,
        "weak_rel_l1_error": err_weak,
        "strong_loss_drop": float(strong_losses[0] / max(strong_losses[-1], 1e-300)),
        "epochs": cfg.epochs,
        "wall_time_seconds": wall,
        "seed": cfg.seed,
    }
    with open(out / "summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"bar1d: strong={err_strong:.3e} weak={err_weak:.3e} "
          f"(ratio {err_weak / max(err_strong, 1e-300):.1f}x)")
    return 0


# --------------------------------------------------------------------------
# subcommand: study2d

STUDY_ROWS = (
    ("penalty_beta1", "penalty", {"beta": 1.0}, None),
    ("penalty_beta100", "penalty", {"beta": 100.0}, None),
    ("lra", "lra", {"alpha": 0.9, "beta0": 1.0}, None),
    ("sa", "sa", {"beta0": 1.0, "lr_beta": 0.5}, None),
    ("minmax", "minmax", {"lr_lambda": 1e-2}, 1e-3),
    ("al", "al", {"beta0": 1.0, "gamma": 2.0}, None),
)


def run_study_row(label, method, mp_dict, lr_override, cfg, spec, grids, net,
                  tail=100):
    """One method row: train on the disk, average errors over the last steps."""
    from .enforce import PinnProblem, train_fixed

    lr = lr_override if lr_override is not None else cfg.lr
    mp = MethodParams(**mp_dict)
    problem = PinnProblem(spec, grids[0], grids[1], net.layer_sizes, chunk=cfg.chunk)
    theta0 = flatten_params(net)
    if method == "al":
        criteria = ConvergenceCriteria(z_f=1e-12, b_f=1e-12, r_f=1e-2,
                                       max_epochs=cfg.epochs)
        theta, state, history = al_minimize(problem, theta0, criteria, lr, mp,
                                            stop_on_criteria=False)
    else:
        theta, state, history = train_fixed(problem, theta0, method, cfg.epochs,
                                            lr, mp)
    n = min(tail, len(history))
    i_err = float(np.mean(history.interior_error[-n:]))
    b_err = float(np.mean(history.boundary_error[-n:]))
    return {"method": label, "interior_error": i_err, "boundary_error": b_err,
            "epochs": len(history), "history": history}


def study2d(cfg: RunConfig) -> int:
    """All five strategies on the disk benchmark; table.csv of averaged errors."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = get_problem("disk2d")
    grids = build_geometry(spec, cfg.grid_n)
    net = init_mlp(cfg.layer_sizes(spec), cfg.seed)

    rows, failures = [], []
    for label, method, mp_dict, lr_override in STUDY_ROWS:
        try:
            t0 = time.perf_counter()
            row = run_study_row(label, method, mp_dict, lr_override, cfg, spec,
                                grids, net)
            row["wall_time_seconds"] = time.perf_counter() - t0
            rows.append(row)
            print(f"{label}: interior={row['interior_error']:.3e} "
                  f"boundary={row['boundary_error']:.3e}")
        except (DivergedError, FloatingPointError) as err:
            failures.append((label, str(err)))
            print(f"{label}: FAILED ({err})", file=sys.stderr)

    with open(out / "table.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("method", "interior_error", "boundary_error"))
        for row in rows:
            writer.writerow([row["method"], f"{row['interior_error']:.6e}",
                             f"{row['boundary_error']:.6e}"])
    for row in rows:
        write_history_csv(out / f"history_{row['method']}.csv", row["history"])
    return 0 if not failures else 3


# --------------------------------------------------------------------------
# subcommand: geom-check


def geom_check(cfg: RunConfig) -> int:
    """Build the geometry and report quadrature oracles."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = get_problem(cfg.problem)
    if spec.level_set is None:
        raise UsageError(f"problem {cfg.problem!r} has no level-set geometry")
    grid = background_grid(cfg.grid_n, spec.level_set.box)
    interior = interior_grid(spec.level_set, grid)
    report = {
        "problem": cfg.problem,
        "grid_n": cfg.grid_n,
        "n_interior": interior.count,
        "delta_v": interior.delta_v,
        "volume_estimate": interior.volume,
    }
    if spec.space_dim == 3:
        mesh = marching_cubes(spec.level_set, cfg.grid_n)
        report.update(
            n_surface=mesh.count,
            total_area=mesh.total_area,
            normal_closure=mesh.normal_closure(),
            n_degenerate=mesh.n_degenerate,
        )
        write_polydata(out / "mesh.vtk", mesh.vertices, mesh.faces,
                       cell_data={"area": mesh.areas, "normal": mesh.normals},
                       title=f"{cfg.problem} boundary")
    with open(out / "geometry.json", "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    for key, val in report.items():
        print(f"{key}: {val}")
    return 0


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levelpinn",
        description="Meshfree strong-form PINN solver on level-set geometries",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "train one problem/method configuration"),
        ("study2d", "compare all enforcement strategies on the disk"),
        ("bar1d", "strong-versus-weak multiscale bar demonstration"),
        ("geom-check", "report geometry quadrature oracles"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None, help="INI config path")
        p.add_argument("--preset", type=str, default=None,
                       help="named preset (catalog problem name)")
        p.add_argument("--seed", type=int, default=None, help="override seed")
        p.add_argument("--epochs", type=int, default=None, help="override epochs")
        p.add_argument("--out", type=str, default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "study2d" and not (args.config or args.preset):
            args.preset = "disk2d"
        if args.command == "bar1d" and not (args.config or args.preset):
            args.preset = "bar1d"
        if args.command == "geom-check" and not (args.config or args.preset):
            args.preset = "sphere_check"
        cfg = load_config(args)
        if args.command == "solve":
            return solve(cfg)
        if args.command == "study2d":
            return study2d(cfg)
        if args.command == "bar1d":
            return bar1d(cfg)
        return geom_check(cfg)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 2
    except DivergedError as err:
        print(f"diverged: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
