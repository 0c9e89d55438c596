"""Command-line experiment runner.

Subcommands run canned experiments (cp, wmmse, em, toy) or the surrogate
check suite (verify). A JSON config file supplies ``{"experiment": ...,
"params": {...}, "seeds": [...], "output_dir": ...}``; command-line flags
override it. Exit codes: 0 success, 2 config validation failure, 3 solver
failure. Per-seed trace CSVs and summary.json are written atomically and
are byte-identical across reruns of the same config.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np

from . import app_classic, app_tensor, app_wmmse, problems, verify
from .core import (
    BsumError,
    InvalidArgumentError,
    ObjectiveOracle,
    Point,
    RngStream,
    Trace,
    box,
    make_block_structure,
    simplex,
)
from .engine import SolveOptions
from .surrogates import QuadraticApprox

__all__ = ["main", "run_experiment", "summarize", "iterations_to_threshold"]

EXPERIMENTS = ("cp", "wmmse", "em", "toy", "verify")

TOY_SOLVERS = ("prox", "alternating_prox", "splitting", "cccp", "bsca")

VERIFY_TARGETS = ("proximal", "dc", "lipschitz", "quadratic_approx",
                  "logdet", "em_jensen")


class ConfigError(Exception):
    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


def _line_of(raw: str | None, key: str | None) -> int | None:
    if raw is None or key is None:
        return None
    needle = f'"{key}"'
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def _fail_config(err: ConfigError, raw: str | None) -> int:
    line = _line_of(raw, err.key)
    where = f" (line {line})" if line is not None else ""
    print(f"config error{where}: {err}")
    return 2


# ---------------------------------------------------------------- validation

def _expect(cond: bool, message: str, key: str | None = None) -> None:
    if not cond:
        raise ConfigError(message, key)


def _validate_seeds(seeds: Any) -> list[int]:
    _expect(isinstance(seeds, list) and len(seeds) >= 1,
            "seeds must be a non-empty list of integers", "seeds")
    out = []
    for s in seeds:
        _expect(isinstance(s, int) and not isinstance(s, bool) and s >= 0,
                f"seed {s!r} is not a nonnegative integer", "seeds")
        out.append(int(s))
    return out


_PARAM_TABLES: dict[str, dict[str, tuple]] = {
    # key: (type tag, default). Type tags: int, num, str, list, bool.
    "cp": {
        "instance": ("str", "swamp"),
        "theta": ("num", math.pi / 36),
        "tensor_file": ("str", None),
        "rank": ("int", 3),
        "dims": ("list", [4, 4, 4]),
        "modes": ("list", list(app_tensor.CP_MODES)),
        "epsilon": ("num", 1e-5),
        "max_iters": ("int", 5000),
        "tol": ("num", 1e-14),
        "lam": ("num", 0.1),
        "lam0": ("num", 1e-7),
        "lam1": ("num", 0.1),
    },
    "wmmse": {
        "n_cells": ("int", 2),
        "users_per_cell": ("int", 1),
        "n_antennas": ("int", 2),
        "streams": ("int", 1),
        "noise_power": ("num", 1.0),
        "power": ("num", 1.0),
        "max_iters": ("int", 400),
        "tol": ("num", 1e-9),
    },
    "em": {
        "n_components": ("int", 2),
        "modes": ("list", ["full", "block"]),
        "data_file": ("str", None),
        "n_per_cluster": ("int", 500),
        "centers": ("list", [-5.0, 5.0]),
        "sigma": ("num", 1.0),
        "max_iters": ("int", 500),
        "tol": ("num", 1e-10),
    },
    "toy": {
        "solver": ("str", "prox"),
        "max_iters": ("int", 200),
        # Below ~1e-8 the bsca demo's Armijo search hits rounding noise.
        "tol": ("num", 1e-8),
    },
    "verify": {
        "surrogate": ("str", "all"),
        "n_samples": ("int", 1000),
        "n_anchors": ("int", 60),
        "max_iters": ("int", 100),
        "tol": ("num", 1e-8),
    },
}


def _validate_params(experiment: str, params: Any) -> dict:
    _expect(isinstance(params, dict), "params must be an object", "params")
    table = _PARAM_TABLES[experiment]
    for key in params:
        _expect(key in table, f"unknown parameter {key!r} for experiment {experiment!r}", key)
    out = {}
    for key, (kind, default) in table.items():
        if key not in params:
            out[key] = default
            continue
        val = params[key]
        if kind == "int":
            _expect(isinstance(val, int) and not isinstance(val, bool),
                    f"parameter {key!r} must be an integer", key)
        elif kind == "num":
            _expect(isinstance(val, (int, float)) and not isinstance(val, bool),
                    f"parameter {key!r} must be a number", key)
            val = float(val)
        elif kind == "str":
            _expect(isinstance(val, str), f"parameter {key!r} must be a string", key)
        elif kind == "list":
            _expect(isinstance(val, list), f"parameter {key!r} must be a list", key)
        out[key] = val
    return out


def validate_config(config: Any) -> dict:
    _expect(isinstance(config, dict), "config must be a JSON object", None)
    for key in config:
        _expect(key in ("experiment", "params", "seeds", "output_dir"),
                f"unknown config key {key!r}", key)
    _expect("experiment" in config, "missing required key 'experiment'", None)
    experiment = config["experiment"]
    _expect(isinstance(experiment, str) and experiment in EXPERIMENTS,
            f"experiment must be one of {EXPERIMENTS}, got {experiment!r}", "experiment")
    seeds = _validate_seeds(config.get("seeds", [0]))
    params = _validate_params(experiment, config.get("params", {}))
    output_dir = config.get("output_dir", "bsumkit_runs")
    _expect(isinstance(output_dir, str) and output_dir != "",
            "output_dir must be a non-empty path", "output_dir")
    if experiment == "cp":
        _expect(params["instance"] in ("swamp", "random", "file"),
                "instance must be 'swamp', 'random', or 'file'", "instance")
        if params["instance"] == "file":
            _expect(params["tensor_file"] is not None,
                    "instance 'file' needs a tensor_file path", "tensor_file")
        for mode in params["modes"]:
            _expect(mode in app_tensor.CP_MODES,
                    f"unknown cp mode {mode!r}", "modes")
        _expect(params["rank"] >= 1, "rank must be >= 1", "rank")
        _expect(params["epsilon"] > 0, "epsilon must be positive", "epsilon")
    if experiment == "em":
        for mode in params["modes"]:
            _expect(mode in ("full", "block"), f"unknown em mode {mode!r}", "modes")
        _expect(params["n_components"] >= 1, "n_components must be >= 1", "n_components")
    if experiment == "toy":
        _expect(params["solver"] in TOY_SOLVERS,
                f"solver must be one of {TOY_SOLVERS}", "solver")
    if experiment == "verify":
        _expect(params["surrogate"] == "all" or params["surrogate"] in VERIFY_TARGETS,
                f"surrogate must be 'all' or one of {VERIFY_TARGETS}", "surrogate")
        _expect(params["n_samples"] >= 1, "n_samples must be >= 1", "n_samples")
    _expect(params.get("max_iters", 1) >= 1, "max_iters must be >= 1", "max_iters")
    _expect(params.get("tol", 1.0) > 0, "tol must be positive", "tol")
    return {"experiment": experiment, "params": params, "seeds": seeds,
            "output_dir": output_dir}


# ------------------------------------------------------------------- output

def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _block_label(block) -> str:
    if block is None:
        return ""
    if isinstance(block, (int, np.integer)):
        return str(int(block))
    return "|".join(str(int(i)) for i in block)


def trace_csv_text(trace: Trace) -> str:
    lines = ["iter,block,objective,step_size,elapsed_ns"]
    for rec in trace.records:
        step = "" if rec.step_size is None else _fmt(rec.step_size)
        lines.append(f"{rec.iteration},{_block_label(rec.block)},"
                     f"{_fmt(rec.objective)},{step},{int(rec.elapsed_ns)}")
    return "\n".join(lines) + "\n"


def rates_csv_text(trace: Trace) -> str:
    lines = ["iter,objective,sum_rate_nats,max_power_violation"]
    for rec in trace.records:
        lines.append(f"{rec.iteration},{_fmt(rec.objective)},"
                     f"{_fmt(rec.extras['sum_rate_nats'])},"
                     f"{_fmt(rec.extras['max_power_violation'])}")
    return "\n".join(lines) + "\n"


def iterations_to_threshold(trace: Trace, threshold: float) -> int | None:
    for rec in trace.records:
        if rec.objective < threshold:
            return rec.iteration
    return None


def summarize(iteration_counts: dict[str, list]) -> dict:
    """Aggregate iterations-to-threshold; None entries count as censored."""
    out: dict[str, dict] = {}
    for key in sorted(iteration_counts):
        vals = iteration_counts[key]
        done = [int(v) for v in vals if v is not None]
        entry: dict[str, Any] = {
            "count": len(vals),
            "converged": len(done),
            "censored": len(vals) - len(done),
        }
        if done:
            entry["mean"] = float(np.mean(done))
            entry["median"] = float(np.median(done))
            entry["min"] = int(np.min(done))
            entry["max"] = int(np.max(done))
        out[key] = entry
    return out


def _pool_map(fn: Callable, tasks: Sequence) -> list:
    if not tasks:
        return []
    env = os.environ.get("BSUM_THREADS")
    if env is not None:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ConfigError(f"BSUM_THREADS must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ConfigError("BSUM_THREADS must be >= 1")
    else:
        cap = os.cpu_count() or 1
    workers = min(cap, len(tasks))
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# -------------------------------------------------------------- experiments

def _load_cp_instance(params: dict, out_dir: str) -> app_tensor.DenseTensor3:
    if params["instance"] == "file":
        try:
            return app_tensor.read_tensor(params["tensor_file"])
        except OSError as exc:
            raise ConfigError(f"cannot read tensor file: {exc}", "tensor_file") from exc
        except InvalidArgumentError as exc:
            raise ConfigError(f"bad tensor file: {exc}", "tensor_file") from exc
    if params["instance"] == "swamp":
        tensor = app_tensor.build_swamp_instance(params["theta"])
    else:
        dims = params["dims"]
        if len(dims) != 3 or not all(isinstance(d, int) and d >= 1 for d in dims):
            raise ConfigError("dims must be three positive integers", "dims")
        tensor = app_tensor.random_rank_instance(
            (dims[0], dims[1], dims[2]), params["rank"], RngStream(0, key=(99,)))
    app_tensor.write_tensor(os.path.join(out_dir, "cp_instance.txt"), tensor)
    return tensor


def _run_cp(params: dict, seeds: list[int], out_dir: str) -> tuple[dict, int]:
    tensor = _load_cp_instance(params, out_dir)
    opts = SolveOptions(max_iters=params["max_iters"], tol=params["tol"],
                        target_objective=params["epsilon"])
    tasks = [(mode, seed) for mode in params["modes"] for seed in seeds]

    def one(task):
        mode, seed = task
        try:
            _, trace = app_tensor.run_cp(
                tensor, params["rank"], mode=mode, opts=opts,
                rng=RngStream(seed), lam=params["lam"],
                lam0=params["lam0"], lam1=params["lam1"])
            return mode, seed, trace, None
        except BsumError as exc:
            return mode, seed, None, str(exc)

    results = _pool_map(one, tasks)
    counts: dict[str, list] = {m: [] for m in params["modes"]}
    errors = []
    for mode, seed, trace, err in results:
        if err is not None:
            errors.append({"mode": mode, "seed": seed, "error": err})
            counts[mode].append(None)
            continue
        _atomic_write(os.path.join(out_dir, f"cp_{mode}_seed{seed}.csv"),
                      trace_csv_text(trace))
        counts[mode].append(iterations_to_threshold(trace, params["epsilon"]))
    summary = {
        "experiment": "cp",
        "threshold": params["epsilon"],
        "iterations_to_threshold": summarize(counts),
        "errors": sorted(errors, key=lambda e: (e["mode"], e["seed"])),
    }
    return summary, (3 if errors else 0)


def _run_wmmse(params: dict, seeds: list[int], out_dir: str) -> tuple[dict, int]:
    spec = app_wmmse.NetworkSpec.build(
        n_cells=params["n_cells"], users_per_cell=params["users_per_cell"],
        n_antennas=params["n_antennas"], streams=params["streams"],
        noise_power=params["noise_power"], power=params["power"])
    opts = SolveOptions(max_iters=params["max_iters"], tol=params["tol"])

    def one(seed):
        try:
            H = app_wmmse.gen_channels(spec, RngStream(seed))
            V0 = app_wmmse.init_transmitters(spec, RngStream(seed).substream(1))
            state, trace = app_wmmse.run_wmmse(spec, H, V0, opts)
            return seed, state, trace, None
        except BsumError as exc:
            return seed, None, None, str(exc)

    results = _pool_map(one, seeds)
    final_rates = {}
    counts: dict[str, list] = {"wmmse": []}
    errors = []
    for seed, state, trace, err in results:
        if err is not None:
            errors.append({"seed": seed, "error": err})
            counts["wmmse"].append(None)
            continue
        _atomic_write(os.path.join(out_dir, f"wmmse_seed{seed}.csv"),
                      trace_csv_text(trace))
        _atomic_write(os.path.join(out_dir, f"wmmse_rates_seed{seed}.csv"),
                      rates_csv_text(trace))
        final_rates[str(seed)] = trace.records[-1].extras["sum_rate_nats"]
        counts["wmmse"].append(trace.n_iterations
                               if trace.terminal_status == "converged" else None)
    summary = {
        "experiment": "wmmse",
        "final_sum_rate_nats": dict(sorted(final_rates.items())),
        "iterations_to_convergence": summarize(counts),
        "errors": sorted(errors, key=lambda e: e["seed"]),
    }
    return summary, (3 if errors else 0)


def _run_em(params: dict, seeds: list[int], out_dir: str) -> tuple[dict, int]:
    opts = SolveOptions(max_iters=params["max_iters"], tol=params["tol"])
    if params["data_file"] is not None:
        fixed_data = np.loadtxt(params["data_file"], dtype=np.float64).ravel()
    else:
        fixed_data = None
    tasks = [(mode, seed) for mode in params["modes"] for seed in seeds]

    def one(task):
        mode, seed = task
        try:
            if fixed_data is not None:
                data = fixed_data
            else:
                data = app_classic.two_cluster_dataset(
                    RngStream(seed), n_per_cluster=params["n_per_cluster"],
                    centers=tuple(params["centers"]), sigma=params["sigma"])
            theta, trace = app_classic.em_gmm(
                data, params["n_components"], mode=mode, opts=opts)
            return mode, seed, theta, trace, None
        except BsumError as exc:
            return mode, seed, None, None, str(exc)

    results = _pool_map(one, tasks)
    finals: dict[str, dict] = {m: {} for m in params["modes"]}
    errors = []
    for mode, seed, theta, trace, err in results:
        if err is not None:
            errors.append({"mode": mode, "seed": seed, "error": err})
            continue
        _atomic_write(os.path.join(out_dir, f"em_{mode}_seed{seed}.csv"),
                      trace_csv_text(trace))
        finals[mode][str(seed)] = {
            "nll": trace.final_objective,
            "iterations": trace.n_iterations,
            "warnings": len(trace.warnings),
        }
    summary = {
        "experiment": "em",
        "final": {m: dict(sorted(v.items())) for m, v in finals.items()},
        "errors": sorted(errors, key=lambda e: (e["mode"], e["seed"])),
    }
    return summary, (3 if errors else 0)


def _toy_trace(solver: str, opts: SolveOptions) -> Trace:
    if solver == "prox":
        f = ObjectiveOracle(value=lambda x: float(x @ x),
                            gradient=lambda x: 2.0 * x)
        x0 = Point(np.array([2.0]), make_block_structure([1]))
        _, trace = app_classic.proximal_point_solve(
            f, lambda part, y, c: y.part(part) / (2.0 * c + 1.0), x0, c=1.0, opts=opts)
        return trace
    if solver == "alternating_prox":
        # f = (x1 + x2 - 1)^2; block prox update is linear, closed form.
        f = ObjectiveOracle(value=lambda x: float((x[0] + x[1] - 1.0) ** 2))

        def prox(part, y, c):
            i = part if isinstance(part, int) else part[0]
            other = y.values[1 - i]
            return np.array([(2.0 * c * (1.0 - other) + y.values[i]) / (2.0 * c + 1.0)])

        x0 = Point(np.zeros(2), make_block_structure([1, 1]))
        _, trace = app_classic.alternating_proximal_solve(f, prox, x0, c=1.0, opts=opts)
        return trace
    if solver == "splitting":
        _, surrogate, x0 = problems.lasso_problem(target=[2.0], weight=1.0, gamma=1.0)
        _, trace = app_classic.forward_backward_solve(
            surrogate.nonsmooth_total, surrogate.prox, surrogate.smooth,
            beta=1.0, gamma=1.0, x0=x0, opts=opts)
        return trace
    if solver == "cccp":
        _, dc, x0 = problems.separable_quartic_dc([1])
        x0 = x0.with_values(np.array([8.0]))
        _, trace = app_classic.cccp_solve(dc, x0, opts=opts)
        return trace
    if solver == "bsca":
        def value(x):
            return float((x[0] - 1.0) ** 4 + (x[1] + 2.0) ** 2 + x[0] * x[1] / 10.0)

        def gradient(x):
            return np.array([4.0 * (x[0] - 1.0) ** 3 + x[1] / 10.0,
                             2.0 * (x[1] + 2.0) + x[0] / 10.0])

        from .engine import run_bsca
        f = ObjectiveOracle(value=value, gradient=gradient)
        h = QuadraticApprox(f, t=0.25)
        x0 = Point(np.zeros(2), make_block_structure([1, 1]))
        _, trace = run_bsca(f, h, x0, opts)
        return trace
    raise ConfigError(f"unknown toy solver {solver!r}", "solver")


def _run_toy(params: dict, seeds: list[int], out_dir: str) -> tuple[dict, int]:
    opts = SolveOptions(max_iters=params["max_iters"], tol=params["tol"])
    solver = params["solver"]
    finals = {}
    for seed in seeds:
        trace = _toy_trace(solver, opts)
        _atomic_write(os.path.join(out_dir, f"toy_{solver}_seed{seed}.csv"),
                      trace_csv_text(trace))
        finals[str(seed)] = {"objective": trace.final_objective,
                             "iterations": trace.n_iterations,
                             "status": trace.terminal_status}
    summary = {"experiment": "toy", "solver": solver,
               "final": dict(sorted(finals.items())), "errors": []}
    return summary, 0


def _verify_jobs(seed: int, n_samples: int, n_anchors: int):
    """Shipped surrogate instances paired with their sample spaces and checks."""
    jobs = {}

    quad = problems.QuadraticProblem(
        Q=np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]]),
        b=np.array([1.0, -2.0, 0.5]))
    structure = make_block_structure([1, 2])
    space = verify.SampleSpace.boxed(structure)
    jobs["proximal"] = {
        "surrogate": quad.proximal_surrogate(c=0.7),
        "objective": quad.objective(),
        "space": space,
        "checks": ("tightness", "upper_bound", "first_order"),
    }

    f_dc, dc, _ = problems.separable_quartic_dc([2])
    jobs["dc"] = {
        "surrogate": dc,
        "objective": f_dc,
        "space": verify.SampleSpace.boxed(make_block_structure([2])),
        "checks": ("tightness", "upper_bound", "first_order"),
    }

    f_lasso, lasso, _ = problems.lasso_problem(target=[1.0, -2.0], weight=0.5, gamma=1.0)
    jobs["lipschitz"] = {
        "surrogate": lasso,
        "objective": f_lasso,
        "space": verify.SampleSpace.boxed(make_block_structure([2])),
        "checks": ("tightness", "upper_bound", "first_order", "composite"),
    }

    # On the box [-2, 2]^2 the quartic's curvature tops out at 3*4 - 1 = 11,
    # so the 1/t = 20 quadratic model dominates there.
    f_quartic = ObjectiveOracle(
        value=lambda x: float(np.sum(x ** 4) / 4.0 - np.sum(x ** 2) / 2.0),
        gradient=lambda x: x ** 3 - x)
    jobs["quadratic_approx"] = {
        "surrogate": QuadraticApprox(f_quartic, t=0.05),
        "objective": f_quartic,
        "space": verify.SampleSpace.boxed(make_block_structure([1, 1]), lo=-2.0, hi=2.0),
        "checks": ("tightness", "upper_bound", "first_order"),
    }

    logdet_f, logdet_u, logdet_space = problems.affine_logdet_family()
    jobs["logdet"] = {
        "surrogate": logdet_u,
        "objective": logdet_f,
        "space": logdet_space,
        "checks": ("tightness", "upper_bound", "first_order"),
    }

    em_data = app_classic.two_cluster_dataset(
        RngStream(seed, key=(7,)), n_per_cluster=20, centers=(-2.0, 2.0), sigma=0.8)
    em_structure = make_block_structure([2, 2, 2])
    em_space = verify.SampleSpace(
        structure=em_structure,
        feasible=(simplex(floor=0.05), box([-4.0, -4.0], [4.0, 4.0]),
                  box([0.3, 0.3], [3.0, 3.0])),
        lo=-4.0, hi=4.0)
    em_f = ObjectiveOracle(value=lambda v: app_classic.gmm_nll(
        app_classic.GmmParams.from_point(Point(v, em_structure)), em_data))
    jobs["em_jensen"] = {
        "surrogate": app_classic.GmmJensenSurrogate(em_data, s_floor=1e-8),
        "objective": em_f,
        "space": em_space,
        "checks": ("tightness", "upper_bound", "first_order"),
    }
    return jobs


def run_verify_suite(surrogate: str = "all", seed: int = 0, n_samples: int = 1000,
                     n_anchors: int = 60) -> dict[str, list[verify.CheckReport]]:
    """Run the check battery over the shipped surrogates; returns reports."""
    jobs = _verify_jobs(seed, n_samples, n_anchors)
    names = list(jobs) if surrogate == "all" else [surrogate]
    results: dict[str, list[verify.CheckReport]] = {}
    for name in names:
        job = jobs[name]
        space = job["space"]
        rng = RngStream(seed, key=(hash_name(name),))
        gen = rng.substream(0).generator()
        anchors = [space.sample_point(gen) for _ in range(n_anchors)]
        reports = []
        if "tightness" in job["checks"]:
            reports.append(verify.check_tightness(job["surrogate"], job["objective"],
                                                  anchors))
        if "upper_bound" in job["checks"]:
            reports.append(verify.check_upper_bound(
                job["surrogate"], job["objective"], space, rng.substream(1),
                n_samples=n_samples))
        if "first_order" in job["checks"]:
            reports.append(verify.check_first_order_match(
                job["surrogate"], job["objective"], anchors[:max(10, n_anchors // 2)],
                space, rng.substream(2)))
        if "composite" in job["checks"]:
            u0, f0 = job["surrogate"].smooth_part()
            reports.extend(verify.check_composite_smooth(
                u0, f0, space, rng.substream(3), anchors, n_samples=n_samples))
        results[name] = reports
    return results


def hash_name(name: str) -> int:
    # Stable small integer from a name (hash() is salted per process).
    return sum((i + 1) * ord(ch) for i, ch in enumerate(name)) % 65521


def _run_verify(params: dict, seeds: list[int], out_dir: str) -> tuple[dict, int]:
    results = run_verify_suite(params["surrogate"], seed=seeds[0],
                               n_samples=params["n_samples"],
                               n_anchors=params["n_anchors"])
    payload = {name: [r.to_json() for r in reports]
               for name, reports in sorted(results.items())}
    _atomic_write(os.path.join(out_dir, "verify_report.json"),
                  json.dumps(payload, indent=2, sort_keys=True) + "\n")
    all_pass = all(r.passed for reports in results.values() for r in reports)
    for name in sorted(results):
        for r in results[name]:
            print(f"{name}.{r.check}: {'PASS' if r.passed else 'FAIL'} "
                  f"({r.n_violations}/{r.n_samples} violations)")
    summary = {"experiment": "verify", "all_passed": all_pass,
               "report": "verify_report.json", "errors": []}
    return summary, 0


_RUNNERS = {
    "cp": _run_cp,
    "wmmse": _run_wmmse,
    "em": _run_em,
    "toy": _run_toy,
    "verify": _run_verify,
}


def run_experiment(config: dict, raw: str | None = None) -> int:
    """Validate the config, run the experiment, write artifacts; exit code."""
    try:
        cfg = validate_config(config)
    except ConfigError as err:
        return _fail_config(err, raw)
    out_dir = cfg["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    try:
        summary, code = _RUNNERS[cfg["experiment"]](cfg["params"], cfg["seeds"], out_dir)
    except ConfigError as err:
        return _fail_config(err, raw)
    except BsumError as exc:
        print(f"solver error: {exc}")
        return 3
    summary["config"] = {"experiment": cfg["experiment"], "params": cfg["params"],
                         "seeds": cfg["seeds"]}
    _atomic_write(os.path.join(out_dir, "summary.json"),
                  json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {os.path.join(out_dir, 'summary.json')}")
    if summary.get("errors"):
        for e in summary["errors"]:
            print(f"solver error: {e}")
    return code


# ------------------------------------------------------------------ parsing

def _parse_seed_range(text: str) -> list[int]:
    if ".." in text:
        a, _, b = text.partition("..")
        try:
            lo, hi = int(a), int(b)
        except ValueError as exc:
            raise ConfigError(f"bad seed range {text!r}") from exc
        if lo > hi:
            raise ConfigError(f"bad seed range {text!r}: start exceeds end")
        return list(range(lo, hi + 1))
    try:
        return [int(part) for part in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad seed list {text!r}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsumkit",
        description="Run block surrogate-minimization experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file")
        group = p.add_mutually_exclusive_group()
        group.add_argument("--seed", type=int, help="single seed")
        group.add_argument("--seeds", help="seed range A..B or comma list")
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--tol", type=float)
        p.add_argument("--out", help="output directory")
        if name == "cp":
            p.add_argument("--theta", type=float,
                           help="collinearity angle of the stagnation instance")
            p.add_argument("--tensor-file", dest="tensor_file",
                           help="read the instance from a tensor text file")
    return parser


def _config_from_args(args) -> tuple[dict, str | None]:
    raw = None
    if args.config:
        try:
            with open(args.config) as fh:
                raw = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        try:
            config = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}")
        if isinstance(config, dict) and "experiment" not in config:
            config["experiment"] = args.command
    else:
        config = {"experiment": args.command}
    if isinstance(config, dict):
        params = config.get("params")
        if params is None:
            params = {}
            config["params"] = params
        if args.seed is not None:
            config["seeds"] = [args.seed]
        if args.seeds is not None:
            config["seeds"] = _parse_seed_range(args.seeds)
        if args.out is not None:
            config["output_dir"] = args.out
        if isinstance(params, dict):
            if args.max_iters is not None:
                params["max_iters"] = args.max_iters
            if args.tol is not None:
                params["tol"] = args.tol
            if getattr(args, "theta", None) is not None:
                params["theta"] = args.theta
            if getattr(args, "tensor_file", None) is not None:
                params["tensor_file"] = args.tensor_file
                params["instance"] = "file"
    return config, raw


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config, raw = _config_from_args(args)
    except ConfigError as err:
        return _fail_config(err, None)
    return run_experiment(config, raw)


if __name__ == "__main__":
    raise SystemExit(main())
