"""Config-driven experiment runner.

Usage::

    symred run experiment.cfg [--seed N] [--out DIR] [--workers N] [--svg]

The config file is a flat list of ``key = value`` lines in three namespaces
(``#`` starts a comment)::

    model.name = rigid_impact       # rigid_impact, loose_body, collective, sphere_bm, skew_demo
    model.lam = 1, 0.5, 0.333333    # diagonal or 9 row-major entries
    model.sigma = 1.0
    model.epsilon = 0.1
    model.T = 1.0
    model.steps = 1000
    model.seed = 0
    model.g0 = 0, 0, 0              # rotation vector or 9 matrix entries
    model.mu0 = 1, 1, 1
    model.p0 = 0, 0, 1

    run.mode = path                 # path, ensemble, convergence, verify
    run.paths = 100                 # ensemble
    run.times = 0.25, 0.5           # ensemble report times (default: T)
    run.identical_seeds = false     # ensemble: drive every path with stream 0
    run.workers = 1                 # ensemble threads
    run.refinements = 100, 1000, 10000   # convergence step counts
    run.study = routes              # convergence: routes, reduction, noether, reference

    output.dir = out
    output.svg = false

``model.name = all`` is accepted in verify mode. Exit codes: 0 success,
2 configuration error, 3 verification failure, 4 divergence.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from symred.hamiltonian import attach_monitors, noether_monitor
from symred.models import (
    MODELS,
    BadConfig,
    HamiltonianModel,
    ModelConfig,
    build,
    full_solve,
    legendre,
    reduced_solve,
    routes,
    skew_solve,
    verify_suite,
)
from symred.sde import (
    Diverged,
    InsufficientData,
    coarsen,
    convergence_order,
    integrate_ensemble,
    integrate_group,
    path_rng,
    project_trajectory,
    state_distance,
    strong_error,
)

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_DIVERGED = 0, 2, 3, 4
MODES = ("path", "ensemble", "convergence", "verify")
STUDIES = ("routes", "reduction", "noether", "reference")

_MODEL_KEYS = {
    "name": str,
    "lam": "vector",
    "sigma": float,
    "epsilon": float,
    "T": float,
    "steps": int,
    "seed": int,
    "g0": "vector",
    "mu0": "vector",
    "p0": "vector",
}
_RUN_KEYS = {"mode", "paths", "times", "identical_seeds", "workers", "refinements", "study"}
_OUTPUT_KEYS = {"dir", "svg"}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """A parsed experiment file."""

    model: ModelConfig | None
    mode: str = "path"
    paths: int = 100
    times: tuple[float, ...] = ()
    identical_seeds: bool = False
    workers: int = 1
    refinements: tuple[int, ...] = ()
    study: str = "routes"
    out: Path = Path("out")
    emit_svg: bool = False
    models: tuple[ModelConfig, ...] = field(default=())


def _vector(text):
    try:
        return np.array([float(t) for t in text.replace(",", " ").split()])
    except ValueError:
        raise BadConfig(f"expected numbers, got {text!r}") from None


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise BadConfig(f"expected a boolean, got {text!r}")


def _int(text, key):
    try:
        return int(text)
    except ValueError:
        raise BadConfig(f"{key} must be an integer, got {text!r}") from None


def parse_config(text, *, seed=None, out=None, workers=None, svg=False):
    """Parse the experiment grammar; command-line overrides win over the file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise BadConfig(f"cannot parse config: {exc}") from None
    raw = dict(cp["experiment"])
    model_kw, run, output = {}, {}, {}
    for key, value in raw.items():
        ns, _, name = key.partition(".")
        if ns == "model" and name in _MODEL_KEYS:
            kind = _MODEL_KEYS[name]
            if kind == "vector":
                v = _vector(value)
                model_kw[name] = v.reshape(3, 3) if v.size == 9 else v
            elif kind is int:
                model_kw[name] = _int(value, key)
            elif kind is float:
                try:
                    model_kw[name] = float(value)
                except ValueError:
                    raise BadConfig(f"{key} must be a number, got {value!r}") from None
            else:
                model_kw[name] = value.strip()
        elif ns == "run" and name in _RUN_KEYS:
            run[name] = value.strip()
        elif ns == "output" and name in _OUTPUT_KEYS:
            output[name] = value.strip()
        else:
            raise BadConfig(f"unknown key {key!r}")
    if seed is not None:
        model_kw["seed"] = seed
    mode = run.get("mode", "path")
    if mode not in MODES:
        raise BadConfig(f"run.mode must be one of {MODES}")

    name = model_kw.get("name", "rigid_impact")
    if name == "all":
        if mode != "verify":
            raise BadConfig("model.name = all is only valid in verify mode")
        models = tuple(ModelConfig(**{**model_kw, "name": n}) for n in MODELS)
        model = None
    else:
        model = ModelConfig(**model_kw)
        models = (model,)

    kw = {"mode": mode, "model": model, "models": models}
    if "paths" in run:
        kw["paths"] = _int(run["paths"], "run.paths")
    if mode == "ensemble" and kw.get("paths", 100) < 2:
        raise BadConfig("ensemble mode needs run.paths >= 2")
    if "times" in run:
        kw["times"] = tuple(float(t) for t in _vector(run["times"]))
    if "identical_seeds" in run:
        kw["identical_seeds"] = _bool(run["identical_seeds"])
    w = workers if workers is not None else run.get("workers", os.environ.get("SYMRED_WORKERS", 1))
    kw["workers"] = _int(str(w), "workers")
    if kw["workers"] < 1:
        raise BadConfig("workers must be at least 1")
    if "refinements" in run:
        kw["refinements"] = tuple(sorted(_int(t, "run.refinements") for t in run["refinements"].replace(",", " ").split()))
    if mode == "convergence":
        ref = kw.get("refinements", ())
        if len(ref) < 3:
            raise BadConfig("convergence mode needs at least three run.refinements")
        if any(b % a for a, b in zip(ref, ref[1:])) or ref[0] < 1:
            raise BadConfig("run.refinements must be nested by integer factors")
    study = run.get("study", "routes")
    if study not in STUDIES:
        raise BadConfig(f"run.study must be one of {STUDIES}")
    if mode == "convergence" and model.name == "sphere_bm" and study != "reference":
        raise BadConfig("sphere_bm only supports run.study = reference")
    kw["study"] = study
    kw["out"] = Path(out if out is not None else output.get("dir", "out"))
    kw["emit_svg"] = bool(svg) or _bool(output.get("svg", "false"))
    return ExperimentConfig(**kw)


# --- SVG --------------------------------------------------------------------


def svg_lines(series, xlabel, ylabel, *, loglog=False, width=640, height=400):
    """Minimal SVG line chart of ``{name: (x, y)}``."""
    pad = 60
    data = {}
    for name, (x, y) in series.items():
        x, y = np.asarray(x, float), np.asarray(y, float)
        if loglog:
            keep = (x > 0) & (y > 0)
            x, y = np.log10(x[keep]), np.log10(y[keep])
        data[name] = (x, y)
    xs = np.concatenate([d[0] for d in data.values()])
    ys = np.concatenate([d[1] for d in data.values()])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
    tag = "log10 " if loglog else ""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 15}" text-anchor="middle">{tag}{xlabel}</text>',
        f'<text x="15" y="{height / 2}" text-anchor="middle" transform="rotate(-90 15 {height / 2})">{tag}{ylabel}</text>',
        f'<text x="{pad}" y="{height - pad + 18}" text-anchor="middle" font-size="11">{x0:.3g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 18}" text-anchor="middle" font-size="11">{x1:.3g}</text>',
        f'<text x="{pad - 5}" y="{height - pad}" text-anchor="end" font-size="11">{y0:.3g}</text>',
        f'<text x="{pad - 5}" y="{pad}" text-anchor="end" font-size="11">{y1:.3g}</text>',
    ]
    for i, (name, (x, y)) in enumerate(data.items()):
        c = colors[i % len(colors)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{c}" points="{pts}"/>')
        parts.append(f'<text x="{width - pad + 5}" y="{pad + 15 * i}" fill="{c}" font-size="11">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --- modes ------------------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v):
    return repr(float(v))


def run_path(exp):
    """Single path with monitors; writes ``trajectory.csv``."""
    model = build(exp.model)
    noise = model.noise()
    if isinstance(model, HamiltonianModel):
        solve = skew_solve if exp.model.name == "skew_demo" else full_solve
        tr = attach_monitors(solve(model, noise), energy=model.energy)
    else:
        tr = integrate_group(model.system, noise, exp.model.g0)
        pts = model.project(tr).vector
        for i, c in enumerate("xyz"):
            tr = tr.with_monitor(f"p_{c}", pts[:, i])
    path = exp.out / "trajectory.csv"
    tr.to_csv(path)
    if exp.emit_svg:
        names = [n for n in tr.monitors if n.startswith(("jl_", "p_"))] + (
            ["casimir"] if "casimir" in tr.monitors else []
        )
        series = {n: (tr.times, tr.monitors[n]) for n in names}
        (exp.out / "trajectory.svg").write_text(svg_lines(series, "t", "monitor"))
    return [path]


def _observables(model, tr):
    """Named series ``(paths, K+1)`` recorded by ensemble mode."""
    if isinstance(model, HamiltonianModel):
        mu = tr.vector
        jl = np.einsum("...ij,...j->...i", tr.group, mu)
        out = {f"mu_{c}": mu[..., i] for i, c in enumerate("xyz")}
        out["casimir"] = np.sum(mu * mu, axis=-1)
        out["energy"] = model.energy(mu)
        out.update({f"jl_{c}": jl[..., i] for i, c in enumerate("xyz")})
        out["noether"] = noether_monitor(tr)
        return out
    pts = np.einsum("...ij,j->...i", tr.group, model.p0)
    c = np.einsum("...i,i->...", pts, model.p0)
    out = {f"p_{a}": pts[..., i] for i, a in enumerate("xyz")}
    out["P1"] = legendre(1, c)
    out["P2"] = legendre(2, c)
    return out


def _time_indices(exp, times):
    targets = exp.times or (exp.model.T,)
    idx = []
    for t in targets:
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > 1e-9 * max(1.0, exp.model.T):
            raise BadConfig(f"report time {t} is not on the grid")
        idx.append(k)
    return idx


def ensemble(exp, chunk=250):
    """Monte Carlo summary rows ``(observable, t, mean, stderr, paths)``.

    Path ``i`` is driven by the stream ``(seed, i)``; chunks of paths run on a
    thread pool and are reassembled in path order.
    """
    model = build(exp.model)
    seed = exp.model.seed
    system = model.full if isinstance(model, HamiltonianModel) else model.system
    times = model.noise(seed=0).times
    idx = _time_indices(exp, times)

    def work(start):
        stop = min(start + chunk, exp.paths)
        noises = [
            model.noise(rng=path_rng(seed, 0 if exp.identical_seeds else i))
            for i in range(start, stop)
        ]
        tr = integrate_ensemble(system, noises, exp.model.z0 if system.kind == "bundle" else exp.model.g0)
        return {k: v[:, idx] for k, v in _observables(model, tr).items()}

    starts = range(0, exp.paths, chunk)
    with ThreadPoolExecutor(max_workers=exp.workers) as pool:
        parts = list(pool.map(work, starts))
    rows = []
    for name in parts[0]:
        vals = np.concatenate([p[name] for p in parts])  # (paths, len(idx))
        shifted = vals - vals[:1]  # exact zero spread for identical paths
        mean = vals[0] + shifted.mean(axis=0)
        se = shifted.std(axis=0, ddof=1) / math.sqrt(exp.paths)
        for j, k in enumerate(idx):
            rows.append((name, times[k], mean[j], se[j], exp.paths))
    return rows


def run_ensemble(exp):
    rows = ensemble(exp)
    path = exp.out / "ensemble_summary.csv"
    _write_csv(
        path,
        ["observable", "t", "mean", "stderr", "paths"],
        [(n, _fmt(t), _fmt(m), _fmt(s), p) for n, t, m, s, p in rows],
    )
    return [path]


def convergence_errors(exp):
    """``[(steps, dt, error)]`` for the configured study on one fine path."""
    cfg = exp.model
    model = build(cfg)
    finest = exp.refinements[-1]
    fine = model.noise(steps=finest)
    out = []
    if exp.study == "reference":
        if isinstance(model, HamiltonianModel):
            ref = full_solve(model, fine)
        else:
            ref = integrate_group(model.system, fine, cfg.g0)
        levels = exp.refinements[:-1]
    else:
        levels = exp.refinements
    for n in levels:
        noise = coarsen(fine, finest // n)
        if exp.study == "reference":
            if isinstance(model, HamiltonianModel):
                err = strong_error(full_solve(model, noise), ref)
            else:
                err = strong_error(integrate_group(model.system, noise, cfg.g0), ref)
        elif exp.study == "routes":
            r = routes(model, noise)
            err = float(np.max(state_distance(r["direct"], r["reconstruct"])))
        elif exp.study == "reduction":
            full = full_solve(model, noise)
            red = reduced_solve(model, noise, scheme="orbit")
            err = strong_error(project_trajectory(full, lambda z: z[1]), red)
        else:
            err = float(noether_monitor(full_solve(model, noise)).max())
        out.append((n, cfg.T / n, err))
    return out


def run_convergence(exp):
    errs = convergence_errors(exp)
    try:
        order = convergence_order([(dt, e) for _, dt, e in errs])
    except InsufficientData as exc:
        print(f"symred: cannot fit an order: {exc}", file=sys.stderr)
        order = math.nan
    path = exp.out / "convergence.csv"
    rows = [(n, _fmt(dt), _fmt(e)) for n, dt, e in errs] + [("order", "", _fmt(order))]
    _write_csv(path, ["steps", "dt", "error"], rows)
    written = [path]
    if exp.emit_svg:
        x = [dt for _, dt, _ in errs]
        y = [e for _, _, e in errs]
        svg = exp.out / "convergence.svg"
        svg.write_text(svg_lines({exp.study: (x, y)}, "dt", "error", loglog=True))
        written.append(svg)
    return written, order


def run_verify(exp):
    blocks, ok = [], True
    for cfg in exp.models:
        for rep in verify_suite(cfg):
            ok &= rep.passed
            blocks.append(f"model: {cfg.name}\n" + rep.to_text())
    path = exp.out / "verify_report.txt"
    path.write_text("\n".join(blocks))
    return [path], ok


def run(config_path, *, seed=None, out=None, workers=None, svg=False):
    """Run one experiment file and return the process exit code."""
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        print(f"symred: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        exp = parse_config(text, seed=seed, out=out, workers=workers, svg=svg)
        exp.out.mkdir(parents=True, exist_ok=True)
        if exp.mode == "path":
            run_path(exp)
        elif exp.mode == "ensemble":
            run_ensemble(exp)
        elif exp.mode == "convergence":
            run_convergence(exp)
        else:
            _, ok = run_verify(exp)
            if not ok:
                print("symred: verification failed, see verify_report.txt", file=sys.stderr)
                return EXIT_VERIFY
    except BadConfig as exc:
        print(f"symred: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Diverged as exc:
        print(f"symred: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="symred", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--svg", action="store_true")
    args = parser.parse_args(argv)
    return run(args.config, seed=args.seed, out=args.out, workers=args.workers, svg=args.svg)


if __name__ == "__main__":
    sys.exit(main())
