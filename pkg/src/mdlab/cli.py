"""``mdlab`` command-line front end.

Exit codes: 0 success, 1 a verification check failed, 2 resource or
configuration error.
"""

from __future__ import annotations

import functools
import hashlib
import json
import os
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import curie_weiss as cw
from . import monomer_dimer as md
from .config import ConfigError, ExperimentConfig, load_config
from .errors import BoundViolation, QuadratureError, StateSpaceOverflow
from .experiments import AtomTail, md_limit_law, scaling_fit
from .glauber import chain_seeds, glauber_sampler
from .limit_laws import DriftFunction, LimitLaw, check_conditions, mills_bounds_check
from .stein import solution_bounds_check, stein_residual
from .verify import RangeSpec, ratio_curve

EXIT_OK, EXIT_FAIL, EXIT_RESOURCE = 0, 1, 2
CACHE_ENV = "MDLAB_CACHE_DIR"
RESIDUAL_TOL = 1e-6


class ResourceError(click.ClickException):
    exit_code = EXIT_RESOURCE


def _dump_json(obj, path: Path | None = None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        path.write_text(text)
    return text


# ---------------------------------------------------------------------------
# distribution cache


def cache_dir(cfg: ExperimentConfig) -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path(cfg.output_dir) / ".cache"


def dist_key(cfg: ExperimentConfig, n: int) -> str:
    if cfg.model == "cw":
        return "cw-" + cw.cache_key(cfg.rho(), n)
    payload = json.dumps({"model": "md", "J": cfg.J, "h": cfg.h, "n": int(n)}, sort_keys=True)
    return "md-" + hashlib.sha256(payload.encode()).hexdigest()[:16]


def _stationary(cfg: ExperimentConfig) -> md.MDStationary:
    return md.solve_m0(cfg.J, cfg.h)


def _compute_dist_csv(cfg: ExperimentConfig, n: int, path: Path) -> None:
    tmp = path.with_suffix(".tmp")
    if cfg.model == "cw":
        cw.exact_magnetization_dist(cfg.rho(), n).to_csv(tmp)
    else:
        md.exact_magnetization_dist(md.MDParams(cfg.J, cfg.h, n)).to_csv(tmp, _stationary(cfg))
    os.replace(tmp, path)


def _enumerate_job(cfg: ExperimentConfig, n: int) -> dict:
    path = cache_dir(cfg) / f"{dist_key(cfg, n)}.csv"
    t0 = time.perf_counter()
    hit = path.exists()
    if not hit:
        _compute_dist_csv(cfg, n, path)
    return {"n": n, "cache_path": str(path), "cache_key": path.stem, "cache_hit": hit,
            "seconds": time.perf_counter() - t0}


def _run_jobs(cfg: ExperimentConfig, fn, ns) -> list:
    if cfg.workers == 1 or len(ns) == 1:
        return [fn(cfg, n) for n in ns]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, [cfg] * len(ns), ns))


def enumerate_dists(cfg: ExperimentConfig) -> list[dict]:
    if cfg.method != "exact":
        raise ConfigError("enumerate needs method = exact")
    cache_dir(cfg).mkdir(parents=True, exist_ok=True)
    return _run_jobs(cfg, _enumerate_job, list(cfg.n_list))


def load_dist(cfg: ExperimentConfig, n: int, path):
    if cfg.model == "cw":
        rho = cfg.rho()
        return cw.MagnetizationDist.from_csv(path, n, cw.analyze_rho(rho).k, rho.lattice_step)
    return md.MDMagnetizationDist.from_csv(path, n)


def _write_manifest(cfg: ExperimentConfig, command: str, artifacts: dict) -> Path:
    out = Path(cfg.output_dir)
    path = out / f"manifest-{command}.json"
    _dump_json({"command": command, "config_hash": cfg.config_hash(), "config": cfg.to_dict(),
                "software_version": __version__, "artifacts": artifacts}, path)
    return path


# ---------------------------------------------------------------------------
# ratio curves


def _model_law_and_range(cfg: ExperimentConfig):
    if cfg.model == "cw":
        an = cw.analyze_rho(cfg.rho())
        return an.limit_law(), RangeSpec.cw_critical(an.k), an
    st = _stationary(cfg)
    spec = RangeSpec.md_critical() if st.phase == md.CRITICAL else RangeSpec.md_noncritical()
    return md_limit_law(st), spec, st


def compute_curves(cfg: ExperimentConfig) -> tuple[list, dict]:
    law, spec, info = _model_law_and_range(cfg)
    curves, artifacts = [], {}
    if cfg.method == "exact":
        for job in enumerate_dists(cfg):
            n = job["n"]
            dist = load_dist(cfg, n, job["cache_path"])
            w = dist.w_values if cfg.model == "cw" else dist.w_values(info)
            curves.append(ratio_curve(AtomTail(w, dist.log_pmf), law, spec, n,
                                      grid_size=cfg.z_grid_size, atoms=w))
            artifacts[str(n)] = job
    else:
        rho = cfg.rho()
        seeds = chain_seeds(cfg.sampler.seed, len(cfg.n_list))
        for n, seed in zip(cfg.n_list, seeds):
            t0 = time.perf_counter()
            run = _sample(cfg, rho, n, seed)
            w = run.s_values * n ** (-1.0 + 1.0 / (2 * info.k))
            vals, counts = np.unique(w, return_counts=True)
            tail = AtomTail(vals, np.log(counts / counts.sum()))
            curves.append(ratio_curve(tail, law, spec, n, grid_size=cfg.z_grid_size,
                                      atoms=vals if rho.is_lattice else None))
            artifacts[str(n)] = {"n": n, "seconds": time.perf_counter() - t0}
    return curves, artifacts


def _sample(cfg: ExperimentConfig, rho, n: int, seed):
    s = cfg.sampler
    return glauber_sampler(rho, n, seed, burn_in_sweeps=s.burn_in_sweeps,
                           n_samples=s.samples, thin=s.thin)


# ---------------------------------------------------------------------------
# click plumbing


def _config_options(f):
    opts = [
        click.option("--n-list", help="Comma-separated sample sizes (overrides n_list)."),
        click.option("--method", type=click.Choice(["exact", "glauber"]), default=None),
        click.option("--seed", type=int, default=None),
        click.option("--burn-in", "burn_in_sweeps", type=int, default=None),
        click.option("--samples", type=int, default=None),
        click.option("--thin", type=int, default=None),
        click.option("--grid-size", "z_grid_size", type=int, default=None),
        click.option("--output-dir", type=click.Path(file_okay=False), default=None),
        click.option("--workers", type=int, default=None),
        click.argument("config_path", type=click.Path(exists=True, dir_okay=False)),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _resolve(config_path, n_list=None, **overrides) -> ExperimentConfig:
    cfg = load_config(config_path)
    if n_list:
        try:
            overrides["n_list"] = [int(x) for x in n_list.split(",")]
        except ValueError:
            raise ConfigError(f"bad --n-list {n_list!r}") from None
    cfg = cfg.with_overrides(**overrides)
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    return cfg


def _guard(fn):
    """Map library exceptions onto exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except (StateSpaceOverflow, MemoryError, QuadratureError, OSError) as exc:
            raise ResourceError(str(exc)) from exc
        except ValueError as exc:  # ConfigError, ConditionError, AmbiguousMaximizer
            raise ResourceError(f"configuration error: {exc}") from exc
        sys.exit(code or EXIT_OK)
    return wrapper


@click.group()
@click.version_option(__version__, prog_name="mdlab")
def main():
    """Tail-ratio verification for nonnormal limit laws."""


@main.command("enumerate")
@_config_options
@_guard
def enumerate_cmd(config_path, **kw):
    """Exact magnetization laws for every n, one CSV per n."""
    cfg = _resolve(config_path, **kw)
    jobs = enumerate_dists(cfg)
    artifacts = {}
    for job in jobs:
        dest = Path(cfg.output_dir) / f"dist_n{job['n']}.csv"
        shutil.copyfile(job["cache_path"], dest)
        artifacts[str(job["n"])] = dict(job, path=str(dest))
        click.echo(f"n={job['n']}: {dest} ({'cached' if job['cache_hit'] else 'computed'})")
    _write_manifest(cfg, "enumerate", artifacts)
    return EXIT_OK


@main.command("sample")
@_config_options
@_guard
def sample_cmd(config_path, **kw):
    """Glauber samples of S_n for every n (Curie-Weiss only)."""
    cfg = _resolve(config_path, **kw)
    if cfg.model != "cw":
        raise ConfigError("sampling is available for the cw model only")
    rho = cfg.rho()
    k = cw.analyze_rho(rho).k
    artifacts = {}
    for n, seed in zip(cfg.n_list, chain_seeds(cfg.sampler.seed, len(cfg.n_list))):
        t0 = time.perf_counter()
        run = _sample(cfg, rho, n, seed)
        dest = Path(cfg.output_dir) / f"samples_n{n}.csv"
        w = run.s_values * n ** (-1.0 + 1.0 / (2 * k))
        with open(dest, "w") as fh:
            fh.write("index,s_value,w_value\n")
            for i, (s, wv) in enumerate(zip(run.s_values, w)):
                fh.write(f"{i},{float(s)!r},{float(wv)!r}\n")
        artifacts[str(n)] = {"n": n, "path": str(dest), "seconds": time.perf_counter() - t0}
        click.echo(f"n={n}: {run.n_samples} samples -> {dest}")
    _write_manifest(cfg, "sample", artifacts)
    return EXIT_OK


@main.command("ratio")
@_config_options
@_guard
def ratio_cmd(config_path, **kw):
    """Tail-ratio curves P(W >= z) / P(Y >= z), one CSV per n."""
    cfg = _resolve(config_path, **kw)
    curves, artifacts = compute_curves(cfg)
    for c in curves:
        dest = Path(cfg.output_dir) / f"ratio_n{c.n}.csv"
        c.to_csv(dest)
        artifacts[str(c.n)] = dict(artifacts[str(c.n)], path=str(dest))
        click.echo(f"n={c.n}: max|ratio-1| = {c.max_abs_err!r} -> {dest}")
    _write_manifest(cfg, "ratio", artifacts)
    return EXIT_OK


def _scaling_checks(cfg: ExperimentConfig, fit) -> list[str]:
    sc, bad = cfg.scaling, []
    if sc.slope_min is not None and fit.slope < sc.slope_min:
        bad.append(f"slope {fit.slope!r} < {sc.slope_min}")
    if sc.slope_max is not None and fit.slope > sc.slope_max:
        bad.append(f"slope {fit.slope!r} > {sc.slope_max}")
    if sc.min_r2 is not None and fit.r_squared < sc.min_r2:
        bad.append(f"r^2 {fit.r_squared!r} < {sc.min_r2}")
    return bad


@main.command("scaling")
@click.option("--normalized/--raw", default=None,
              help="Fit the error weighted by 1/(1+z^q) instead of the raw max error.")
@click.option("--slope-range", nargs=2, type=float, default=None,
              help="Fail (exit 1) if the fitted slope leaves [LO, HI].")
@click.option("--min-r2", type=float, default=None)
@_config_options
@_guard
def scaling_cmd(config_path, normalized, slope_range, min_r2, **kw):
    """Fit log E(n) against log n; writes scaling.json."""
    cfg = _resolve(config_path, **kw)
    sc = cfg.scaling
    if normalized is not None:
        sc = replace(sc, normalized=normalized)
    if slope_range is not None:
        sc = replace(sc, slope_min=slope_range[0], slope_max=slope_range[1])
    if min_r2 is not None:
        sc = replace(sc, min_r2=min_r2)
    cfg = replace(cfg, scaling=sc)
    curves, artifacts = compute_curves(cfg)
    fit = scaling_fit(curves, normalized=cfg.scaling.normalized)
    dest = Path(cfg.output_dir) / "scaling.json"
    _dump_json(dict(fit.to_dict(), normalized=cfg.scaling.normalized), dest)
    _write_manifest(cfg, "scaling", dict(artifacts, scaling={"path": str(dest)}))
    click.echo(f"slope = {fit.slope!r}, r^2 = {fit.r_squared!r} -> {dest}")
    bad = _scaling_checks(cfg, fit)
    for msg in bad:
        click.echo(f"FAIL: {msg}", err=True)
    return EXIT_FAIL if bad else EXIT_OK


@main.command("report")
@_config_options
@_guard
def report_cmd(config_path, **kw):
    """Per-n raw and weighted errors plus both fits; writes report.json and report.md."""
    cfg = _resolve(config_path, **kw)
    curves, _ = compute_curves(cfg)
    raw = scaling_fit(curves) if len(curves) >= 3 else None
    norm = scaling_fit(curves, normalized=True) if len(curves) >= 3 else None
    rows = [{"n": c.n, "z_max": c.z_max, "max_abs_err": c.max_abs_err,
             "normalized_err": c.normalized_max_err(), "zero_tail_points": int(c.zero_mask.sum())}
            for c in curves]
    out = Path(cfg.output_dir)
    _dump_json({"config_hash": cfg.config_hash(), "rows": rows,
                "raw_fit": raw.to_dict() if raw else None,
                "normalized_fit": norm.to_dict() if norm else None}, out / "report.json")
    lines = ["| n | z_max | max abs err | weighted err |", "|---|---|---|---|"]
    lines += [f"| {r['n']} | {r['z_max']:.6g} | {r['max_abs_err']:.6g} | {r['normalized_err']:.6g} |"
              for r in rows]
    if raw:
        lines += ["", f"raw slope {raw.slope:.4f} (r^2 {raw.r_squared:.4f}); "
                      f"weighted slope {norm.slope:.4f} (r^2 {norm.r_squared:.4f})"]
    text = "\n".join(lines) + "\n"
    (out / "report.md").write_text(text)
    click.echo(text, nl=False)
    return EXIT_OK


# ---------------------------------------------------------------------------
# law-level checks

_LAWS = {
    "gaussian": lambda a, p: LimitLaw.gaussian(1.0 / a if a else 1.0),
    "w4_12": lambda a, p: LimitLaw.w4_12(),
    "y6": lambda a, p: LimitLaw.monomial(1.0 / 20.0, 5),
    "monomial": lambda a, p: LimitLaw.monomial(a, p),
}


@main.command("stein-check")
@click.option("--law", "law_name", type=click.Choice(sorted(_LAWS)), default="w4_12")
@click.option("--a", type=float, default=None, help="Drift scale (monomial; 1/variance for gaussian).")
@click.option("--p", type=float, default=None, help="Drift exponent (monomial).")
@click.option("--z", "z_values", type=float, multiple=True, help="Thresholds (default 0, 0.5, 1, 2).")
@click.option("--step", type=float, default=1e-4, help="Difference step for the residual.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_guard
def stein_check_cmd(law_name, a, p, z_values, step, out):
    """Stein-equation residual, Mills-ratio and solution-bound checks for one law."""
    if law_name == "monomial" and (a is None or p is None):
        raise ConfigError("--law monomial needs --a and --p")
    law = _LAWS[law_name](a, p)
    zs = z_values or (0.0, 0.5, 1.0, 2.0)
    w_res = np.linspace(-5.0, 5.0, 1001)
    w_bounds = np.linspace(-8.0, 8.0, 1000)
    rows, ok = [], True
    for z in zs:
        grid = w_res[np.abs(w_res - z) >= 2 * step]
        res = stein_residual(law, z, grid, h=step)
        row = {"law": law_name, "z": z, "residual": res, "residual_ok": res <= RESIDUAL_TOL}
        try:
            rep = solution_bounds_check(law, z, w_bounds)
            row.update(worst_w=rep.worst_w, slack=rep.slack, worst_bound=rep.worst_bound,
                       bounds_ok=True)
        except BoundViolation as exc:
            row.update(bounds_ok=False, message=str(exc))
        ok &= row["residual_ok"] and row["bounds_ok"]
        rows.append(row)
    try:
        c3 = check_conditions(law.drift).c3_est
        mills = mills_bounds_check(law, w_bounds[w_bounds != 0], c3=c3)
        mills_row = {"min_slack": mills.min_slack, "worst_w": mills.worst_w, "ok": True}
    except BoundViolation as exc:
        mills_row, ok = {"ok": False, "message": str(exc)}, False
    text = _dump_json({"law": law.to_dict(), "rows": rows, "mills": mills_row, "ok": ok},
                      Path(out) if out else None)
    if not out:
        click.echo(text, nl=False)
    return EXIT_OK if ok else EXIT_FAIL


def _expr_fn(expr: str):
    ns = {name: getattr(np, name) for name in
          ("sign", "abs", "exp", "log", "sqrt", "tanh", "sinh", "cosh", "where", "pi")}
    code = compile(expr, "<drift>", "eval")

    def f(y):
        return np.asarray(eval(code, {"__builtins__": {}}, dict(ns, y=np.asarray(y, float))), float)
    return f


@main.command("conditions")
@click.option("--g", "g_expr", default=None, help="Drift as an expression in y, e.g. 'sign(y)*abs(y)**3'.")
@click.option("--dg", "dg_expr", default=None, help="Derivative expression (default: central difference).")
@click.option("--a", type=float, default=None, help="Monomial scale (alternative to --g).")
@click.option("--p", type=float, default=None, help="Monomial exponent (alternative to --g).")
@click.option("--radius", type=float, default=10.0)
@click.option("--num", type=int, default=1001)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_guard
def conditions_cmd(g_expr, dg_expr, a, p, radius, num, out):
    """Grid check of monotonicity, sign and the c2/c3 growth constants of a drift."""
    if g_expr is not None:
        g = _expr_fn(g_expr)
        if dg_expr is not None:
            dg = _expr_fn(dg_expr)
        else:
            dg = lambda y, e=1e-6: (g(np.asarray(y) + e) - g(np.asarray(y) - e)) / (2 * e)
        drift = DriftFunction.user(g, dg)
    elif a is not None and p is not None:
        drift = DriftFunction.monomial(a, p)
    else:
        raise ConfigError("give --g or both --a and --p")
    rep = check_conditions(drift, radius=radius, num=num)
    text = _dump_json(rep.to_dict(), Path(out) if out else None)
    if not out:
        click.echo(text, nl=False)
    return EXIT_OK if rep.ok else EXIT_FAIL


if __name__ == "__main__":
    main()
