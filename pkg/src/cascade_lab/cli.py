"""Command-line front end.  Every experiment writes its outputs plus a manifest
(``<out>.manifest.json``) from which ``cascade-lab rerun`` reproduces it.

Exit status: 0 success, 1 invalid input or usage, 2 numerical failure.
"""
from __future__ import annotations

import csv
import datetime as _dt
import functools
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__, bounds, cascade, chaos, generator, kernels, laplace, rng as rngmod, verify
from .stats import clopper_pearson, dominance_check

log = logging.getLogger("cascade_lab")

SCHEMA_VERSION = 1


class NumericalFailure(click.ClickException):
    exit_code = 2


class CheckFailed(NumericalFailure):
    pass


NUMERICAL_ERRORS = (laplace.ConvergenceError, chaos.FactorizationError, generator.CertificationError,
                    np.linalg.LinAlgError, FloatingPointError)


# -- persistence helpers --------------------------------------------------------

def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_column_csv(path, columns: dict) -> None:
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else
                        int(v) if isinstance(v, (bool, np.bool_, np.integer)) else v for v in row])


def read_samples(path) -> np.ndarray:
    """Sample file: CSV with a ``y`` column, or raw little-endian float64."""
    p = Path(path)
    if p.suffix in (".bin", ".f64", ".raw"):
        return np.fromfile(p, dtype="<f8")
    with open(p, encoding="utf-8") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise click.BadParameter(f"{p} is empty")
    header = rows[0]
    col = header.index("y") if "y" in header else 0
    return np.array([float(r[col]) for r in rows[1:]])


def manifest_path(out) -> Path:
    return Path(str(out) + ".manifest.json")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _note_conflicts(ctx: click.Context) -> None:
    cfg = ctx.default_map or {}
    for name, value in ctx.params.items():
        if name in cfg and ctx.get_parameter_source(name) == click.core.ParameterSource.COMMANDLINE:
            if _jsonable(value) != _jsonable(cfg[name]):
                log.warning("note: --%s=%r on the command line overrides config value %r",
                            name.replace("_", "-"), value, cfg[name])


def experiment(fn):
    """Wrap a command body that returns ``(outputs, inputs, extra)`` and write its manifest."""

    @functools.wraps(fn)
    @click.pass_context
    def wrapper(ctx, **params):
        _note_conflicts(ctx)
        obj = ctx.ensure_object(dict)
        workers = obj.get("workers") or rngmod.default_workers()
        started = _now()
        try:
            outputs, inputs, extra = fn(workers=workers, **params)
        except NUMERICAL_ERRORS as exc:
            raise NumericalFailure(str(exc)) from exc
        except (ValueError, KeyError) as exc:
            raise click.ClickException(str(exc)) from exc
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "command": ctx.info_name,
            "params": {k: _jsonable(v) for k, v in params.items()},
            "seed": params.get("seed"),
            "chunk_size": params.get("chunk_size"),
            "workers": workers,
            "version": __version__,
            "backend": kernels.BACKEND,
            "started": started,
            "finished": _now(),
            "outputs": {str(p): sha256(p) for p in outputs},
            "inputs": {str(p): sha256(p) for p in inputs},
        }
        manifest.update(extra or {})
        write_json(manifest_path(outputs[0]), manifest)
        obj["last_manifest"] = manifest
        click.echo(f"wrote {', '.join(str(p) for p in outputs)}")

    return wrapper


def _spec(text: str) -> generator.GeneratorSpec:
    try:
        return generator.parse_spec(text)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--spec") from exc


def _load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.BadParameter(f"cannot read config: {exc}", param_hint="--config") from exc
    if not isinstance(cfg, dict):
        raise click.BadParameter("config must be a JSON object", param_hint="--config")
    return cfg


def _aliases(cmd: click.Command) -> dict:
    """Config keys accepted for ``cmd``: flag names and parameter names."""
    out = {}
    for p in cmd.params:
        out[p.name] = p.name
        for opt in getattr(p, "opts", []):
            out[opt.lstrip("-").replace("-", "_")] = p.name
    return out


# -- group --------------------------------------------------------------------

@click.group(context_settings={"help_option_names": ["-h", "--help"], "show_default": True})
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file of option defaults, keyed by subcommand or flat.")
@click.option("--workers", type=click.IntRange(min=1), default=None,
              help="Worker threads (default: $CASCADE_LAB_THREADS or 1). Never changes results.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.version_option(__version__, prog_name="cascade-lab")
@click.pass_context
def main(ctx, config_path, workers, verbose):
    """Small-deviation laboratory for cascades and multiplicative chaos."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    ctx.ensure_object(dict)
    ctx.obj["workers"] = workers
    if config_path:
        cfg = _load_config(config_path)
        per_cmd = {k: v for k, v in cfg.items() if k in main.commands and isinstance(v, dict)}
        flat = {k.replace("-", "_"): v for k, v in cfg.items() if k not in per_cmd}
        dm = {}
        for name, cmd in main.commands.items():
            alias = _aliases(cmd)
            entry = {alias[k]: v for k, v in flat.items() if k in alias}
            for k, v in per_cmd.get(name, {}).items():
                k = k.replace("-", "_")
                if k not in alias:
                    raise click.BadParameter(f"unknown key {k!r} for {name}", param_hint="--config")
                entry[alias[k]] = v
            dm[name] = entry
        unknown = set(flat) - {k for c in main.commands.values() for k in _aliases(c)}
        if unknown:
            log.warning("note: config keys not used by any command: %s", ", ".join(sorted(unknown)))
        ctx.default_map = dm


seed_option = click.option("--seed", type=int, default=0, help="Master seed.")
out_option = click.option("--out", type=click.Path(dir_okay=False), required=True, help="Primary output file.")


# -- cascade ------------------------------------------------------------------

@main.command("cascade-sample")
@click.option("--spec", "spec_text", required=True, help="Generator, e.g. lognormal:0.5.")
@click.option("--depth", type=click.IntRange(min=0), required=True)
@click.option("--count", type=click.IntRange(min=1), required=True)
@seed_option
@click.option("--chunk-size", type=click.IntRange(min=1), default=None, help="Replicates per stream.")
@click.option("--max-depth", type=click.IntRange(min=0), default=cascade.MAX_DEPTH)
@click.option("--format", "fmt", type=click.Choice(["csv", "raw"]), default="csv",
              help="raw = little-endian float64 with a JSON sidecar.")
@out_option
@experiment
def cascade_sample(spec_text, depth, count, seed, chunk_size, max_depth, fmt, out, workers):
    """Exact replicates of Y_depth."""
    spec = _spec(spec_text)
    s = cascade.sample_yn_batch(spec, depth, count, seed, chunk_size=chunk_size, workers=workers,
                                max_depth=max_depth)
    if fmt == "csv":
        write_column_csv(out, {"y": s.values})
    else:
        s.values.astype("<f8").tofile(out)
        write_json(str(out) + ".json", {"dtype": "<f8", "count": s.count, "depth": depth,
                                        "spec": spec.to_dict()})
    return [out], [], {"chunk_size": s.chunk_size, "summary": {"mean": s.mean, "stderr": s.stderr}}


@main.command("pool-run")
@click.option("--spec", "spec_text", required=True)
@click.option("--size", type=click.IntRange(min=2), default=100_000)
@click.option("--generations", type=click.IntRange(min=1), default=cascade.BURN_IN)
@seed_option
@click.option("--chunk-size", type=click.IntRange(min=1), default=rngmod.DEFAULT_CHUNK)
@click.option("--moments", default="1,2,4", help="Comma-separated q for E Y^-q.")
@out_option
@experiment
def pool_run(spec_text, size, generations, seed, chunk_size, moments, out, workers):
    """Population-dynamics approximation of the fixed point."""
    spec = _spec(spec_text)
    history = []
    pool = cascade.pool_run(spec, size, generations, seed, chunk_size=chunk_size, workers=workers,
                            history=history)
    write_column_csv(out, {"y": pool.values})
    hist = Path(str(out) + ".history.csv")
    write_column_csv(hist, {k: [h[k] for h in history] for k in ("generation", "mean", "ks_prev")})
    qs = [float(q) for q in moments.split(",") if q.strip()]
    nm = {f"{q:g}": cascade.neg_moment(pool, q, dominance=1.0) for q in qs}
    summary = {"neg_moments": {k: {"estimate": v.estimate, "stderr": v.stderr, "max_share": v.max_share}
                               for k, v in nm.items()}}
    return [out, hist], [], {"summary": summary}


# -- laplace ------------------------------------------------------------------

grid_options = [
    click.option("--tmin", type=float, default=laplace.DEFAULT_TMIN),
    click.option("--tmax", type=float, default=laplace.DEFAULT_TMAX),
    click.option("--points", type=click.IntRange(min=5), default=laplace.DEFAULT_POINTS),
]


def _with(options):
    def deco(f):
        for o in reversed(options):
            f = o(f)
        return f
    return deco


@main.command("laplace-empirical")
@click.option("--samples", type=click.Path(exists=True, dir_okay=False), required=True)
@_with(grid_options)
@out_option
@experiment
def laplace_empirical(samples, tmin, tmax, points, out, workers):
    """phi(t) as a sample mean of exp(-tY)."""
    table = laplace.empirical_phi(read_samples(samples), np.geomspace(tmin, tmax, points))
    table.to_csv(out)
    return [out], [samples], {}


@main.command("laplace-iterate")
@click.option("--spec", "spec_text", required=True)
@click.option("--tmin", type=float, default=laplace.DEFAULT_TMIN)
@click.option("--tmax", type=float, default=laplace.DEFAULT_TMAX)
@click.option("--points", type=click.IntRange(min=5), default=laplace.DEFAULT_POINTS)
@click.option("--tol", type=float, default=laplace.DEFAULT_TOL)
@click.option("--rtol", type=float, default=laplace.DEFAULT_RTOL)
@click.option("--max-iter", type=click.IntRange(min=1), default=500)
@click.option("--nodes", type=click.IntRange(min=2), default=laplace.DEFAULT_NODES,
              help="Gauss-Legendre nodes per panel.")
@click.option("--interpolation", type=click.Choice(["cubic", "linear"]), default="cubic")
@out_option
@experiment
def laplace_iterate(spec_text, tmin, tmax, points, tol, rtol, max_iter, nodes, interpolation, out, workers):
    """Fixed point of phi = (E phi(tW))^2."""
    spec = _spec(spec_text)
    table = laplace.iterate_phi(spec, np.geomspace(tmin, tmax, points), tol, max_iter, rtol=rtol,
                                nodes_per_panel=nodes, interpolation=interpolation)
    table.to_csv(out)
    return [out], [], {"summary": {"iterations": table.iterations, "sup_change": table.sup_change}}


@main.command("exponent-fit")
@click.option("--table", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--window", type=(float, float), multiple=True, default=[(1e4, 1e6), (1e6, 1e8)],
              help="Fit window LO HI; repeatable.")
@out_option
@experiment
def exponent_fit(table, window, out, workers):
    """Slope of log log(1/phi) against log log t."""
    tab = laplace.LaplaceTable.from_csv(table)
    fits = [laplace.fit_exponent(tab, w).to_dict() for w in window]
    write_json(out, {"table": str(table), "fits": fits})
    return [out], [table], {}


@main.command("certify-tail")
@click.option("--spec", "spec_text", required=True)
@click.option("--direction", type=click.Choice(["cdf-lower", "cdf-upper"]), default="cdf-lower")
@click.option("--gamma", type=float, required=True, help="Target tail exponent.")
@click.option("--xmin", type=float, default=1e-12)
@click.option("--xmax", type=float, default=1e-2, help="x' (upper end of the certified range).")
@click.option("--grid", type=click.IntRange(min=16), default=4096)
@click.option("--margin", type=float, default=0.01)
@out_option
@experiment
def certify_tail(spec_text, direction, gamma, xmin, xmax, grid, margin, out, workers):
    """Grid-verified tail inequality for the generator."""
    cert = generator.certify_tail(_spec(spec_text), direction, gamma, (xmin, xmax), grid, margin)
    write_json(out, cert.to_dict())
    return [out], [], {}


# -- bounds -------------------------------------------------------------------

def _moments_from(moment, samples, spec, seed, workers):
    if moment:
        out = {}
        for item in moment:
            q, _, v = item.partition("=")
            try:
                out[float(q)] = float(v)
            except ValueError:
                raise click.BadParameter(f"expected Q=VALUE, got {item!r}", param_hint="--moment") from None
        return out
    values = read_samples(samples) if samples else cascade.pool_run(spec, 100_000, cascade.BURN_IN, seed,
                                                                    workers=workers).values
    return {q: cascade.neg_moment(values, q, dominance=1.0).estimate for q in (1.0, 2.0, 4.0)}


@main.command("bounds-report")
@click.option("--spec", "spec_text", required=True)
@click.option("--table", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--cert", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--moment", multiple=True, help="Q=VALUE estimate of E Y^-Q; repeatable.")
@click.option("--samples", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Fixed-point samples for the moments (default: run a 1e5 pool).")
@seed_option
@click.option("--tmax", type=float, default=1e8)
@click.option("--anchor", type=click.Choice(bounds.ANCHORS), default="squared")
@out_option
@experiment
def bounds_report(spec_text, table, cert, moment, samples, seed, tmax, anchor, out, workers):
    """Certified lower bound <= phi <= negative-moment envelope, per grid point."""
    spec = _spec(spec_text)
    tab = laplace.LaplaceTable.from_csv(table)
    with open(cert, encoding="utf-8") as fh:
        c = generator.TailCertificate.from_dict(json.load(fh))
    if c.spec != spec:
        raise click.BadParameter("certificate was issued for a different generator", param_hint="--cert")
    moments = _moments_from(moment, samples, spec, seed, workers)
    rep = bounds.bound_report(tab, c, moments, t_max=tmax, anchor=anchor)
    rep.to_csv(out)
    summary_path = Path(str(out) + ".json")
    rep.to_json(summary_path)
    inputs = [table, cert] + ([samples] if samples else [])
    source = "flags" if moment else ("samples" if samples else "internal pool")
    summary = {"all_ok": rep.all_ok, "moments": {f"{q:g}": v for q, v in moments.items()},
               "moments_source": source}
    return [out, summary_path], inputs, {"summary": summary}


@main.command("smalldev")
@click.option("--table", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--x", "xs", type=float, multiple=True, default=[0.05, 0.1, 0.2, 0.3])
@click.option("--samples", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Fixed-point samples for empirical P(Y <= x) with exact intervals.")
@click.option("--level", type=float, default=0.99)
@out_option
@experiment
def smalldev(table, xs, samples, level, out, workers):
    """Markov bridges between phi and P(Y <= x)."""
    tab = laplace.LaplaceTable.from_csv(table)
    x = np.array(sorted(xs))
    cols = {"x": x, "lower": bounds.smalldev_lower(tab, x), "upper": bounds.smalldev_upper(tab, x)}
    if samples:
        y = read_samples(samples)
        cis = [clopper_pearson(int(np.sum(y <= xi)), y.size, level) for xi in x]
        cols.update(p_hat=[c.estimate for c in cis], ci_lower=[c.lower for c in cis],
                    ci_upper=[c.upper for c in cis])
    write_column_csv(out, cols)
    return [out], [table] + ([samples] if samples else []), {}


# -- chaos --------------------------------------------------------------------

@main.command("chaos-sample")
@click.option("--beta", type=float, required=True)
@click.option("--eps", type=float, required=True)
@click.option("--n", "N", type=click.IntRange(min=2), default=512, help="Grid points on [0, 1].")
@click.option("--count", type=click.IntRange(min=1), default=2000)
@seed_option
@click.option("--chunk-size", type=click.IntRange(min=1), default=chaos.FIELD_CHUNK)
@click.option("--construction", type=click.Choice(["cholesky", "whitenoise"]), default="cholesky")
@click.option("--cell-resolution", type=click.IntRange(min=8), default=512)
@click.option("--fields-out", type=click.Path(dir_okay=False), default=None, help="Also write the fields.")
@out_option
@experiment
def chaos_sample(beta, eps, N, count, seed, chunk_size, construction, cell_resolution, fields_out, out,
                 workers):
    """Chaos masses M[0,1] on an N-point grid."""
    params = chaos.KernelParams(beta, eps)
    grid = chaos.FieldGrid(N)
    if construction == "cholesky":
        b = chaos.chaos_batch(params, N, count, seed, keep_fields=fields_out is not None,
                              chunk_size=chunk_size, workers=workers)
        masses, fields = b.masses, b.fields
    else:
        fields = chaos.whitenoise_batch(eps, grid.points, count, seed, cell_resolution=cell_resolution,
                                        chunk_size=chunk_size, workers=workers)
        masses = chaos.chaos_mass(fields, params, grid)
    write_column_csv(out, {"mass": masses})
    outputs = [out]
    if fields_out:
        write_column_csv(fields_out, {f"x{i}": fields[:, i] for i in range(N)})
        outputs.append(fields_out)
    m = np.asarray(masses)
    summary = {"mean": float(m.mean()), "stderr": float(m.std(ddof=1) / math.sqrt(m.size)) if m.size > 1 else None}
    return outputs, [], {"summary": summary, "construction": construction}


@main.command("chaos-verify-cov")
@click.option("--eps", type=float, default=0.25)
@click.option("--n", "N", type=click.IntRange(min=2), default=128)
@click.option("--count", type=click.IntRange(min=2), default=10_000)
@seed_option
@click.option("--lags", type=float, multiple=True, default=[0.05, 0.15, 0.3, 0.5, 0.75])
@click.option("--cell-resolution", type=click.IntRange(min=8), default=512)
@click.option("--slack", type=float, default=0.05, help="Discretisation slack for the cone construction.")
@out_option
@experiment
def chaos_verify_cov(eps, N, count, seed, lags, cell_resolution, slack, out, workers):
    """Empirical covariances of both field constructions against the kernel."""
    grid = chaos.FieldGrid(N)
    fac = chaos.factorize(chaos.build_covariance(grid, eps))
    X = np.concatenate(rngmod.map_chunks(
        lambda i, a, b: chaos.sample_field(fac, rngmod.stream(seed, rngmod.CHAOS_FIELD, i), b - a),
        rngmod.chunks(count, chaos.FIELD_CHUNK), workers))
    base = 0.2
    pts = np.array([base] + [base + d for d in lags])
    Wn = chaos.whitenoise_batch(eps, pts, count, seed, cell_resolution=cell_resolution, workers=workers)
    rows = {k: [] for k in ("lag", "kernel", "chol_lag", "chol_kernel", "chol_cov", "chol_se", "chol_ok",
                            "wn_cov", "wn_se", "wn_ok")}
    for j, d in enumerate(lags, start=1):
        k = chaos.kernel_value(eps, eps, 0.0, d)
        steps = min(N - 1, max(1, int(round(d * N))))  # nearest grid lag
        kc = chaos.kernel_value(eps, eps, 0.0, steps / N)
        prod = (X[:, :-steps] * X[:, steps:]).mean(axis=1)
        cm, cs = float(prod.mean()), float(prod.std(ddof=1) / math.sqrt(count))
        p = Wn[:, 0] * Wn[:, j]
        wm, ws = float(p.mean()), float(p.std(ddof=1) / math.sqrt(count))
        rows["lag"].append(float(d))
        rows["kernel"].append(float(k))
        rows["chol_lag"].append(steps / N)
        rows["chol_kernel"].append(float(kc))
        rows["chol_cov"].append(cm)
        rows["chol_se"].append(cs)
        rows["chol_ok"].append(bool(abs(cm - kc) <= 3 * cs))
        rows["wn_cov"].append(wm)
        rows["wn_se"].append(ws)
        rows["wn_ok"].append(bool(abs(wm - k) <= 3 * ws + slack))
    write_column_csv(out, rows)
    ok = all(rows["chol_ok"]) and all(rows["wn_ok"])
    return [out], [], {"summary": {"all_ok": ok, "jitter": fac.jitter}}


@main.command("chaos-decompose")
@click.option("--beta", type=float, default=0.5)
@click.option("--eps", type=float, default=2 ** -7)
@click.option("--n", "N", type=click.IntRange(min=3), default=384)
@click.option("--count", type=click.IntRange(min=2), default=10_000)
@seed_option
@click.option("--chunk-size", type=click.IntRange(min=1), default=chaos.FIELD_CHUNK)
@click.option("--slack", type=float, default=0.03)
@click.option("--probe-replicates", type=click.IntRange(min=0), default=100_000,
              help="Replicates for the infimum tail probe (0 skips it).")
@out_option
@experiment
def chaos_decompose(beta, eps, N, count, seed, chunk_size, slack, probe_replicates, out, workers):
    """Coarse/fine split of the chaos mass with dominance diagnostics."""
    params = chaos.KernelParams(beta, eps)
    d = chaos.decompose_scale(params, N, count, seed, chunk_size=chunk_size, workers=workers)
    write_column_csv(out, {"W0": d.W0, "W1": d.W1, "mass": d.mass, "recombined": d.recombined,
                           "recombined_coupled": d.recombined_coupled})
    dom = dominance_check(d.mass, d.recombined, slack)
    summary = {"ks_w0_w1": d.ks_w, "dominance_passed": dom.passed, "dominance_worst_gap": dom.worst_gap,
               "pathwise_ok": bool(np.all(d.mass >= d.recombined_coupled))}
    if probe_replicates:
        p = chaos.inf_tail_probe(beta, a_grid=None, replicates=probe_replicates, master_seed=seed,
                                 workers=workers)
        summary["inf_probe"] = {"a": p.a.tolist(), "prob": p.prob.tolist(), "slope": p.slope,
                                "r_squared": p.r_squared}
    summary_path = Path(str(out) + ".json")
    write_json(summary_path, summary)
    return [out, summary_path], [], {"summary": summary}


# -- verification and replay ---------------------------------------------------

@main.command("verify")
@click.argument("suites", nargs=-1)
@click.option("--all", "run_all", is_flag=True, help="Run every suite.")
@click.pass_context
def verify_cmd(ctx, suites, run_all):
    """Run pinned-seed verification suites; prints JSON, exit 2 on any failure."""
    names = list(verify.SUITES) if run_all else list(suites)
    if not names:
        raise click.UsageError(f"name a suite ({', '.join(verify.SUITES)}) or pass --all")
    bad = [n for n in names if n not in verify.SUITES]
    if bad:
        raise click.BadParameter(f"unknown suite(s) {', '.join(bad)}; choose from {', '.join(verify.SUITES)}")
    results = [verify.run_suite(n) for n in names]
    click.echo(json.dumps({"passed": all(r["passed"] for r in results), "suites": results},
                          indent=2, sort_keys=True))
    failing = [f"{r['suite']}: {c['name']}" for r in results for c in r["checks"] if not c["passed"]]
    if failing:
        raise CheckFailed("failing checks: " + "; ".join(failing))


OUTPUT_PARAMS = ("out", "fields_out")


@main.command("rerun")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), required=True,
              help="Directory for the regenerated outputs.")
@click.pass_context
def rerun(ctx, manifest, out_dir):
    """Re-execute a run from its manifest and compare output digests."""
    with open(manifest, encoding="utf-8") as fh:
        m = json.load(fh)
    if m.get("schema_version") != SCHEMA_VERSION:
        raise click.ClickException(f"unsupported manifest schema {m.get('schema_version')!r}")
    cmd = main.commands.get(m["command"])
    if cmd is None or m["command"] in ("verify", "rerun"):
        raise click.ClickException(f"cannot replay command {m['command']!r}")
    os.makedirs(out_dir, exist_ok=True)
    params = dict(m["params"])
    mapping = {}
    for key in OUTPUT_PARAMS:
        if params.get(key):
            new = str(Path(out_dir) / Path(params[key]).name)
            mapping[params[key]] = new
            params[key] = new
    for key, value in params.items():
        if isinstance(value, list) and value and isinstance(value[0], list):
            params[key] = [tuple(v) for v in value]
    ctx.invoke(cmd, **params)
    new_manifest = ctx.obj["last_manifest"]
    mismatched = []
    for old_path, digest in m["outputs"].items():
        stem = old_path
        new_path = None
        for old, new in mapping.items():
            if stem.startswith(old):
                new_path = new + stem[len(old):]
        if new_path is None or new_manifest["outputs"].get(new_path) != digest:
            mismatched.append(old_path)
    click.echo(json.dumps({"identical": not mismatched, "mismatched": mismatched}, sort_keys=True))
    if mismatched:
        raise CheckFailed(f"outputs differ from the manifest: {', '.join(mismatched)}")


def run(argv=None) -> int:
    """Entry point returning the exit status instead of raising SystemExit."""
    try:
        main.main(args=argv, prog_name="cascade-lab", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.exceptions.NoArgsIsHelpError as exc:
        click.echo(exc.ctx.get_help() if exc.ctx else str(exc), err=True)
        return 1
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code if isinstance(exc, NumericalFailure) else 1
    except click.exceptions.Exit as exc:
        return exc.exit_code
    return 0


def cli_main():
    sys.exit(run())
