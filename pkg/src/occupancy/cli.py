"""Command line runner: reads a JSON config, writes reports, sets exit codes.

Exit status: 0 success, 1 a sandwich verdict failed, 2 invalid config,
3 output not writable.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import click

from .bounds import bound_suite
from .dist import Distribution
from .estimate import concentration_interval
from .exact import exact_EK_certified, exact_EM_certified
from .metric import MetricModel, bkgen_upper, exact_EM_delta
from .poisson import exact_EM_poisson_certified, upper_poisson
from .simulate import SeedSpec, coverage_experiment, monte_carlo

CSV_COLUMNS = ["dist", "family_params", "n", "r", "exact", "bound_source", "bound_value",
               "optimizer_eps", "applicable", "verdict"]

_TOP_KEYS = {"distributions", "n", "r", "skip_r_gt_n", "bounds", "estimators", "mc", "poisson",
             "metric"}
_MC_KEYS = {"N", "t", "master_seed", "r", "n", "coverage"}
_COVERAGE_KEYS = {"kind", "n", "t", "N", "distribution"}
_EST_KEYS = {"kind", "n", "r", "t", "distribution"}
_POISSON_KEYS = {"Lambda", "r"}
_METRIC_KEYS = {"models", "delta", "n"}

SUITE_CONFIG = {
    "distributions": [
        {"family": "uniform", "m": 2}, {"family": "uniform", "m": 10}, {"family": "uniform", "m": 100},
        {"family": "zipf", "alpha": 0.3}, {"family": "zipf", "alpha": 0.5}, {"family": "zipf", "alpha": 0.7},
        {"family": "geometric", "q": 0.5}, {"family": "geometric", "q": 0.9}, {"family": "dirac"},
    ],
    "n": [2, 10, 100, 1000, 10000],
    "r": [0, 1, 2, 5],
    "skip_r_gt_n": True,
    "mc": {"N": 2000, "t": 3.0, "master_seed": 20240601, "n": [10, 100], "r": [0, 1],
           "coverage": [{"kind": "cbmm3", "distribution": {"family": "zipf", "alpha": 0.5},
                         "n": 10000, "t": 3.0, "N": 2000}]},
    "poisson": {"Lambda": [2.0, 100.0, 10000.0], "r": [0, 1, 5]},
    "metric": {"models": [{"space": "segment", "a": 0, "b": 1, "law": "uniform"},
                          {"space": "segment", "a": 0, "b": 2, "law": "piecewise",
                           "edges": [0, 0.3, 1.1, 2], "weights": [0.2, 0.5, 0.3]},
                          {"space": "points", "coords": [0, 1, 2], "masses": [0.5, 0.3, 0.2]},
                          {"space": "points", "coords": [0, 0.1, 0.25, 0.7],
                           "masses": [0.4, 0.3, 0.2, 0.1]}],
               "delta": [0.05, 0.2, 0.5], "n": [1, 10, 100]},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def _int_list(v, where, lo=0):
    if not isinstance(v, list) or not v or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"{where} must be a non-empty list of integers")
    if any(x < lo for x in v):
        raise ConfigError(f"{where} entries must be >= {lo}")
    return v


def validate_config(cfg: dict) -> dict:
    _check_keys(cfg, _TOP_KEYS, "config")
    out = dict(cfg)
    try:
        out["_dists"] = [Distribution.from_config(d) for d in cfg.get("distributions", [])]
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad distribution: {exc}") from exc
    ns = _int_list(cfg["n"], "n", 1) if "n" in cfg else []
    rs = _int_list(cfg["r"], "r", 0) if "r" in cfg else []
    skip = bool(cfg.get("skip_r_gt_n", False))
    pairs = []
    for n in ns:
        for r in rs:
            if r > n:
                if not skip:
                    raise ConfigError(f"r = {r} exceeds n = {n}")
                continue
            pairs.append((n, r))
    out["_pairs"] = pairs
    if "bounds" in cfg and not (isinstance(cfg["bounds"], list) and all(isinstance(b, str) for b in cfg["bounds"])):
        raise ConfigError("bounds must be a list of source names")
    for i, e in enumerate(cfg.get("estimators", [])):
        _check_keys(e, _EST_KEYS, f"estimators[{i}]")
        if e.get("kind") not in ("mo03", "mo03_upper", "mo03_lower", "cbmm1", "cbmm3", "bbo15"):
            raise ConfigError(f"estimators[{i}]: unknown kind")
        if e.get("r", 0) > e.get("n", 1):
            raise ConfigError(f"estimators[{i}]: r exceeds n")
    if "mc" in cfg:
        mc = cfg["mc"]
        _check_keys(mc, _MC_KEYS, "mc")
        if int(mc.get("N", 2)) < 2:
            raise ConfigError("mc.N must be >= 2")
        for i, c in enumerate(mc.get("coverage", [])):
            _check_keys(c, _COVERAGE_KEYS, f"mc.coverage[{i}]")
    if "poisson" in cfg:
        _check_keys(cfg["poisson"], _POISSON_KEYS, "poisson")
        lams = cfg["poisson"].get("Lambda", [])
        if not all(isinstance(x, (int, float)) and x > 0 for x in lams):
            raise ConfigError("poisson.Lambda must be positive numbers")
    if "metric" in cfg:
        mt = cfg["metric"]
        _check_keys(mt, _METRIC_KEYS, "metric")
        try:
            out["_models"] = [MetricModel.from_config(m) for m in mt.get("models", [])]
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"bad metric model: {exc}") from exc
    return out


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return cfg


# ---------------------------------------------------------------------------
# tasks (top level so worker processes can run them)
# ---------------------------------------------------------------------------

def _bounds_task(spec, n, r, selection):
    d = Distribution.from_config(spec)
    rep = bound_suite(d, n, r)
    out = rep.to_dict()
    if selection:
        out["bounds"] = [b for b in out["bounds"] if b["source"] in selection]
        out["violations"] = [v for v in out["violations"] if v in selection]
        out["verdict"] = not out["violations"]
    return out


def _exact_task(spec, n, r):
    d = Distribution.from_config(spec)
    em = exact_EM_certified(d, n, r)
    ek = exact_EK_certified(d, n, r)
    return {"distribution": spec, "n": n, "r": r, "EM": em.value, "EM_certificate": em.certificate,
            "EK": _enc(ek.value), "EK_certificate": ek.certificate}


def _poisson_task(spec, lam, r):
    d = Distribution.from_config(spec)
    ex = exact_EM_poisson_certified(d, lam, r)
    rows = []
    for variant in ("adaptt", "boundpoiss"):
        b = upper_poisson(d, lam, r, variant)
        ok = (not b.applicable) or b.value >= ex.value - 1e-10
        rows.append(dict(b.to_dict(), verdict="ok" if ok else "violated"))
    return {"distribution": spec, "Lambda": lam, "r": r, "exact": ex.value,
            "exact_certificate": ex.certificate, "bounds": rows,
            "verdict": all(x["verdict"] == "ok" for x in rows)}


def _metric_task(mspec, delta, n):
    model = MetricModel.from_config(mspec)
    ex = exact_EM_delta(model, n, delta, 0)
    b = bkgen_upper(model, n, delta)
    ok = (not b.applicable) or b.value >= ex - 1e-10
    return {"model": mspec, "delta": delta, "n": n, "exact": ex, "bound": b.to_dict(),
            "verdict": bool(ok)}


def _mc_task(spec, n, r_list, N, seed):
    d = Distribution.from_config(spec)
    res = monte_carlo(d, n, r_list, N, SeedSpec(seed))
    exact = {r: exact_EM_certified(d, n, r).value for r in r_list}
    return {"result": res.to_dict(), "csv": res.to_csv(exact)}


def _coverage_task(spec, kind, n, t, N, seed):
    d = Distribution.from_config(spec)
    res = coverage_experiment(d, n, t, N, SeedSpec(seed), kind)
    return res.to_dict()


def _estimator_task(spec, kind, n, r, t):
    d = Distribution.from_config(spec) if spec is not None else None
    return concentration_interval(kind, d, n, r, t).to_dict()


def _run(tasks, jobs):
    """Run (fn, args) tasks; results come back in task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*args) for fn, args in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futs = [ex.submit(fn, *args) for fn, args in tasks]
        return [f.result() for f in futs]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _enc(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}" if math.isfinite(v) else _enc(v)
    return str(v)


def _family_params(spec: dict) -> str:
    return ";".join(f"{k}={spec[k]}" for k in sorted(spec) if k != "family")


def bounds_csv(reports: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        spec = rep["distribution"]
        for b in rep["bounds"]:
            w.writerow([spec["family"], _family_params(spec), rep["n"], rep["r"], _fmt(rep["exact"]),
                        b["source"], _fmt(b["value"] if not isinstance(b["value"], str) else b["value"]),
                        _fmt(b["optimizer_eps"]), _fmt(b["applicable"]), b["verdict"]])
    return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False, default=_enc) + "\n"


def _clean(obj):
    """Replace non-finite floats by strings so the JSON is strict."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _enc(obj)


def _write(out_dir: str, name: str, text: str) -> None:
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IOError(f"cannot write {name}: {exc}") from exc


def emit_report(results: list, fmt: str) -> str:
    if not results:
        raise ValueError("results must be nonempty")
    if fmt == "csv":
        return bounds_csv(results)
    if fmt == "json":
        return _dump(_clean(results))
    raise ValueError("format must be csv or json")


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

def run_experiment(cfg: dict, out_dir: str, fmt: str = "json", seed=None, jobs: int = 1,
                   sections=("exact", "bounds", "mc", "estimate", "poisson", "metric")) -> int:
    """Run the configured sections, write reports; return the exit status."""
    cfg = validate_config(cfg)
    dists = [d.to_dict() for d in cfg["_dists"]]
    pairs = cfg["_pairs"]
    summary = {"verdicts": {}}
    files = {}

    if "exact" in sections and dists and pairs:
        rows = _run([(_exact_task, (s, n, r)) for s in dists for n, r in pairs], jobs)
        files["exact.json"] = _dump(_clean(rows))

    if "bounds" in sections and dists and pairs:
        sel = tuple(cfg.get("bounds", ()))
        reports = _run([(_bounds_task, (s, n, r, sel)) for s in dists for n, r in pairs], jobs)
        reports = [_clean(r) for r in reports]
        files["bounds." + fmt] = emit_report(reports, fmt)
        bad = [f"{r['distribution']}|n={r['n']}|r={r['r']}" for r in reports if not r["verdict"]]
        summary["verdicts"]["bounds"] = {"points": len(reports), "violations": bad}

    mc = cfg.get("mc")
    master = int(seed) if seed is not None else int((mc or {}).get("master_seed", 0))
    if "mc" in sections and mc and dists:
        ns = mc.get("n", [n for n, _ in pairs][:1] or [10])
        r_list = mc.get("r", [0])
        tasks = [(_mc_task, (s, n, r_list, int(mc.get("N", 1000)), master)) for s in dists for n in ns]
        res = _run(tasks, jobs)
        table = "".join(x["csv"] if i == 0 else x["csv"].split("\n", 1)[1] for i, x in enumerate(res))
        files["mc.csv"] = table
        files["mc.json"] = _dump(_clean([x["result"] for x in res]))
    if "mc" in sections and mc and mc.get("coverage"):
        tasks = []
        for c in mc["coverage"]:
            spec = c.get("distribution", dists[0] if dists else None)
            tasks.append((_coverage_task, (spec, c.get("kind", "cbmm3"), int(c["n"]), float(c.get("t", mc.get("t", 3.0))),
                                           int(c.get("N", mc.get("N", 1000))), master)))
        # coverage replicates are independent of the worker count
        cov = [fn(*args) for fn, args in tasks]
        files["coverage.json"] = _dump(_clean(cov))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dist", "n", "N", "t", "interval", "lower", "upper", "confidence_floor", "coverage"])
        for c in cov:
            iv = c["interval"]
            w.writerow([json.dumps(c["dist"], sort_keys=True), c["n"], c["N"], _fmt(iv["t"]), iv["source"],
                        _fmt(iv["lower"]), _fmt(iv["upper"]), _fmt(iv["confidence_floor"]),
                        _fmt(c["coverage_fraction"])])
        files["coverage.csv"] = buf.getvalue()

    if "estimate" in sections and cfg.get("estimators"):
        tasks = [(_estimator_task, (e.get("distribution", dists[0] if dists else None), e["kind"],
                                    int(e["n"]), int(e.get("r", 0)), float(e["t"])))
                 for e in cfg["estimators"]]
        files["intervals.json"] = _dump(_clean(_run(tasks, jobs)))

    if "poisson" in sections and cfg.get("poisson") and dists:
        pc = cfg["poisson"]
        tasks = [(_poisson_task, (s, float(lam), int(r))) for s in dists for lam in pc.get("Lambda", [])
                 for r in pc.get("r", [0])]
        res = [_clean(x) for x in _run(tasks, jobs)]
        files["poisson.json"] = _dump(res)
        bad = [f"{x['distribution']}|L={x['Lambda']}|r={x['r']}" for x in res if not x["verdict"]]
        summary["verdicts"]["poisson"] = {"points": len(res), "violations": bad}

    if "metric" in sections and cfg.get("metric"):
        mt = cfg["metric"]
        tasks = [(_metric_task, (m, float(dl), int(n))) for m in mt.get("models", [])
                 for dl in mt.get("delta", [0.1]) for n in mt.get("n", [10])]
        res = [_clean(x) for x in _run(tasks, jobs)]
        files["metric.json"] = _dump(res)
        bad = [f"{x['model']}|delta={x['delta']}|n={x['n']}" for x in res if not x["verdict"]]
        summary["verdicts"]["metric"] = {"points": len(res), "violations": bad}

    failed = any(v["violations"] for v in summary["verdicts"].values())
    summary["status"] = "fail" if failed else "pass"
    files["summary.json"] = _dump(summary)
    for name in sorted(files):
        _write(out_dir, name, files[name])
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# click surface
# ---------------------------------------------------------------------------

def _common(f):
    f = click.option("--jobs", type=click.IntRange(1, 256), default=1, show_default=True,
                     help="Worker processes.")(f)
    f = click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None,
                     help="Master seed (overrides mc.master_seed).")(f)
    f = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="json",
                     show_default=True, help="Format of the bounds report.")(f)
    f = click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out",
                     show_default=True, help="Output directory.")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="JSON experiment config.")(f)
    return f


def _invoke(config_path, out_dir, fmt, seed, jobs, sections, default=None):
    try:
        if config_path is None:
            if default is None:
                raise ConfigError("--config is required")
            cfg = default
        else:
            cfg = load_config(config_path)
        status = run_experiment(cfg, out_dir, fmt, seed, jobs, sections)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except IOError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"{'pass' if status == 0 else 'FAIL'}: reports in {out_dir}")
    sys.exit(status)


@click.group()
def main():
    """Occupancy counts and probabilities: exact values, bounds, simulation."""


@main.command()
@_common
def exact(config_path, out_dir, fmt, seed, jobs):
    """Exact E M_{n,r} and E K_{n,r} with certificates."""
    _invoke(config_path, out_dir, fmt, seed, jobs, ("exact",))


@main.command()
@_common
def bounds(config_path, out_dir, fmt, seed, jobs):
    """Every bound with its sandwich verdict."""
    _invoke(config_path, out_dir, fmt, seed, jobs, ("bounds",))


@main.command()
@_common
def simulate(config_path, out_dir, fmt, seed, jobs):
    """Monte Carlo means and coverage."""
    _invoke(config_path, out_dir, fmt, seed, jobs, ("mc",))


@main.command()
@_common
def estimate(config_path, out_dir, fmt, seed, jobs):
    """Intervals in probability."""
    _invoke(config_path, out_dir, fmt, seed, jobs, ("estimate",))


@main.command()
@_common
def poisson(config_path, out_dir, fmt, seed, jobs):
    """Poissonized expectations and bounds."""
    _invoke(config_path, out_dir, fmt, seed, jobs, ("poisson",))


@main.command()
@_common
def metric(config_path, out_dir, fmt, seed, jobs):
    """delta-neighbourhood occupancy and the covering bound."""
    _invoke(config_path, out_dir, fmt, seed, jobs, ("metric",))


@main.command()
@_common
def suite(config_path, out_dir, fmt, seed, jobs):
    """The full battery: bounds, Monte Carlo, Poisson and metric checks."""
    _invoke(config_path, out_dir, fmt, seed, jobs,
            ("exact", "bounds", "mc", "estimate", "poisson", "metric"), default=SUITE_CONFIG)


if __name__ == "__main__":
    main()
