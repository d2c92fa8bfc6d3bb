"""Experiment documents: validation, dispatch, caching and reports.

A document is a flat JSON object with a ``kind`` plus engine-specific
fields, validated against the schema shipped as
``residua/experiment_schema.json``.  Reports are serialized with sorted
keys and fixed separators, so identical (document, seed, engine version)
triples produce byte-identical files.  Completed reports are cached
under a content hash that includes the engine version; a cache hit
returns the stored bytes unchanged.  Cache status is intentionally kept
out of the report payload.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema

from . import ENGINE_VERSION
from .cfl import CFLFactorSpec, cfl_product_eval
from .checks import DEFAULT_SEED, check_suite
from .currents import ProductStep, pair_with_testform, sequential_product
from .exactcore import EngineError
from .mellin import (
    build_gamma,
    diagonal_limit,
    iterated_limit,
    pole_lines_near_orthant,
    render_closed_form,
)
from .quadrature import (
    EpsilonSchedule,
    GridSpec,
    RegularizedSpec,
    Weight,
    eval_regularized_integral,
    iterated_limit_estimate,
    rate_fit,
)
from .testforms import CutoffProfile, TestForm


class SchemaError(Exception):
    """The experiment document does not satisfy the schema."""


_SCHEMA = json.loads(
    resources.files("residua").joinpath("experiment_schema.json").read_text()
)


def validate_doc(doc: dict) -> None:
    try:
        jsonschema.validate(doc, _SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "(root)"
        raise SchemaError(f"at {path}: {e.message}") from None


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def payload_hash(doc: dict) -> str:
    blob = canonical_json({"doc": doc, "engine_version": ENGINE_VERSION})
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def cache_dir() -> Path:
    root = os.environ.get("RESIDUA_CACHE_DIR")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "residua"


def _cnum(v: complex) -> dict:
    v = complex(v)
    return {"re": float(v.real), "im": float(v.imag)}


# --------------------------------------------------------------------------
# Document -> engine objects


def _steps_from(doc: dict) -> list[ProductStep]:
    return [ProductStep.from_json(s) for s in doc["steps"]]


def _testform_from(doc: dict, n: int) -> TestForm:
    return TestForm.from_json(doc["testform"], n)


def _grid_from(doc: dict) -> GridSpec:
    g = doc.get("grid", {})
    return GridSpec(
        radial_panels=int(g.get("radial_panels", 6)),
        gauss_order=int(g.get("gauss_order", 8)),
        angular_order=int(g.get("angular_order", 0)),
        max_level=int(g.get("max_level", 3)),
        tol=float(g.get("tol", 1e-7)),
        budget=int(g.get("budget", 4_000_000)),
        threads=int(g.get("threads", 1)),
    )


def _schedule_from(doc: dict) -> EpsilonSchedule:
    s = doc.get("schedule", {})
    return EpsilonSchedule(
        kind=str(s.get("kind", "iterated")),
        start=float(s.get("start", 0.25)),
        ratio=float(s.get("ratio", 4.0)),
        length=int(s.get("length", 6)),
        beta=float(s.get("beta", 2.0)),
        custom=tuple(tuple(float(x) for x in row) for row in s.get("custom", ())),
    )


def _cutoff_from(doc: dict, q: int):
    c = doc.get("cutoff")
    if c is None:
        return None
    if isinstance(c, list):
        if len(c) != q:
            raise SchemaError("cutoff list length must match the step count")
        return [CutoffProfile.from_json(x) for x in c]
    return CutoffProfile.from_json(c)


def _gamma_tilde_from(doc: dict, steps: Sequence[ProductStep]):
    gt = doc.get("gamma_tilde")
    if gt is None:
        return None
    if len(gt) != len(steps):
        raise SchemaError("gamma_tilde needs one row per step")
    n = steps[0].n
    if any(len(row) != n for row in gt):
        raise SchemaError("gamma_tilde rows must have one entry per variable")
    return [tuple(int(g) for g in row) for row in gt]


def _weights_from(doc: dict, steps: Sequence[ProductStep]):
    ws = doc.get("weights")
    if ws is None:
        return None
    if len(ws) != len(steps):
        raise SchemaError("weights needs one entry per step")
    n = steps[0].n
    out = []
    for w in ws:
        if w is None:
            out.append(None)
        else:
            out.append(Weight.make(n, [(t["r"], str(t["c"])) for t in w["terms"]]))
    return out


def _reg_spec(doc: dict) -> RegularizedSpec:
    steps = _steps_from(doc)
    phi = _testform_from(doc, steps[0].n)
    return RegularizedSpec.make(
        steps,
        phi,
        cutoff=_cutoff_from(doc, len(steps)),
        weights=_weights_from(doc, steps),
        gamma_tilde=_gamma_tilde_from(doc, steps),
    )


# --------------------------------------------------------------------------
# Runners


def _run_pair(doc: dict) -> dict:
    steps = _steps_from(doc)
    current = sequential_product(steps)
    out = {
        "current": current.render(),
        "is_zero": current.is_zero(),
        "terms": current.to_json(),
    }
    if "testform" in doc:
        phi = _testform_from(doc, steps[0].n)
        s = pair_with_testform(current, phi)
        out["pairing"] = {
            "render": s.render(),
            "is_zero": s.is_zero(),
            **_cnum(s.to_complex()),
        }
    return out


def _run_mellin(doc: dict) -> dict:
    steps = _steps_from(doc)
    phi = _testform_from(doc, steps[0].n)
    expr = build_gamma(steps, phi)
    it = iterated_limit(expr)
    diag = diagonal_limit(expr)
    lines = pole_lines_near_orthant(expr, seed=int(doc["seed"]))
    out = {
        "closed_form": render_closed_form(expr),
        "iterated": {"render": it.render(), **_cnum(it.to_complex())},
        "diagonal": {"render": diag.render(), **_cnum(diag.to_complex())},
        "pole_lines": [ln.render() for ln in lines],
        "pole_lines_detail": [
            {
                "coeffs": list(ln.form.coeffs),
                "const": ln.form.const,
                "status": ln.status,
                "probe_orders": list(ln.probe_orders),
            }
            for ln in lines
        ],
    }
    if "aswy" in doc:
        from .mellin import aswy_limit

        a = tuple(int(x) for x in doc["aswy"])
        v = aswy_limit(expr, a)
        out["aswy"] = {"a": list(a), "render": v.render(), **_cnum(v.to_complex())}
    return out


def _sweep_paths(doc: dict, q: int) -> list[tuple[float, ...]]:
    eps = doc["epsilons"]
    if isinstance(eps, list):
        paths = [tuple(float(x) for x in row) for row in eps]
        if any(len(p) != q for p in paths):
            raise SchemaError("each epsilon row needs one entry per step")
        return paths
    start = float(eps.get("start", 0.25))
    ratio = float(eps.get("ratio", 4.0))
    length = int(eps.get("length", 8))
    ladder = [start * ratio ** (-k) for k in range(length)]
    if eps["path"] == "diagonal":
        return [(d,) * q for d in ladder]
    beta = float(eps.get("beta", 2.0))
    return [tuple(d ** (beta ** (q - 1 - j)) for j in range(q)) for d in ladder]


def _run_sweep(doc: dict) -> dict:
    spec = _reg_spec(doc)
    grid = _grid_from(doc)
    paths = _sweep_paths(doc, spec.q)
    results = [eval_regularized_integral(spec, grid, p) for p in paths]
    values = [r.value for r in results]
    # successive-difference error bound: refinement of the epsilon ladder
    # shrinks it, which keeps the column monotone for clean decays
    incs = [abs(values[k] - values[k - 1]) for k in range(1, len(values))]
    uncs = ([incs[0]] + incs) if incs else [0.0]
    rows = []
    for k, (p, r) in enumerate(zip(paths, results)):
        hist = r.diagnostics.get("history", [])
        level = hist[-1]["level"] if hist else -1
        rows.append(
            {
                "eps": list(p),
                **_cnum(r.value),
                "uncertainty": float(uncs[k]),
                "grid_uncertainty": float(r.uncertainty),
                "grid_level": int(level),
                "budget_exceeded": bool(r.budget_exceeded),
            }
        )
    out = {
        "columns": [f"eps_{j + 1}" for j in range(spec.q)]
        + ["re", "im", "uncertainty", "grid_level"],
        "rows": rows,
    }
    if doc.get("fit"):
        if "reference" in doc:
            ref = complex(doc["reference"]["re"], doc["reference"]["im"])
        else:
            steps = _steps_from(doc)
            phi = _testform_from(doc, steps[0].n)
            ref = iterated_limit(build_gamma(steps, phi)).to_complex()
        samples = []
        for p, v in zip(paths, values):
            err = abs(v - ref)
            if err > 0:
                samples.append((min(p), err))
        C, omega, r2 = rate_fit(samples)
        out["fit"] = {
            "reference": _cnum(ref),
            "C": float(C),
            "omega": float(omega),
            "r_squared": float(r2),
            "samples": [{"x": x, "error": e} for x, e in samples],
        }
    return out


def _limit_shape(r) -> dict:
    return {
        "value": _cnum(r.value),
        "uncertainty": float(r.uncertainty),
        "converged": bool(r.converged),
        "budget_exceeded": bool(r.budget_exceeded),
        "schedule": r.diagnostics.get("schedule"),
        "ladder": [float(x) for x in r.diagnostics.get("ladder", [])],
        "history": [_cnum(v) for v in r.diagnostics.get("history", [])],
    }


def _run_limit(doc: dict) -> dict:
    r = iterated_limit_estimate(_reg_spec(doc), _schedule_from(doc), _grid_from(doc))
    return _limit_shape(r)


def _run_cfl(doc: dict) -> dict:
    factors = [CFLFactorSpec.from_json(f) for f in doc["factors"]]
    phi = _testform_from(doc, factors[0].section.n)
    r = cfl_product_eval(factors, phi, _schedule_from(doc), _grid_from(doc))
    return _limit_shape(r)


def _run_check(doc: dict) -> dict:
    suites = []
    for name in doc["suites"]:
        res = check_suite(name, seed=int(doc["seed"]))
        suites.append(
            {"suite": res.suite, "passed": res.passed, "details": res.details}
        )
    return {"suites": suites, "passed": all(s["passed"] for s in suites)}


_RUNNERS = {
    "pair": _run_pair,
    "mellin": _run_mellin,
    "sweep": _run_sweep,
    "limit": _run_limit,
    "cfl": _run_cfl,
    "check": _run_check,
}


# --------------------------------------------------------------------------
# Orchestration


@dataclass
class RunResult:
    doc: dict
    report: dict
    cached: bool
    files: list[Path] = field(default_factory=list)

    def json_bytes(self) -> bytes:
        return (canonical_json(self.report) + "\n").encode("utf-8")


def run_experiment(
    doc: dict,
    out_dir: str | Path | None = None,
    seed: int | None = None,
    tol: float | None = None,
    budget: int | None = None,
    threads: int | None = None,
    use_cache: bool = True,
) -> RunResult:
    """Validate, run (or load from cache) and optionally write the report.

    Command-line overrides are folded into the document before hashing,
    so the cache key always reflects the effective configuration.
    """
    doc = json.loads(json.dumps(doc))
    if seed is not None:
        doc["seed"] = int(seed)
    grid_over = {"tol": tol, "budget": budget, "threads": threads}
    grid_over = {k: v for k, v in grid_over.items() if v is not None}
    if grid_over:
        doc["grid"] = {**doc.get("grid", {}), **grid_over}
    validate_doc(doc)

    key = payload_hash(doc)
    cpath = cache_dir() / f"{key}.json"
    cached = False
    if use_cache and cpath.is_file():
        report = json.loads(cpath.read_text(encoding="utf-8"))
        cached = True
    else:
        result = _RUNNERS[doc["kind"]](doc)
        report = {
            "kind": doc["kind"],
            "name": doc.get("name", doc["kind"]),
            "seed": doc.get("seed"),
            "engine_version": ENGINE_VERSION,
            "payload_hash": key,
            "result": result,
        }
        if use_cache:
            cpath.parent.mkdir(parents=True, exist_ok=True)
            tmp = cpath.with_suffix(".tmp")
            tmp.write_text(canonical_json(report) + "\n", encoding="utf-8")
            tmp.replace(cpath)

    rr = RunResult(doc, report, cached)
    if out_dir is not None:
        base = report["name"]
        formats = ["json"]
        if doc["kind"] in ("sweep", "check"):
            formats.append("csv")
        if doc["kind"] in ("sweep", "limit", "cfl"):
            formats.append("plotdata")
        for fmt in formats:
            rr.files.extend(emit_report([report], fmt, Path(out_dir) / base))
    return rr


# --------------------------------------------------------------------------
# Report emission


def _csv_text(reports: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    sweeps = [r for r in reports if r.get("kind") == "sweep"]
    checks = [r for r in reports if r.get("kind") == "check"]
    if sweeps:
        cols = sweeps[0]["result"]["columns"]
        w.writerow(cols)
        for rep in sweeps:
            if rep["result"]["columns"] != cols:
                raise EngineError("sweep reports disagree on columns")
            for row in rep["result"]["rows"]:
                w.writerow(
                    [f"{e:.17g}" for e in row["eps"]]
                    + [
                        f"{row['re']:.17g}",
                        f"{row['im']:.17g}",
                        f"{row['uncertainty']:.17g}",
                        row["grid_level"],
                    ]
                )
    elif checks:
        w.writerow(["suite", "passed", "checks"])
        for rep in checks:
            for s in rep["result"]["suites"]:
                w.writerow([s["suite"], str(s["passed"]).lower(), len(s["details"])])
    else:
        w.writerow(["name", "kind", "field", "value"])
        for rep in reports:
            res = rep.get("result", {})
            if "value" in res:
                w.writerow([rep["name"], rep["kind"], "re", f"{res['value']['re']:.17g}"])
                w.writerow([rep["name"], rep["kind"], "im", f"{res['value']['im']:.17g}"])
                w.writerow(
                    [rep["name"], rep["kind"], "uncertainty",
                     f"{res['uncertainty']:.17g}"]
                )
            elif "current" in res:
                w.writerow([rep["name"], rep["kind"], "current", res["current"]])
    return buf.getvalue()


def _plotdata_text(reports: Sequence[dict]) -> str:
    lines: list[str] = []
    for rep in reports:
        res = rep.get("result", {})
        if rep.get("kind") == "sweep":
            if "fit" in res:
                f = res["fit"]
                lines.append(
                    f"# fit C={f['C']:.17g} omega={f['omega']:.17g} "
                    f"r_squared={f['r_squared']:.17g}"
                )
                lines.append("x,y")
                for s in f["samples"]:
                    lines.append(f"{s['x']:.17g},{s['error']:.17g}")
            else:
                lines.append("x,y")
                for row in res["rows"]:
                    lines.append(f"{min(row['eps']):.17g},{row['re']:.17g}")
        elif "history" in res and res.get("ladder"):
            lines.append("x,y")
            for x, h in zip(res["ladder"], res["history"]):
                lines.append(f"{x:.17g},{h['re']:.17g}")
    if not lines:
        lines.append("x,y")
    return "\n".join(lines) + "\n"


def emit_report(
    reports: Sequence[dict], format: str, out_path: str | Path
) -> list[Path]:
    """Write the reports in the requested format next to ``out_path``.

    ``out_path`` is a basename; the format decides the extension.  Field
    ordering is stable: JSON keys are sorted, CSV and plot data use fixed
    column lists.  An empty report list produces an empty summary file.
    """
    if format not in ("json", "csv", "plotdata"):
        raise ValueError(f"unknown report format {format!r}")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if format == "json":
        target = out_path.with_suffix(".json")
        if len(reports) == 1:
            text = canonical_json(reports[0]) + "\n"
        else:
            text = canonical_json({"count": len(reports), "results": list(reports)})
            text += "\n"
    elif format == "csv":
        target = out_path.with_suffix(".csv")
        text = _csv_text(reports)
    else:
        target = out_path.with_suffix(".plot.csv")
        text = _plotdata_text(reports)
    target.write_text(text, encoding="utf-8")
    return [target]
