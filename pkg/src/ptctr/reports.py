"""Report rows, run manifests and their CSV/JSON serialisation."""

import csv
import json
import math
import platform
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import resources

import numpy as np
import scipy

BENCH_COLUMNS = (
    "problem", "n", "m", "solver", "steps", "accepted", "rejected", "f_star",
    "kkt_residual", "feasibility_residual", "elapsed_seconds", "status", "close",
)
CONDITIONING_COLUMNS = ("sigma", "condition")


def utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Everything needed to replay a run; embedded verbatim in every report."""

    command: str
    argv: list
    problems: list = field(default_factory=list)
    dimensions: dict = field(default_factory=dict)
    solvers: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int | None = None
    outputs: dict = field(default_factory=dict)
    started: str = field(default_factory=utc_now)
    finished: str | None = None
    environment: dict = field(default_factory=lambda: {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": sys.platform,
    })

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BenchRow:
    problem: str
    n: int
    m: int
    solver: str
    steps: int
    accepted: int
    rejected: int
    f_star: float
    kkt_residual: float
    feasibility_residual: float
    elapsed_seconds: float
    status: str
    close: bool = False

    @classmethod
    def from_report(cls, report, n, m):
        return cls(report.problem, n, m, report.solver, report.iterations,
                   report.accepted_steps, report.rejected_steps, report.f_star,
                   report.kkt_residual, report.feasibility_residual,
                   report.elapsed_time, report.status.value, bool(report.close))


def _finite_or_none(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _fmt(value, digits=9):
    # scientific with digits+1 significant figures; f_star needs >= 7
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.{digits}e}"
    return str(value)


def write_bench_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_COLUMNS)
        for row in rows:
            d = asdict(row)
            writer.writerow([_fmt(d[c]) for c in BENCH_COLUMNS])


def read_bench_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def bench_document(rows, manifest):
    return {
        "kind": "bench",
        "manifest": manifest.to_dict(),
        "rows": [{k: _finite_or_none(v) for k, v in asdict(r).items()} for r in rows],
    }


def conditioning_document(pairs, manifest, monotone):
    return {
        "kind": "conditioning",
        "manifest": manifest.to_dict(),
        "monotone": monotone,
        "rows": [{"sigma": s, "condition": _finite_or_none(c)} for s, c in pairs],
    }


def vin_document(summary, manifest):
    return {"kind": "vin", "manifest": manifest.to_dict(), "summary": summary}


def write_conditioning_csv(pairs, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CONDITIONING_COLUMNS)
        for sigma, cond in pairs:
            writer.writerow([_fmt(float(sigma)), _fmt(float(cond))])


def write_json(document, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_schema(kind):
    """JSON schema shipped with the package for report ``kind``."""
    text = resources.files("ptctr").joinpath("schemas", f"{kind}_report.schema.json").read_text()
    return json.loads(text)
