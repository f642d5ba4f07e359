"""Analysis report: per-frequency records, serialization and file emission.

``report.json`` holds everything that is a function of the configuration
and seeds, so it is byte-identical across runs and parallel settings.
Wall-clock timings go to ``timings.json`` and the ``solve_ms`` column.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

PASS, FAIL, ERROR = "pass", "fail", "error"
TABLE_HEADER = ("freq_hz", "gamma_ub_db", "gamma_lb_db", "pass", "solve_ms")


def finite_or_none(x) -> float | None:
    return float(x) if x is not None and math.isfinite(x) else None


def db(x) -> float | None:
    """``20 log10`` of a gain; ``None`` for missing or non-positive values."""
    return 20.0 * math.log10(x) if x is not None and math.isfinite(x) and x > 0 else None


@dataclass
class FrequencyReport:
    freq_hz: float
    omega: float
    gamma_ub: float | None
    gamma_lb: float | None
    nominal: float | None
    w_db: float
    passed: bool
    status: str
    error: str | None = None
    mc_evaluated: int = 0
    mc_skipped: int = 0
    multipliers: list = field(default_factory=list)
    embeddings: list = field(default_factory=list)
    solve_ms: float = field(default=0.0, compare=False)

    @property
    def gamma_ub_db(self) -> float | None:
        return db(self.gamma_ub)

    @property
    def gamma_lb_db(self) -> float | None:
        return db(self.gamma_lb)

    @property
    def nominal_db(self) -> float | None:
        return db(self.nominal)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.compare}
        d["gamma_ub_db"] = self.gamma_ub_db
        d["gamma_lb_db"] = self.gamma_lb_db
        d["nominal_db"] = self.nominal_db
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class AnalysisReport:
    records: list[FrequencyReport]
    status: str
    complexity: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    version: str = ""
    timings: dict = field(default_factory=dict, compare=False)

    @property
    def exit_code(self) -> int:
        return {PASS: 0, FAIL: 2}.get(self.status, 1)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "status": self.status,
            "records": [r.to_dict() for r in self.records],
            "complexity": self.complexity,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisReport":
        return cls(
            records=[FrequencyReport.from_dict(r) for r in d["records"]],
            status=d["status"],
            complexity=d.get("complexity", []),
            config=d.get("config", {}),
            version=d.get("version", ""),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_table(self, delimiter: str = "\t") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        fmt = lambda x: "nan" if x is None else f"{x:.6f}"
        for r in self.records:
            w.writerow([f"{r.freq_hz:.6g}", fmt(r.gamma_ub_db), fmt(r.gamma_lb_db),
                        "1" if r.passed else "0", f"{r.solve_ms:.3f}"])
        return buf.getvalue()


def emit_report(report: AnalysisReport, out_dir, formats=("tsv", "json")) -> list[Path]:
    """Write the requested files into ``out_dir``; returns the written paths.

    ``tsv`` and ``csv`` give the table, ``json`` the structured report plus
    the separate timing file.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    written = []
    for fmt in formats:
        if fmt in ("tsv", "csv"):
            p = out / f"report.{fmt}"
            p.write_text(report.to_table("\t" if fmt == "tsv" else ","))
            written.append(p)
        elif fmt == "json":
            p = out / "report.json"
            p.write_text(report.to_json())
            t = out / "timings.json"
            t.write_text(json.dumps(report.timings, indent=2, sort_keys=True) + "\n")
            written += [p, t]
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    return written


def load_report(path) -> AnalysisReport:
    return AnalysisReport.from_dict(json.loads(Path(path).read_text()))
