"""Analysis configuration: a single JSON document, validated with field paths."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .global_step import EMBEDDING_KINDS
from .embedding import DEFAULT_ANGLES
from .scenario import DEFAULT_W_TABLE


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


DEFAULTS = {
    "scenario": {"kind": "platoon", "n_mod": 5, "dispersion": 0.10, "controller": "improved"},
    "ellipsoids": {"source": "synthetic", "relative_std": 0.05, "centered": False},
    "frequencies": {"hz": [0.13, 0.15, 0.17]},
    "probability": 0.95,
    "embeddings": "disc+band",
    "band_angles": DEFAULT_ANGLES,
    "solver": {},
    "parallel": False,
    "workers": None,
    "seed": 0,
    "mc_samples": 1000,
    "w_table": [list(r) for r in DEFAULT_W_TABLE],
    "output": {"dir": "netrobust-out"},
}

SOLVER_KEYS = ("gap_rtol", "gap_atol", "mu", "max_newton", "newton_tol", "feas_tol", "radius")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("scenario", "ellipsoids", "frequencies"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(raw, path, lo=None, hi=None, integer=False, open_lo=False, open_hi=False):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(path, f"expected a number, got {raw!r}")
    if integer and int(raw) != raw:
        raise ConfigError(path, f"expected an integer, got {raw!r}")
    v = int(raw) if integer else float(raw)
    if not np.isfinite(v):
        raise ConfigError(path, "must be finite")
    if lo is not None and (v <= lo if open_lo else v < lo):
        raise ConfigError(path, f"must be {'>' if open_lo else '>='} {lo}, got {v}")
    if hi is not None and (v >= hi if open_hi else v > hi):
        raise ConfigError(path, f"must be {'<' if open_hi else '<='} {hi}, got {v}")
    return v


def _list(raw, path, nonempty=True) -> list:
    if not isinstance(raw, list):
        raise ConfigError(path, f"expected a list, got {type(raw).__name__}")
    if nonempty and not raw:
        raise ConfigError(path, "must not be empty")
    return raw


def _matrix(raw, path, rows=None, cols=None) -> np.ndarray:
    raw = _list(raw, path)
    out = []
    for i, row in enumerate(raw):
        row = _list(row, f"{path}[{i}]")
        out.append([_num(v, f"{path}[{i}][{j}]") for j, v in enumerate(row)])
    if len({len(r) for r in out}) != 1:
        raise ConfigError(path, "rows have different lengths")
    M = np.array(out)
    if rows is not None and M.shape[0] != rows or cols is not None and M.shape[1] != cols:
        raise ConfigError(path, f"expected shape ({rows}, {cols}), got {M.shape}")
    return M


def _coeffs(raw, path) -> list[float]:
    return [_num(v, f"{path}[{i}]") for i, v in enumerate(_list(raw, path))]


def frequencies_hz(spec: dict, path: str = "frequencies") -> list[float]:
    """Explicit ``hz`` list or ``logspace`` ``{start, stop, num}`` in Hz, ascending."""
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object with 'hz' or 'logspace'")
    if ("hz" in spec) == ("logspace" in spec):
        raise ConfigError(path, "give exactly one of 'hz' or 'logspace'")
    if "hz" in spec:
        f = [_num(v, f"{path}.hz[{i}]", lo=0.0, open_lo=True) for i, v in enumerate(_list(spec["hz"], f"{path}.hz"))]
    else:
        ls = spec["logspace"]
        if not isinstance(ls, dict):
            raise ConfigError(f"{path}.logspace", "expected {start, stop, num}")
        for key in ("start", "stop", "num"):
            if key not in ls:
                raise ConfigError(f"{path}.logspace.{key}", "missing")
        a = _num(ls["start"], f"{path}.logspace.start", lo=0.0, open_lo=True)
        b = _num(ls["stop"], f"{path}.logspace.stop", lo=a)
        n = _num(ls["num"], f"{path}.logspace.num", lo=1, integer=True)
        f = np.logspace(np.log10(a), np.log10(b), n).tolist()
    if any(y <= x for x, y in zip(f, f[1:])):
        raise ConfigError(f"{path}", "frequencies must be strictly ascending")
    return f


@dataclass
class AnalysisConfig:
    """Validated configuration. ``raw`` keeps the merged document for the report echo."""

    raw: dict
    freqs_hz: list[float] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def parallel(self) -> bool:
        return self.raw["parallel"]

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output"]["dir"])

    @classmethod
    def from_dict(cls, doc: dict, overrides: dict | None = None) -> "AnalysisConfig":
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "configuration must be a JSON object")
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        raw = _merge(DEFAULTS, doc)
        for k, v in (overrides or {}).items():
            if v is not None:
                raw[k] = v
        cfg = cls(raw)
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "AnalysisConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(doc, overrides)

    def _validate(self):
        r = self.raw
        self.freqs_hz = frequencies_hz(r["frequencies"])
        _num(r["probability"], "probability", lo=0.0, hi=1.0, open_lo=True, open_hi=True)
        if r["embeddings"] not in EMBEDDING_KINDS:
            raise ConfigError("embeddings", f"must be one of {EMBEDDING_KINDS}, got {r['embeddings']!r}")
        _num(r["band_angles"], "band_angles", lo=2, integer=True)
        _num(r["seed"], "seed", lo=0, integer=True)
        _num(r["mc_samples"], "mc_samples", lo=1, integer=True)
        if not isinstance(r["parallel"], bool):
            raise ConfigError("parallel", "expected true or false")
        if r["workers"] is not None:
            _num(r["workers"], "workers", lo=1, integer=True)
        if not isinstance(r["solver"], dict):
            raise ConfigError("solver", "expected an object")
        for k, v in r["solver"].items():
            if k not in SOLVER_KEYS:
                raise ConfigError(f"solver.{k}", "unknown solver option")
            _num(v, f"solver.{k}", lo=0.0, integer=(k == "max_newton"))
        W = _matrix(r["w_table"], "w_table", cols=2)
        if np.any(W[:, 0] <= 0) or np.any(np.diff(W[:, 0]) <= 0):
            raise ConfigError("w_table", "frequencies must be positive and strictly ascending")
        if not isinstance(r["output"], dict) or not isinstance(r["output"].get("dir"), str):
            raise ConfigError("output.dir", "expected a path string")
        self._validate_scenario()
        self._validate_ellipsoids()

    def _validate_scenario(self):
        s = self.raw["scenario"]
        if not isinstance(s, dict):
            raise ConfigError("scenario", "expected an object")
        kind = s.get("kind")
        if kind == "platoon":
            for key in s:
                if key not in ("kind", "n_mod", "dispersion", "controller", "seed"):
                    raise ConfigError(f"scenario.{key}", "unknown field")
            _num(s.get("n_mod", 5), "scenario.n_mod", lo=1, integer=True)
            _num(s.get("dispersion", 0.10), "scenario.dispersion", lo=0.0, hi=0.5)
            if "seed" in s:
                _num(s["seed"], "scenario.seed", lo=0, integer=True)
            if s.get("controller", "improved") not in ("initial", "improved"):
                raise ConfigError("scenario.controller", "must be 'initial' or 'improved'")
        elif kind == "explicit":
            for key in ("plants", "controllers", "A", "B"):
                if key not in s:
                    raise ConfigError(f"scenario.{key}", "missing")
            plants = _list(s["plants"], "scenario.plants")
            n = len(plants)
            for i, p in enumerate(plants):
                path = f"scenario.plants[{i}]"
                if not isinstance(p, dict):
                    raise ConfigError(path, "expected an object")
                for key in ("num0", "den0", "num_inc", "den_inc"):
                    if key not in p:
                        raise ConfigError(f"{path}.{key}", "missing")
                _coeffs(p["num0"], f"{path}.num0")
                _coeffs(p["den0"], f"{path}.den0")
                ni = _list(p["num_inc"], f"{path}.num_inc")
                di = _list(p["den_inc"], f"{path}.den_inc")
                if len(ni) != len(di):
                    raise ConfigError(path, "num_inc and den_inc differ in length")
                for j, c in enumerate(ni):
                    _coeffs(c, f"{path}.num_inc[{j}]")
                for j, c in enumerate(di):
                    _coeffs(c, f"{path}.den_inc[{j}]")
            ctrls = _list(s["controllers"], "scenario.controllers")
            if len(ctrls) != n:
                raise ConfigError("scenario.controllers", f"expected {n} entries, got {len(ctrls)}")
            for i, c in enumerate(ctrls):
                if not isinstance(c, dict) or "num" not in c or "den" not in c:
                    raise ConfigError(f"scenario.controllers[{i}]", "expected {num, den}")
                _coeffs(c["num"], f"scenario.controllers[{i}].num")
                _coeffs(c["den"], f"scenario.controllers[{i}].den")
            _matrix(s["A"], "scenario.A", n, n)
            _matrix(s["B"], "scenario.B", n)
        else:
            raise ConfigError("scenario.kind", f"must be 'platoon' or 'explicit', got {kind!r}")

    def _validate_ellipsoids(self):
        e = self.raw["ellipsoids"]
        if not isinstance(e, dict):
            raise ConfigError("ellipsoids", "expected an object")
        src = e.get("source")
        if "chi" in e:
            _num(e["chi"], "ellipsoids.chi", lo=0.0, open_lo=True)
        if src == "synthetic":
            _num(e.get("relative_std", 0.05), "ellipsoids.relative_std", lo=0.0, open_lo=True)
            if not isinstance(e.get("centered", False), bool):
                raise ConfigError("ellipsoids.centered", "expected true or false")
        elif src == "identification":
            _num(e.get("n_id", 1000), "ellipsoids.n_id", lo=10, integer=True)
            _num(e.get("ts", 0.01), "ellipsoids.ts", lo=0.0, open_lo=True)
            _num(e.get("excitation_variance", 10.0), "ellipsoids.excitation_variance", lo=0.0, open_lo=True)
            _num(e.get("noise_variance", 4.0), "ellipsoids.noise_variance", lo=0.0)
        elif src == "explicit":
            items = _list(e.get("list"), "ellipsoids.list")
            for i, it in enumerate(items):
                path = f"ellipsoids.list[{i}]"
                if not isinstance(it, dict):
                    raise ConfigError(path, "expected {theta_hat, P, chi}")
                th = _coeffs(it.get("theta_hat"), f"{path}.theta_hat")
                _matrix(it.get("P"), f"{path}.P", len(th), len(th))
                if "chi" in it:
                    _num(it["chi"], f"{path}.chi", lo=0.0, open_lo=True)
        else:
            raise ConfigError("ellipsoids.source", f"must be 'synthetic', 'identification' or 'explicit', got {src!r}")
        if self.raw["scenario"]["kind"] == "explicit" and src != "explicit":
            raise ConfigError("ellipsoids.source", "an explicit scenario needs explicit ellipsoids")
