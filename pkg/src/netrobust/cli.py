"""Command-line entry point: configuration in, report files and exit status out.

Exit status is 0 when every frequency meets the bound, 2 when some
frequency exceeds it, 1 on configuration or execution errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import __version__, sdp
from .config import AnalysisConfig, ConfigError
from .global_step import EmbeddingConfig, Network, frequency_sweep
from .lti import RationalTransfer, build_interconnection, global_gain
from .oracle import complexity_estimate, worst_case_gain_sampled
from .report import ERROR, FAIL, PASS, AnalysisReport, FrequencyReport, db, emit_report, finite_or_none
from .scenario import build_platoon, simulate_and_identify, synthetic_identification, w_bound_db
from .uncertainty import AffineRationalPlant, Ellipsoid, chi2_quantile, factorize_closed_loop

log = logging.getLogger("netrobust")

EXECUTION_KEYS = ("parallel", "workers", "output")


def build_network(cfg: AnalysisConfig):
    """Network and, for the built-in platoon, the scenario object."""
    s = cfg.raw["scenario"]
    if s["kind"] == "platoon":
        sc = build_platoon(s.get("n_mod", 5), seed=s.get("seed", cfg.seed),
                           dispersion=s.get("dispersion", 0.10),
                           controller_name=s.get("controller", "improved"))
        return sc.network(), sc
    plants = [AffineRationalPlant(p["num0"], p["den0"], tuple(p["num_inc"]), tuple(p["den_inc"]))
              for p in s["plants"]]
    ctrls = [RationalTransfer.from_coeffs(c["num"], c["den"]) for c in s["controllers"]]
    M = build_interconnection(np.array(s["A"], dtype=float), np.array(s["B"], dtype=float))
    return Network(plants, ctrls, M), None


def build_ellipsoids(cfg: AnalysisConfig, scenario) -> list[Ellipsoid]:
    e = cfg.raw["ellipsoids"]
    prob = cfg.raw["probability"]
    if e["source"] == "synthetic":
        ells = synthetic_identification(scenario, e.get("relative_std", 0.05), prob, cfg.seed,
                                        centered=e.get("centered", False))
    elif e["source"] == "identification":
        ells = simulate_and_identify(scenario, e.get("n_id", 1000), e.get("ts", 0.01),
                                     e.get("excitation_variance", 10.0), e.get("noise_variance", 4.0),
                                     seed=cfg.seed, probability=prob).ellipsoids
    else:
        ells = []
        for it in e["list"]:
            th = np.asarray(it["theta_hat"], dtype=float)
            chi = it.get("chi", chi2_quantile(prob, th.size))
            ells.append(Ellipsoid(th, np.asarray(it["P"], dtype=float), chi))
    if "chi" in e:
        ells = [Ellipsoid(x.theta_hat, x.P, e["chi"]) for x in ells]
    return ells


def _nominal_gain(network: Network, ellipsoids, omega: float) -> float | None:
    try:
        T = []
        for plant, K, ell in zip(network.plants, network.controllers, ellipsoids):
            f = factorize_closed_loop(plant, K, omega)
            T.append((f.e + f.ZN @ ell.theta_hat) / (1.0 + f.ZD @ ell.theta_hat))
        return global_gain(T, network.interconnection, omega)
    except (ArithmeticError, np.linalg.LinAlgError):
        return None


def run_pipeline(cfg: AnalysisConfig) -> AnalysisReport:
    """Scenario, ellipsoids, frequency sweep, sampled lower bounds, report."""
    t0 = time.perf_counter()
    network, scenario = build_network(cfg)
    ellipsoids = build_ellipsoids(cfg, scenario)
    if len(ellipsoids) != network.n_mod:
        raise ConfigError("ellipsoids.list", f"expected {network.n_mod} ellipsoids, got {len(ellipsoids)}")
    t_setup = time.perf_counter()
    emb = EmbeddingConfig(cfg.raw["embeddings"], cfg.raw["band_angles"])
    omegas = [2.0 * np.pi * f for f in cfg.freqs_hz]
    sweep = frequency_sweep(network, ellipsoids, omegas, emb, parallel=cfg.parallel,
                            workers=cfg.raw["workers"], options=sdp.SolverOptions(**cfg.raw["solver"]))
    t_sweep = time.perf_counter()

    records = []
    for f_hz, rec in zip(cfg.freqs_hz, sweep.records):
        w = rec.point.omega
        mc = worst_case_gain_sampled(network, ellipsoids, w, cfg.raw["mc_samples"], cfg.seed)
        cert = rec.certificate
        ub = finite_or_none(rec.gamma_ub)
        lb = finite_or_none(mc.gamma_lb)
        w_db = w_bound_db(cfg.raw["w_table"], f_hz)
        error = rec.error
        if ub is not None and lb is not None and ub < lb:
            error = f"soundness violation: upper bound {ub} below sampled {lb}"
            log.error("%.6g Hz: %s", f_hz, error)
        status = ERROR if error or ub is None else (PASS if db(ub) <= w_db else FAIL)
        records.append(FrequencyReport(
            freq_hz=f_hz,
            omega=w,
            gamma_ub=ub,
            gamma_lb=lb,
            nominal=finite_or_none(_nominal_gain(network, ellipsoids, w)),
            w_db=w_db,
            passed=status == PASS,
            status=status,
            error=error,
            mc_evaluated=mc.evaluated,
            mc_skipped=mc.skipped,
            multipliers=cert.multipliers.tolist() if cert is not None else [],
            embeddings=[[e.to_dict() for e in r.embeddings] for r in rec.local],
            solve_ms=1e3 * (sum(r.solve_time for r in rec.local) + (cert.solve_time if cert else 0.0)),
        ))
    t_end = time.perf_counter()

    statuses = {r.status for r in records}
    status = ERROR if ERROR in statuses else (FAIL if FAIL in statuses else PASS)
    n_theta = max(p.n_theta for p in network.plants)
    complexity = [vars(complexity_estimate(network.n_mod, n_theta, emb.n_d, m))
                  for m in ("direct", "hierarchical-serial", "hierarchical-parallel")]
    timings = {
        "parallel": sweep.parallel,
        "workers": sweep.workers,
        "setup_s": t_setup - t0,
        "local_wall_s": sweep.local_wall,
        "local_cpu_s": sweep.local_cpu,
        "global_wall_s": sweep.global_wall,
        "oracle_s": t_end - t_sweep,
        "total_s": t_end - t0,
    }
    # execution settings stay out of the echo so reports compare across them
    echo = {k: v for k, v in cfg.raw.items() if k not in EXECUTION_KEYS}
    return AnalysisReport(records, status, complexity, echo, __version__, timings)


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netrobust",
                                description="Certified worst-case gain of an uncertain network, frequency by frequency.")
    p.add_argument("--config", required=True, help="JSON configuration file")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--parallel", dest="parallel", action="store_true", default=None,
                      help="run the sweep in worker processes")
    mode.add_argument("--serial", dest="parallel", action="store_false", help="run the sweep in-process")
    p.add_argument("--seed", type=int, help="override the configuration seed")
    p.add_argument("--emit", metavar="DIR", help="output directory (overrides output.dir)")
    p.add_argument("--embeddings", choices=("disc", "disc+band"))
    p.add_argument("--band-angles", type=int, dest="band_angles")
    p.add_argument("--mc-samples", type=int, dest="mc_samples")
    p.add_argument("--format", default="tsv,json", help="comma-separated: tsv, csv, json")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in ("parallel", "seed", "embeddings", "band_angles", "mc_samples")}
    try:
        cfg = AnalysisConfig.load(args.config, overrides)
        if args.emit:
            cfg.raw["output"]["dir"] = args.emit
        report = run_pipeline(cfg)
        paths = emit_report(report, cfg.output_dir, [f.strip() for f in args.format.split(",") if f.strip()])
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any failure maps to exit status 1
        log.debug("pipeline failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for r in report.records:
        ub = "nan" if r.gamma_ub_db is None else f"{r.gamma_ub_db:8.3f}"
        lb = "nan" if r.gamma_lb_db is None else f"{r.gamma_lb_db:8.3f}"
        print(f"{r.freq_hz:10.5g} Hz  ub {ub} dB  lb {lb} dB  W {r.w_db:8.3f} dB  {r.status}")
    for p in paths:
        print(f"wrote {p}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
