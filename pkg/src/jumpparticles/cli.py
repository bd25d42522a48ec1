"""Command-line front end: one scenario per invocation.

Exit codes: 0 success, 2 usage or config error, 3 numeric or model failure
(manifest still written), 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .coefficients import validate_hypotheses
from .engine import InitialLaw, SimConfig, coarsened, run_simulation, uniform_partition
from .errors import ConfigError, JumpParticlesError
from .estimators import Box, kde_estimate, select_density_params, select_tv_params, smoothed_expectation
from .io import fmt, read_snapshot_csv, write_density_csv, write_snapshot_binary, write_snapshot_csv
from .levy import cbar_moment, tail_quantities, theta_lower_bound
from .metrics import THEOREM_TAGS, convergence_slope, validity_threshold, wasserstein1_report
from .models import build_coefficients, build_model

log = logging.getLogger("jumpparticles")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def library_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


class Run:
    """Output directory bookkeeping for one scenario."""

    def __init__(self, cfg: dict, out: Path):
        self.cfg = cfg
        self.out = out
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def write_json(self, name: str, obj) -> None:
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _models(cfg: dict):
    levy, coeffs = build_model(cfg["model"]["name"], cfg["model"]["params"])
    if cfg["coefficients"]["name"] is not None:
        coeffs = build_coefficients(cfg["coefficients"]["name"], cfg["coefficients"]["params"], levy.d)
    return levy, coeffs


def _init_law(cfg: dict, d: int) -> InitialLaw:
    init = cfg["simulation"]["init"]
    samples = None
    if init["kind"] == "samples":
        samples = read_snapshot_csv(init["file"])
    cov = None if init["cov"] is None else tuple(np.ravel(init["cov"]).tolist())
    return InitialLaw(init["kind"], tuple(np.ravel(init["mean"]).tolist()), cov, samples)


def _sim_config(cfg: dict, levy, coeffs, N=None, seed=None, partition=None, cells=None) -> SimConfig:
    sim = cfg["simulation"]
    T = float(sim["T"])
    return SimConfig(T=T, partition=uniform_partition(T, float(sim["dt"])) if partition is None else partition,
                     M=sim["M"], N=sim["N"] if N is None else N, seed=cfg["seed"] if seed is None else seed,
                     levy=levy, coeffs=coeffs, init=_init_law(cfg, levy.d), cells=cells,
                     threads=cfg["threads"])


def _grid(cfg: dict, d: int) -> np.ndarray:
    g = cfg["estimator"]["grid"]
    axis = np.linspace(float(g["lo"]), float(g["hi"]), g["points"])
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _moments(x: np.ndarray) -> dict:
    return {"mean": x.mean(axis=0).tolist(), "variance": x.var(axis=0).tolist()}


# -- scenarios -----------------------------------------------------------

def scenario_simulate(run: Run) -> None:
    cfg = run.cfg
    levy, coeffs = _models(cfg)
    sc = _sim_config(cfg, levy, coeffs)
    record = cfg["simulation"]["record"] or [sc.T]
    result = run_simulation(sc, record)
    fmt_choice = cfg["simulation"]["snapshot_format"]
    summary = {"total_events": result.total_events, "mesh": sc.mesh, "snapshots": []}
    for j, t in enumerate(sorted(result.snapshots)):
        x = result.snapshots[t]
        entry = {"time": t, **_moments(x), "files": []}
        if fmt_choice in ("csv", "both"):
            write_snapshot_csv(run.path(f"snapshot_{j:03d}.csv"), x)
            entry["files"].append(f"snapshot_{j:03d}.csv")
        if fmt_choice in ("binary", "both"):
            write_snapshot_binary(run.path(f"snapshot_{j:03d}.bin"), x, t)
            entry["files"].append(f"snapshot_{j:03d}.bin")
        summary["snapshots"].append(entry)
    run.write_json("summary.json", summary)


def _selected(cfg: dict, levy, coeffs, tv: bool):
    sim, est = cfg["simulation"], cfg["estimator"]
    tq = tail_quantities(levy, coeffs, sim["M"], float(sim["T"]))
    abs_P = float(np.max(np.diff(uniform_partition(float(sim["T"]), float(sim["dt"])))))
    romberg = est["theorem"].endswith("ii")
    if tv:
        params = select_tv_params(abs_P, tq.eps_M, levy.d, float(est["epsilon"]), romberg)
    else:
        params = select_density_params(abs_P, tq.eps_M, levy.d, romberg)
    N = params.n_required if est["N"] == "auto" else est["N"]
    info = {"theorem": params.theorem, "base": params.base, "delta": params.delta,
            "n_required": params.n_required, "N_used": N, "abs_P": abs_P, "eps_M": tq.eps_M,
            "a_M_T": tq.a_M_T, "M": sim["M"], "T": float(sim["T"]), "v_target": params.v_target}
    if tv:
        info["epsilon"] = params.epsilon
    return params, N, info


def _final_positions(cfg, levy, coeffs, N, repeat):
    seed = (cfg["seed"] + repeat) % 2 ** 64
    return run_simulation(_sim_config(cfg, levy, coeffs, N=N, seed=seed)).final.positions


def scenario_density(run: Run) -> None:
    cfg = run.cfg
    est = cfg["estimator"]
    if est["theorem"] not in ("2.3i", "2.3ii"):
        raise ConfigError("the density scenario takes estimator.theorem 2.3i or 2.3ii")
    levy, coeffs = _models(cfg)
    params, N, info = _selected(cfg, levy, coeffs, tv=False)
    grid = _grid(cfg, levy.d)
    runs = [kde_estimate(_final_positions(cfg, levy, coeffs, N, r), grid, params.delta, params.romberg, params)
            for r in range(est["repeats"])]
    stderr = None
    estimate = runs[0]
    if len(runs) > 1:
        stack = np.stack([e.values for e in runs])
        estimate.values = stack.mean(axis=0)
        estimate.has_negative = bool(np.any(estimate.values < 0))
        stderr = stack.std(axis=0, ddof=1) / np.sqrt(len(runs))
    write_density_csv(run.path("density.csv"), estimate, stderr)
    info["has_negative"] = estimate.has_negative
    info["repeats"] = est["repeats"]
    run.write_json("estimator.json", info)


def scenario_tv_estimate(run: Run) -> None:
    cfg = run.cfg
    est = cfg["estimator"]
    if est["theorem"] not in ("2.4i", "2.4ii"):
        raise ConfigError("the tv-estimate scenario takes estimator.theorem 2.4i or 2.4ii")
    levy, coeffs = _models(cfg)
    params, N, info = _selected(cfg, levy, coeffs, tv=True)
    d = levy.d
    thresholds = np.linspace(float(est["grid"]["lo"]), float(est["grid"]["hi"]), est["grid"]["points"])
    boxes = [Box((-np.inf,) * d, (q,) * d) for q in thresholds]
    values = np.zeros((est["repeats"], len(boxes)))
    for r in range(est["repeats"]):
        x = _final_positions(cfg, levy, coeffs, N, r)
        values[r] = [smoothed_expectation(x, b, params.delta, params.romberg) for b in boxes]
    method = "romberg" if params.romberg else "plain"
    with open(run.path("tv_estimate.csv"), "w") as fh:
        fh.write("upper,value,method,delta,N" + (",stderr" if est["repeats"] > 1 else "") + "\n")
        for j, q in enumerate(thresholds):
            row = [fmt(q), fmt(values[:, j].mean()), method, fmt(params.delta), str(N)]
            if est["repeats"] > 1:
                row.append(fmt(values[:, j].std(ddof=1) / np.sqrt(est["repeats"])))
            fh.write(",".join(row) + "\n")
    info["functionals"] = "smoothed indicators of (-inf, q]^d"
    info["repeats"] = est["repeats"]
    run.write_json("estimator.json", info)


def nested_ladder(T: float, ladder) -> tuple[np.ndarray, list[np.ndarray]]:
    """Finest uniform grid plus coarsenings of it for each step in ``ladder``."""
    finest = min(ladder)
    cells = uniform_partition(T, finest)
    grids = []
    for dt in ladder:
        ratio = dt / finest
        factor = int(round(ratio))
        if abs(ratio - factor) > 1e-9:
            raise ConfigError(f"ladder step {dt} is not a multiple of the finest step {finest}")
        grids.append(coarsened(cells, factor))
    return cells, grids


def w1_self_convergence(cfg: dict, levy, coeffs, ladder, seeds) -> tuple:
    """Per-rung W1 between successive ladder levels, averaged over seeds;
    every level of one seed shares the same Poisson events."""
    T = float(cfg["simulation"]["T"])
    cells, grids = nested_ladder(T, ladder)
    errors = np.zeros((len(seeds), len(ladder) - 1))
    for s, seed in enumerate(seeds):
        finals = [run_simulation(_sim_config(cfg, levy, coeffs, seed=seed, partition=g, cells=cells)).final.positions
                  for g in grids]
        for j in range(len(ladder) - 1):
            errors[s, j] = wasserstein1_report(finals[j], finals[j + 1])["value"]
    return errors, grids


def scenario_convergence(run: Run) -> None:
    cfg = run.cfg
    conv = cfg["convergence"]
    levy, coeffs = _models(cfg)
    ladder = sorted((float(v) for v in conv["ladder"]), reverse=True)
    seeds = [(cfg["seed"] + s) % 2 ** 64 for s in range(conv["seeds"])]
    errors, grids = w1_self_convergence(cfg, levy, coeffs, ladder, seeds)
    mean_err = errors.mean(axis=0)
    meshes = [float(np.max(np.diff(g))) for g in grids]
    report = convergence_slope(list(zip(meshes[:-1], mean_err)), target=1.0,
                               minimum=conv["minimum_slope"], label="W1 self-convergence in |P|")
    run.path("convergence.json").write_text(report.to_json() + "\n")
    with open(run.path("w1_ladder.csv"), "w") as fh:
        fh.write("abs_P,w1_mean,w1_stderr\n")
        se = errors.std(axis=0, ddof=1) / np.sqrt(len(seeds)) if len(seeds) > 1 else np.zeros_like(mean_err)
        for p, e, s in zip(meshes, mean_err, se):
            fh.write(f"{fmt(p)},{fmt(e)},{fmt(s)}\n")


def scenario_validate(run: Run) -> None:
    cfg = run.cfg
    val = cfg["validation"]
    levy, coeffs = _models(cfg)
    report = validate_hypotheses(coeffs, levy, sample_budget=val["sample_budget"], seed=cfg["seed"]).to_dict()
    try:
        moment = cbar_moment(levy, coeffs, float(val["moment_p"]))
        report["cbar_moment"] = {"p": float(val["moment_p"]), "value": moment.value,
                                 "tail_remainder": moment.tail_remainder, "finite": True}
    except JumpParticlesError as exc:
        report["cbar_moment"] = {"p": float(val["moment_p"]), "finite": False, "reason": str(exc)}
        report["passed"] = False
    theta = theta_lower_bound(levy, coeffs, growth_factor=float(val["theta_growth"]))
    report["theta"] = {"value": "inf" if theta.infinite else theta.value, "infinite": theta.infinite,
                       "heuristic": theta.heuristic, "grid": list(theta.grid), "ratios": list(theta.ratios)}
    thresholds = {}
    eps = float(cfg["estimator"]["epsilon"])
    for tag in THEOREM_TAGS:
        try:
            thresholds[tag] = validity_threshold(tag, levy.d, theta.value, epsilon=eps, l=1)
        except JumpParticlesError as exc:
            thresholds[tag] = str(exc)
    report["validity_thresholds"] = {"epsilon": eps, "l": 1, "t_min": thresholds}
    run.write_json("validation.json", report)


def scenario_tail(run: Run) -> None:
    cfg = run.cfg
    levy, coeffs = _models(cfg)
    sim = cfg["simulation"]
    tq = tail_quantities(levy, coeffs, sim["M"], float(sim["T"]))
    run.write_json("tail_quantities.json", {"M": tq.M, "T": tq.T, "a_M_T": tq.a_M_T, "eps_M": tq.eps_M,
                                            "ball_mass": levy.ball_mass(sim["M"])})


SCENARIO_RUNNERS = {
    "simulate": scenario_simulate,
    "density": scenario_density,
    "tv-estimate": scenario_tv_estimate,
    "convergence-study": scenario_convergence,
    "validate-model": scenario_validate,
    "tail-quantities": scenario_tail,
}


def run_scenario(cfg: dict, out: Path | str | None = None) -> tuple[int, list[str]]:
    """Run a validated config; returns (exit code, files written relative to out)."""
    out = Path(out if out is not None else cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc.strerror)
        return EXIT_IO, []
    run = Run(cfg, out)
    status, error = EXIT_OK, None
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            SCENARIO_RUNNERS[cfg["scenario"]](run)
    except ConfigError as exc:
        status, error = EXIT_USAGE, str(exc)
    except (JumpParticlesError, FloatingPointError, np.linalg.LinAlgError) as exc:
        status, error = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        status, error = EXIT_IO, str(exc)
    manifest = {
        "manifest_version": 1,
        "library": "jumpparticles",
        "version": library_version(),
        "scenario": cfg["scenario"],
        "seed": cfg["seed"],
        "threads": cfg["threads"],
        "wall_time_s": time.perf_counter() - t0,
        "status": status,
        "error": error,
        "files": list(run.files),
        "config": cfg,
    }
    try:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        log.error("cannot write manifest: %s", exc.strerror)
        return EXIT_IO, run.files
    if error:
        log.error("%s", error)
    return status, run.files + ["manifest.json"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jumpparticles", description="Particle simulation of jump McKean-Vlasov equations.")
    p.add_argument("--config", required=True, help="YAML/JSON config or a previous run's manifest.json")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, help="worker cap; never changes results")
    p.add_argument("--out", help="output directory (overrides config)")
    p.add_argument("--scenario", help="scenario name (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        log.error("cannot read config %s: %s", args.config, exc.strerror)
        return EXIT_USAGE
    try:
        tree = cfgmod.load_tree(text, args.config)
        if isinstance(tree, dict):
            for key in ("seed", "threads", "scenario", "out"):
                value = getattr(args, key)
                if value is not None:
                    tree[key] = value
        cfg = cfgmod.resolve(tree, args.config)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    status, files = run_scenario(cfg)
    if status == EXIT_OK:
        print(f"{cfg['scenario']}: wrote {len(files)} file(s) to {cfg['out']}")
    return status


if __name__ == "__main__":
    sys.exit(main())
