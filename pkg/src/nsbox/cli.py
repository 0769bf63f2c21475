"""Command-line front end: simulate | certify | stability | report.

Configs are strict JSON documents (unknown keys rejected) with environment
overrides of the form NSBOX_<SECTION>_<KEY>=<json-or-string>.  Exit codes:
0 success, 2 config error, 3 data-integrity error, 4 solver abort.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from nsbox import io as nsio
from nsbox.certificate import (
    a_chain,
    abar_chain,
    b_chain,
    certificate_report,
    smallness_check,
)
from nsbox.constants import interpolation_constants, poincare_constants
from nsbox.experiments import (
    PerturbationSpec,
    Scenario,
    forcing_families,
    run_stability_experiment,
    single_mode_profile,
)
from nsbox.forcing import (
    CompositeForcing,
    ConstantMeanForcing,
    DecayingModeForcing,
    OscillatingMeanForcing,
    PeriodicExtensionForcing,
    ZeroForcing,
)
from nsbox.solver import (
    CFLViolation,
    FlowState,
    SolverAbort,
    SolverConfig,
    evolve_base_2d,
    evolve_full_3d,
    taylor_green_state,
)
from nsbox.spectral import PeriodicGrid, SpectralField, lift_2d_to_3d, random_field

ENV_PREFIX = "NSBOX"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRITY = 3
EXIT_SOLVER = 4


class ConfigError(ValueError):
    pass


def _positive(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0


def _nonneg(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x >= 0


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _any(x):
    return True


_GRID = {"L": _positive, "N": _is_int, "dim": _is_int}
_SOLVER = {
    "nu": _positive, "dt": _positive, "t_end": _positive,
    "scheme": lambda v: v in ("imex-cnab2", "rk3-imex"),
    "cfl_max": _positive, "dealias": lambda v: isinstance(v, bool),
}
_INITIAL = {
    "kind": lambda v: v in ("zero", "taylor_green", "random", "snapshot", "single_mode"),
    "amplitude": _nonneg, "seed": _is_int, "band": _any, "k0": _positive,
    "path": lambda v: isinstance(v, str), "mean": _any, "mode": _any,
}
_FORCING = {
    "family": lambda v: v in (
        "zero", "example1", "example2", "decaying_mode", "constant_mean", "oscillating_mean",
    ),
    "constant": _any, "amplitude": _nonneg, "rate": _positive, "mode": _any,
    "omega": _positive, "window": _positive,
    "normalize": lambda v: v in ("l2", "h1"),
}
_OUTPUT = {"dir": lambda v: isinstance(v, str), "window_T": _positive, "sample_times": _any,
           "svg": lambda v: isinstance(v, bool)}

SCHEMAS = {
    "simulate": {
        "system": lambda v: v in ("base2d", "full3d", "pair"),
        "grid": _GRID, "solver": _SOLVER, "initial": _INITIAL, "forcing": _FORCING,
        "perturbation": _INITIAL, "g_forcing": _FORCING, "output": _OUTPUT,
    },
    "certify": {
        "certificate": {
            "nu": _positive, "L": _positive, "T": _positive,
            "constants_mode": lambda v: v in ("analytic_conservative", "empirical_calibrated"),
            "k_max": _is_int, "calibration_seed": _is_int, "calibration_fields": _is_int,
            "gamma": _nonneg, "epsilon": _positive, "N": _is_int,
        },
        "forcing": _FORCING,
        "initial": _INITIAL,
        "initial_norms": {"l2_sq": _nonneg, "grad_sq": _nonneg, "grad2_sq": _nonneg,
                          "h1_sq": _nonneg},
        "perturbation_norms": {"l2_sq": _nonneg},
        "g_forcing": _FORCING,
        "output": _OUTPUT,
    },
    "stability": {
        "scenario": {
            "L": _positive, "N": _is_int, "nu": _positive, "T": _positive,
            "windows": _is_int, "dt": _positive,
            "scheme": lambda v: v in ("imex-cnab2", "rk3-imex"), "cfl_max": _positive,
            "constants_mode": lambda v: v in ("analytic_conservative", "empirical_calibrated"),
            "calibration_seed": _is_int, "calibration_fields": _is_int, "k_max": _is_int,
            "base_amplitude": _nonneg, "force_constant": _any, "force_amplitude": _nonneg,
            "force_rate": _positive, "force_mode": _any,
            "force_family": lambda v: v in ("example1", "example2", "zero"),
            "epsilon": _positive, "g_amplitude": _nonneg, "g_rate": _positive, "g_mode": _any,
            "resume": lambda v: isinstance(v, str),
        },
        "perturbation": {"gamma": _positive, "k0": _positive, "band": _any,
                         "seed": _is_int, "mean": _any},
        "output": _OUTPUT,
        "scenarios": _any,  # list of scenario dicts for sweeps
    },
    "report": {"path": lambda v: isinstance(v, str)},
}


def validate_config(cfg: dict, schema: dict, path="") -> None:
    if not isinstance(cfg, dict):
        raise ConfigError(f"section {path or '<root>'} must be an object")
    for key, val in cfg.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown key {where!r}")
        spec = schema[key]
        if isinstance(spec, dict):
            validate_config(val, spec, where)
        elif not spec(val):
            raise ConfigError(f"invalid value for {where!r}: {val!r}")


def apply_env_overrides(cfg: dict, environ=None) -> dict:
    """NSBOX_SECTION_KEY=value overrides config[section][key]."""
    environ = os.environ if environ is None else environ
    out = json.loads(json.dumps(cfg))
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX + "_"):
            continue
        parts = name[len(ENV_PREFIX) + 1:].lower().split("_", 1)
        if len(parts) != 2:
            continue
        section, key = parts
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out.setdefault(section, {})
        if isinstance(out[section], dict):
            out[section][key] = value
    return out


def load_config(path: str, command: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    cfg = apply_env_overrides(cfg)
    validate_config(cfg, SCHEMAS[command])
    return cfg


# -- builders ------------------------------------------------------------------


def _build_grid(cfg, default_dim):
    g = cfg.get("grid", {})
    return PeriodicGrid(L=g.get("L", 2 * np.pi), dim=g.get("dim", default_dim), N=g.get("N", 32))


def _build_initial(grid, icfg, seed_override=None, role="base2d"):
    kind = icfg.get("kind", "zero")
    comp = 2 if grid.dim == 2 else 3
    mean = np.asarray(icfg.get("mean", [0.0] * comp), dtype=float)
    if kind == "zero":
        return FlowState(0.0, SpectralField.zeros(grid, comp), mean, role)
    if kind == "taylor_green":
        st = taylor_green_state(grid if grid.dim == 2 else PeriodicGrid(grid.L, 2, grid.N),
                                amplitude=icfg.get("amplitude", 1.0))
        if grid.dim == 3:
            return FlowState(0.0, lift_2d_to_3d(st.field, grid), np.concatenate([st.mean, [0.0]]),
                             role)
        return FlowState(0.0, st.field, mean, role)
    if kind == "single_mode":
        f = single_mode_profile(grid, icfg.get("mode", (1, 0)),
                                amplitude=icfg.get("amplitude", 1.0))
        return FlowState(0.0, f, mean, role)
    if kind == "random":
        seed = seed_override if seed_override is not None else icfg.get("seed", 0)
        rng = np.random.default_rng(seed)
        band = tuple(icfg.get("band", (1, grid.N // 4)))
        f = random_field(grid, comp, rng, band=band, k0=icfg.get("k0"), solenoidal=True)
        return FlowState(0.0, f * icfg.get("amplitude", 1.0), mean, role)
    if kind == "snapshot":
        return nsio.read_snapshot(icfg["path"])
    raise ConfigError(f"unsupported initial kind {kind!r}")


def _build_forcing(grid, fcfg, window_T=None):
    family = fcfg.get("family", "zero")
    comp = 2 if grid.dim == 2 else 3
    if family == "zero":
        return ZeroForcing(grid, comp)
    if family == "constant_mean":
        return ConstantMeanForcing(grid, fcfg.get("constant", [0.0] * comp))
    if family == "oscillating_mean":
        return OscillatingMeanForcing(grid, fcfg.get("constant", [1.0] + [0.0] * (comp - 1)),
                                      omega=fcfg.get("omega", 1.0))
    profile = single_mode_profile(grid, fcfg.get("mode", (1, 0)),
                                  normalize=fcfg.get("normalize", "l2"))
    h = DecayingModeForcing(profile, rate=fcfg.get("rate", 1.0),
                            amplitude=fcfg.get("amplitude", 1.0))
    if family == "decaying_mode":
        return h
    if family == "example1":
        return CompositeForcing([ConstantMeanForcing(grid, fcfg.get("constant", [1.0, 0.0])), h])
    if family == "example2":
        return PeriodicExtensionForcing(h, fcfg.get("window", window_T or 1.0))
    raise ConfigError(f"unsupported forcing family {family!r}")


# -- commands ------------------------------------------------------------------


def cmd_simulate(cfg: dict, outdir: str, seed, svg: bool) -> int:
    system = cfg.get("system", "base2d")
    dim = 2 if system == "base2d" else 3
    grid = _build_grid(cfg, dim)
    scf = cfg.get("solver", {})
    solver_cfg = SolverConfig(
        nu=scf.get("nu", 1.0), dt=scf.get("dt", 1e-3), t_end=scf.get("t_end", 1.0),
        scheme=scf.get("scheme", "imex-cnab2"), dealias=scf.get("dealias", True),
        cfl_max=scf.get("cfl_max", 0.5),
    )
    out = cfg.get("output", {})
    state0 = _build_initial(grid, cfg.get("initial", {}), seed,
                            "base2d" if dim == 2 else "full3d")
    forcing = _build_forcing(grid, cfg.get("forcing", {}), out.get("window_T"))
    if system == "pair":
        from nsbox.solver import evolve_pair

        grid2 = PeriodicGrid(grid.L, 2, grid.N)
        base0 = _build_initial(grid2, cfg.get("initial", {}), seed, "base2d")
        u0 = _build_initial(grid, cfg.get("perturbation", {"kind": "zero"}), seed, "perturbation")
        g = _build_forcing(grid, cfg.get("g_forcing", {}), out.get("window_T"))
        fs2 = _build_forcing(grid2, cfg.get("forcing", {}), out.get("window_T"))
        traj = evolve_pair(base0, fs2, u0, g, solver_cfg, window_T=out.get("window_T"),
                           sample_times=out.get("sample_times"))
        nsio.write_trajectory(os.path.join(outdir, "base"), traj.base, prefix="base")
    else:
        runner = evolve_base_2d if system == "base2d" else evolve_full_3d
        traj = runner(state0, forcing, solver_cfg, window_T=out.get("window_T"),
                      sample_times=out.get("sample_times"))
    nsio.write_trajectory(outdir, traj)
    series = {k: v for k, v in traj.series.items() if np.asarray(v).ndim == 1}
    nsio.write_series_csv(os.path.join(outdir, "series.csv"), series)
    if svg:
        nsio.write_svg_lines(os.path.join(outdir, "series.svg"), traj.series["t"],
                             {"l2_sq": traj.series["l2_sq"]}, title=f"{system} energy")
    print(f"simulate: wrote {outdir} (steps={len(traj.series['t']) - 1})")
    return EXIT_OK


def cmd_certify(cfg: dict, outdir: str, seed, svg: bool) -> int:
    ccfg = cfg.get("certificate", {})
    nu, L, T = ccfg.get("nu", 1.0), ccfg.get("L", 2 * np.pi), ccfg.get("T", 4.0)
    mode = ccfg.get("constants_mode", "analytic_conservative")
    pc = poincare_constants(nu, L)
    ic = interpolation_constants(
        nu, L, mode, seed=ccfg.get("calibration_seed", 0),
        n_fields=ccfg.get("calibration_fields", 1000),
    )
    grid2 = PeriodicGrid(L=L, dim=2, N=ccfg.get("N", 32))
    forcing = _build_forcing(grid2, cfg.get("forcing", {}), T)
    if "initial_norms" in cfg:
        norms = dict(cfg["initial_norms"])
        h1_sq = norms.get("h1_sq", norms["l2_sq"] + norms["grad_sq"])
    else:
        state0 = _build_initial(grid2, cfg.get("initial", {}), seed)
        norms = {
            "l2_sq": state0.field.sobolev_norm_sq(0),
            "grad_sq": state0.field.grad_norm_sq(),
            "grad2_sq": state0.field.sobolev_norm_sq(2) - state0.field.sobolev_norm_sq(1),
        }
        h1_sq = norms["l2_sq"] + norms["grad_sq"]
    k_max = ccfg.get("k_max", 64)
    ab = abar_chain(forcing, h1_sq, T, pc, ic, k_max=k_max)
    ach = a_chain(forcing, norms, T, pc, ic, k_max=k_max)
    bch = None
    sm = None
    gamma = ccfg.get("gamma", 0.0)
    if "perturbation_norms" in cfg or gamma:
        g3 = PeriodicGrid(L=L, dim=3, N=ccfg.get("N", 32))
        g = _build_forcing(g3, cfg.get("g_forcing", {}), T)
        u0n = cfg.get("perturbation_norms", {"l2_sq": 0.0})
        bch = b_chain(g, u0n, ach, pc, ic, T, gamma=gamma,
                      epsilon=ccfg.get("epsilon", 0.5), k_max=k_max)
        sm = smallness_check(gamma, ccfg.get("epsilon", 0.5), pc, ic, bch,
                             g_schedule=g, u0_norms=u0n)
    # example-1 style bound on the all-time fluctuation integral, when closed form
    extras = {}
    h_part = None
    if isinstance(forcing, CompositeForcing):
        decaying = [p for p in forcing.parts if isinstance(p, DecayingModeForcing)]
        h_part = decaying[0] if decaying else None
    elif isinstance(forcing, DecayingModeForcing):
        h_part = forcing
    if h_part is not None:
        extras["abar1_sq_upper"] = h_part.infinite_bar_sq_integral("h1")
    doc = certificate_report(nu=nu, L=L, T=T, constants=ic, abar=ab, achain=ach,
                             bchain=bch, smallness=sm, inputs={"config": cfg, **extras})
    doc["timestamp"] = time.time()
    doc["content_hash"] = nsio.content_hash(doc)
    nsio.write_report_json(os.path.join(outdir, "certificate.json"), doc)
    print(f"certify: member={ab.member} abar3_sq={ab.abar3_sq:.6g} t_star={ab.t_star:.6g}")
    return EXIT_OK


def _scenario_from_config(cfg: dict) -> Scenario:
    s = dict(cfg.get("scenario", {}))
    resume = s.pop("resume", None)
    p = cfg.get("perturbation", {})
    pert = PerturbationSpec(
        gamma=p.get("gamma", 1e-4), k0=p.get("k0", 5.0),
        band=tuple(p.get("band", (1, 8))), seed=p.get("seed", 7),
        mean=tuple(p.get("mean", (0.0, 0.0, 0.0))),
    )
    for tup in ("force_constant", "force_mode", "g_mode"):
        if tup in s:
            s[tup] = tuple(s[tup])
    scn = Scenario(perturbation=pert, **s)
    scn._resume = resume
    return scn


def _run_one_stability(scn: Scenario, outdir: str, svg: bool) -> dict:
    u0 = None
    if getattr(scn, "_resume", None):
        u0 = nsio.read_snapshot(scn._resume)  # integrity-checked; exit 3 on corruption
        u0.role = "perturbation"
    res = run_stability_experiment(scn, u0_override=u0)
    doc = {
        "schema": "nsbox-stability/1",
        "scenario": res.certificate.get("inputs", {}),
        "certificate": res.certificate,
        "barrier": res.barrier.verdicts() if res.barrier else None,
        "checks": res.checks,
        "windows": [w.as_dict() for w in res.windows],
        "uniformity": res.uniformity,
        "aborted": res.aborted,
        "abort_diagnostic": res.abort_diagnostic,
    }
    doc["content_hash"] = nsio.content_hash(doc)
    doc["timestamp"] = time.time()
    nsio.write_report_json(os.path.join(outdir, "report.json"), doc)
    if res.pert is not None:
        t = res.pert.series["t"]
        series = {
            "t": t,
            "X2": res.barrier.x2,
            "Y2": res.barrier.y2,
            "G2": res.barrier.g2,
            "u_l2_sq": res.pert.series["l2_sq"],
            "vs_h1_sq": res.base.series["h1_sq"],
            "vs_h2_sq": res.base.series["h2_sq"],
            "vs_gradv_l3": res.base.series["gradv_l3"],
        }
        nsio.write_series_csv(os.path.join(outdir, "series.csv"), series)
        nsio.write_windows_csv(os.path.join(outdir, "windows.csv"), res.windows)
        if svg:
            nsio.write_svg_lines(
                os.path.join(outdir, "x2_vs_gamma.svg"), t,
                {"X2": res.barrier.x2, "gamma": np.full_like(t, res.barrier.gamma)},
                title="perturbation size vs smallness level",
            )
            sups = {"sup_u_h1": [w.sup_u_h1 for w in res.windows]}
            nsio.write_svg_lines(
                os.path.join(outdir, "window_sups.svg"),
                np.arange(len(res.windows)), sups, title="window sups vs k",
            )
    return doc


def cmd_stability(cfg: dict, outdir: str, seed, svg: bool, jobs: int) -> int:
    if "scenarios" in cfg:
        scns = []
        for i, sub in enumerate(cfg["scenarios"]):
            validate_config(sub, {k: v for k, v in SCHEMAS["stability"].items()
                                  if k != "scenarios"})
            scns.append((_scenario_from_config(sub), os.path.join(outdir, f"scenario_{i:03d}")))
        if jobs > 1:
            import concurrent.futures as cf

            with cf.ProcessPoolExecutor(max_workers=jobs) as ex:
                futs = [ex.submit(_run_one_stability, s, d, svg) for s, d in scns]
                for f in futs:
                    f.result()
        else:
            for s, d in scns:
                _run_one_stability(s, d, svg)
        print(f"stability: ran {len(scns)} scenarios under {outdir}")
        return EXIT_OK
    scn = _scenario_from_config(cfg)
    if seed is not None:
        scn.perturbation.seed = seed
    doc = _run_one_stability(scn, outdir, svg)
    verdict = doc["barrier"]["never_exceeded"] if doc.get("barrier") else None
    print(f"stability: never_exceeded={verdict} report={os.path.join(outdir, 'report.json')}")
    return EXIT_OK


def cmd_report(cfg: dict, outdir: str) -> int:
    path = cfg["path"]
    with open(path) as fh:
        doc = json.load(fh)
    print(f"report: {path}")
    for key in ("schema", "gamma_hypothesis", "barrier_hypotheses_ok", "aborted"):
        if key in doc:
            print(f"  {key}: {doc[key]}")
    if "barrier" in doc and doc["barrier"]:
        for k, v in doc["barrier"].items():
            print(f"  barrier.{k}: {v}")
    if "checks" in doc and isinstance(doc["checks"], dict):
        for k, v in doc["checks"].items():
            if isinstance(v, dict) and "ok" in v:
                print(f"  check.{k}: ok={v['ok']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsbox", description=__doc__)
    p.add_argument("command", choices=["simulate", "certify", "stability", "report"])
    p.add_argument("--config", required=True, help="JSON config path")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed override")
    p.add_argument("--jobs", type=int, default=1, help="parallel scenarios")
    p.add_argument("--svg", action="store_true", help="write SVG plots")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.seed, args.svg)
        if args.command == "certify":
            return cmd_certify(cfg, args.out, args.seed, args.svg)
        if args.command == "stability":
            return cmd_stability(cfg, args.out, args.seed, args.svg, args.jobs)
        return cmd_report(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except nsio.SnapshotError as exc:
        print(f"data integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (SolverAbort, CFLViolation) as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
