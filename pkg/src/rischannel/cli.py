"""Command-line runner: ``rischannel <subcommand> --config scenario.toml``.

Exit codes: 0 ok, 1 configuration error, 2 numerical failure, 3 validation
failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, load_config
from .em_kernel import KernelError, assemble_partitioned, make_loads, write_partitioned_csv
from .geometry import RX, TX, GeometryError, build_scene, far_field_distance, write_mesh_csv
from .link_metrics import fit_pathloss_exponent, sweep_distance, write_curve_csv
from .network import (NumericalError, dense_solve_reference, fullwave_channel,
                      spectral_radius_diagnostic, write_channel_csv, write_report_csv)
from .ris_design import (PatternSolver, RISState, UnitCellPhases, default_unit_cell_phases,
                         optimize_binary_states, read_state_csv, write_pattern_csv,
                         write_state_csv)

log = logging.getLogger("rischannel")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 1, 2, 3
ORACLE_TOL = 1e-10
FAULTS = ("none", "transpose-zrs")


def unit_cell_phases(cfg):
    base = default_unit_cell_phases(cfg.element_kind)
    on = base.phi_on if cfg.phase_on_deg is None else cfg.phase_on_deg
    off = base.phi_off if cfg.phase_off_deg is None else cfg.phase_off_deg
    return UnitCellPhases(on, off)


def design_state(cfg, scene=None):
    scene = scene or build_scene(cfg)
    return optimize_binary_states(scene, unit_cell_phases(cfg), cfg.beam_theta_deg)


def pattern_grid(cfg):
    n = int(round((cfg.pattern_theta_max_deg - cfg.pattern_theta_min_deg)
                  / cfg.pattern_theta_step_deg)) + 1
    return np.linspace(cfg.pattern_theta_min_deg, cfg.pattern_theta_max_deg, n)


def _corrupt(zp, fault):
    if fault == "transpose-zrs":
        # Z_RS is not square, so its index-reversed copy stands in for a
        # transpose: Z_SR stays intact and the block pair loses reciprocity
        return zp.replace(Z_RS=zp.Z_RS[::-1, ::-1].copy())
    return zp


def oracle_equivalence(cfg, n_trials=10, fault="none"):
    """Max relative error between the block channel and a dense solve.

    Runs on a 3x3 version of the scene with a seeded random 1-bit state.
    The injected ``fault`` only touches the block path, never the oracle.
    """
    small = cfg.replace(m_x=3, m_y=3)
    scene = build_scene(small)
    zp = assemble_partitioned(scene)
    rng = np.random.default_rng(cfg.seed)
    bits = rng.random((3, 3)) < 0.5
    loads = make_loads(scene, cfg.port_load_ohm, RISState(bits).loads())
    h = fullwave_channel(_corrupt(zp, fault), loads).H
    n_t = zp.sizes[0]
    worst = 0.0
    for _ in range(n_trials):
        v_t = rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)
        _, i_r, _ = dense_solve_reference(zp, loads, v_t)
        ref = loads.zl_rr * i_r
        worst = max(worst, float(np.linalg.norm(h @ v_t - ref) / np.linalg.norm(ref)))
    return worst


def cmd_validate(cfg, out, args):
    err = oracle_equivalence(cfg, fault=args.fault)
    ok = err < ORACLE_TOL
    status = "PASS" if ok else "FAIL"
    write_report_csv({"oracle_max_rel_err": err, "tolerance": ORACLE_TOL, "status": status},
                     out / "validate.csv")
    _say(args, f"oracle-equivalence {status}, max rel err {err:.3e} (tol {ORACLE_TOL:g})")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_assemble(cfg, out, args):
    scene = build_scene(cfg)
    zp = assemble_partitioned(scene)
    write_mesh_csv(scene, out / "mesh.csv")
    write_partitioned_csv(zp, out / "impedance.csv")
    loads = make_loads(scene, cfg.port_load_ohm, design_state(cfg, scene).loads())
    h = fullwave_channel(zp, loads, scene.port_indices(RX), scene.port_indices(TX))
    write_channel_csv(h, out / "channel_fullwave.csv")
    _say(args, f"assembled N_T, N_R, N_S = {zp.sizes}")
    return EXIT_OK


def _write_pattern(cfg, scene, state, out, args):
    grid = pattern_grid(cfg)
    level = PatternSolver(scene, cfg.port_load_ohm).pattern(state, grid)
    write_pattern_csv(grid, level, out / "pattern.csv")
    peak = float(grid[np.argmax(level)])
    _say(args, f"pattern peak at {peak:.2f} deg (beam target {cfg.beam_theta_deg:g} deg)")
    return peak


def cmd_design(cfg, out, args):
    scene = build_scene(cfg)
    state = design_state(cfg, scene)
    write_state_csv(state, out / "state.csv")
    _say(args, f"state: {int(state.bits.sum())} of {state.bits.size} cells ON")
    _write_pattern(cfg, scene, state, out, args)
    return EXIT_OK


def cmd_pattern(cfg, out, args):
    scene = build_scene(cfg)
    state = read_state_csv(args.state) if args.state else design_state(cfg, scene)
    if state.bits.shape != (cfg.m_y, cfg.m_x):
        raise ConfigError(f"state grid {state.bits.shape} does not match ({cfg.m_y}, {cfg.m_x})")
    _write_pattern(cfg, scene, state, out, args)
    return EXIT_OK


def cmd_sweep(cfg, out, args):
    state = design_state(cfg)
    curve = sweep_distance(cfg, state, cfg.r_list_lambda, skip_overlaps=True)
    write_curve_csv(curve, out / "capacity.csv")
    report = {"far_field_distance_lambda": far_field_distance(cfg),
              "max_relative_gap": float(curve.relative_gap.max())}
    for column in ("C_fullwave", "C_reduced"):
        try:
            report[f"exponent_{column}"] = fit_pathloss_exponent(curve, cfg.fit_r_min_lambda,
                                                                 column)
        except ValueError as exc:
            log.warning("no exponent fit for %s: %s", column, exc)
    write_report_csv(report, out / "sweep_report.csv")
    for key, value in report.items():
        _say(args, f"{key} = {value:.6g}")
    return EXIT_OK


def cmd_diagnose(cfg, out, args):
    scene = build_scene(cfg)
    zp = assemble_partitioned(scene)
    state = design_state(cfg, scene)
    report = {}
    variants = {"design": state.loads(),
                "ris_50ohm": np.full(len(scene.ris_meshes), cfg.port_load_ohm, dtype=complex)}
    for name, ris in variants.items():
        radii = spectral_radius_diagnostic(zp, make_loads(scene, cfg.port_load_ohm, ris))
        for key, value in radii.items():
            report[f"{name}_{key}"] = value
    write_report_csv(report, out / "diagnose.csv")
    for key, value in report.items():
        _say(args, f"{key} = {value:.6g}")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "assemble": cmd_assemble, "design": cmd_design,
            "pattern": cmd_pattern, "sweep": cmd_sweep, "diagnose": cmd_diagnose}


def _say(args, text):
    if not args.quiet:
        print(text)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario TOML file (defaults if omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--quiet", action="store_true", help="suppress console summaries")
    parser = argparse.ArgumentParser(prog="rischannel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"validate": "dense-solve oracle check on a 3x3 RIS",
             "assemble": "write mesh, impedance blocks and channel matrix",
             "design": "1-bit RIS state and its scattering pattern",
             "pattern": "scattering pattern of a given or designed state",
             "sweep": "capacity against Rx distance and path-loss exponent",
             "diagnose": "spectral-radius report"}
    subs = {name: sub.add_parser(name, parents=[common], help=text) for name, text in helps.items()}
    subs["validate"].add_argument("--fault", choices=FAULTS, default="none",
                                  help=argparse.SUPPRESS)
    subs["pattern"].add_argument("--state", type=Path, help="state CSV written by 'design'")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig().validate()
        out = Path(args.out if args.out is not None else cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, GeometryError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, KernelError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
