"""Command-line front end: ``phononlab <subcommand> ... --out DIR``.

Exit codes: 0 ok, 2 configuration error, 3 convergence/integration error,
4 capacity (basis too large).
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import SHAPES, SMOOTHSTEP, RampSchedule, evolve_ramp
from .equilibrium import DEFAULT_TOL, fit_density_profile, solve_equilibrium
from .errors import ConfigurationError, PhononLabError
from .interaction import MAXIMUM, MINIMUM, StandingWave, standing_wave_to_hubbard
from .io import write_csv, write_manifest
from .lattice import FULL, NEAREST, build_lattice, lowest_mode_density, single_particle_spectrum
from .manybody import CONSERVING, DEFAULT_MAX_DIM, BoseHubbardProblem, ground_state, mott_superfluid_scan
from .units import derive_dimensionless, load_config, validate_regime

FIG3_U = (0.0, 0.005, 0.01, 0.02)


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("PHONONLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"PHONONLAB_THREADS must be an integer, got {env!r}") from None
    return 1


def _prepare_out(args) -> Path:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise ConfigurationError(f"output directory {out} is not empty (use --force)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _physical(args) -> tuple:
    """Resolve (n_ions, beta_x, config dict, trap config) from ``--config`` or flags."""
    if args.config:
        cfg = load_config(args.config)
        if args.ions is not None and args.ions != cfg.n_ions:
            raise ConfigurationError("--ions conflicts with n_ions in --config")
        chain = solve_equilibrium(cfg.n_ions)
        cfg = derive_dimensionless(cfg, chain)
        return cfg.n_ions, cfg.beta_x, cfg.as_dict(), cfg, chain
    if args.ions is None or args.beta is None:
        raise ConfigurationError("give --ions and --beta, or --config")
    if args.ions < 1:
        raise ConfigurationError(f"--ions must be >= 1, got {args.ions}")
    if not args.beta > 0:
        raise ConfigurationError(f"--beta must be positive, got {args.beta}")
    return args.ions, args.beta, {"n_ions": args.ions, "beta_x": args.beta}, None, None


def cmd_equilibrium(args) -> dict:
    if args.ions < 1:
        raise ConfigurationError(f"--ions must be >= 1, got {args.ions}")
    if not args.tol > 0:
        raise ConfigurationError(f"--tol must be positive, got {args.tol}")
    out = _prepare_out(args)
    chain = solve_equilibrium(args.ions, tol=args.tol)
    pos = chain.positions
    gaps = list(np.diff(pos)) + [None]
    path = write_csv(out / "equilibrium.csv", ["index", "position_dimensionless", "gap_to_next"],
                     [(i + 1, pos[i], gaps[i]) for i in range(len(pos))])
    derived = {"d0": chain.d0 if chain.n_ions > 1 else None}
    if chain.n_ions >= 10:
        fit = fit_density_profile(chain)
        derived.update(alpha=fit.alpha, gamma=fit.gamma, fit_rms_error=fit.rms_error,
                       fit_window=fit.window)
    diag = {"residual": chain.residual, "iterations": chain.iterations,
            "tol": args.tol, "tol_effective": chain.tol_effective}
    return dict(out=out, outputs=[path], config={"n_ions": args.ions, "tol": args.tol},
                derived=derived, diagnostics=diag)


def cmd_spectrum(args) -> dict:
    n, beta, config, _, chain = _physical(args)
    out = _prepare_out(args)
    chain = chain or solve_equilibrium(n)
    lat = build_lattice(chain, beta, args.range)
    spec = single_particle_spectrum(lat)
    n_ph = args.phonons if args.phonons is not None else n
    dens = lowest_mode_density(lat, n_ph)
    idx = range(n)
    outputs = [
        write_csv(out / "lattice.csv", ["i", "j", "t_ij"],
                  [(i + 1, j + 1, lat.hopping[i, j]) for i in idx for j in idx
                   if j > i and lat.hopping[i, j] != 0.0]),
        write_csv(out / "onsite.csv", ["i", "omega_xi"], [(i + 1, lat.onsite[i]) for i in idx]),
        write_csv(out / "spectrum.csv", ["q", "omega_q"], [(q, v) for q, v in enumerate(spec.eigenvalues)]),
        write_csv(out / "mode_density.csv", ["i", "n_i"], [(i + 1, dens[i]) for i in idx]),
    ]
    config.update(range=args.range, phonons=n_ph)
    derived = {
        "d0": chain.d0 if n > 1 else None,
        "beta_x": beta,
        "t_characteristic": beta / 2.0,
        "omega_c_fit": spec.omega_c_fit,
        "omega_c_estimate": spec.omega_c_estimate,
        "omega_c_8_over_n": 8.0 * beta / n,
        "lowest_gaps": spec.gaps,
    }
    return dict(out=out, outputs=outputs, config=config, derived=derived,
                diagnostics={"equilibrium_residual": chain.residual})


def _u_values(args, trap_cfg) -> tuple:
    if args.f_eta2 or args.eta2:
        if len(args.f_eta2 or []) != len(args.eta2 or []):
            raise ConfigurationError("--f-eta2 and --eta2 must be given in pairs")
        effs = [standing_wave_to_hubbard(StandingWave.from_f_eta_sq(f, e, args.placement))
                for f, e in zip(args.f_eta2, args.eta2)]
        return [e.hubbard_u for e in effs], [e.as_dict() for e in effs]
    if args.u_list is not None:
        return list(args.u_list), []
    if trap_cfg is not None and trap_cfg.standing_wave is not None:
        eff = standing_wave_to_hubbard(trap_cfg.standing_wave)
        return [eff.hubbard_u], [eff.as_dict()]
    return list(FIG3_U), []


def cmd_scan(args) -> dict:
    if args.ions is None and not args.config:
        args.ions = 6
    if args.beta is None and not args.config:
        args.beta = 0.01
    n, beta, config, trap_cfg, chain = _physical(args)
    n_ph = args.phonons if args.phonons is not None else n
    if n_ph < 0:
        raise ConfigurationError(f"--phonons must be >= 0, got {n_ph}")
    u_values, effective = _u_values(args, trap_cfg)
    out = _prepare_out(args)
    chain = chain or solve_equilibrium(n)
    lat = build_lattice(chain, beta, args.range)
    points = mott_superfluid_scan(lat, u_values, n_ph, threads=_threads(args),
                                  method=args.method, max_dim=args.max_dim)

    scan_rows, obs_rows, obdm_rows = [], [], []
    for pt in points:
        rep = pt.report
        for i in range(n):
            scan_rows.append((pt.hubbard_u, i + 1, rep.mean_n[i], rep.var_n[i], pt.state.energy,
                              rep.condensate_fraction))
            obs_rows.append((pt.hubbard_u, i + 1, rep.mean_n[i], rep.var_n[i], *rep.number_dist[i]))
            for j in range(n):
                v = complex(rep.obdm[i, j])
                obdm_rows.append((pt.hubbard_u, i + 1, j + 1, v.real, v.imag))
    outputs = [
        write_csv(out / "scan.csv",
                  ["u_over_omegax", "site", "mean_n", "var_n", "energy", "condensate_fraction"], scan_rows),
        write_csv(out / "observables.csv",
                  ["u_over_omegax", "site", "mean_n", "var_n"] + [f"p{k}" for k in range(n_ph + 1)], obs_rows),
        write_csv(out / "obdm.csv", ["u_over_omegax", "i", "j", "re", "im"], obdm_rows),
    ]
    config.update(phonons=n_ph, range=args.range, u_values=u_values, method=args.method,
                  max_dim=args.max_dim)
    derived = {
        "d0": chain.d0 if n > 1 else None,
        "beta_x": beta,
        "t_characteristic": beta / 2.0,
        "hubbard_u": u_values,
        "standing_wave_effective": effective,
        "basis_dimension": points[0].state.basis.dimension if points else 0,
    }
    diag = {"solves": [{"u": pt.hubbard_u, **pt.state.diagnostics} for pt in points],
            "threads": _threads(args)}
    return dict(out=out, outputs=outputs, config=config, derived=derived, diagnostics=diag)


def cmd_ramp(args) -> dict:
    n, beta, config, _, chain = _physical(args)
    n_ph = args.phonons if args.phonons is not None else n
    schedule = RampSchedule(args.u_init, args.u_final, args.duration, args.shape, args.checkpoints)
    out = _prepare_out(args)
    chain = chain or solve_equilibrium(n)
    lat = build_lattice(chain, beta, args.range)
    problem = BoseHubbardProblem(lat, args.u_init, mode=CONSERVING, n_phonons=n_ph, max_dim=args.max_dim)
    initial = ground_state(problem)
    res = evolve_ramp(problem, schedule, initial, tol=args.tol)
    path = write_csv(out / "ramp.csv", ["time", "u_of_t", "fidelity", "energy", "norm"],
                     zip(res.times, res.u_values, res.fidelities, res.energies, res.norms))
    config.update(phonons=n_ph, range=args.range, u_init=args.u_init, u_final=args.u_final,
                  duration=args.duration, shape=args.shape, checkpoints=args.checkpoints, tol=args.tol)
    derived = {"d0": chain.d0 if n > 1 else None, "beta_x": beta, "t_characteristic": beta / 2.0,
               "basis_dimension": initial.basis.dimension, "final_fidelity": res.fidelities[-1]}
    diag = {"steps": res.n_steps, "rejected_steps": res.rejected_steps, "norm_drift": res.norm_drift,
            "gauge_ambiguous_checkpoints": res.gauge_ambiguous}
    return dict(out=out, outputs=[path], config=config, derived=derived, diagnostics=diag)


def cmd_validate(args) -> dict:
    cfg = load_config(args.config)
    out = _prepare_out(args)
    chain = solve_equilibrium(cfg.n_ions)
    cfg = derive_dimensionless(cfg, chain)
    rep = validate_regime(cfg, chain, require_z0=args.require_z0)
    path = write_csv(out / "regime.csv", ["quantity", "value"], [
        ("x0_over_d0", rep.x0_over_d0),
        ("z0_over_d0", rep.z0_over_d0),
        ("beta_x", rep.beta_x),
        ("lamb_dicke_ok", rep.lamb_dicke_ok),
        ("sw_elimination_ratio", rep.sw_elimination_ratio),
        ("warnings", ";".join(rep.warnings)),
    ])
    derived = {"d0": chain.d0, "beta_x": cfg.beta_x, "t_characteristic": cfg.beta_x / 2.0,
               "regime": rep.as_dict()}
    if cfg.standing_wave is not None:
        derived["standing_wave_effective"] = standing_wave_to_hubbard(cfg.standing_wave).as_dict()
    return dict(out=out, outputs=[path], config=cfg.as_dict(), derived=derived,
                diagnostics={"equilibrium_residual": chain.residual})


def _common(p, physics=True):
    p.add_argument("--out", required=True, help="output directory (one run per directory)")
    p.add_argument("--force", action="store_true", help="write into a non-empty directory")
    if physics:
        p.add_argument("--ions", type=int, help="number of ions N")
        p.add_argument("--beta", type=float, help="beta_x, Coulomb / radial trap energy")
        p.add_argument("--range", choices=[FULL, NEAREST], default=FULL, help="hopping range")
        p.add_argument("--config", "--physical", dest="config", metavar="CONFIG",
                       help="JSON trap config in SI units (physical mode)")
        p.add_argument("--phonons", type=int, help="total phonon number (default N)")
        p.add_argument("--max-dim", type=int, default=DEFAULT_MAX_DIM, help="basis dimension cap")
        p.add_argument("--threads", type=int, help="worker threads (env PHONONLAB_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phononlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"phononlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", help="axial equilibrium positions")
    p.add_argument("--ions", type=int, required=True)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    _common(p, physics=False)

    p = sub.add_parser("spectrum", help="single-phonon lattice and collective modes")
    _common(p)

    p = sub.add_parser("scan", help="ground-state densities across Hubbard U")
    _common(p)
    p.add_argument("--u-list", type=_float_list, help="comma-separated U values (units of omega_x)")
    p.add_argument("--f-eta2", type=float, action="append", help="F eta^2 (pairs with --eta2)")
    p.add_argument("--eta2", type=float, action="append", help="Lamb-Dicke eta^2")
    p.add_argument("--placement", choices=[MAXIMUM, MINIMUM], default=MAXIMUM)
    p.add_argument("--method", choices=["auto", "dense", "iterative"], default="auto")

    p = sub.add_parser("ramp", help="adiabatic U ramp with fidelity tracking")
    _common(p)
    p.add_argument("--u-init", type=float, required=True)
    p.add_argument("--u-final", type=float, required=True)
    p.add_argument("--duration", type=float, required=True, help="units of 1/omega_x")
    p.add_argument("--shape", choices=SHAPES, default=SMOOTHSTEP)
    p.add_argument("--checkpoints", type=int, default=11)
    p.add_argument("--tol", type=float, default=1e-9, help="local error per step")

    p = sub.add_parser("validate", help="regime checks for a physical trap config")
    _common(p, physics=False)
    p.add_argument("--config", required=True)
    p.add_argument("--require-z0", action="store_true")
    return parser


COMMANDS = {
    "equilibrium": cmd_equilibrium,
    "spectrum": cmd_spectrum,
    "scan": cmd_scan,
    "ramp": cmd_ramp,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    from threadpoolctl import threadpool_limits

    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    try:
        # single-threaded BLAS keeps every reduction order fixed
        with threadpool_limits(limits=1):
            result = COMMANDS[args.command](args)
    except PhononLabError as exc:
        print(f"phononlab {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    write_manifest(result["out"], command=args.command, argv=argv, config=result["config"],
                   derived=result["derived"], diagnostics=result["diagnostics"],
                   outputs=result["outputs"], started_utc=started,
                   wall_clock_s=time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
