"""Command-line entry point.

Subcommands: dispersion, fit-dispersion, simulate (maxwell | envelope),
converge, compare, diagnose.  Configuration files are `key = value` lines with
dotted sections (see config.py); all data outputs are CSV/JSON in --out-dir.
Exit codes: 0 success, 2 invariant failure, 3 blow-up suspected where the run
did not expect one.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import diagnostics, harness
from .dispersion import (ALL_BRANCHES, BranchId, IonizationParams, MediumParams,
                         all_projectors, branch_from_label, l_matrix,
                         omega_branch, omega_branches)
from .dispersion_fit import FitResult, fit_improved, zero_fit
from .envelope import EnvelopeSolver, IonizationCoupling, ModelConfig
from .grid import make_grid, write_field_csv
from .harness import (CompareCase, CompareConfig, ConvergenceConfig,
                      compare_models, convergence_report_json, gaussian_envelope,
                      run_convergence, write_convergence_csv, write_series_csv)
from .maxwell import (MaxwellSolver, WavePacketSpec, init_wave_packet,
                      run_maxwell)

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_BLOWUP = 3


def _medium_from_cfg(cfg: dict) -> MediumParams:
    med = cfg.get("medium", {})
    ion = None
    if "ionization" in med:
        i = med["ionization"]
        ion = IonizationParams(c=float(i.get("c", 1.0)), c0=float(i.get("c0", 0.0)),
                               c1=float(i.get("c1", 0.0)), c2=float(i.get("c2", 0.0)),
                               K=int(i.get("K", 1)), alpha4=float(i.get("alpha4", 0.0)),
                               alpha5=float(i.get("alpha5", 0.0)))
    return MediumParams(gamma=float(med.get("gamma", 1.0)),
                        omega0=float(med.get("omega0", 1.0)),
                        omega1=float(med.get("omega1", 0.0)),
                        p=float(med.get("p", 1.0)),
                        nonlinearity=str(med.get("nonlinearity", "cubic")),
                        r=float(med.get("r", 1.0)),
                        a_tilde=float(med.get("a_tilde", 1.0)),
                        ionization=ion)


def _grid_from_cfg(cfg: dict):
    g = cfg.get("grid", {})
    dims = int(g.get("dims", 1))
    n = g.get("n", 256)
    points = [int(v) for v in (n if isinstance(n, list) else [n] * dims)]
    length = g.get("length", 2 * np.pi)
    lengths = [float(v) for v in (length if isinstance(length, list) else [length] * dims)]
    return make_grid(dims, points, lengths)


def _fit_from_cfg(cfg: dict, dims: int) -> FitResult | None:
    if "fit" not in cfg:
        return None
    f = cfg["fit"]
    b = f.get("b", 0.0)
    b = tuple(float(v) for v in (b if isinstance(b, list) else [b] * dims))
    bdiag = f.get("B", 0.0)
    bdiag = [float(v) for v in (bdiag if isinstance(bdiag, list) else [bdiag] * dims)]
    bmat = tuple(tuple(bdiag[i] if i == j else 0.0 for j in range(dims))
                 for i in range(dims))
    return FitResult(b=b, B=bmat, k0=float(f.get("k0", 0.0)),
                     half_width=float(f.get("half_width", 0.0)),
                     sup_error=float("nan"), nls_sup_error=float("nan"))


def _coupling_from_cfg(cfg: dict) -> IonizationCoupling | None:
    if "ionization" not in cfg:
        return None
    i = cfg["ionization"]
    return IonizationCoupling(c=float(i.get("c", 1.0)), alpha4=float(i.get("alpha4", 0.0)),
                              alpha5=float(i.get("alpha5", 0.0)), K=int(i.get("K", 1)),
                              c_g=float(i.get("c_g", 0.0)))


def _model_config_from_cfg(cfg: dict, dims: int) -> ModelConfig:
    model = str(cfgmod.get(cfg, "model"))
    eps = float(cfgmod.get(cfg, "epsilon"))
    kwargs = dict(model=model, epsilon=eps)
    if model in ("envelope_exact", "full_dispersion", "nls", "nls_improved",
                 "nls_polarized"):
        kwargs["medium"] = _medium_from_cfg(cfg)
        kwargs["carrier_k"] = float(cfgmod.get(cfg, "carrier.k"))
        kwargs["branch"] = branch_from_label(str(cfgmod.get(cfg, "carrier.branch")))
        if model in ("nls_improved", "nls_polarized"):
            fit = _fit_from_cfg(cfg, dims)
            if fit is None and bool(cfgmod.get(cfg, "fit_auto", True)):
                fit = fit_improved(kwargs["branch"], kwargs["carrier_k"],
                                   float(cfgmod.get(cfg, "fit_half_width", 1.5)),
                                   kwargs["medium"], dims=dims)
            kwargs["fit"] = fit if fit is not None else zero_fit(dims)
    else:
        if "alpha1" in cfg:
            kwargs["alpha1"] = int(cfg["alpha1"])
        kwargs["alpha2"] = float(cfg.get("alpha2", 0.0))
        if "alpha3" in cfg:
            a3 = cfg["alpha3"]
            kwargs["alpha3"] = tuple(float(v) for v in (a3 if isinstance(a3, list)
                                                        else [a3] * dims))
        kwargs["f_kind"] = str(cfg.get("f_kind", "zero"))
        kwargs["r"] = float(cfg.get("r", 1.0))
        kwargs["fit"] = _fit_from_cfg(cfg, dims)
        kwargs["ionization"] = _coupling_from_cfg(cfg)
    kwargs["dealias"] = bool(cfg.get("dealias", False))
    return ModelConfig(**kwargs)


def _outdir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands

def cmd_dispersion(args) -> int:
    medium = _medium_from_cfg(cfgmod.load_config(args.medium_file)
                              if args.medium_file else {})
    if args.check is not None:
        k = float(args.check)
        kvec = np.array([0.0, 0.0, k])
        projectors = all_projectors(kvec, medium)
        total = sum(projectors.values())
        print("branch,idempotency,pencil_residual,trace")
        for branch, pi in projectors.items():
            idem = float(np.max(np.abs(pi @ pi - pi)))
            omega = float(omega_branch(k, branch, medium))
            pencil = float(np.max(np.abs(l_matrix(omega, kvec, medium) @ pi)))
            print(f"{branch.label()},{idem:.3e},{pencil:.3e},{np.trace(pi).real:.12f}")
        print(f"# seven-projector sum deviation from identity: "
              f"{float(np.max(np.abs(total - np.eye(12)))):.3e}")
        return EXIT_OK
    ks = np.linspace(args.kmin, args.kmax, args.samples)
    lines = ["k," + ",".join(b.label() for b in ALL_BRANCHES)]
    for k in ks:
        values = omega_branches(float(k), medium)
        lines.append(",".join([repr(float(k))] + [repr(values[b]) for b in ALL_BRANCHES]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_fit_dispersion(args) -> int:
    medium = _medium_from_cfg(cfgmod.load_config(args.medium_file)
                              if args.medium_file else {})
    branch = branch_from_label(args.branch)
    fit = fit_improved(branch, args.k0, args.width, medium, dims=args.dims)
    out = _outdir(args)
    payload = dataclasses.asdict(fit)
    (out / "fit.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    kk = np.linspace(args.k0 - args.width, args.k0 + args.width, 201)
    from .dispersion import omega_imp, omega_nls
    exact = omega_branch(kk, branch, medium)
    taylor = omega_nls(kk, args.k0, branch, medium)
    rational = omega_imp(kk, args.k0, branch, fit, medium)
    with open(out / "dispersion_window.csv", "w") as fh:
        fh.write("k,omega_exact,omega_nls,omega_imp\n")
        for row in zip(kk, exact, taylor, rational):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_simulate_maxwell(args) -> int:
    cfg = cfgmod.load_config(args.config)
    grid = _grid_from_cfg(cfg)
    medium = _medium_from_cfg(cfg)
    epsilon = float(cfgmod.get(cfg, "epsilon"))
    amplitude = float(cfgmod.get(cfg, "packet.amplitude", 0.5))
    width = float(cfgmod.get(cfg, "packet.width", 5.0))
    carrier = float(cfgmod.get(cfg, "packet.carrier_k"))
    branch = branch_from_label(str(cfgmod.get(cfg, "packet.branch")))
    env = gaussian_envelope(grid, amplitude, width)
    state = init_wave_packet(WavePacketSpec(env, carrier, branch), medium, epsilon, grid)
    t_final = float(cfgmod.get(cfg, "t_final"))
    dt = float(cfgmod.get(cfg, "dt", epsilon / 8.0))
    n_steps = max(1, round(t_final / dt))
    dt = t_final / n_steps
    snap_every = cfgmod.get(cfg, "snapshot_every", None)
    snap_steps = []
    if snap_every:
        stride = max(1, round(float(snap_every) / dt))
        snap_steps = list(range(0, n_steps + 1, stride))
    solver = MaxwellSolver(grid, medium, epsilon, carrier_k=carrier)
    result = run_maxwell(solver, state, dt, n_steps, snapshot_steps=snap_steps,
                         series_stride=max(1, n_steps // 1000))
    out = _outdir(args)
    with open(out / "series.csv", "w") as fh:
        fh.write(",".join(result.SERIES_COLUMNS) + "\n")
        for row in result.series:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    for t, snap in result.snapshots:
        write_field_csv(snap.u, out / f"snapshot_t{t:.6f}.csv")
    summary = {"status": result.status, "t_final": float(result.state.time),
               "steps": n_steps, "dt": dt}
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK if result.status == "completed" else EXIT_BLOWUP


def cmd_simulate_envelope(args) -> int:
    cfg = cfgmod.load_config(args.config)
    grid = _grid_from_cfg(cfg)
    config = _model_config_from_cfg(cfg, grid.dims)
    solver = EnvelopeSolver(config, grid)
    amplitude = float(cfgmod.get(cfg, "packet.amplitude", 1.0))
    width = float(cfgmod.get(cfg, "packet.width", 1.0))
    env = gaussian_envelope(grid, amplitude, width)
    if config.model == "family_vect":
        env = np.stack([env, np.zeros_like(env)], axis=-1)
    state = solver.initial_state(env)
    t_final = float(cfgmod.get(cfg, "t_final"))
    dt = float(cfgmod.get(cfg, "dt", 1e-3))
    n_steps = max(1, round(t_final / dt))
    dt = t_final / n_steps
    snap_every = cfgmod.get(cfg, "snapshot_every", None)
    snap_steps = []
    if snap_every:
        stride = max(1, round(float(snap_every) / dt))
        snap_steps = list(range(0, n_steps + 1, stride))
    result = solver.run(state, dt, n_steps, snapshot_steps=snap_steps,
                        series_stride=int(cfgmod.get(cfg, "series_stride", 1)),
                        amp_factor=float(cfgmod.get(cfg, "amp_factor", 1e6)),
                        grad_factor=float(cfgmod.get(cfg, "grad_factor", 1e3)))
    out = _outdir(args)
    write_series_csv(result.report, out / "series.csv")
    for t, snap in result.snapshots:
        write_field_csv(snap.u, out / f"snapshot_t{t:.6f}.csv")
    summary = {"status": result.report.status, "t_final": float(result.state.time),
               "steps": n_steps, "dt": dt, "drift": result.report.drift,
               "thresholds": result.report.thresholds}
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(json.dumps(summary, indent=2, sort_keys=True))
    if result.report.status == "completed":
        return EXIT_OK
    expect_blowup = bool(cfgmod.get(cfg, "expect_blowup", False))
    return EXIT_OK if expect_blowup and result.report.status == "blowup_suspected" \
        else EXIT_BLOWUP


def cmd_converge(args) -> int:
    cfg = cfgmod.load_config(args.config)
    medium = _medium_from_cfg(cfg)
    eps = cfgmod.get(cfg, "epsilons")
    models = cfgmod.get(cfg, "models")
    cc = ConvergenceConfig(
        grid_n=int(cfgmod.get(cfg, "grid.n", 2048)),
        length=float(cfgmod.get(cfg, "grid.length", 20 * np.pi)),
        carrier_k=float(cfgmod.get(cfg, "carrier.k")),
        branch=branch_from_label(str(cfgmod.get(cfg, "carrier.branch"))),
        medium=medium,
        epsilons=tuple(float(e) for e in (eps if isinstance(eps, list) else [eps])),
        models=tuple(str(m) for m in (models if isinstance(models, list) else [models])),
        amplitude=float(cfgmod.get(cfg, "packet.amplitude", 0.5)),
        width=float(cfgmod.get(cfg, "packet.width", 5.0)),
        horizon=float(cfgmod.get(cfg, "horizon", 0.5)),
        dt_factor=float(cfgmod.get(cfg, "dt_factor", 0.125)),
        fit_half_width=float(cfgmod.get(cfg, "fit_half_width", 1.5)),
        threads=int(args.threads),
    )
    report = run_convergence(cc)
    out = _outdir(args)
    write_convergence_csv(report, out / "errors.csv")
    (out / "report.json").write_text(convergence_report_json(report))
    print(convergence_report_json(report))
    return EXIT_OK if not report.failures else EXIT_INVARIANT


def cmd_compare(args) -> int:
    cfg = cfgmod.load_config(args.config)
    grid = _grid_from_cfg(cfg)
    entries = cfgmod.get(cfg, "models")
    entries = entries if isinstance(entries, list) else [entries]
    cases = []
    for entry in entries:
        name, _, f_kind = str(entry).partition(":")
        sub = dict(cfg)
        sub["model"] = name
        if f_kind:
            sub["f_kind"] = f_kind
        config = _model_config_from_cfg(sub, grid.dims)
        cases.append(CompareCase(name=str(entry), config=config,
                                 amp_factor=float(cfgmod.get(cfg, "amp_factor", 1e6)),
                                 grad_factor=float(cfgmod.get(cfg, "grad_factor", 1e3))))
    compare = CompareConfig(grid=grid, cases=tuple(cases),
                            tau_final=float(cfgmod.get(cfg, "tau_final", 1.0)),
                            dt_tau=float(cfgmod.get(cfg, "dt_tau", 1e-3)),
                            amplitude=float(cfgmod.get(cfg, "packet.amplitude", 1.0)),
                            width=float(cfgmod.get(cfg, "packet.width", 1.0)))
    rows = compare_models(compare)
    out = _outdir(args)
    with open(out / "compare.csv", "w") as fh:
        fh.write("name,model,status,final_time,mass,energy,max_abs_u,max_rho\n")
        for row in rows:
            fh.write(f"{row.name},{row.model},{row.status},{row.final_time!r},"
                     f"{row.mass!r},{row.energy!r},{row.max_abs_u!r},{row.max_rho!r}\n")
    payload = [dataclasses.asdict(r) for r in rows]
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    for row in rows:
        print(f"{row.name:32s} {row.status:18s} mass={row.mass:.6g} "
              f"max|u|={row.max_abs_u:.6g} max_rho={row.max_rho:.6g}")
    bad = [r for r in rows if r.status.startswith("error")]
    return EXIT_INVARIANT if bad else EXIT_OK


def cmd_diagnose(args) -> int:
    with open(args.series) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    columns = tuple(header)
    report = diagnostics.RunReport(columns=columns, series=data, status="completed")
    t = report.column("t")
    checks: list[tuple[str, bool, str]] = []
    ok_t = bool(np.all(np.diff(t) > 0))
    checks.append(("time strictly increasing", ok_t, ""))
    if "mass" in columns:
        m = report.column("mass")
        if args.alpha2 is not None:
            law = m[0] * np.exp(-2.0 * args.alpha2 * (t - t[0]))
            dev = float(np.max(np.abs(m - law)) / max(m[0], 1e-300))
            checks.append((f"mass follows exp(-2*alpha2*t) within {args.damping_tol:g}",
                           dev <= args.damping_tol, f"deviation {dev:.3e}"))
        elif args.dissipative:
            growth = float(np.max(np.diff(m)) / max(m[0], 1e-300))
            checks.append(("mass nonincreasing (per-sample, 1e-10 relative)",
                           growth <= 1e-10, f"max step growth {growth:.3e}"))
        else:
            drift = diagnostics.relative_drift(m)
            checks.append((f"mass drift <= {args.mass_tol:g}", drift <= args.mass_tol,
                           f"drift {drift:.3e}"))
    if "energy" in columns and not args.dissipative and args.alpha2 is None:
        e = report.column("energy")
        if np.all(np.isfinite(e)):
            drift = diagnostics.relative_drift(e)
            checks.append((f"energy drift <= {args.energy_tol:g}",
                           drift <= args.energy_tol, f"drift {drift:.3e}"))
    if "max_rho" in columns:
        rho = report.column("max_rho")
        if np.any(rho > 0):
            checks.append(("electron density nondecreasing",
                           bool(np.all(np.diff(rho) >= -1e-12)), ""))
    failed = False
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else ""))
        failed = failed or not ok
    return EXIT_INVARIANT if failed else EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="filament-lab",
        description="Envelope-model laboratory with a time-domain oracle")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for any randomized utility (runs are deterministic)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dispersion", help="branch tables and projector checks")
    p.add_argument("--medium-file")
    p.add_argument("--kmin", type=float, default=0.0)
    p.add_argument("--kmax", type=float, default=4.0)
    p.add_argument("--samples", type=int, default=81)
    p.add_argument("--check", type=float, default=None,
                   help="print projector residuals at this wavenumber instead")
    p.add_argument("--out")
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("fit-dispersion", help="fit improved-dispersion parameters")
    p.add_argument("--k0", type=float, required=True)
    p.add_argument("--width", type=float, required=True)
    p.add_argument("--branch", required=True)
    p.add_argument("--dims", type=int, default=1)
    p.add_argument("--medium-file")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_fit_dispersion)

    p = sub.add_parser("simulate", help="run the oracle or an envelope model")
    simsub = p.add_subparsers(dest="system", required=True)
    pm = simsub.add_parser("maxwell")
    pm.add_argument("--config", required=True)
    pm.add_argument("--out-dir", default=".")
    pm.set_defaults(func=cmd_simulate_maxwell)
    pe = simsub.add_parser("envelope")
    pe.add_argument("--config", required=True)
    pe.add_argument("--out-dir", default=".")
    pe.set_defaults(func=cmd_simulate_envelope)

    p = sub.add_parser("converge", help="oracle-vs-models convergence study")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("compare", help="cross-model comparison table")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("diagnose", help="recheck invariants on a series CSV")
    p.add_argument("--series", required=True)
    p.add_argument("--mass-tol", type=float, default=1e-6, dest="mass_tol")
    p.add_argument("--energy-tol", type=float, default=1e-4, dest="energy_tol")
    p.add_argument("--alpha2", type=float, default=None,
                   help="check the exponential damping law with this coefficient")
    p.add_argument("--damping-tol", type=float, default=1e-8, dest="damping_tol")
    p.add_argument("--dissipative", action="store_true",
                   help="expect nonincreasing mass instead of conservation")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    np.random.seed(args.seed)
    try:
        return args.func(args)
    except (cfgmod.ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
