"""``efgeo`` command line: solve / factorize / geometry / residuals pipelines.

Global flags (valid on every subcommand):

  --out DIR                 artifact directory (default: current directory)
  --seed N                  RNG seed for sweeps (default 0)
  --fd-order N              finite-difference order (default 4; chart-sweep
                            defaults to 6, see the subcommand help)
  --threads N               BLAS/OpenMP thread cap (EFGEO_THREADS env is the
                            fallback; set before any numeric import)
  --tolerance-profile NAME  strict | default | loose
  --tolerance KEY=VALUE     override a single threshold (repeatable)

Exit status: 0 all enabled assertions passed, 1 assertion or stage failure,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def _apply_thread_cap(threads: int | None) -> None:
    """Cap numeric-library threading; must run before numpy is imported."""
    n = threads
    if n is None:
        env = os.environ.get("EFGEO_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise SystemExit(f"EFGEO_THREADS must be an integer, got {env!r}")
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _add_global_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default=".", help="artifact output directory")
    p.add_argument("--seed", type=int, default=0, help="RNG seed for sweeps")
    p.add_argument("--fd-order", type=int, default=None, choices=(2, 4, 6),
                   help="finite-difference order (default 4; 6 for chart-sweep)")
    p.add_argument("--threads", type=int, default=None,
                   help="thread cap for numeric libraries")
    p.add_argument("--tolerance-profile", default="default",
                   choices=("strict", "default", "loose"))
    p.add_argument("--tolerance", action="append", default=[],
                   metavar="KEY=VALUE", help="override a single threshold")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--builtin", help="name of a built-in model")
    g.add_argument("--model", help="path to a model JSON file")
    p.add_argument("--nodes", type=int, default=None,
                   help="override node count on every axis")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="efgeo",
        description="factorized two-component quantum systems on discretized "
                    "configuration space",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="full pipeline with assertion gating")
    _add_model_flags(p)
    p.add_argument("--all", action="store_true", help="enable every stage")
    p.add_argument("--stages", default=None,
                   help="comma list from solve,factorize,geometry,residuals")
    p.add_argument("--states", type=int, default=1)
    _add_global_flags(p)

    p = sub.add_parser("solve", help="lowest eigenstates of the full problem")
    _add_model_flags(p)
    p.add_argument("--states", type=int, default=1)
    _add_global_flags(p)

    p = sub.add_parser("factorize", help="split a stored state into chi * Phi")
    p.add_argument("--in", dest="infile", required=True, help="psi CSV file")
    _add_model_flags(p)
    p.add_argument("--convention", default="chi-real-positive",
                   choices=("chi-real-positive", "reference-overlap"))
    p.add_argument("--ref", type=int, default=0,
                   help="reference level for the overlap convention")
    _add_global_flags(p)

    p = sub.add_parser("geometry", help="geometric tensors of a conditional field")
    p.add_argument("--in", dest="infile", required=True, help="phi CSV file")
    _add_model_flags(p)
    _add_global_flags(p)

    p = sub.add_parser("residuals", help="equation residuals of a stored state")
    p.add_argument("--psi", required=True, help="psi CSV file")
    _add_model_flags(p)
    p.add_argument("--mode", default="stationary", choices=("stationary", "dynamic"))
    p.add_argument("--energy", type=float, default=None,
                   help="stationary energy (default: weighted expectation)")
    p.add_argument("--psi-prev", help="dynamic mode: state at t - dt")
    p.add_argument("--psi-next", help="dynamic mode: state at t + dt")
    p.add_argument("--dt", type=float, default=None, help="dynamic mode: time step")
    _add_global_flags(p)

    p = sub.add_parser("gauge-sweep", help="invariance under random gauge functions")
    _add_model_flags(p)
    p.add_argument("--count", type=int, default=5)
    _add_global_flags(p)

    p = sub.add_parser("chart-sweep", help="invariance under a coordinate change")
    p.add_argument("--base", default="avoided-crossing",
                   help="built-in model in plain coordinates")
    p.add_argument("--barred", default="curvilinear-remap",
                   help="built-in model of the same system in barred coordinates")
    p.add_argument("--nodes", type=int, default=401,
                   help="node count for both grids (default 401: the barred "
                        "grid is locally coarser where the chart stretches, so "
                        "pointwise scalar comparisons need the extra resolution)")
    _add_global_flags(p)

    p = sub.add_parser("models", help="inspect built-in models")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("name", nargs="?", default=None)
    p.add_argument("--json", action="store_true", dest="as_json")
    _add_global_flags(p)

    return parser


# ----------------------------------------------------------------------------


def _resolve_tolerances(args):
    from .tolerances import get_profile

    prof = get_profile(args.tolerance_profile)
    tol = prof.as_dict()
    for item in args.tolerance:
        if "=" not in item:
            raise SystemExit(f"--tolerance expects KEY=VALUE, got {item!r}")
        key, _, val = item.partition("=")
        if key not in tol:
            raise SystemExit(
                f"unknown tolerance key {key!r}; known: {sorted(k for k in tol if k != 'name')}"
            )
        tol[key] = float(val)
    return tol


def _load_model(args, fd_order: int):
    from . import models

    overrides = {}
    if getattr(args, "nodes", None):
        overrides["n_nodes"] = args.nodes
    if args.builtin:
        return models.builtin(args.builtin, overrides or None, fd_order=fd_order)
    model = models.load_model(args.model, fd_order=fd_order)
    if overrides:
        data = dict(model.raw)
        for ax in data["grid"]["axes"]:
            ax["n"] = int(overrides["n_nodes"])
        model = models.load_model(data, fd_order=fd_order)
    return model


def _versions() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {
        "efgeo": __version__,
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "python": sys.version.split()[0],
    }


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _grid_summary(grid) -> dict:
    return {
        "axes": [
            {"n": ax.n, "lo": ax.lo, "hi": ax.hi, "boundary": ax.boundary}
            for ax in grid.axes
        ],
        "shape": list(grid.shape),
    }


def _pipeline(model, fd_order: int, states: int = 1):
    """solve -> factorize -> geometry -> residuals on the ground state."""
    from . import ef_geometry, factorization, residuals, solver

    op = solver.assemble(model, fd_order=fd_order)
    eigs = solver.solve_eigenstates(op, states)
    state = eigs[0]
    fact = factorization.factorize(model.grid, state.psi)
    h_bo = model.h_bo_on_grid()
    geom = ef_geometry.compute_ef_geometry(model.grid, model.metric, fact.phi, h_bo,
                                           fd_order=fd_order)
    report = residuals.evaluate(model.grid, model.metric, fact, geom, h_bo,
                                state.energy, fd_order=fd_order)
    return op, eigs, fact, geom, report


def _reconstruction_error(fact, psi) -> float:
    import numpy as np

    diff = np.abs(fact.product() - psi)
    return float(np.max(diff[~fact.mask])) if not fact.mask.all() else 0.0


# ----------------------------------------------------------------------------


def cmd_models(args, fd_order, tol) -> int:
    from . import models

    if args.action == "list":
        for name in models.BUILTIN_NAMES:
            print(name)
        return EXIT_OK
    if not args.name:
        raise SystemExit("models show requires a model name")
    model = models.builtin(args.name, fd_order=fd_order)
    if args.as_json:
        print(model.to_json())
    else:
        print(f"{model.name}: {model.n_levels} levels, grid {model.grid.shape}")
    return EXIT_OK


def cmd_solve(args, fd_order, tol) -> int:
    from . import io, solver

    model = _load_model(args, fd_order)
    op = solver.assemble(model, fd_order=fd_order)
    eigs = solver.solve_eigenstates(op, args.states)
    os.makedirs(args.out, exist_ok=True)
    io.write_table(os.path.join(args.out, "eigenvalues.csv"),
                   ["state", "energy"],
                   [(k, s.energy) for k, s in enumerate(eigs)])
    for k, s in enumerate(eigs):
        io.write_field(os.path.join(args.out, f"psi_{k:03d}.csv"),
                       model.grid, s.psi, "psi")
    manifest = {
        "command": "solve",
        "model": model.name,
        "fd_order": fd_order,
        "energies": [s.energy for s in eigs],
        "operator_asymmetry": op.asymmetry,
        "grid": _grid_summary(model.grid),
        "versions": _versions(),
    }
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    for k, s in enumerate(eigs):
        print(f"E[{k}] = {s.energy:.12g}")
    return EXIT_OK


def cmd_factorize(args, fd_order, tol) -> int:
    from . import factorization, io

    model = _load_model(args, fd_order)
    psi = io.read_field(args.infile, model.grid)
    ref = args.ref if args.convention == "reference-overlap" else None
    fact = factorization.factorize(model.grid, psi, convention=args.convention, ref=ref)
    a_mu, residue = factorization.compute_vector_potential(model.grid, fact.phi,
                                                           fd_order=fd_order)
    os.makedirs(args.out, exist_ok=True)
    io.write_field(os.path.join(args.out, "chi.csv"), model.grid, fact.chi, "chi")
    io.write_field(os.path.join(args.out, "phi.csv"), model.grid, fact.phi, "phi")
    io.write_field(os.path.join(args.out, "a_mu.csv"), model.grid, a_mu, "a")
    io.write_mask(os.path.join(args.out, "mask.csv"), model.grid, fact.mask)
    recon = _reconstruction_error(fact, psi)
    ok = recon <= tol["reconstruction"]
    manifest = {
        "command": "factorize",
        "model": model.name,
        "convention": args.convention,
        "reconstruction_error": recon,
        "reconstruction_threshold": tol["reconstruction"],
        "connection_imag_residue": residue,
        "masked_fraction": fact.masked_fraction,
        "passed": ok,
        "grid": _grid_summary(model.grid),
        "versions": _versions(),
    }
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"reconstruction error {recon:.3e} "
          f"({'PASS' if ok else 'FAIL'} at {tol['reconstruction']:.0e})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_geometry(args, fd_order, tol) -> int:
    import numpy as np

    from . import ef_geometry, io

    model = _load_model(args, fd_order)
    phi = io.read_field(args.infile, model.grid)
    h_bo = model.h_bo_on_grid()
    geom = ef_geometry.compute_ef_geometry(model.grid, model.metric, phi, h_bo,
                                           fd_order=fd_order)
    os.makedirs(args.out, exist_ok=True)
    grid = model.grid
    io.write_field(os.path.join(args.out, "qgt.csv"), grid, geom.h, "h")
    io.write_field(os.path.join(args.out, "metric.csv"), grid, geom.g, "g")
    io.write_field(os.path.join(args.out, "christoffel_first.csv"), grid,
                   geom.upsilon_first, "ups")
    io.write_field(os.path.join(args.out, "gamma.csv"), grid, geom.gamma, "gamma")
    io.write_field(os.path.join(args.out, "eps_geo.csv"), grid, geom.eps_geo, "eps_geo")
    io.write_field(os.path.join(args.out, "eps_bo.csv"), grid, geom.eps_bo, "eps_bo")
    io.write_field(os.path.join(args.out, "a_mu.csv"), grid, geom.a_mu, "a")
    io.write_mask(os.path.join(args.out, "flagged.csv"), grid, geom.flagged)
    g_err = float(np.max(np.abs(geom.g - geom.h.real)))
    minv = model.metric.inverse_mass_checked(grid.points())
    contr = float(np.max(np.abs(
        geom.eps_geo - 0.5 * np.einsum("...mn,...mn->...", minv, geom.g))))
    ok = (g_err <= tol["contraction_identity"] and contr <= tol["contraction_identity"])
    manifest = {
        "command": "geometry",
        "model": model.name,
        "fd_order": fd_order,
        "metric_vs_re_qgt": g_err,
        "contraction_identity": contr,
        "identity_threshold": tol["contraction_identity"],
        "upsilon_asymmetry": geom.upsilon_asymmetry,
        "connection_imag_residue": geom.a_imag_residue,
        "flagged_fraction": float(np.mean(geom.flagged)),
        "passed": ok,
        "grid": _grid_summary(grid),
        "versions": _versions(),
    }
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"g vs Re h {g_err:.3e}, contraction {contr:.3e} "
          f"({'PASS' if ok else 'FAIL'} at {tol['contraction_identity']:.0e})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_residuals(args, fd_order, tol) -> int:
    from . import io

    model = _load_model(args, fd_order)
    psi = io.read_field(args.psi, model.grid)
    os.makedirs(args.out, exist_ok=True)
    if args.mode == "dynamic":
        return _dynamic_residuals(args, model, psi, fd_order, tol)

    from . import ef_geometry, factorization, residuals, solver

    op = solver.build_full_hamiltonian(model.grid, model.metric, model.h_bo_on_grid(),
                                       fd_order=fd_order)
    energy = args.energy if args.energy is not None else op.expectation(psi)
    fact = factorization.factorize(model.grid, psi)
    h_bo = model.h_bo_on_grid()
    geom = ef_geometry.compute_ef_geometry(model.grid, model.metric, fact.phi, h_bo,
                                           fd_order=fd_order)
    report = residuals.evaluate(model.grid, model.metric, fact, geom, h_bo, energy,
                                fd_order=fd_order)
    nuc_rel = report.norms["nuclear_norm"] / max(abs(energy), 1e-300)
    ok = (nuc_rel <= tol["nuclear_residual_rel"]
          and report.norms["electronic_norm"] <= tol["electronic_residual"]
          and report.norms["phi_projection"] <= tol["projection_triviality"])
    payload = {
        "nuclear_norm": report.norms["nuclear_norm"],
        "electronic_norm": report.norms["electronic_norm"],
        "phi_projection": report.norms["phi_projection"],
        "projected": {
            "direction_norm": report.norms["projected_direction_norm"],
            "frame_norm": report.norms["projected_frame_norm"],
            "form_disagreement": report.norms["form_disagreement"],
        },
        "masked_fraction": report.masked_fraction,
        "grid": _grid_summary(model.grid),
        "energy": energy,
        "nuclear_norm_rel": nuc_rel,
        "thresholds": {
            "nuclear_residual_rel": tol["nuclear_residual_rel"],
            "electronic_residual": tol["electronic_residual"],
            "projection_triviality": tol["projection_triviality"],
        },
        "passed": ok,
    }
    _write_json(os.path.join(args.out, "report.json"), payload)
    print(f"nuclear {report.norms['nuclear_norm']:.3e} (rel {nuc_rel:.3e}), "
          f"electronic {report.norms['electronic_norm']:.3e} "
          f"({'PASS' if ok else 'FAIL'})")
    return EXIT_OK if ok else EXIT_FAIL


def _dynamic_residuals(args, model, psi, fd_order, tol) -> int:
    import numpy as np

    from . import factorization, io, solver

    if not (args.psi_prev and args.psi_next and args.dt):
        raise SystemExit("dynamic mode requires --psi-prev, --psi-next and --dt")
    psi_prev = io.read_field(args.psi_prev, model.grid)
    psi_next = io.read_field(args.psi_next, model.grid)
    op = solver.build_full_hamiltonian(model.grid, model.metric, model.h_bo_on_grid(),
                                       fd_order=fd_order)
    # full-equation check with a central time difference
    lhs = 1j * (psi_next - psi_prev) / (2.0 * args.dt)
    rhs = op.apply(psi)
    resid = op.norm(lhs - rhs) / max(op.norm(rhs), 1e-300)
    fact = factorization.factorize(model.grid, psi)
    f_prev = factorization.factorize(model.grid, psi_prev)
    f_next = factorization.factorize(model.grid, psi_next)
    a0, a0_residue = factorization.compute_scalar_potential(
        f_prev.phi, fact.phi, f_next.phi, args.dt)
    payload = {
        "nuclear_norm": resid,
        "electronic_norm": resid,
        "phi_projection": 0.0,
        "projected": {"time_derivative_relative_residual": resid},
        "masked_fraction": fact.masked_fraction,
        "grid": _grid_summary(model.grid),
        "scalar_potential_max": float(np.max(np.abs(a0))),
        "scalar_potential_imag_residue": a0_residue,
        "dt": args.dt,
    }
    _write_json(os.path.join(args.out, "report.json"), payload)
    print(f"central-difference equation residual (relative): {resid:.3e}")
    return EXIT_OK


def cmd_gauge_sweep(args, fd_order, tol) -> int:
    import numpy as np

    from . import ef_geometry, factorization, io, residuals, solver

    model = _load_model(args, fd_order)
    op, eigs, fact, geom, base_report = _pipeline(model, fd_order)
    h_bo = model.h_bo_on_grid()
    rng = np.random.default_rng(args.seed)

    def observables(f, g, rep):
        return {
            "eps_bo": g.eps_bo, "eps_geo": g.eps_geo, "g": g.g, "h": g.h,
            **{k: v for k, v in rep.norms.items()},
        }

    base_obs = observables(fact, geom, base_report)
    spreads = {k: 0.0 for k in base_obs}
    shift_errors = []
    samples = []
    for s in range(args.count):
        lam = factorization.random_smooth_lambda(model.grid, rng)
        f2 = factorization.gauge_transform(fact, lam)
        g2 = ef_geometry.compute_ef_geometry(model.grid, model.metric, f2.phi, h_bo,
                                             fd_order=fd_order,
                                             gauge_phase=f2.gauge_phase)
        rep2 = residuals.evaluate(model.grid, model.metric, f2, g2, h_bo,
                                  eigs[0].energy, fd_order=fd_order)
        obs2 = observables(f2, g2, rep2)
        for k in spreads:
            a, b = np.asarray(base_obs[k]), np.asarray(obs2[k])
            spreads[k] = max(spreads[k], float(np.max(np.abs(a - b))))
        from . import grids

        grad_lam = grids.gradient(model.grid, lam, order=fd_order, mode="field")
        shift_err = float(np.max(np.abs((g2.a_mu - geom.a_mu) - grad_lam)))
        shift_errors.append(shift_err)
        samples.append({"sample": s, "a_shift_error": shift_err})
    max_spread = max(spreads.values()) if spreads else 0.0
    max_shift = max(shift_errors) if shift_errors else 0.0
    ok = max_spread <= tol["gauge_spread"] and max_shift <= tol["fd_vector_shift"]
    os.makedirs(args.out, exist_ok=True)
    io.write_table(os.path.join(args.out, "gauge_sweep.csv"),
                   ["sample", "a_shift_error"],
                   [(r["sample"], r["a_shift_error"]) for r in samples])
    manifest = {
        "command": "gauge-sweep",
        "model": model.name,
        "count": args.count,
        "seed": args.seed,
        "spreads": spreads,
        "max_spread": max_spread,
        "spread_threshold": tol["gauge_spread"],
        "max_a_shift_error": max_shift,
        "a_shift_threshold": tol["fd_vector_shift"],
        "passed": ok,
        "grid": _grid_summary(model.grid),
        "versions": _versions(),
    }
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"max spread {max_spread:.3e}, max A-shift error {max_shift:.3e} "
          f"({'PASS' if ok else 'FAIL'})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_chart_sweep(args, fd_order, tol) -> int:
    import numpy as np

    from . import geometry, models

    overrides = {"n_nodes": args.nodes} if args.nodes else None
    base = models.builtin(args.base, overrides, fd_order=fd_order)
    barred = models.builtin(args.barred, overrides, fd_order=fd_order)
    if barred.chart is None:
        raise SystemExit(f"model {args.barred!r} carries no coordinate chart")

    _, eigs_b, fact_b, geom_b, _ = _pipeline(base, fd_order)
    _, eigs_r, fact_r, geom_r, _ = _pipeline(barred, fd_order)
    e0, e1 = eigs_b[0].energy, eigs_r[0].energy
    e_delta = abs(e1 - e0) / max(abs(e0), 1e-300)

    # compose the base scalars out to the barred nodes and compare node-wise.
    # The base grid is the finer of the two in plain coordinates, so spline
    # interpolation error there is far below the finite-difference error being
    # measured.  Low-density nodes carry no conditional-field signal and are
    # excluded.
    from scipy.interpolate import CubicSpline

    q_plain = np.asarray(barred.chart.inverse(barred.grid.points()))[..., 0]
    base_q = base.grid.points()[..., 0]
    spl_bo = CubicSpline(base_q, geom_b.eps_bo)
    spl_geo = CubicSpline(base_q, geom_b.eps_geo)
    dens_r = np.abs(fact_r.chi) ** 2
    sig = dens_r > 1e-6 * dens_r.max()
    bo_delta = float(np.max(np.abs(spl_bo(q_plain) - geom_r.eps_bo)[sig]))
    geo_delta = float(np.max(np.abs(spl_geo(q_plain) - geom_r.eps_geo)[sig]))
    Qb = barred.chart.forward(base.grid.points())

    pi_base = geometry.compute_pi(base.metric, base.grid.points())
    pi_field = geometry.PiSymbolField(metric=base.metric)
    pi_transformed = geometry.transform_pi(barred.chart, pi_field, base.grid.points())
    pulled = geometry.pullback_metric(barred.chart, base.metric)
    pi_recomputed = geometry.compute_pi(pulled, Qb)
    interior = np.zeros(base.grid.shape, dtype=bool)
    interior[3:-3] = True
    pi_resid = float(np.max(np.abs(pi_transformed - pi_recomputed)[interior]))

    ok = (e_delta <= tol["eigenvalue_chart_rel"]
          and bo_delta <= tol["scalar_chart_delta"]
          and geo_delta <= tol["scalar_chart_delta"]
          and pi_resid <= tol["fd_transform"])
    os.makedirs(args.out, exist_ok=True)
    manifest = {
        "command": "chart-sweep",
        "base": base.name,
        "barred": barred.name,
        "fd_order": fd_order,
        "eigenvalue_relative_delta": e_delta,
        "eigenvalue_threshold": tol["eigenvalue_chart_rel"],
        "eps_bo_delta": bo_delta,
        "eps_geo_delta": geo_delta,
        "scalar_threshold": tol["scalar_chart_delta"],
        "pi_transform_residual": pi_resid,
        "pi_transform_threshold": tol["fd_transform"],
        "passed": ok,
        "versions": _versions(),
    }
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"eigenvalue delta {e_delta:.3e}, eps deltas {bo_delta:.3e}/{geo_delta:.3e}, "
          f"pi residual {pi_resid:.3e} ({'PASS' if ok else 'FAIL'})")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_run(args, fd_order, tol) -> int:
    import numpy as np

    from . import io

    valid = ("solve", "factorize", "geometry", "residuals")
    if args.all or not args.stages:
        stages = list(valid)
    else:
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        bad = [s for s in stages if s not in valid]
        if bad:
            raise SystemExit(f"unknown stage(s) {bad}; valid: {', '.join(valid)}")

    model = _load_model(args, fd_order)
    os.makedirs(args.out, exist_ok=True)
    checks: dict[str, dict] = {}
    manifest = {
        "command": "run",
        "model": model.name,
        "stages": stages,
        "fd_order": fd_order,
        "seed": args.seed,
        "tolerance_profile": args.tolerance_profile,
        "thresholds": {k: v for k, v in tol.items() if k != "name"},
        "grid": _grid_summary(model.grid),
        "versions": _versions(),
    }

    from . import ef_geometry, factorization, residuals, solver

    op = solver.assemble(model, fd_order=fd_order)
    eigs = solver.solve_eigenstates(op, args.states)
    state = eigs[0]
    if "solve" in stages:
        io.write_table(os.path.join(args.out, "eigenvalues.csv"),
                       ["state", "energy"],
                       [(k, s.energy) for k, s in enumerate(eigs)])
        io.write_field(os.path.join(args.out, "psi_000.csv"), model.grid,
                       state.psi, "psi")
        manifest["energies"] = [s.energy for s in eigs]
        manifest["operator_asymmetry"] = op.asymmetry

    fact = geom = report = None
    if {"factorize", "geometry", "residuals"} & set(stages):
        fact = factorization.factorize(model.grid, state.psi)
        recon = _reconstruction_error(fact, state.psi)
        checks["reconstruction"] = {
            "value": recon, "threshold": tol["reconstruction"],
            "passed": recon <= tol["reconstruction"],
        }
        if "factorize" in stages:
            io.write_field(os.path.join(args.out, "chi.csv"), model.grid,
                           fact.chi, "chi")
            io.write_field(os.path.join(args.out, "phi.csv"), model.grid,
                           fact.phi, "phi")
            io.write_mask(os.path.join(args.out, "mask.csv"), model.grid, fact.mask)
        manifest["masked_fraction"] = fact.masked_fraction

    h_bo = model.h_bo_on_grid()
    if {"geometry", "residuals"} & set(stages):
        geom = ef_geometry.compute_ef_geometry(model.grid, model.metric, fact.phi,
                                               h_bo, fd_order=fd_order)
        g_err = float(np.max(np.abs(geom.g - geom.h.real)))
        minv = model.metric.inverse_mass_checked(model.grid.points())
        contr = float(np.max(np.abs(
            geom.eps_geo - 0.5 * np.einsum("...mn,...mn->...", minv, geom.g))))
        checks["metric_vs_re_qgt"] = {
            "value": g_err, "threshold": tol["contraction_identity"],
            "passed": g_err <= tol["contraction_identity"],
        }
        checks["contraction_identity"] = {
            "value": contr, "threshold": tol["contraction_identity"],
            "passed": contr <= tol["contraction_identity"],
        }
        if "geometry" in stages:
            io.write_field(os.path.join(args.out, "metric.csv"), model.grid,
                           geom.g, "g")
            io.write_field(os.path.join(args.out, "eps_geo.csv"), model.grid,
                           geom.eps_geo, "eps_geo")
            io.write_field(os.path.join(args.out, "eps_bo.csv"), model.grid,
                           geom.eps_bo, "eps_bo")
            io.write_field(os.path.join(args.out, "a_mu.csv"), model.grid,
                           geom.a_mu, "a")

    if "residuals" in stages:
        report = residuals.evaluate(model.grid, model.metric, fact, geom, h_bo,
                                    state.energy, fd_order=fd_order)
        nuc_rel = report.norms["nuclear_norm"] / max(abs(state.energy), 1e-300)
        checks["nuclear_residual_rel"] = {
            "value": nuc_rel, "threshold": tol["nuclear_residual_rel"],
            "passed": nuc_rel <= tol["nuclear_residual_rel"],
        }
        checks["electronic_residual"] = {
            "value": report.norms["electronic_norm"],
            "threshold": tol["electronic_residual"],
            "passed": report.norms["electronic_norm"] <= tol["electronic_residual"],
        }
        checks["projection_triviality"] = {
            "value": report.norms["phi_projection"],
            "threshold": tol["projection_triviality"],
            "passed": report.norms["phi_projection"] <= tol["projection_triviality"],
        }
        manifest["residual_norms"] = dict(report.norms)
        _write_json(os.path.join(args.out, "report.json"), {
            "nuclear_norm": report.norms["nuclear_norm"],
            "electronic_norm": report.norms["electronic_norm"],
            "phi_projection": report.norms["phi_projection"],
            "projected": {
                "direction_norm": report.norms["projected_direction_norm"],
                "frame_norm": report.norms["projected_frame_norm"],
                "form_disagreement": report.norms["form_disagreement"],
            },
            "masked_fraction": report.masked_fraction,
            "grid": _grid_summary(model.grid),
        })

    ok = all(c["passed"] for c in checks.values())
    manifest["checks"] = checks
    manifest["passed"] = ok
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    for name, c in checks.items():
        status = "PASS" if c["passed"] else "FAIL"
        print(f"{status} {name}: {c['value']:.3e} (threshold {c['threshold']:.0e})")
    if not checks:
        print("no assertions enabled for the selected stages")
    return EXIT_OK if ok else EXIT_FAIL


# ----------------------------------------------------------------------------

_COMMANDS = {
    "run": cmd_run,
    "solve": cmd_solve,
    "factorize": cmd_factorize,
    "geometry": cmd_geometry,
    "residuals": cmd_residuals,
    "gauge-sweep": cmd_gauge_sweep,
    "chart-sweep": cmd_chart_sweep,
    "models": cmd_models,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    fd_order = args.fd_order
    if fd_order is None:
        # chart comparisons need the higher order: the barred grid is locally
        # coarser wherever the chart stretches, so truncation error dominates
        fd_order = 6 if args.command == "chart-sweep" else 4
    try:
        _apply_thread_cap(args.threads)
        tol = _resolve_tolerances(args)
        return _COMMANDS[args.command](args, fd_order, tol)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(f"efgeo: {exc.code}", file=sys.stderr)
            return EXIT_USAGE
        raise
    except Exception as exc:  # stage failure: diagnostic + nonzero exit
        print(f"efgeo: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
