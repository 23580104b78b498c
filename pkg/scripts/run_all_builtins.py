#!/usr/bin/env python3
"""Full pipeline (solve -> factorize -> geometry -> residuals) on every
built-in model; prints one summary row per model.

Usage: python3 scripts/run_all_builtins.py [--fd-order N] [--states K]
"""

import argparse

import numpy as np

from efgeo import ef_geometry, factorization, models, residuals, solver


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--fd-order", type=int, default=4, choices=(2, 4, 6))
    ap.add_argument("--states", type=int, default=1)
    args = ap.parse_args()

    header = f"{'model':<20} {'E0':>14} {'nuclear':>10} {'electronic':>10} " \
             f"{'eps_geo max':>11} {'masked':>7}"
    print(header)
    print("-" * len(header))
    for name in models.BUILTIN_NAMES:
        model = models.builtin(name, fd_order=args.fd_order)
        op = solver.assemble(model, fd_order=args.fd_order)
        state = solver.solve_eigenstates(op, args.states)[0]
        fact = factorization.factorize(model.grid, state.psi)
        h_bo = model.h_bo_on_grid()
        geom = ef_geometry.compute_ef_geometry(model.grid, model.metric, fact.phi,
                                               h_bo, fd_order=args.fd_order)
        rep = residuals.evaluate(model.grid, model.metric, fact, geom, h_bo,
                                 state.energy, fd_order=args.fd_order)
        print(f"{name:<20} {state.energy:>14.8f} "
              f"{rep.norms['nuclear_norm']:>10.2e} "
              f"{rep.norms['electronic_norm']:>10.2e} "
              f"{float(np.max(geom.eps_geo)):>11.4e} "
              f"{rep.masked_fraction:>7.3f}")


if __name__ == "__main__":
    main()
