#!/usr/bin/env python3
"""Grid-refinement study of the stationary residual norms.

Solves the two-level crossing model at a sequence of node counts, reports the
weighted nuclear and electronic residual norms and the observed convergence
order between successive refinements.

Usage: python3 scripts/refinement_study.py [--nodes 101 201 401] [--fd-order N]
"""

import argparse
import math

from efgeo import ef_geometry, factorization, models, residuals, solver


def residual_norms(name: str, n_nodes: int, fd_order: int):
    model = models.builtin(name, {"n_nodes": n_nodes}, fd_order=fd_order)
    op = solver.assemble(model, fd_order=fd_order)
    state = solver.solve_eigenstates(op, 1)[0]
    fact = factorization.factorize(model.grid, state.psi)
    h_bo = model.h_bo_on_grid()
    geom = ef_geometry.compute_ef_geometry(model.grid, model.metric, fact.phi,
                                           h_bo, fd_order=fd_order)
    rep = residuals.evaluate(model.grid, model.metric, fact, geom, h_bo,
                             state.energy, fd_order=fd_order)
    return state.energy, rep.norms["nuclear_norm"], rep.norms["electronic_norm"]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default="avoided-crossing")
    ap.add_argument("--nodes", type=int, nargs="+", default=[101, 201, 401])
    ap.add_argument("--fd-order", type=int, default=4, choices=(2, 4, 6))
    args = ap.parse_args()

    rows = []
    for n in args.nodes:
        e, nuc, el = residual_norms(args.model, n, args.fd_order)
        rows.append((n, e, nuc, el))

    print(f"{'nodes':>6} {'E0':>16} {'nuclear':>12} {'order':>6} "
          f"{'electronic':>12} {'order':>6}")
    for i, (n, e, nuc, el) in enumerate(rows):
        if i == 0:
            print(f"{n:>6} {e:>16.10f} {nuc:>12.3e} {'-':>6} {el:>12.3e} {'-':>6}")
        else:
            n0, _, nuc0, el0 = rows[i - 1]
            ratio = math.log(n / n0)
            p_nuc = math.log(nuc0 / nuc) / ratio
            p_el = math.log(el0 / el) / ratio
            print(f"{n:>6} {e:>16.10f} {nuc:>12.3e} {p_nuc:>6.2f} "
                  f"{el:>12.3e} {p_el:>6.2f}")


if __name__ == "__main__":
    main()
