"""Compiled versus pure-Python kernels on the two hot paths.

    python benchmarks/bench_kernels.py [--repeat 5]

``shooting`` is one MPC linearization at the default horizon (rollout,
sensitivities and constraint Jacobian); ``truth_advance`` is one 5 ms
control period of the compliant simulator (250 substeps).  ``solve_mpc``
times a full SQP solve from a perturbed balance state.
"""

import argparse
import timeit

import numpy as np

from thrustmip import _backend
from thrustmip.contact import COND_MAX, SINGULAR_BAND, SINGULAR_DTHETA
from thrustmip.nmpc import MpcConfig, solve_mpc
from thrustmip.params import load_params
from thrustmip.truth import GroundModel, from_reduced


def cases(k, params):
    p = params.as_array()
    ground = GroundModel.matching(params)
    g = ground.as_array()
    x0 = np.array([0.0, 0.05, 0.2, -0.1])
    U = np.column_stack([np.full(10, 0.1), np.zeros(10)])
    s = np.asarray(from_reduced(x0, params, ground))
    cfg = MpcConfig.for_params(params)
    ref = np.zeros((cfg.n_h + 1, 4))
    return {
        "shooting": lambda: k.shooting(x0, U, 0.005, p, 0.0, SINGULAR_DTHETA, SINGULAR_BAND,
                                       COND_MAX),
        "truth_advance": lambda: k.truth_advance(s, U[0], p, g, 2e-5, 250, 0.02),
        "solve_mpc": lambda: solve_mpc(x0, ref, U, params, cfg, k),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    params = load_params()
    names = [n for n in ("python", "compiled") if n in _backend.available()]
    results = {}
    for name in names:
        k = _backend.get(name)
        for case, fn in cases(k, params).items():
            timer = timeit.Timer(fn)
            number, _ = timer.autorange()
            best = min(timer.repeat(repeat=args.repeat, number=number)) / number
            results[(case, name)] = best
    print(f"{'kernel':<15}" + "".join(f"{n:>14}" for n in names) + "   speedup")
    for case in ("shooting", "truth_advance", "solve_mpc"):
        row = [results[(case, n)] for n in names]
        speed = f"{row[0] / row[-1]:9.1f}x" if len(row) == 2 else ""
        print(f"{case:<15}" + "".join(f"{v * 1e3:11.3f} ms" for v in row) + "  " + speed)


if __name__ == "__main__":
    main()
