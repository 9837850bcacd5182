"""Time the compiled kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--modes 48] [--repeat 5]

Compilation happens in a warm-up call that is not timed. Setting
NSKLAB_NO_NUMBA=1 leaves only the numpy column.
"""

import argparse
import timeit

import numpy as np

from nsklab import _kernels
from nsklab.grid import Grid
from nsklab.model import Polytropic, validate_params
from nsklab.symbols import coefficients


def cases(grid, params, rng):
    co = coefficients(params)
    q = grid.xi_sq
    X = rng.standard_normal((4,) + grid.shape) + 1j * rng.standard_normal((4,) + grid.shape)
    C, D, E = _kernels.exp_coefficients(q, 0.1, *co)
    gk = params.gamma_star + params.kappa_star * q
    apb = params.alpha_star + params.beta_star
    return {
        "exp_coefficients": lambda nb: _kernels.exp_coefficients(q, 0.1, *co, use_numba=nb),
        "phi_coefficients": lambda nb: _kernels.phi_coefficients(q, 0.1, 2, *co, use_numba=nb),
        "apply_block": lambda nb: _kernels.apply_block(
            X, C, D, E, grid.xi_full, q, apb, params.rho_star, gk, use_numba=nb
        ),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--modes", type=int, default=48)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    grid = Grid(3, 40.0, args.modes)
    params = validate_params(1.0, 1.0, 2.0, 1.0, Polytropic(0.5, 2.0))  # complex-pair branch
    backends = [False] + ([True] if _kernels.HAVE_NUMBA else [])
    print(f"grid {args.modes}^3, backend default {_kernels.backend()}, best of {args.repeat}")
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, fn in cases(grid, params, np.random.default_rng(0)).items():
        best = {}
        for nb in backends:
            fn(nb)  # warm-up, includes JIT compilation
            best[nb] = min(timeit.repeat(lambda: fn(nb), number=1, repeat=args.repeat)) * 1e3
        if True in best:
            print(f"{name:<18}{best[False]:>12.2f}{best[True]:>12.2f}{best[False] / best[True]:>10.2f}")
        else:
            print(f"{name:<18}{best[False]:>12.2f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
