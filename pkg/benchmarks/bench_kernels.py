"""
Compare the numba and numpy kernels.

    python benchmarks/bench_kernels.py [--states 2500] [--times 200] [--repeat 5]

Each kernel is called once to trigger compilation before timing.
"""

import argparse
import math
import time

import numpy as np

from ptmetric import _kernels
from ptmetric.dynamics import Propagator
from ptmetric.lindblad import model_lindblad_config
from ptmetric.metric import build_metric
from ptmetric.model import ModelParams, hamiltonian


def best_of(fn, repeat):
    fn()
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def grid_case(n_states, n_times):
    H = hamiltonian(ModelParams.from_eta(math.sqrt(2)))
    m = build_metric(H)
    prop = Propagator.from_hamiltonian(H)
    rng = np.random.default_rng(0)
    psi = rng.normal(size=(n_states, 2)) + 1j * rng.normal(size=(n_states, 2))
    times = np.linspace(0, 20, n_times)
    return (prop.P, prop.Pinv, prop.E, prop.sup.astype(np.int64), m.Upsilon, psi, times)


def lindblad_case():
    cfg = model_lindblad_config(ModelParams(math.sqrt(2), 1.0, math.pi / 2))
    K, A = _kernels.lindblad_generator(cfg.h, cfg.collapse_ops, cfg.rates)
    rho0 = np.array([[0.5, 0.5j], [-0.5j, 0.5]])
    return K, A, rho0, np.linspace(0, 30, 121), 1e-3


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    ap.add_argument("--states", type=int, default=2500)
    ap.add_argument("--times", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    cases = [
        (f"bloch_grid {args.states}x{args.times}", grid_case(args.states, args.times),
         _kernels._bloch_grid_numpy, _kernels._bloch_grid_numba),
        ("rk4_lindblad T=30 dt=1e-3", lindblad_case(), _kernels._rk4_numpy, _kernels._rk4_numba),
    ]
    print(f"{'kernel':32s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, case, f_np, f_nb in cases:
        t_np = best_of(lambda: f_np(*case), args.repeat)
        if f_nb is None:
            print(f"{name:32s} {t_np:10.4f} {'n/a':>10s}")
            continue
        t_nb = best_of(lambda: f_nb(*case), args.repeat)
        diff = float(np.max(np.abs(f_np(*case) - f_nb(*case))))
        print(f"{name:32s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} {diff:9.1e}")


if __name__ == "__main__":
    main()
