"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py --trials 200 --repeat 3

Both backends get identical inputs; the script also checks that they agree
on bit errors and selected branches before printing timings.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from mbthp._kernels import get_backend
from mbthp.modem import QAM16
from mbthp.patterns import build_patterns
from mbthp.simkit import ExperimentConfig
from mbthp.simkit.engine import _sigmas, trial_inputs


def batch_inputs(cfg: ExperimentConfig):
    h, he, lab, nz = (np.stack(a) for a in zip(*(trial_inputs(cfg, t) for t in range(cfg.trials))))
    perms = np.array([p.index for p in build_patterns(cfg.geometry, cfg.effective_branches)])
    return h, he, perms, lab, nz, _sigmas(cfg)


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", type=int, default=8, help="matrix size for the LQ timing")
    args = ap.parse_args(argv)

    compiled, python = get_backend("compiled"), get_backend("python")
    c = QAM16
    rng = np.random.default_rng(0)
    rows = []

    a = (rng.standard_normal((args.size, args.size))
         + 1j * rng.standard_normal((args.size, args.size)))
    reps = 2000
    for name, mod in (("compiled", compiled), ("python", python)):
        t = best_of(lambda: [mod.lq_factor(a) for _ in range(reps)], args.repeat) / reps
        rows.append(("lq_factor", name, t * 1e6, "us/call"))

    l = np.tril(a) + 4 * np.eye(args.size)
    s = c.points[rng.integers(0, c.size, (args.size, 100))]
    for name, mod in (("compiled", compiled), ("python", python)):
        t = best_of(lambda: [mod.thp_feedback(l, s, c.tau, True) for _ in range(200)],
                    args.repeat) / 200
        rows.append(("thp_feedback", name, t * 1e6, "us/packet"))

    for precoder in ("MB-ZF-dTHP", "MB-MMSE-cTHP"):
        cfg = ExperimentConfig(precoder=precoder, branches=4, modulation="QAM16",
                               trials=args.trials, ebno_db=(10.0, 14.0, 18.0))
        inputs = batch_inputs(cfg)
        mmse = "MMSE" in precoder
        cent = "cTHP" in precoder
        results = {}
        for name, mod in (("compiled", compiled), ("python", python)):
            def run(mod=mod):
                return mod.simulate_thp_batch(*inputs, mmse, cent, c.points, c.levels,
                                              c.axis_gray, c.bits_per_axis, c.tau)
            results[name] = run()
            t = best_of(run, args.repeat)
            per = t / (args.trials * len(cfg.ebno_db)) * 1e6
            rows.append((f"simulate {precoder}", name, per, "us/trial-point"))
        a_res, b_res = results["compiled"], results["python"]
        assert np.array_equal(a_res[0], b_res[0]) and np.array_equal(a_res[1], b_res[1])

    print(f"{'kernel':<26}{'backend':<10}{'time':>12}  unit")
    for kernel, backend, t, unit in rows:
        print(f"{kernel:<26}{backend:<10}{t:>12.2f}  {unit}")
    by_kernel = {}
    for kernel, backend, t, _ in rows:
        by_kernel.setdefault(kernel, {})[backend] = t
    print()
    for kernel, t in by_kernel.items():
        print(f"{kernel:<26}speedup {t['python'] / t['compiled']:.1f}x")


if __name__ == "__main__":
    main()
