#!/usr/bin/env python3
"""Smoke test for the weierstrass_mcmc_py extension module.

Builds nothing itself: run `cargo build -p weierstrass-mcmc-py` first, then
`python3 python/smoke_test.py`. The script copies the freshest cdylib out of
target/ under the importable module name and checks the exposed operations
against closed-form values.
"""

import math
import pathlib
import random
import shutil
import sys
import tempfile

REPO = pathlib.Path(__file__).resolve().parents[1]


def load_module():
    candidates = [
        REPO / "target" / profile / name
        for profile in ("debug", "release")
        for name in ("libweierstrass_mcmc_py.so", "weierstrass_mcmc_py.so")
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        sys.exit("no built extension found; run: cargo build -p weierstrass-mcmc-py")
    newest = max(built, key=lambda p: p.stat().st_mtime)
    stage = pathlib.Path(tempfile.mkdtemp(prefix="wmcmc_py_"))
    shutil.copy2(newest, stage / "weierstrass_mcmc_py.so")
    sys.path.insert(0, str(stage))
    import weierstrass_mcmc_py

    return weierstrass_mcmc_py


def check(name, ok):
    if not ok:
        sys.exit(f"FAIL: {name}")
    print(f"ok: {name}")


def normal_pdf(x, mean, var):
    return math.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)


def main():
    wm = load_module()
    rng = random.Random(20240817)

    c = 1.0 / math.sqrt(2.0 * math.pi)
    check("kernel peak", abs(wm.kernel_eval(0.0) - c) < 1e-12)
    check("kernel decay", abs(wm.kernel_eval(1.0) - c * math.exp(-0.5)) < 1e-12)
    check("bias bound", abs(wm.bias_bound(c, 0.2) - c * 0.04 / 2.0) < 1e-12)

    grid = [-8.0 + 16.0 * i / 2000 for i in range(2001)]
    dens = [normal_pdf(x, 0.0, 1.0) for x in grid]
    smoothed = wm.weierstrass_transform(grid, dens, 0.2)
    sup_err = max(abs(a - b) for a, b in zip(smoothed, dens))
    check("transform bias within bound", sup_err <= wm.bias_bound(c, 0.2) * 1.0001)

    mult = wm.refinement_multipliers(20, 10)
    check(
        "refinement schedule",
        len(mult) == 10
        and abs(mult[0] - 20.0) < 1e-12
        and abs(mult[-1] - 0.05) < 1e-12
        and all(a >= b for a, b in zip(mult, mult[1:])),
    )

    h0 = wm.fukunaga_bandwidth(1000, [[2.0]])[0][0]
    expected = 2.0 * (3.0 / 4.0) ** (-2.0 / 5.0) * 1000.0 ** (-2.0 / 5.0)
    check("fukunaga rule", abs(h0 - expected) < 1e-12)

    mean, cov = wm.conditional_gaussian([[0.0], [2.0]], [1.0, 1.0])
    check("conditional gaussian", abs(mean[0] - 1.0) < 1e-12 and abs(cov[0][0] - 0.5) < 1e-12)

    exact = 0.5 * normal_pdf(-1.5, -1.5, 0.125) + 0.5 * normal_pdf(-1.5, 1.0, 0.125)
    check("toy density", abs(wm.toy_density("p12", -1.5) - exact) < 1e-12)

    xs = [rng.gauss(0.0, 1.0) for _ in range(4000)]
    far = [x + 12.0 for x in xs]
    check("tv identical", wm.tv_distance(xs, xs) < 1e-10)
    check("tv disjoint", wm.tv_distance(xs, far) > 0.99)

    draws = [[rng.gauss(0.0, 1.0), rng.gauss(2.0, 0.5)] for _ in range(2000)]
    check("kl identical", wm.gaussian_kl(draws, draws) < 1e-8)

    a = [[0.0], [2.0]]
    b = [[2.0], [0.0]]
    avg = wm.combine_average([a, b])
    check("simple average", avg == [[1.0], [1.0]])
    same = [[rng.gauss(1.0, 0.3), rng.gauss(-1.0, 0.6)] for _ in range(500)]
    weighted = wm.combine_weighted([same, same])
    agree = all(
        abs(u - v) < 1e-9 for ru, rv in zip(weighted, same) for u, v in zip(ru, rv)
    )
    check("weighted average of identical subsets", agree)

    accepted, rate = wm.weierstrass_reject([same, same], 0.1, 11)
    check("rejection on identical subsets", rate == 1.0 and len(accepted) == len(same))

    refined = wm.refine_toy(500, 10, 7)
    left = sum(1 for t in refined if t < -0.5)
    right = sum(1 for t in refined if t > 0.3)
    mean_ref = sum(refined) / len(refined)
    check(
        "toy refinement",
        len(refined) == 500
        and all(math.isfinite(t) for t in refined)
        and left > 50
        and right > 50
        and abs(mean_ref + 0.25) < 0.4,
    )

    model = wm.BetaBernoulli()
    want = (0.01 - 1.0 + 5.0) * math.log(0.5) + (0.01 - 1.0 + 5.0) * math.log(0.5)
    check("beta-bernoulli log posterior", abs(model.log_posterior(0.5, 5.0, 10.0) - want) < 1e-12)
    check("beta-bernoulli posterior params", model.posterior_params(3.0, 10.0) == (3.01, 7.01))

    print("smoke test passed")


if __name__ == "__main__":
    main()
