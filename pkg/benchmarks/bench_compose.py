"""Compare the compiled and pure-Python state-space kernels.

    python3 benchmarks/bench_compose.py [--repeat N]
"""

from __future__ import annotations

import argparse
import statistics
import time
from pathlib import Path

from ramkit import riskspace
from ramkit.dsl import load_model
from ramkit.model import CausalFactor, Constraint, ConstraintKind, EndangermentClass, effective_constraints
from ramkit.riskspace import CompiledScope, compose_situation, scope_factors

FIXTURE = Path(__file__).resolve().parent.parent / "src" / "ramkit" / "fixtures" / "fig4a.ram"


def chain(n: int):
    factors = [CausalFactor(f"f{i}", EndangermentClass.FAILURE, direct=i % 3 == 0) for i in range(n)]
    constraints = [Constraint(ConstraintKind.REQUIRES, f"f{i + 1}", f"f{i}") for i in range(0, n - 1, 2)]
    return factors, constraints


def cases():
    for n in (6, 8, 10):
        factors = [CausalFactor(f"f{i}", EndangermentClass.FAILURE) for i in range(n)]
        yield f"unconstrained n={n}", factors, []
    for n in (10, 12):
        yield (f"requires-chain n={n}", *chain(n))
    model = load_model(FIXTURE)
    for situation in ("drive", "driveAtL4Generic"):
        yield f"fixture {situation}", scope_factors(model, situation), model_constraints(model, situation)


def model_constraints(model, situation):
    return sorted(effective_constraints(model, situation), key=Constraint.sort_key)


def timed(kernel, args, repeat: int) -> tuple[float, int, int]:
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        (a, _, _), (src, _, _, _) = kernel.explore(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples), len(a), len(src)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if riskspace._ckernel is None:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'case':32} {'states':>8} {'trans':>9} {'python s':>9} {'cython s':>9} {'speedup':>8}")
    for name, factors, constraints in cases():
        scope = CompiledScope.build(factors, constraints).args()
        py, states, trans = timed(riskspace._pykernel, scope, args.repeat)
        cy, states_c, trans_c = timed(riskspace._ckernel, scope, args.repeat)
        assert (states, trans) == (states_c, trans_c), name
        print(f"{name:32} {states:8d} {trans:9d} {py:9.4f} {cy:9.4f} {py / cy:7.1f}x")
    model = load_model(FIXTURE)
    for backend in ("python", "cython"):
        t0 = time.perf_counter()
        compose_situation(model, "driveAtL1Generic", backend=backend)
        print(f"end-to-end compose driveAtL1Generic [{backend}]: {time.perf_counter() - t0:.3f} s")


if __name__ == "__main__":
    main()
