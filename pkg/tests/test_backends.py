from __future__ import annotations

import os
import random
import subprocess
import sys

import pytest

from oracles import random_model
from ramkit import riskspace
from ramkit.model import CausalFactor, EndangermentClass
from ramkit.riskspace import CompiledScope, compose_factors, compose_situation

compiled = pytest.mark.skipif(riskspace._ckernel is None, reason="compiled kernel not built")


def columns(rs):
    g = rs.graph
    return tuple(list(c) for c in (g.active, g.mitigated, g.mishap, g.source, g.factor, g.kind, g.target))


def same(a, b):
    return columns(a) == columns(b) and a.states == b.states and a.transitions == b.transitions


@compiled
def test_random_models_agree():
    rng = random.Random(77)
    for _ in range(150):
        factors, constraints = random_model(rng, max_factors=5, max_constraints=8)
        assert same(
            compose_factors(factors, constraints, backend="python"),
            compose_factors(factors, constraints, backend="cython"),
        )


@compiled
def test_raw_kernels_agree_on_arbitrary_encodings():
    rng = random.Random(3)
    for _ in range(300):
        n = rng.randint(1, 6)
        others = lambda i: [1 << j for j in range(n) if j != i]  # noqa: E731
        args = (
            n,
            tuple(rng.randint(0, 7) for _ in range(n)),
            tuple(rng.choice([0] + others(i)) for i in range(n)),
            tuple(rng.choice([0] + others(i)) for i in range(n)),
            tuple(tuple(sorted(rng.sample([j for j in range(n) if j != i], rng.randint(0, n - 1)))) for i in range(n)),
            tuple(rng.choice([0, 0] + others(i)) for i in range(n)),
        )
        assert riskspace._pykernel.explore(*args) == riskspace._ckernel.explore(*args)


@compiled
def test_fixture_situations_agree(fig4a):
    for sid in ("drive", "leaveParkingLot", "start"):
        assert same(compose_situation(fig4a, sid, backend="python"), compose_situation(fig4a, sid, backend="cython"))


@compiled
def test_initial_state_agrees(fig4a):
    rs = compose_situation(fig4a, "drive")
    start = rs.state("W,O,nC")
    assert same(
        compose_situation(fig4a, "drive", initial=start, backend="python"),
        compose_situation(fig4a, "drive", initial=start, backend="cython"),
    )


def test_backend_selection():
    wide = [CausalFactor(f"f{i}", EndangermentClass.FAILURE) for i in range(22)]
    assert riskspace._select_kernel(None, 22) is riskspace._pykernel
    assert riskspace._select_kernel("python", 3) is riskspace._pykernel
    with pytest.raises(ValueError):
        riskspace._select_kernel("fortran", 3)
    if riskspace._ckernel is not None:
        with pytest.raises(ValueError):
            compose_factors(wide, backend="cython")
        with pytest.raises(ValueError):
            riskspace._ckernel.explore(*CompiledScope.build(wide, ()).args())


def test_pure_python_fallback_via_environment():
    env = dict(os.environ, RAMKIT_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from ramkit import riskspace; print(riskspace.BACKEND, riskspace._ckernel)"],
        capture_output=True, text=True, env=env, check=True,
    ).stdout.split()
    assert out == ["python", "None"]
