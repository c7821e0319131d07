import itertools

import numpy as np
import pytest
import sympy as sp

from hsflow import algebra
from hsflow.torus import Grid

PAIRS = ((0, 1), (0, 2), (0, 3), (2, 3), (3, 1), (1, 2))


def perm_sign(seq):
    seq = list(seq)
    s = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                s = -s
            elif seq[i] == seq[j]:
                return 0
    return s


def sym_form(coeffs):
    """Symbolic 2-form {(a, b): c} with a < b from basis coefficients."""
    out = {}
    for c, (a, b) in zip(coeffs, PAIRS):
        key, s = (a, b) if a < b else (b, a), (1 if a < b else -1)
        out[key] = out.get(key, 0) + s * c
    return out


def sym_wedge_top(f, g):
    """Coefficient of e0123 in f ^ g, expanded term by term."""
    tot = 0
    for (a, b), c in f.items():
        for (d, e), k in g.items():
            tot += perm_sign((a, b, d, e)) * c * k
    return sp.expand(tot)


def random_triple(rng, scale=0.3):
    """Random hypersymplectic triple near the standard one (redrawn until valid)."""
    while True:
        t = algebra.standard_triple() + scale * rng.normal(size=(3, 6))
        if algebra.is_hypersymplectic(t)[0]:
            return t


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid8():
    return Grid.torus(8)


@pytest.fixture(scope="session")
def grid16():
    return Grid.torus(16)


def trig_field(grid, rng, shape=(), kmax=2, terms=3):
    """Random band-limited trigonometric field of the given trailing shape."""
    x = grid.mesh()
    out = np.zeros(grid.shape + shape)
    for idx in itertools.product(*(range(n) for n in shape)):
        f = np.zeros(grid.shape)
        for _ in range(terms):
            k = rng.integers(-kmax, kmax + 1, 4)
            f += rng.normal() * np.cos(sum(k[a] * x[a] for a in range(4)) + rng.uniform(0, 6))
        out[(Ellipsis,) + idx] = f
    return out


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
