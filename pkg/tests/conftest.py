import functools

import numpy as np
import pytest

from charbc.bc import BoundaryOperatorSpec
from charbc.experiments import build_problem, resolve_problem
from charbc.ibvp import run
from charbc.sbp import Grid
from charbc.specmat import split


def random_symmetric(rng, n):
    m = rng.uniform(-1.0, 1.0, (n, n))
    return (m + m.T) / 2.0


def random_split(rng, nmin=1, nmax=8, need_minus=False):
    while True:
        sp = split(random_symmetric(rng, int(rng.integers(nmin, nmax + 1))))
        if sp.n_neg > 0 or not need_minus:
            return sp


def admissible_pair(rng, n):
    """Random (R, S) scaled into the admissible set.

    The S-condition reads ``I - S^T M S >= 0`` with
    ``M = I + R (I - R^T R)^{-1} R^T``, so scaling a random direction by
    ``beta / sqrt(lambda_max(S0^T M S0))`` with ``beta < 1`` is feasible.
    """
    r = rng.standard_normal((n, n))
    r *= rng.uniform(0.0, 0.95) / np.linalg.norm(r, 2)
    m = np.eye(n) + r @ np.linalg.solve(np.eye(n) - r.T @ r, r.T)
    s0 = rng.standard_normal((n, n))
    top = np.linalg.eigvalsh(s0.T @ m @ s0)[-1]
    return r, rng.uniform(0.0, 0.999) / np.sqrt(top) * s0


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_problem(name, kind="sqrtchar", imposition="weak", params=None, n_pts=101, t_final=1.0, cfl=0.25, **bc):
    desc = resolve_problem(name, params)
    spec = BoundaryOperatorSpec(kind, imposition, **bc)
    return build_problem(
        desc, grid=Grid(0.0, 1.0, n_pts), bc_left=spec, bc_right=spec, t_final=t_final, cfl=cfl, name=name
    )


@functools.lru_cache(maxsize=None)
def cached_run(name, kind="sqrtchar", imposition="weak", params=(), n_pts=101):
    """Shared runs: several test modules audit the same shipped experiments."""
    problem = make_problem(name, kind, imposition, dict(params), n_pts=n_pts)
    return problem, run(problem)


# acceptance criteria register their verdict lines here; they are repeated
# in the terminal summary so they survive output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
