import sys
from functools import cached_property
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from redux.deim import collateral_basis, deim_offline, training_matrix  # noqa: E402
from redux.fem import fe_solve, temperature  # noqa: E402
from redux.hyper_reduction import hr_offline  # noqa: E402
from redux.mesh import generate_plate_with_hole, generate_unit_square  # noqa: E402
from redux.pipeline import testcase_A  # noqa: E402
from redux.pod import collect_snapshots, parameter_grid, pod_basis  # noqa: E402


@pytest.fixture(scope="session")
def small_plate():
    """8 x 2 annular mesh (n = 48)."""
    return generate_plate_with_hole(8, 2)


@pytest.fixture(scope="session")
def medium_plate():
    """16 x 3 annular mesh (n = 144)."""
    return generate_plate_with_hole(16, 3)


@pytest.fixture(scope="session")
def square():
    return generate_unit_square(3, 3)


@pytest.fixture(scope="session")
def medium_offline(medium_plate):
    """Snapshots on a 3x3x3 grid and a POD basis for the 16 x 3 mesh."""
    snaps = collect_snapshots(medium_plate, parameter_grid(3))
    return snaps, pod_basis(snaps, medium_plate, m=8)


class Benchmark:
    """Default 80 x 10 plate-with-hole benchmark; offline data built lazily."""

    def __init__(self):
        self.mesh = generate_plate_with_hole()

    @cached_property
    def snapshots(self):
        return collect_snapshots(self.mesh, parameter_grid(5))

    @cached_property
    def full_basis(self):
        return pod_basis(self.snapshots, self.mesh, m=60)

    def basis(self, m=32):
        return self.full_basis if m == 60 else self.full_basis.truncate(m)

    @cached_property
    def basis32(self):
        return self.basis(32)

    @cached_property
    def training(self):
        return training_matrix(self.snapshots.residuals)

    @cached_property
    def collateral(self):
        return collateral_basis(self.training, M=400)

    def magic_points(self, M):
        cache = self.__dict__.setdefault("_mps", {})
        if M not in cache:
            cache[M] = deim_offline(self.collateral.U[:, :M], self.basis32.V, self.mesh)
        return cache[M]

    def rid(self, layers):
        cache = self.__dict__.setdefault("_rids", {})
        if layers not in cache:
            cache[layers] = hr_offline(self.basis32, layers=layers)
        return cache[layers]

    @cached_property
    def case_a(self):
        return testcase_A()

    @cached_property
    def case_a_truth(self):
        out = []
        for p in self.case_a:
            w, _ = fe_solve(self.mesh, p)
            out.append((w, temperature(self.mesh, w, p)))
        return out


@pytest.fixture(scope="session")
def bench():
    return Benchmark()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``check(k, ok, detail)`` records one acceptance line and asserts ``ok``."""
    lines = request.config.stash.setdefault(CRITERIA, [])

    def check(k, ok, detail):
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line)
        lines.append((k, line))
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
