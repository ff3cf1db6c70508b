import numpy as np
import pytest

from gem_mix.experiments import arc_layout
from gem_mix.mixture import MixtureConfig, center_means


@pytest.fixture
def triangle():
    """Balanced three-component arc with R_min = 5, R_max / R_min = 1.5."""
    return arc_layout(3, 2, 5.0, 1.5)


@pytest.fixture
def wide_triangle():
    return arc_layout(3, 2, 12.0, 1.5)


def random_centered_config(gen: np.random.Generator, M: int, d: int, scale: float = 5.0) -> MixtureConfig:
    w = gen.dirichlet(np.full(M, 2.0))
    w = np.maximum(w, 0.02)
    w /= w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return center_means(MixtureConfig(w, gen.normal(scale=scale, size=(M, d))))


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
