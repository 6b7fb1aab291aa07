import numpy as np
import pytest

from normcurve.curve import (
    PolynomialCurve,
    critical_radius,
    encloses_origin,
    is_simple_positively_oriented,
)


def random_valid_curve(rng, nmax=5, rcrit=0.8):
    """Random curve of degree <= nmax with critical radius <= rcrit, simple, enclosing 0."""
    while True:
        n = int(rng.integers(1, nmax + 1))
        r = rng.uniform(0.1, 1.0)
        j = np.arange(1, n + 1)
        mag = rng.uniform(0, 1, n) / j
        mag *= rng.uniform(0.05, 0.9) / mag.sum()
        beta = mag / j * np.exp(2j * np.pi * rng.random(n))
        a0 = 0.3 * r * rng.random() * np.exp(2j * np.pi * rng.random())
        c = PolynomialCurve(r, np.concatenate([[a0], r * beta]))
        if critical_radius(c) <= rcrit and is_simple_positively_oriented(c) and encloses_origin(c):
            return c


@pytest.fixture(scope="session")
def roundtrip_curves():
    rng = np.random.default_rng(20261017)
    return [random_valid_curve(rng) for _ in range(200)]


@pytest.fixture
def circle():
    return PolynomialCurve(1.0, [0.0])


@pytest.fixture
def ellipse():
    return PolynomialCurve(1.0, [0.0, 0.2])


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record a criterion outcome; lines are echoed in the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, passed, detail):
        lines.append(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
        print(lines[-1])
        assert passed, detail

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
