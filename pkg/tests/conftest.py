import gmpy2
import mpmath
import pytest
from hypothesis import HealthCheck, settings

from expspan import (
    DiagonalOperator,
    Interval,
    PrecisionConfig,
    build_space,
    compute_biorthogonal,
    make_weights,
    squares_family,
    validate_exponents,
)

settings.register_profile(
    "expspan", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("expspan")

mpmath.mp.prec = 640

UNIT = Interval("0", "1")


@pytest.fixture(scope="session")
def space12():
    """lambda = (1, 2) on (0, 1) at 512 bits."""
    return build_space(validate_exponents(["1", "2"]), UNIT)


@pytest.fixture(scope="session")
def bio12(space12):
    return compute_biorthogonal(space12)


@pytest.fixture(scope="session")
def ref_space():
    """Reference configuration: lambda_n = n^2, N = 8, (0, 1), 512 bits."""
    return build_space(squares_family(8), UNIT, PrecisionConfig(512))


@pytest.fixture(scope="session")
def ref_bio(ref_space):
    return compute_biorthogonal(ref_space)


@pytest.fixture(scope="session")
def ref_op(ref_space, ref_bio):
    return DiagonalOperator(ref_space, ref_bio, make_weights("0.5", ref_space.exponents))


@pytest.fixture
def prec512():
    with gmpy2.context(gmpy2.get_context(), precision=512):
        yield


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split("-")[0]), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
