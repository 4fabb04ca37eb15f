import pytest

from quasibalance.synth import LAND_X0, LAND_X_MIN, GeneratorSpec, gen_panel

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def static_panel():
    """Profit-scale static Non-Gibrat panel, alpha = 0.14."""
    spec = GeneratorSpec(mode="static_nongibrat", alpha=0.14, seed=0)
    return gen_panel(spec)[0], spec


@pytest.fixture(scope="session")
def narrow_static_panel():
    """Land-scale static panel with a narrow kernel."""
    spec = GeneratorSpec(mode="static_nongibrat", t_sum=30.0, x0=LAND_X0, x_min=LAND_X_MIN, seed=1)
    return gen_panel(spec)[0], spec


@pytest.fixture(scope="session")
def quasistatic_panel():
    spec = GeneratorSpec(mode="quasistatic", theta=0.9, log10_a=0.2, t_sum=30.0,
                         x0=LAND_X0, x_min=LAND_X_MIN, seed=0)
    return gen_panel(spec)[0], spec
