import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def draw_instance(rng, n_x, n_u, N, n_switches, convex=True, tries=200, **kw):
    """Random switched-LQ Newton system whose reduced Hessian is (or is not) positive definite."""
    from switchocp.kkt_oracle import assemble, random_stage_data, reduced_hessian_spectrum

    for _ in range(tries):
        sd = random_stage_data(rng, n_x, n_u, N, n_switches, **kw)
        lam_min = reduced_hessian_spectrum(assemble(sd))
        if (lam_min > 1e-6) == convex and abs(lam_min) > 1e-6:
            return sd, lam_min
    raise RuntimeError("no instance of the requested kind found")


def flat(d):
    return np.concatenate([np.ravel(getattr(d, n)) for n in ("x", "u", "lam", "xs", "us", "lams", "ts")])


def rel_maxdiff(a, b):
    a, b = flat(a), flat(b)
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
