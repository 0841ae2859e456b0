import math

import pytest
from scipy import integrate

from abstain import closed_form as cf
from abstain.core import GameConfig, pointwise_loss

_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one line per acceptance criterion; printed in the terminal summary."""
    def report(number: int, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


def breakpoints(*cands):
    return sorted({p for p in cands if -2.0 < p < 2.0})


def quad_manipulation_with(config: GameConfig, t: float) -> float:
    """(1/4) * integral over [-2, 0) of |x - x_hat(x)| using the scalar best response."""
    K = config.K
    f = lambda x: abs(x - cf.best_response(x, t, config).x_hat) / 4.0
    pts = [p for p in breakpoints(t - K, t, -t) if p < 0.0]
    val, _ = integrate.quad(f, -2.0, 0.0, points=pts or None, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def quad_manipulation_no(config: GameConfig) -> float:
    K = config.K
    f = lambda x: abs(x - cf.best_response_no_abstention(x, config).x_hat) / 4.0
    pts = [p for p in breakpoints(-K) if p < 0.0]
    val, _ = integrate.quad(f, -2.0, 0.0, points=pts or None, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def quad_loss(t: float, config: GameConfig) -> float:
    """Expected strategic loss at threshold t by integrating the pointwise loss."""
    def f(x):
        x_hat = cf.best_response(x, t, config).x_hat
        return pointwise_loss(int(x_hat >= 0), int(x >= 0), int(abs(x_hat) >= t), c=config.c) / 4.0
    pts = breakpoints(t - config.K, t, -t, 0.0)
    val, _ = integrate.quad(f, -2.0, 2.0, points=pts or None, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def near(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)
