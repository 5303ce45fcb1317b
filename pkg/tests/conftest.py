import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vcscore.data import Dataset

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_dataset(rng, n=6, m=(1, 4), family="bernoulli", p=3, q=2, trials=None, beta=None):
    """Clustered dataset with variable cluster sizes drawn from the null model."""
    sizes = rng.integers(m[0], m[1] + 1, size=n)
    N = int(sizes.sum())
    groups = np.repeat(np.arange(n), sizes)
    X = np.column_stack([np.ones(N), rng.standard_normal((N, p - 1))])
    Z = np.column_stack([np.ones(N), rng.standard_normal((N, q - 1))])
    beta = np.full(p, 0.3) if beta is None else np.asarray(beta)
    eta = X @ beta
    if family == "gaussian":
        y = eta + rng.standard_normal(N)
    else:
        k = 1 if trials is None else trials
        y = rng.binomial(k, 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return Dataset.from_arrays(y, X, Z, groups)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(label: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
