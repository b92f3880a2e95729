import math

import numpy as np
import pytest

from cmpreg.core import sample_mean_params
from cmpreg.simstudy import BETA_TRUE, gen_design


def simulated(n, phi, seed, beta=BETA_TRUE):
    X = gen_design(n)
    mu = np.exp(X @ np.asarray(beta))
    y = sample_mean_params(mu, phi, np.random.default_rng(seed))
    return y, X


@pytest.fixture(scope="session")
def equidispersed_500():
    return simulated(500, 0.0, seed=11)


@pytest.fixture(scope="session")
def overdispersed_300():
    return simulated(300, -1.0, seed=12)


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, header, rows):
        path = tmp_path / name
        lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write


def poisson_logpmf(y, mu):
    return y * math.log(mu) - mu - math.lgamma(y + 1)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def acceptance_report(number, ok, detail):
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"criterion {number:>2}: {status}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
