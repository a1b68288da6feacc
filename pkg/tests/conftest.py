import numpy as np
import pytest

from coarsemom.datagen import config_5c, generate, generate_5c
from coarsemom.engine import fit


@pytest.fixture(scope="session")
def data_5c_small():
    data, latent = generate_5c(2000, 11)
    return data, latent


@pytest.fixture(scope="session")
def fit_5c_small(data_5c_small):
    data, _ = data_5c_small
    spec = config_5c().model_spec()
    return spec, data, fit(spec, data)


def random_grid(rng, n_cuts):
    return np.sort(rng.uniform(-2.0, 2.0, n_cuts)) + np.arange(n_cuts) * 1e-3


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def record_criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
