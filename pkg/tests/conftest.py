import numpy as np
import pytest

from latentbench import dataio


@pytest.fixture(scope="session")
def manifold_set():
    ds = dataio.synth_dataset("nonlinear_manifold", 512, 200, 2, noise_sd=0.02, seed=0)
    sp = dataio.split(ds.n_voxels, 0)
    return ds, sp


@pytest.fixture(scope="session")
def linear_set():
    ds = dataio.synth_dataset("linear_rank_r", 512, 200, 2, noise_sd=0.0, seed=0)
    sp = dataio.split(ds.n_voxels, 0)
    return ds, sp


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion; the assertion is left to the test."""
    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
