import warnings

import numpy as np
import pytest

from nsklab.errors import ResolutionWarning
from nsklab.grid import Grid, SpectralState, dealias, to_spectral
from nsklab.model import Polytropic, validate_params


@pytest.fixture(autouse=True)
def _quiet_resolution():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        yield


@pytest.fixture
def params():
    """delta_star = 0.5 > 0, P'(1) = 1."""
    return validate_params(1.0, 1.0, 0.5, 1.0, Polytropic(0.5, 2.0))


@pytest.fixture
def params_dispersive():
    """delta_star = -1 < 0."""
    return validate_params(1.0, 1.0, 2.0, 1.0, Polytropic(0.5, 2.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(grid: Grid, rng, amp=1.0, band=True) -> SpectralState:
    """Random real fields, optionally restricted to dealiased modes."""
    fields = amp * rng.standard_normal((grid.dim + 1,) + grid.shape)
    spec = to_spectral(fields, grid.dim)
    if band:
        spec = dealias(spec, grid)
    return SpectralState.from_stacked(spec)


def smooth_state(grid: Grid, rng, amp=0.05, decay=1.0) -> SpectralState:
    """Random dealiased state with exponentially decaying spectrum."""
    st = random_state(grid, rng)
    w = np.exp(-decay * grid.xi_norm * grid.box_length / (2 * np.pi) / 2)
    X = st.stacked() * w
    X = X * (amp / max(np.max(np.abs(np.fft.ifftn(X, axes=tuple(range(1, grid.dim + 1))).real)), 1e-300))
    return SpectralState.from_stacked(X)


ACCEPTANCE_LINES: list[str] = []


def report(label: str, ok: bool, detail: str) -> None:
    """One pass/fail line per acceptance criterion, echoed again in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
