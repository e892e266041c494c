"""Shared fixtures: eigenbases are expensive enough to build once per session."""

from __future__ import annotations

import numpy as np
import pytest

from stokeslab.evolution import ModalSystem
from stokeslab.grid import build_grid, build_mask
from stokeslab.spectral import solve_buckling

STANDARD_OMEGA = "0,0.3,0,0.3"

# one line per acceptance item, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[str, list[tuple[str, bool, str]]] = {}


def record(criterion: str, part: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=int):
        parts = ACCEPTANCE[key]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        details = "; ".join(f"{name} {'PASS' if ok else 'FAIL'} ({d})" for name, ok, d in parts)
        tr.write_line(f"criterion {key:>2}: {verdict}  {details}")


@pytest.fixture(scope="session")
def basis16():
    return solve_buckling(build_grid(16), 20)


@pytest.fixture(scope="session")
def basis32():
    return solve_buckling(build_grid(32), 200)


@pytest.fixture(scope="session")
def basis48():
    return solve_buckling(build_grid(48), 200)


@pytest.fixture(scope="session")
def mask32(basis32):
    return build_mask(basis32.grid, STANDARD_OMEGA)


@pytest.fixture(scope="session")
def mask48(basis48):
    return build_mask(basis48.grid, STANDARD_OMEGA)


@pytest.fixture(scope="session")
def system32(basis32, mask32):
    return ModalSystem.from_basis(basis32, mask32)


@pytest.fixture(scope="session")
def system48(basis48, mask48):
    return ModalSystem.from_basis(basis48, mask48)


@pytest.fixture(scope="session")
def system5(system32):
    """The five lowest modes of the N=32 standard system."""
    return system32.restrict(np.arange(5))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240611))
