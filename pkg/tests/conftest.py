from pathlib import Path

import numpy as np
import pytest

from rydoct import (
    BasisSpec,
    CESIUM_DEFECTS,
    HamiltonianData,
    RadialGrid,
    StateLabel,
    build_hamiltonian,
    precompute_z_eigensystem,
)

MANIFEST_DIR = Path(__file__).resolve().parent.parent / "manifests"


@pytest.fixture(scope="session")
def default_grid():
    return RadialGrid.for_basis(31)


@pytest.fixture(scope="session")
def cesium_h(default_grid):
    """The desk-scale production basis: n 21-31, l < 5, cesium-like defects."""
    return build_hamiltonian(BasisSpec(21, 31, 5, CESIUM_DEFECTS), default_grid)


@pytest.fixture(scope="session")
def cesium_zsys(cesium_h):
    return precompute_z_eigensystem(cesium_h)


@pytest.fixture(scope="session")
def full_h(default_grid):
    """Full rectangle n 21-31, l < 17 (the production-scale state count)."""
    return build_hamiltonian(BasisSpec(21, 31, 17, CESIUM_DEFECTS), default_grid)


def make_dense_hamiltonian(dim: int, seed: int, energy_range=(-1.0, -0.1)):
    """Small dense test Hamiltonian with a full random symmetric z matrix.

    Labels are synthetic; selection-rule structure is deliberately absent so
    the dipole coupling connects everything.
    """
    rng = np.random.default_rng(seed)
    energies = np.sort(rng.uniform(*energy_range, dim))
    z = rng.normal(size=(dim, dim))
    z = (z + z.T) / 2.0
    labels = tuple(StateLabel(i + 1, 0) for i in range(dim))
    return HamiltonianData(
        labels=labels, energies=energies, z_matrix=z, provenance="test", basis_spec=None
    )


@pytest.fixture()
def dense8():
    return make_dense_hamiltonian(8, seed=42)
