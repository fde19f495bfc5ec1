"""Shared fixtures: small simulated triangles and toy design matrices."""

from __future__ import annotations

import numpy as np
import pytest

from reserve_lasso.basis import BasisFunction, DesignMatrix, assemble, build_basis
from reserve_lasso.simulate import dataset_spec, simulate
from reserve_lasso.triangle import Cell


def toy_design(X: np.ndarray, penalized: np.ndarray) -> DesignMatrix:
    """Wrap a raw matrix as a DesignMatrix with identity statistics."""
    X = np.asarray(X, dtype=np.float64)
    n, p = X.shape
    functions = tuple(
        BasisFunction("intercept") if k == 0 else BasisFunction("ramp_i", (k,))
        for k in range(p)
    )
    return DesignMatrix(
        cells=tuple(Cell(1, j + 1) for j in range(n)),
        functions=functions,
        kept_indices=np.arange(p),
        matrix=np.asfortranarray(X),
        col_means=np.zeros(p),
        col_sds=np.ones(p),
        penalized_mask=np.asarray(penalized, dtype=bool),
        dropped=(),
    )


@pytest.fixture(scope="session")
def desk_sim():
    """A seeded dataset1 triangle at desk scale."""
    return simulate(dataset_spec("dataset1", 20), seed=42)


@pytest.fixture(scope="session")
def desk_design(desk_sim):
    tri = desk_sim.triangle
    return assemble(build_basis(tri.I), tri.cells, tri.I)
