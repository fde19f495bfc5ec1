"""Regression basis over triangle cells: ramps plus Heaviside interactions.

The basis spans an intercept, open-ended ramp functions of the accident,
development and payment indices (knots 0..I-1 each), and pairwise products
of Heaviside step functions of the three indices (thresholds 2..I each),
giving 1 + 3I + 3(I-1)^2 raw columns. Penalized columns are standardized
to zero mean and unit population standard deviation over the cells they
were built on; columns degenerate on those cells are dropped. Matrices for
fresh cells (the forecast region) reuse the original statistics and column
set unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .triangle import Cell

DEGENERATE_SD = 1e-12


@dataclass(frozen=True)
class BasisFunction:
    """One basis column: its family and knot/threshold indices."""

    kind: str  # intercept | ramp_i | ramp_j | ramp_t | hs_ij | hs_it | hs_tj
    knots: tuple[int, ...] = ()

    def label(self) -> str:
        if self.kind == "intercept":
            return "intercept"
        return f"{self.kind}({','.join(map(str, self.knots))})"


def ramp(x: float, knot: float) -> float:
    """Open-ended ramp: max(0, x - knot)."""
    return max(0.0, x - knot)


def heaviside(x: float, threshold: float) -> int:
    """Step indicator: 1 iff x >= threshold."""
    return 1 if x >= threshold else 0


def build_basis(side: int) -> list[BasisFunction]:
    """The full basis for a triangle of the given side, in canonical order."""
    if side < 2:
        raise ValueError("basis needs side >= 2")
    out = [BasisFunction("intercept")]
    for kind in ("ramp_i", "ramp_j", "ramp_t"):
        out.extend(BasisFunction(kind, (k,)) for k in range(side))
    thresholds = range(2, side + 1)
    for kind in ("hs_ij", "hs_it", "hs_tj"):
        out.extend(BasisFunction(kind, (a, b)) for a in thresholds for b in thresholds)
    return out


def _raw_matrix(side: int, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Evaluate the full basis at cells given by index arrays, column order
    matching :func:`build_basis`."""
    n = len(i)
    t = i + j - 1
    knots = np.arange(side, dtype=np.float64)
    thresholds = np.arange(2, side + 1, dtype=np.float64)
    blocks = [np.ones((n, 1))]
    for x in (i, j, t):
        blocks.append(np.maximum(0.0, x[:, None] - knots[None, :]))
    ind = {x_name: (x[:, None] >= thresholds[None, :]).astype(np.float64)
           for x_name, x in (("i", i), ("j", j), ("t", t))}
    for a, b in (("i", "j"), ("i", "t"), ("t", "j")):
        prod = ind[a][:, :, None] * ind[b][:, None, :]
        blocks.append(prod.reshape(n, -1))
    return np.concatenate(blocks, axis=1)


@dataclass(frozen=True)
class DesignMatrix:
    """Standardized design over a fixed cell list.

    ``matrix`` is Fortran-ordered so single-column access is contiguous for
    the solver. ``col_means``/``col_sds`` are the statistics of the cells
    the matrix was standardized on (the past region); the intercept column
    carries identity statistics so de-standardization is uniform.
    """

    cells: tuple[Cell, ...]
    functions: tuple[BasisFunction, ...]
    kept_indices: np.ndarray
    matrix: np.ndarray
    col_means: np.ndarray
    col_sds: np.ndarray
    penalized_mask: np.ndarray
    dropped: tuple[BasisFunction, ...]

    @property
    def n_cells(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    def raw_coefficients(self, beta: np.ndarray) -> tuple[float, np.ndarray]:
        """Map standardized-scale coefficients to the raw basis scale.

        Returns (intercept, per-column coefficients aligned with
        ``functions``); the intercept absorbs the centering shifts.
        """
        beta = np.asarray(beta, dtype=np.float64)
        coefs = beta / self.col_sds
        intercept = float(beta[0] - np.sum(beta[1:] * self.col_means[1:] / self.col_sds[1:]))
        coefs = coefs.copy()
        coefs[0] = 0.0
        return intercept, coefs


def assemble(
    basis: Sequence[BasisFunction],
    cells: Sequence[Cell],
    side: int,
    stats: Optional[DesignMatrix] = None,
) -> DesignMatrix:
    """Evaluate and standardize the basis on a cell list.

    With ``stats=None`` the standardization statistics are computed on the
    given cells (population sd) and penalized columns with sd below
    ``DEGENERATE_SD`` are dropped. With ``stats`` from a previous assembly,
    its statistics and column set are applied verbatim.
    """
    if len(cells) == 0:
        raise ValueError("cannot assemble a design matrix over zero cells")
    i = np.array([c.i for c in cells], dtype=np.float64)
    j = np.array([c.j for c in cells], dtype=np.float64)
    raw = _raw_matrix(side, i, j)
    if raw.shape[1] != len(basis):
        raise ValueError("basis list does not match the canonical basis for this side")

    if stats is not None:
        kept = stats.kept_indices
        mat = (raw[:, kept] - stats.col_means[None, :]) / stats.col_sds[None, :]
        mat[:, 0] = 1.0
        return DesignMatrix(
            cells=tuple(cells),
            functions=stats.functions,
            kept_indices=kept,
            matrix=np.asfortranarray(mat),
            col_means=stats.col_means,
            col_sds=stats.col_sds,
            penalized_mask=stats.penalized_mask,
            dropped=stats.dropped,
        )

    means = raw.mean(axis=0)
    sds = raw.std(axis=0)  # population sd
    penalized = np.ones(len(basis), dtype=bool)
    penalized[0] = False
    keep = ~penalized | (sds >= DEGENERATE_SD)
    kept = np.flatnonzero(keep)
    dropped = tuple(basis[k] for k in np.flatnonzero(~keep))

    col_means = means[kept].copy()
    col_sds = sds[kept].copy()
    # Identity statistics for the intercept (and any unpenalized column).
    col_means[0] = 0.0
    col_sds[0] = 1.0
    mat = (raw[:, kept] - col_means[None, :]) / col_sds[None, :]
    return DesignMatrix(
        cells=tuple(cells),
        functions=tuple(basis[k] for k in kept),
        kept_indices=kept,
        matrix=np.asfortranarray(mat),
        col_means=col_means,
        col_sds=col_sds,
        penalized_mask=penalized[kept],
        dropped=dropped,
    )
