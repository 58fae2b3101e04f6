"""Face-based discrete calculus shared by the solver and the budget diagnostics.

Cell fields have the cell axes last, so the same helpers serve scalar fields
``(*cells)`` and stacked ones ``(S, *cells)``. Quantities on interior faces
normal to axis ``k`` have ``cells[k] - 1`` entries along that axis.

Gradients on a face normal to ``k`` are reconstructed from two pieces. The
normal derivative is the two-point difference across the face. In 2D the
tangential derivative is the average of the centered differences in the two
adjacent cells (one-sided at the box edge), which is the four-point stencil
the off-diagonal diffusion entries use.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid


class FaceCalculus:
    def __init__(self, grid: Grid, diffusion: np.ndarray | None = None):
        self.grid = grid
        self.d = grid.dimension
        self.h = grid.h
        # Every face "owns" the box spanned by its normal step and its area;
        # on a uniform grid that is exactly one cell volume.
        self.face_volume = grid.cell_volume
        self._rows = None
        if diffusion is not None:
            # (S, d_row, d_col, *cells) so that rows[i, k] is the k-th row field
            self._rows = np.moveaxis(diffusion, (-2, -1), (1, 2))
            self._face_rows = {
                k: [self.mean(self._rows[:, k, m], k) for m in range(self.d)] for k in range(self.d)
            }

    def _ax(self, k: int) -> int:
        return k - self.d

    def mean(self, c: np.ndarray, k: int) -> np.ndarray:
        ax = self._ax(k)
        n = c.shape[ax]
        lo = np.take(c, np.arange(n - 1), axis=ax)
        hi = np.take(c, np.arange(1, n), axis=ax)
        return 0.5 * (lo + hi)

    def diff(self, c: np.ndarray, k: int) -> np.ndarray:
        return np.diff(c, axis=self._ax(k)) / self.h[k]

    def tangential(self, c: np.ndarray, k: int) -> np.ndarray:
        if self.d == 1:
            raise ValueError("no tangential direction in 1D")
        m = 1 - k
        ax = self._ax(m)
        if c.shape[ax] < 2:
            g = np.zeros_like(c, dtype=float)
        else:
            g = np.gradient(c, self.h[m], axis=ax, edge_order=1)
        return self.mean(g, k)

    def face_diffusion(self, i: int, k: int) -> list[np.ndarray]:
        """Face-averaged row ``k`` of species ``i``'s diffusion tensor."""
        return [r[i] for r in self._face_rows[k]]

    def flux_dot(self, i: int, p: np.ndarray, q: np.ndarray, k: int) -> np.ndarray:
        """``(A_i grad p) . e_k * d_k q`` on the interior faces normal to ``k``."""
        rows = self.face_diffusion(i, k)
        ap = rows[k] * self.diff(p, k)
        if self.d == 2:
            cross = rows[1 - k]
            if np.any(cross != 0):
                ap = ap + cross * self.tangential(p, k)
        return ap * self.diff(q, k)

    def cross_flux(self, i: int, p: np.ndarray, k: int) -> np.ndarray | None:
        """Off-diagonal part of ``-(A_i grad p) . e_k`` on interior faces, or None."""
        if self.d == 1:
            return None
        cross = self.face_diffusion(i, k)[1 - k]
        if not np.any(cross != 0):
            return None
        return -cross * self.tangential(p, k)

    def integrate(self, coef: np.ndarray | float, face_values: np.ndarray, k: int) -> float:
        """Face-volume-weighted sum of ``mean(coef) * face_values``."""
        if np.ndim(coef) == 0:
            w = float(coef) * face_values
        else:
            w = self.mean(np.asarray(coef, dtype=float), k) * face_values
        return float(np.sum(w) * self.face_volume)

    def dirichlet_form(self, i: int, coef, p: np.ndarray, q: np.ndarray) -> float:
        """Discrete ``int coef * A_i grad p . grad q`` summed over all face families."""
        return sum(self.integrate(coef, self.flux_dot(i, p, q, k), k) for k in range(self.d))
