"""Dense primal simplex kernel: maximize c.x subject to Ax <= b, x >= 0, b >= 0.

The tableau stores [structural | slack | rhs] columns; the slack block always
holds the current basis inverse, which lets a restricted master LP add columns
after an optimal solve and warm-restart instead of refactoring from scratch.

Anti-cycling: the ratio test resolves ties lexicographically against the
basis-inverse block (equivalent to an infinitesimal rhs perturbation), which
makes every pivot strictly lex-decreasing and rules out basis repetition for
any entering rule.  Entering is Dantzig's rule for speed and falls back to
Bland's smallest-index rule during long degenerate streaks; a hard pivot cap
backs everything up.  Reduced-cost tolerances are 1e-9.
"""

from __future__ import annotations

import numpy as np
from numba import njit

RC_TOL = 1e-9
PIVOT_EPS = 1e-10
DEGENERATE_STREAK = 40


class SimplexError(RuntimeError):
    pass


class UnboundedError(SimplexError):
    pass


class PivotLimitError(SimplexError):
    """The pivot cap tripped; treat as a cycling guard failure."""


@njit(cache=True)
def _apply_pivot(T, red, prow, pcol):
    m, w = T.shape
    inv = 1.0 / T[prow, pcol]
    for j in range(w):
        T[prow, j] *= inv
    T[prow, pcol] = 1.0
    for i in range(m):
        if i == prow:
            continue
        f = T[i, pcol]
        if f != 0.0:
            for j in range(w):
                T[i, j] -= f * T[prow, j]
            T[i, pcol] = 0.0
            # keep degenerate basics at an exact zero so ratio ties stay
            # exact and Bland's rule retains its termination guarantee
            if -1e-11 < T[i, w - 1] < 1e-11:
                T[i, w - 1] = 0.0
    f = red[pcol]
    if f != 0.0:
        for j in range(w):
            red[j] -= f * T[prow, j]
        red[pcol] = 0.0


class DenseSimplex:
    """A maximize-form tableau that survives column and row growth."""

    def __init__(self, A, b, c, max_pivots: int = 500_000):
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.asarray(b, dtype=np.float64).ravel()
        c = np.asarray(c, dtype=np.float64).ravel()
        if A.size == 0:
            A = A.reshape((len(b), len(c)))
        m, n = A.shape
        if m != len(b) or n != len(c):
            raise ValueError(f"shape mismatch: A {A.shape}, b {len(b)}, c {len(c)}")
        if len(b) and b.min() < 0:
            raise ValueError("rhs must be nonnegative (phase-1-free start)")
        self.m = m
        self.n_struct = n
        self.max_pivots = max_pivots
        self.pivots = 0
        T = np.empty((m, n + m + 1), dtype=np.float64)
        T[:, :n] = A
        T[:, n:n + m] = np.eye(m)
        T[:, -1] = b
        self.T = T
        self.red = np.concatenate([c, np.zeros(m + 1)])
        self.basis = np.arange(n, n + m, dtype=np.int64)

    # -- solving ------------------------------------------------------------

    def solve(self) -> None:
        """Pivot to optimality (no reduced cost above RC_TOL)."""
        T, red = self.T, self.red
        bland = False
        streak = 0
        while True:
            ncols = T.shape[1] - 1
            if bland:
                pcol = -1
                for j in range(ncols):
                    if red[j] > RC_TOL:
                        pcol = j
                        break
                if pcol < 0:
                    return
            else:
                pcol = int(np.argmax(red[:ncols]))
                if red[pcol] <= RC_TOL:
                    return
            col = T[:, pcol]
            eligible = col > PIVOT_EPS
            if not eligible.any():
                raise UnboundedError(
                    f"column {pcol} has no positive entries; LP is unbounded")
            ratios = np.where(eligible, T[:, -1] / np.where(eligible, col, 1.0), np.inf)
            rmin = ratios.min()
            ties = np.flatnonzero(ratios == rmin)
            prow = self._leaving_row(ties, col)

            obj_before = red[-1]
            _apply_pivot(T, red, prow, pcol)
            self.basis[prow] = pcol
            self.pivots += 1
            if self.pivots > self.max_pivots:
                raise PivotLimitError(
                    f"exceeded {self.max_pivots} pivots; cycling guard tripped")
            if red[-1] < obj_before - 1e-12:
                streak = 0
                bland = False
            else:
                streak += 1
                if streak > DEGENERATE_STREAK:
                    bland = True

    def _leaving_row(self, ties: np.ndarray, col: np.ndarray) -> int:
        """Among min-ratio rows, pick the lexicographically smallest row of
        the [basis-inverse] block scaled by the pivot column entry."""
        if len(ties) == 1:
            return int(ties[0])
        T = self.T
        base = self.n_struct
        cand = ties
        for k in range(self.m):
            vals = T[cand, base + k] / col[cand]
            vmin = vals.min()
            cand = cand[vals == vmin]
            if len(cand) == 1:
                return int(cand[0])
        # numerically indistinguishable rows: fall back to Bland's choice
        return int(cand[np.argmin(self.basis[cand])])

    # -- growth -------------------------------------------------------------

    def add_columns(self, A_new, c_new) -> None:
        """Append structural columns (already-solved tableaus stay warm)."""
        A_new = np.atleast_2d(np.asarray(A_new, dtype=np.float64))
        c_new = np.asarray(c_new, dtype=np.float64).ravel()
        if A_new.shape != (self.m, len(c_new)):
            raise ValueError(f"new columns must be {self.m} x {len(c_new)}")
        k = len(c_new)
        if k == 0:
            return
        slack = self.T[:, self.n_struct:self.n_struct + self.m]
        cols_T = slack @ A_new
        # reduced cost: c_j - y.a_j, and the slack block of `red` holds -y
        rc = c_new + self.red[self.n_struct:self.n_struct + self.m] @ A_new
        self.T = np.concatenate(
            [self.T[:, :self.n_struct], cols_T, self.T[:, self.n_struct:]], axis=1)
        self.red = np.concatenate(
            [self.red[:self.n_struct], rc, self.red[self.n_struct:]])
        self.basis = np.where(self.basis >= self.n_struct, self.basis + k, self.basis)
        self.n_struct += k

    def add_zero_rows(self, b_new) -> None:
        """Append rows whose coefficients on every existing structural column
        are zero (their slacks enter the basis untouched).  The caller is
        responsible for that zero-coefficient guarantee."""
        b_new = np.asarray(b_new, dtype=np.float64).ravel()
        r = len(b_new)
        if r == 0:
            return
        if len(b_new) and b_new.min() < 0:
            raise ValueError("new rhs entries must be nonnegative")
        m, w = self.T.shape
        T = np.zeros((m + r, w + r), dtype=np.float64)
        T[:m, :w - 1] = self.T[:, :-1]
        T[:m, -1] = self.T[:, -1]
        T[m:, w - 1:w - 1 + r] = np.eye(r)
        T[m:, -1] = b_new
        self.T = T
        self.red = np.concatenate([self.red[:-1], np.zeros(r), self.red[-1:]])
        self.basis = np.concatenate(
            [self.basis, np.arange(w - 1, w - 1 + r, dtype=np.int64)])
        self.m += r

    def drop_struct_columns(self, drop: np.ndarray) -> None:
        """Remove nonbasic structural columns by index."""
        drop = np.asarray(sorted(set(int(i) for i in drop)), dtype=np.int64)
        if drop.size == 0:
            return
        basic = set(int(b) for b in self.basis)
        if any(int(j) in basic for j in drop):
            raise ValueError("cannot drop a basic column")
        keep = np.ones(self.T.shape[1], dtype=bool)
        keep[drop] = False
        self.T = self.T[:, keep]
        self.red = self.red[keep]
        shift = np.zeros(len(keep), dtype=np.int64)
        shift[~keep] = 1
        offsets = np.cumsum(shift)
        self.basis = self.basis - offsets[self.basis]
        self.n_struct -= drop.size

    # -- views --------------------------------------------------------------

    @property
    def objective(self) -> float:
        return float(-self.red[-1])

    @property
    def primal(self) -> np.ndarray:
        x = np.zeros(self.n_struct)
        for i, bi in enumerate(self.basis):
            if bi < self.n_struct:
                x[bi] = self.T[i, -1]
        return x

    @property
    def duals(self) -> np.ndarray:
        y = -self.red[self.n_struct:self.n_struct + self.m]
        return np.maximum(y, 0.0)  # clear 1e-16-scale pivot residue


def simplex_solve(A, b, c, max_pivots: int = 500_000):
    """Solve maximize c.x, Ax <= b, x >= 0 (b >= 0).

    Returns (optimum, x, duals).  Raises UnboundedError for unbounded LPs and
    PivotLimitError if the anti-cycling cap trips.
    """
    tab = DenseSimplex(A, b, c, max_pivots=max_pivots)
    tab.solve()
    return tab.objective, tab.primal, tab.duals
