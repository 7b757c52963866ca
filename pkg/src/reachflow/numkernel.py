"""Dense numeric kernel: matrix exponential, matrix application and a small
dense LP solver.  Everything else in the package sits on top of these three
primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Feasibility / comparison tolerance shared by the solver and its callers.
FEAS_TOL = 1e-9

# Statuses returned by lp_max.
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


def as_vector(x) -> np.ndarray:
    """Coerce to a finite 1-d float array."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got array of shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_matrix(a) -> np.ndarray:
    """Coerce to a finite 2-d float array."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got array of shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def mat_apply(a, x) -> np.ndarray:
    """Matrix-vector product A x (the basic cost unit of the engines)."""
    a = as_matrix(a)
    x = as_vector(x)
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"cannot apply {a.shape} matrix to vector of length {x.shape[0]}")
    return a @ x


# Taylor order used after scaling; with the scaled norm at most 1/2 the
# series remainder is below 2^-70.
_EXP_ORDER = 20


def mat_exp(a, r: float = 1.0) -> np.ndarray:
    """e^{A r} by scaling-and-squaring on a truncated Taylor series.

    The argument is scaled by 2^-s so its infinity norm is at most 1/2,
    the series is evaluated by Horner's scheme, and the result is squared
    s times.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix exponential requires a square matrix")
    if not np.isfinite(r):
        raise ValueError("time step must be finite")
    n = a.shape[0]
    m = a * float(r)
    theta = np.linalg.norm(m, np.inf)
    if theta == 0.0:
        return np.eye(n)
    s = 0
    if theta > 0.5:
        s = int(math.ceil(math.log2(theta))) + 1
        m = m / (2.0 ** s)
    eye = np.eye(n)
    out = eye * (1.0 / math.factorial(_EXP_ORDER))
    for k in range(_EXP_ORDER - 1, -1, -1):
        out = m @ out + eye * (1.0 / math.factorial(k))
    for _ in range(s):
        out = out @ out
    return out


@dataclass(frozen=True)
class LpProblem:
    """maximize objective . x  subject to  a x <= b  (x free)."""

    objective: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "objective", as_vector(self.objective))
        object.__setattr__(self, "a", as_matrix(self.a))
        object.__setattr__(self, "b", as_vector(self.b))
        m, n = self.a.shape
        if self.objective.shape[0] != n:
            raise ValueError(
                f"objective length {self.objective.shape[0]} does not match "
                f"constraint matrix with {n} columns")
        if self.b.shape[0] != m:
            raise ValueError(
                f"right-hand side length {self.b.shape[0]} does not match "
                f"constraint matrix with {m} rows")


@dataclass(frozen=True)
class LpResult:
    status: str
    value: float | None = None
    x: np.ndarray | None = None


def _pivot(t: np.ndarray, basis: list[int], row: int, col: int) -> None:
    t[row] /= t[row, col]
    colvals = t[:, col].copy()
    colvals[row] = 0.0
    t -= np.outer(colvals, t[row])
    t[:, col] = 0.0
    t[row, col] = 1.0
    basis[row] = col


def _bland(t: np.ndarray, basis: list[int], nvars: int, tol: float) -> str:
    """Run simplex on a canonical maximisation tableau with Bland's rule.

    Row layout: constraint rows then the objective row; the last column is
    the right-hand side.  Entering variable: smallest index with reduced
    cost above tol.  Leaving variable: smallest basic index among the
    minimum-ratio rows.  Bland's rule cannot cycle, the iteration cap is a
    safety net only.
    """
    rows = t.shape[0] - 1
    for _ in range(500 * (nvars + rows + 10)):
        enter = -1
        for j in range(nvars):
            if t[-1, j] > tol and j not in basis:
                enter = j
                break
        if enter < 0:
            return OPTIMAL
        best_ratio = None
        leave = -1
        for i in range(rows):
            aij = t[i, enter]
            if aij > tol:
                ratio = t[i, -1] / aij
                if (best_ratio is None or ratio < best_ratio - tol
                        or (abs(ratio - best_ratio) <= tol and basis[i] < basis[leave])):
                    best_ratio = ratio
                    leave = i
        if leave < 0:
            return UNBOUNDED
        _pivot(t, basis, leave, enter)
    raise RuntimeError("simplex iteration limit exceeded")


def _solve_raw(c: np.ndarray, a: np.ndarray, b: np.ndarray, tol: float) -> LpResult:
    """Two-phase dense simplex on the split-variable standard form."""
    m, n = a.shape
    if m == 0:
        if np.any(np.abs(c) > tol):
            return LpResult(UNBOUNDED)
        return LpResult(OPTIMAL, 0.0, np.zeros(n))
    neg = b < 0.0
    n_art = int(np.count_nonzero(neg))
    # columns: x+ (n), x- (n), slacks (m), artificials (n_art), rhs
    nreal = 2 * n + m
    ncols = nreal + n_art
    t = np.zeros((m + 1, ncols + 1))
    basis: list[int] = [0] * m
    art_col = nreal
    for i in range(m):
        sign = -1.0 if neg[i] else 1.0
        t[i, :n] = sign * a[i]
        t[i, n:2 * n] = -sign * a[i]
        t[i, 2 * n + i] = sign
        t[i, -1] = sign * b[i]
        if neg[i]:
            t[i, art_col] = 1.0
            basis[i] = art_col
            art_col += 1
        else:
            basis[i] = 2 * n + i
    if n_art:
        # phase one: maximize -(sum of artificials)
        t[-1, nreal:ncols] = -1.0
        for i in range(m):
            if basis[i] >= nreal:
                t[-1] += t[i]
        status = _bland(t, basis, ncols, tol)
        assert status == OPTIMAL  # phase one is always bounded
        # the tableau keeps the negated objective value in the corner
        if t[-1, -1] > tol:
            return LpResult(INFEASIBLE)
        # drive leftover artificials out of the basis, drop redundant rows
        keep = []
        for i in range(m):
            if basis[i] >= nreal:
                piv = -1
                for j in range(nreal):
                    if abs(t[i, j]) > tol:
                        piv = j
                        break
                if piv < 0:
                    continue  # redundant constraint row
                _pivot(t, basis, i, piv)
            keep.append(i)
        if len(keep) < m:
            t = np.vstack([t[keep], t[-1:]])
            basis = [basis[i] for i in keep]
            m = len(keep)
        t[:, nreal:ncols] = 0.0  # artificial columns retired
    # phase two objective: c.(x+ - x-), priced out against the basis
    t[-1, :] = 0.0
    t[-1, :n] = c
    t[-1, n:2 * n] = -c
    for i in range(m):
        cb = t[-1, basis[i]]
        if cb != 0.0:
            t[-1] -= cb * t[i]
    status = _bland(t, basis, nreal, tol)
    if status == UNBOUNDED:
        return LpResult(UNBOUNDED)
    x = np.zeros(n)
    for i in range(m):
        j = basis[i]
        if j < n:
            x[j] += t[i, -1]
        elif j < 2 * n:
            x[j - n] -= t[i, -1]
    return LpResult(OPTIMAL, float(c @ x), x)


def lp_max(prob: LpProblem, lex_tiebreak: bool = True) -> LpResult:
    """Maximize a linear objective over {x : a x <= b}.

    The returned point satisfies the constraints within FEAS_TOL.  With
    lex_tiebreak (the default) ties between optimal vertices are broken in
    favour of the lexicographically smallest point, which keeps every
    downstream geometric result deterministic.
    """
    c, a, b = prob.objective, prob.a, prob.b
    res = _solve_raw(c, a, b, FEAS_TOL)
    if res.status != OPTIMAL or not lex_tiebreak:
        return res
    n = c.shape[0]
    # pin the optimal face, then minimize coordinates one at a time; the pin
    # slack is kept well below FEAS_TOL so the witness still attains the
    # optimum within the advertised tolerance
    slack = 0.25 * FEAS_TOL
    a_cur = np.vstack([a, -c[None, :]])
    b_cur = np.append(b, -(res.value - slack))
    x_best = res.x
    for j in range(n):
        cj = np.zeros(n)
        cj[j] = -1.0
        sub = _solve_raw(cj, a_cur, b_cur, FEAS_TOL)
        if sub.status != OPTIMAL:
            break  # optimal face unbounded below in x_j: keep the vertex we have
        x_best = sub.x
        pin = np.zeros(n)
        pin[j] = 1.0
        a_cur = np.vstack([a_cur, pin[None, :], -pin[None, :]])
        b_cur = np.append(b_cur, [sub.x[j] + slack, -(sub.x[j] - slack)])
    return LpResult(OPTIMAL, res.value, x_best)
