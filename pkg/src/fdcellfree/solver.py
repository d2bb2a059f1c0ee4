"""Log-barrier interior-point solver for small smooth convex programs.

Problems have the form

    maximize   lin . x - 0.5 * sum_i r_i (x_i - z_i)^2
    subject to sum_i q_i x_i^2 + a . x <= b        (affine when q = 0)
               x_i^2 <= c * ln(1 + x_j)            (c > 0)
               lo <= x <= hi

and are solved by damped Newton steps on t * (-objective) + barrier with
t multiplied by ``mu`` until the duality-gap bound m / t drops below tol.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Status(str, enum.Enum):
    OPTIMAL = "OPTIMAL"
    MAX_ITER = "MAX_ITER"
    INFEASIBLE_START = "INFEASIBLE_START"


class Kind(str, enum.Enum):
    AFFINE = "AFFINE"
    QUAD_LE_AFFINE = "QUAD_LE_AFFINE"
    SQUARE_LE_LOG = "SQUARE_LE_LOG"
    BOX = "BOX"


@dataclass
class SolverOptions:
    tol: float = 1e-8
    mu: float = 10.0
    t0: float = 1.0
    max_newton: int = 200
    newton_tol: float = 1e-10
    alpha: float = 0.01
    beta: float = 0.5


@dataclass
class SolveReport:
    x_star: np.ndarray
    objective_value: float
    kkt_residual: float
    barrier_iterations: int
    status: Status
    newton_steps: int = 0
    decrements: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == Status.OPTIMAL


def _as_dense(n, spec):
    """Accept a dense vector or a {index: value} mapping."""
    if isinstance(spec, dict):
        v = np.zeros(n)
        for i, val in spec.items():
            v[int(i)] += float(val)
        return v
    v = np.asarray(spec, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"expected a length-{n} vector")
    return v


class ConvexProgram:
    """Builder and evaluator for a maximization problem over R^n."""

    def __init__(self, n: int):
        self.n = int(n)
        self.lin = np.zeros(self.n)
        self.r = np.zeros(self.n)
        self.anchor = np.zeros(self.n)
        self.lo = np.full(self.n, -np.inf)
        self.hi = np.full(self.n, np.inf)
        self._q, self._a, self._b, self._qkind = [], [], [], []
        self._li, self._lj, self._lc = [], [], []
        self.names: list = []
        self._compiled = None

    # construction
    def set_objective(self, lin, r=None, anchor=None):
        self.lin = _as_dense(self.n, lin)
        if r is not None:
            self.r = _as_dense(self.n, r)
            if np.any(self.r < 0):
                raise ValueError("quadratic penalty weights must be >= 0")
        if anchor is not None:
            self.anchor = _as_dense(self.n, anchor)
        return self

    def add_affine(self, a, b, name=None):
        return self._add_quad(np.zeros(self.n), _as_dense(self.n, a), b, Kind.AFFINE, name)

    def add_quad(self, q, a, b, name=None):
        q = _as_dense(self.n, q)
        if np.any(q < 0):
            raise ValueError("quadratic coefficients must be >= 0")
        return self._add_quad(q, _as_dense(self.n, a), b, Kind.QUAD_LE_AFFINE, name)

    def _add_quad(self, q, a, b, kind, name):
        self._q.append(q)
        self._a.append(a)
        self._b.append(float(b))
        self._qkind.append(kind)
        self.names.append(name or f"{kind.value.lower()}{len(self._q) - 1}")
        self._compiled = None
        return self

    def add_square_le_log(self, i: int, j: int, c: float, name=None):
        if c <= 0:
            raise ValueError("log constraint scale must be > 0")
        self._li.append(int(i))
        self._lj.append(int(j))
        self._lc.append(float(c))
        self._log_names = getattr(self, "_log_names", []) + [name or f"square_le_log{len(self._li) - 1}"]
        self._compiled = None
        return self

    def set_box(self, i, lo=-np.inf, hi=np.inf):
        self.lo[i] = lo
        self.hi[i] = hi
        self._compiled = None
        return self

    # evaluation
    def _compile(self):
        if self._compiled is None:
            n = self.n
            Q = np.array(self._q).reshape(-1, n)
            A = np.array(self._a).reshape(-1, n)
            b = np.array(self._b)
            li = np.array(self._li, dtype=int)
            lj = np.array(self._lj, dtype=int)
            lc = np.array(self._lc)
            blo = np.flatnonzero(np.isfinite(self.lo))
            bhi = np.flatnonzero(np.isfinite(self.hi))
            self._compiled = (Q, A, b, li, lj, lc, blo, bhi)
        return self._compiled

    @property
    def m(self) -> int:
        Q, A, b, li, lj, lc, blo, bhi = self._compile()
        return len(b) + len(li) + len(blo) + len(bhi)

    def count(self, kind: Kind) -> int:
        if kind == Kind.SQUARE_LE_LOG:
            return len(self._li)
        if kind == Kind.BOX:
            return int(np.isfinite(self.lo).sum() + np.isfinite(self.hi).sum())
        return sum(1 for k in self._qkind if k == kind)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.lin @ x - 0.5 * np.sum(self.r * (x - self.anchor) ** 2))

    def constraint_values(self, x) -> np.ndarray:
        """All constraint functions g(x); feasibility means g <= 0."""
        Q, A, b, li, lj, lc, blo, bhi = self._compile()
        x = np.asarray(x, dtype=float)
        g_q = Q @ (x * x) + A @ x - b
        with np.errstate(invalid="ignore", divide="ignore"):
            arg = 1.0 + x[lj]
            g_l = np.where(arg > 0, x[li] ** 2 - lc * np.log(np.where(arg > 0, arg, 1.0)), np.inf)
        return np.concatenate([g_q, g_l, self.lo[blo] - x[blo], x[bhi] - self.hi[bhi]])

    def is_strictly_feasible(self, x) -> bool:
        return bool(np.all(self.constraint_values(x) < 0))

    def max_violation(self, x) -> float:
        g = self.constraint_values(x)
        return float(max(0.0, g.max())) if g.size else 0.0

    def _barrier_derivs(self, x):
        """Value, gradient and Hessian of -sum log(-g)."""
        Q, A, b, li, lj, lc, blo, bhi = self._compile()
        n = self.n
        g_q = Q @ (x * x) + A @ x - b
        G_q = 2.0 * Q * x[None, :] + A
        s_q = -g_q
        val = -np.sum(np.log(s_q))
        grad = G_q.T @ (1.0 / s_q)
        hess = (G_q.T * (1.0 / s_q ** 2)) @ G_q
        hdiag = (2.0 * Q).T @ (1.0 / s_q)

        if len(li):
            arg = 1.0 + x[lj]
            s_l = lc * np.log(arg) - x[li] ** 2
            val -= np.sum(np.log(s_l))
            di = 2.0 * x[li]
            dj = -lc / arg
            G_l = np.zeros((len(li), n))
            G_l[np.arange(len(li)), li] += di
            G_l[np.arange(len(li)), lj] += dj
            grad += G_l.T @ (1.0 / s_l)
            hess += (G_l.T * (1.0 / s_l ** 2)) @ G_l
            np.add.at(hdiag, li, 2.0 / s_l)
            np.add.at(hdiag, lj, (lc / arg ** 2) / s_l)

        s_lo = x[blo] - self.lo[blo]
        s_hi = self.hi[bhi] - x[bhi]
        val -= np.sum(np.log(s_lo)) + np.sum(np.log(s_hi))
        np.add.at(grad, blo, -1.0 / s_lo)
        np.add.at(grad, bhi, 1.0 / s_hi)
        np.add.at(hdiag, blo, 1.0 / s_lo ** 2)
        np.add.at(hdiag, bhi, 1.0 / s_hi ** 2)
        hess[np.diag_indices(n)] += hdiag
        return val, grad, hess


def solve(program: ConvexProgram, x0, tol: float = None, options: SolverOptions = None) -> SolveReport:
    """Maximize ``program`` from the strictly feasible point ``x0``."""
    opt = options or SolverOptions()
    tol = opt.tol if tol is None else tol
    x = np.array(x0, dtype=float)
    if not program.is_strictly_feasible(x):
        return SolveReport(x, program.objective(x), np.inf, 0, Status.INFEASIBLE_START)
    m = program.m
    if m == 0:
        raise ValueError("unconstrained programs are not supported")
    lin, r, z = program.lin, program.r, program.anchor

    def merit(t, y):
        g = program.constraint_values(y)
        if np.any(g >= 0):
            return np.inf
        return -t * program.objective(y) - np.sum(np.log(-g))

    t = opt.t0
    steps = 0
    outer = 0
    decrements = []
    status = Status.OPTIMAL
    while True:
        outer += 1
        history = []
        while True:
            val, g_b, H_b = program._barrier_derivs(x)
            grad = -t * (lin - r * (x - z)) + g_b
            H = H_b.copy()
            H[np.diag_indices_from(H)] += t * r
            try:
                dx = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                dx = -np.linalg.lstsq(H, grad, rcond=None)[0]
            lam2 = float(-grad @ dx)
            history.append(lam2)
            if lam2 / 2.0 <= opt.newton_tol or steps >= opt.max_newton:
                break
            f0 = -t * program.objective(x) + val
            s = 1.0
            while True:
                f1 = merit(t, x + s * dx)
                if f1 <= f0 - opt.alpha * s * lam2:
                    break
                s *= opt.beta
                if s < 1e-14:
                    break
            if s < 1e-14:
                break
            x = x + s * dx
            steps += 1
            # rounding floor of the merit value: further steps cannot help
            if f0 - f1 <= 1e-14 * max(1.0, abs(f0)):
                break
        decrements.append(history)
        if steps >= opt.max_newton:
            status = Status.MAX_ITER
            break
        if m / t <= tol:
            break
        t *= opt.mu
    return SolveReport(x_star=x, objective_value=program.objective(x), kkt_residual=m / t,
                       barrier_iterations=outer, status=status, newton_steps=steps,
                       decrements=decrements)


def strict_interior(program: ConvexProgram, x_eq, shrink: float = 1e-4, mask=None):
    """Pull ``x_eq`` strictly inside by scaling the masked variables by 1 - shrink.

    Points that are already strictly feasible are returned unchanged. Box
    lower bounds crossed by the shrink are restored just inside the bound.
    Raises ``ValueError`` if the result is still not strictly feasible.
    """
    x = np.array(x_eq, dtype=float)
    if program.is_strictly_feasible(x):
        return x
    idx = np.ones(program.n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    x[idx] *= 1.0 - shrink
    lo = program.lo
    low = np.isfinite(lo) & (x <= lo)
    x[low] = lo[low] + shrink * np.maximum(1.0, np.abs(lo[low]))
    if not program.is_strictly_feasible(x):
        raise ValueError("no strictly feasible point found by shrinking")
    return x
