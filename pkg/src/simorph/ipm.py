"""Small dense log-barrier interior-point solver.

Solves programs of the form

    maximize  sum_j alpha_j * log(a_j^T x + b_j) + c^T x
    s.t.      ||S_m x + d_m||^2 + g_m^T x + r_m <= 0     (sum-of-squares)
              a_m^T x + r_m <= 0                          (affine)

which covers every convex subproblem in this package (quadratic epigraphs,
affine underestimators, power/modulus balls, linear QoS rows). The
sum-of-squares rows of all constraints are stacked into one matrix so each
Newton step assembles the Hessian with a handful of BLAS products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class IpmError(RuntimeError):
    pass


@dataclass
class ConvexProgram:
    n: int
    log_a: np.ndarray       # (J, n)
    log_b: np.ndarray       # (J,)
    log_alpha: np.ndarray   # (J,)
    lin: np.ndarray         # (n,)
    sq_rows: np.ndarray     # (R, n) stacked factor rows of all sumsq constraints
    sq_offsets: np.ndarray  # (R,)
    sq_starts: np.ndarray   # (mq,) start row of each constraint's segment
    sq_counts: np.ndarray   # (mq,) rows per constraint
    sq_lin: np.ndarray      # (mq, n)
    sq_r: np.ndarray        # (mq,)
    aff_a: np.ndarray       # (ma, n)
    aff_r: np.ndarray       # (ma,)

    @property
    def num_constraints(self) -> int:
        return self.sq_r.size + self.aff_r.size

    def _sq_values(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.sq_r.size == 0:
            return np.zeros(0), np.zeros(0)
        v = self.sq_rows @ x + self.sq_offsets
        sums = np.add.reduceat(v * v, self.sq_starts)
        return v, sums + self.sq_lin @ x + self.sq_r

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        _, quad = self._sq_values(x)
        if self.aff_r.size:
            aff = self.aff_a @ x + self.aff_r
            return np.concatenate([quad, aff]) if quad.size else aff
        return quad

    def log_args(self, x: np.ndarray) -> np.ndarray:
        if self.log_b.size == 0:
            return np.zeros(0)
        return self.log_a @ x + self.log_b

    def objective(self, x: np.ndarray) -> float:
        val = float(self.lin @ x)
        if self.log_b.size:
            args = self.log_args(x)
            if np.any(args <= 0):
                return -np.inf
            val += float(self.log_alpha @ np.log(args))
        return val


class ProgramBuilder:
    """Incremental assembly of a ConvexProgram."""

    def __init__(self, n: int):
        self.n = n
        self._log = []
        self._lin = np.zeros(n)
        self._sq = []
        self._aff = []

    def add_log(self, a: np.ndarray, b: float, alpha: float = 1.0):
        self._log.append((np.asarray(a, dtype=float), float(b), float(alpha)))

    def add_linear(self, c: np.ndarray):
        self._lin = self._lin + np.asarray(c, dtype=float)

    def add_sumsq_con(self, s: np.ndarray, d: np.ndarray | None = None,
                      g: np.ndarray | None = None, r: float = 0.0):
        """Constraint ||s x + d||^2 + g^T x + r <= 0."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        d = np.zeros(s.shape[0]) if d is None else np.atleast_1d(
            np.asarray(d, dtype=float))
        g = np.zeros(self.n) if g is None else np.asarray(g, dtype=float)
        self._sq.append((s, d, g, float(r)))

    def add_affine_con(self, g: np.ndarray, r: float):
        self._aff.append((np.asarray(g, dtype=float), float(r)))

    def build(self) -> ConvexProgram:
        n = self.n
        if self._log:
            log_a = np.stack([a for a, _, _ in self._log])
            log_b = np.array([b for _, b, _ in self._log])
            log_alpha = np.array([al for _, _, al in self._log])
        else:
            log_a, log_b, log_alpha = np.zeros((0, n)), np.zeros(0), np.zeros(0)
        if self._sq:
            sq_rows = np.vstack([s for s, _, _, _ in self._sq])
            sq_offsets = np.concatenate([d for _, d, _, _ in self._sq])
            counts = np.array([s.shape[0] for s, _, _, _ in self._sq])
            starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
            sq_lin = np.stack([g for _, _, g, _ in self._sq])
            sq_r = np.array([r for _, _, _, r in self._sq])
        else:
            sq_rows = np.zeros((0, n))
            sq_offsets = np.zeros(0)
            counts = np.zeros(0, dtype=int)
            starts = np.zeros(0, dtype=int)
            sq_lin = np.zeros((0, n))
            sq_r = np.zeros(0)
        if self._aff:
            aff_a = np.stack([g for g, _ in self._aff])
            aff_r = np.array([r for _, r in self._aff])
        else:
            aff_a, aff_r = np.zeros((0, n)), np.zeros(0)
        return ConvexProgram(n=n, log_a=log_a, log_b=log_b,
                             log_alpha=log_alpha, lin=self._lin,
                             sq_rows=sq_rows, sq_offsets=sq_offsets,
                             sq_starts=starts.astype(int),
                             sq_counts=counts.astype(int), sq_lin=sq_lin,
                             sq_r=sq_r, aff_a=aff_a, aff_r=aff_r)


@dataclass
class IpmInfo:
    converged: bool
    kkt_residual: float
    barrier_t: float
    newton_steps: int
    message: str = ""


def _barrier_value(prog: ConvexProgram, x: np.ndarray, t: float) -> float:
    args = prog.log_args(x)
    cons = prog.constraint_values(x)
    if np.any(args <= 0) or np.any(cons >= 0):
        return np.inf
    val = -t * float(prog.lin @ x)
    if args.size:
        val -= t * float(prog.log_alpha @ np.log(args))
    if cons.size:
        val -= float(np.sum(np.log(-cons)))
    return val


def solve(prog: ConvexProgram, x0: np.ndarray, t0: float = 1.0,
          t_growth: float = 10.0, gap_tol: float = 1e-8,
          newton_tol: float = 1e-11, max_newton: int = 40) -> tuple[np.ndarray, IpmInfo]:
    """Barrier solve from a strictly feasible start.

    Stops when the duality measure (constraint count over t) drops below
    ``gap_tol``. Each centering stage ends when the Newton decrement falls
    below ``newton_tol`` relative to the barrier value's magnitude. Raises
    IpmError if x0 is not strictly interior.
    """
    x = np.asarray(x0, dtype=float).copy()
    m = prog.num_constraints
    if np.any(prog.constraint_values(x) >= 0) or np.any(prog.log_args(x) <= 0):
        raise IpmError("interior-point start is not strictly feasible")

    mq = prog.sq_r.size
    row_seg = np.repeat(np.arange(mq), prog.sq_counts) if mq else np.zeros(0, int)
    t = t0
    total_steps = 0
    ridge_base = 1e-13
    while True:
        for _ in range(max_newton):
            args = prog.log_args(x)
            grad = -t * prog.lin
            hess = np.zeros((prog.n, prog.n))
            if args.size:
                w = prog.log_alpha / args
                grad = grad - t * (prog.log_a.T @ w)
                hess += t * (prog.log_a.T * (prog.log_alpha / args**2)) @ prog.log_a

            if mq:
                v, quad = prog._sq_values(x)
                sq = -quad                                   # slacks
                gq = 2.0 * np.add.reduceat(prog.sq_rows * v[:, None],
                                            prog.sq_starts, axis=0) + prog.sq_lin
                grad = grad + gq.T @ (1.0 / sq)
                hess += (gq.T * (1.0 / sq**2)) @ gq
                row_w = 2.0 / sq[row_seg]
                hess += (prog.sq_rows.T * row_w) @ prog.sq_rows
            if prog.aff_r.size:
                sa = -(prog.aff_a @ x + prog.aff_r)
                grad = grad + prog.aff_a.T @ (1.0 / sa)
                hess += (prog.aff_a.T * (1.0 / sa**2)) @ prog.aff_a

            scale = max(np.max(np.abs(np.diag(hess))), 1.0)
            hess[np.diag_indices_from(hess)] += ridge_base * scale
            try:
                dx = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                dx = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            decrement = float(-grad @ dx)
            total_steps += 1
            base = _barrier_value(prog, x, t)
            if decrement <= newton_tol * max(1.0, abs(base)):
                break

            step = 1.0
            accepted = False
            while step > 1e-10:
                cand = x + step * dx
                val = _barrier_value(prog, cand, t)
                if np.isfinite(val) and val <= base - 0.25 * step * decrement:
                    x = cand
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break

        if m == 0 or m / t <= gap_tol:
            break
        t *= t_growth

    # Stationarity residual of the original problem at the final iterate.
    args = prog.log_args(x)
    grad_obj = -prog.lin.copy()
    if args.size:
        grad_obj -= prog.log_a.T @ (prog.log_alpha / args)
    cons = prog.constraint_values(x)
    slacks = -cons
    lam = 1.0 / (t * slacks) if m else np.zeros(0)
    resid = grad_obj
    if mq:
        v, _ = prog._sq_values(x)
        gq = 2.0 * np.add.reduceat(prog.sq_rows * v[:, None],
                                    prog.sq_starts, axis=0) + prog.sq_lin
        resid = resid + gq.T @ lam[:mq]
    if prog.aff_r.size:
        resid = resid + prog.aff_a.T @ lam[mq:]
    kkt = float(np.max(np.abs(resid))) if resid.size else 0.0
    return x, IpmInfo(converged=True, kkt_residual=kkt, barrier_t=t,
                      newton_steps=total_steps)
