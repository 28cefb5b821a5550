"""Derivative-free constrained minimization by linear approximation.

The optimizer keeps a simplex of n+1 evaluated points. Each iteration
interpolates linear models of the objective and of every constraint through
the simplex, takes a trust-region step on those models (feasibility first,
then objective descent), and evaluates the step. Failed steps shrink the
trust radius; a degenerate simplex triggers a geometry-repair evaluation
instead. The radius only ever decreases, from rho_beg down to rho_end.

Constraints are callables that are feasible when >= 0. The best feasible
point ever evaluated is tracked independently of the simplex, so the result
can never be worse than the best point seen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError

FEASIBILITY_TOL = 1e-6


@dataclass
class CobylaResult:
    x: np.ndarray
    fun: float
    feasible: bool
    violation: float
    evals: int
    rho_final: float


class _Point:
    __slots__ = ("x", "f", "c", "viol")

    def __init__(self, x, f, c):
        self.x = x
        self.f = f
        self.c = c
        self.viol = max(0.0, float(-c.min())) if c.size else 0.0


class _Budget(Exception):
    pass


def cobyla_minimize(objective: Callable, constraints: Sequence[Callable], x0,
                    rho_beg: float = 0.5, rho_end: float = 1e-6,
                    max_evals: int = 2000) -> CobylaResult:
    """Minimize ``objective`` subject to every constraint being >= 0.

    Deterministic in its inputs. When no point with violation below the
    feasibility tolerance is ever seen, the result reports the
    least-violating point with ``feasible=False``.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    n = x0.size
    if not rho_beg > rho_end > 0:
        raise ContractError("need rho_beg > rho_end > 0")
    if max_evals < n + 2:
        raise ContractError(f"max_evals must be at least n+2 = {n + 2}")

    state = {"evals": 0, "best_feasible": None, "least_viol": None}

    def evaluate(x) -> _Point:
        if state["evals"] >= max_evals:
            raise _Budget()
        x = np.array(x, dtype=np.float64)
        f = float(objective(x))
        c = np.array([float(ci(x)) for ci in constraints], dtype=np.float64)
        state["evals"] += 1
        pt = _Point(x, f, c)
        if pt.viol <= FEASIBILITY_TOL:
            bf = state["best_feasible"]
            if bf is None or pt.f < bf.f:
                state["best_feasible"] = pt
        lv = state["least_viol"]
        if lv is None or (pt.viol, pt.f) < (lv.viol, lv.f):
            state["least_viol"] = pt
        return pt

    rho = rho_beg
    mu = 0.0
    stall = 0
    try:
        vertices = [evaluate(x0)]
        for i in range(n):
            step = np.zeros(n)
            step[i] = rho_beg
            vertices.append(evaluate(x0 + step))

        while True:
            vertices.sort(key=lambda p: (p.f + mu * p.viol, p.viol))
            v0 = vertices[0]
            edges = np.array([v.x - v0.x for v in vertices[1:]])

            ok, repair_dir = _geometry(edges, rho)
            if not ok:
                far = max(range(1, n + 1), key=lambda j: np.linalg.norm(vertices[j].x - v0.x))
                vertices[far] = evaluate(v0.x + rho * repair_dir)
                continue

            models = _linear_models(edges, vertices)
            if models is None:
                far = max(range(1, n + 1), key=lambda j: np.linalg.norm(vertices[j].x - v0.x))
                vertices[far] = evaluate(v0.x + rho * repair_dir)
                continue
            g_f, g_c = models

            d = _trust_step(g_f, g_c, v0.c, rho)
            if np.linalg.norm(d) < 0.1 * rho:
                if rho <= rho_end * (1 + 1e-9):
                    break
                rho = max(0.5 * rho, rho_end)
                continue

            # Raise the penalty when the model trades feasibility for objective.
            pred_df = float(g_f @ d)
            viol0 = max(0.0, float(-v0.c.min())) if v0.c.size else 0.0
            pred_viol = _model_violation(g_c, v0.c, d)
            if pred_viol < viol0 - 1e-12 and pred_df > 0.0:
                mu = max(mu, 1.5 * pred_df / (viol0 - pred_viol))

            trial = evaluate(v0.x + d)

            def key(p):
                # violation tie-breaks so flat objectives still make progress
                return (p.f + mu * p.viol, p.viol)

            # Steps that stop improving the incumbent mark stagnation at
            # this radius; a few in a row trigger a radius reduction.
            tol = 1e-12 * max(1.0, abs(key(v0)[0]))
            if key(trial)[0] < key(v0)[0] - tol or trial.viol < v0.viol - tol:
                stall = 0
            else:
                stall += 1
            worst = max(range(n + 1), key=lambda j: key(vertices[j]))
            replaced = key(trial) < key(vertices[worst])
            if replaced:
                vertices[worst] = trial
            if replaced and stall < 3:
                continue
            stall = 0
            if rho <= rho_end * (1 + 1e-9):
                break
            rho = max(0.5 * rho, rho_end)
    except _Budget:
        pass

    best = state["best_feasible"]
    if best is not None:
        return CobylaResult(best.x, best.f, True, best.viol, state["evals"], rho)
    lv = state["least_viol"]
    return CobylaResult(lv.x, lv.f, False, lv.viol, state["evals"], rho)


def _geometry(edges: np.ndarray, rho: float):
    """Check simplex conditioning at the current scale.

    Returns (acceptable, repair_direction); the repair direction is the
    span's weakest direction, for use when the simplex has flattened.
    """
    n = edges.shape[0]
    dists = np.linalg.norm(edges, axis=1)
    svals = np.linalg.svd(edges, compute_uv=False)
    acceptable = bool(dists.max() <= 3.0 * rho and svals.min() >= 0.05 * rho)
    if acceptable:
        return True, None
    _, _, vt = np.linalg.svd(edges)
    return False, vt[n - 1]


def _linear_models(edges: np.ndarray, vertices: list[_Point]):
    """Gradients of the interpolating affine models around vertex 0."""
    v0 = vertices[0]
    rhs = np.array([np.concatenate(([v.f - v0.f], v.c - v0.c)) for v in vertices[1:]])
    try:
        sol = np.linalg.solve(edges, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(sol).all():
        return None
    return sol[:, 0], sol[:, 1:].T


def _model_violation(g_c: np.ndarray, c0: np.ndarray, d: np.ndarray) -> float:
    if c0.size == 0:
        return 0.0
    return max(0.0, float(-(c0 + g_c @ d).min()))


def _pocs(d: np.ndarray, A: np.ndarray, b: np.ndarray, rho: float, cycles: int) -> np.ndarray:
    """Cyclic projection onto the most-violated halfspace, inside the ball."""
    d = d.copy()
    norms2 = (A * A).sum(axis=1)
    for _ in range(cycles):
        r = b - A @ d
        k = int(np.argmax(r))
        if r[k] <= 1e-12 or norms2[k] < 1e-30:
            break
        d = d + A[k] * (r[k] / norms2[k])
        nd = np.linalg.norm(d)
        if nd > rho:
            d = d * (rho / nd)
    return d


def _trust_step(g_f: np.ndarray, g_c: np.ndarray, c0: np.ndarray, rho: float) -> np.ndarray:
    """Feasibility-first step on the linear models, within the rho-ball.

    Linearized constraints are c0 + g_c d >= 0. If the current point is
    linearly infeasible the step only reduces violation; otherwise the
    objective descends along an active-set tangential walk that lands
    exactly on constraint faces instead of drifting through them.
    """
    n = g_f.size
    d = np.zeros(n)
    if c0.size:
        A, b = g_c, -c0
        d = _pocs(d, A, b, rho, cycles=80)
        viol = max(0.0, float((b - A @ d).max()))
        if viol > 1e-9 * max(1.0, float(np.abs(c0).max())):
            return d
    return _tangential_descent(d, g_f, g_c, c0, rho)


def _tangential_descent(d: np.ndarray, g: np.ndarray, A: np.ndarray, c0: np.ndarray,
                        rho: float) -> np.ndarray:
    """Walk downhill on the linear objective along active constraint faces."""
    gnorm = np.linalg.norm(g)
    if gnorm == 0.0:
        return d
    d = d.copy()
    have = c0.size > 0
    norms = np.linalg.norm(A, axis=1) if have else None
    for _ in range(8):
        if have:
            vals = c0 + A @ d
            active = list(np.where(vals <= 0.1 * rho * norms + 1e-12)[0])
        else:
            vals, active = None, []
        p = _projected_direction(g, A, active)
        if np.linalg.norm(p) <= 1e-12 * gnorm:
            break
        t = _ball_exit(d, p, rho)
        if have:
            along = A @ p
            for k in range(len(vals)):
                if k not in active and along[k] < -1e-15:
                    t = min(t, max(vals[k], 0.0) / -along[k])
        if t <= 1e-12:
            break
        d = d + t * p
    return d


def _projected_direction(g: np.ndarray, A: np.ndarray, active: list) -> np.ndarray:
    """-g projected onto the active face, dropping constraints whose
    multiplier says the objective pulls away from them."""
    active = list(active)
    for _ in range(len(active) + 1):
        if not active:
            return -g
        N = A[active]
        mu, *_ = np.linalg.lstsq(N.T, g, rcond=None)
        p = -(g - N.T @ mu)
        if np.linalg.norm(p) > 1e-10 * np.linalg.norm(g):
            return p
        k = int(np.argmin(mu))
        if mu[k] >= -1e-12:
            return np.zeros_like(g)
        active.pop(k)
    return np.zeros_like(g)


def _ball_exit(d: np.ndarray, p: np.ndarray, rho: float) -> float:
    """Largest t with ||d + t p|| <= rho."""
    pp = float(p @ p)
    dd = float(d @ d)
    dp = float(d @ p)
    if pp == 0.0 or dd >= rho * rho:
        return 0.0
    return (-dp + np.sqrt(dp * dp + pp * (rho * rho - dd))) / pp
