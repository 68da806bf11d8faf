"""Batched box-constrained Levenberg-Marquardt (a trust-region method).

Solves many small independent problems ``min 0.5*||res_b(x_b)||^2`` subject
to ``lower <= x_b <= upper`` in lock-step, which is what lets the experiment
harness fit tens of thousands of spectra on one core. The damping parameter
plays the role of the inverse trust-region radius (Marquardt scaling by the
diagonal of ``J^T J``). Variables pinned at a bound are frozen, and the
remaining step is either projected onto the box or shortened to its
boundary, whichever the quadratic model rates better. A step is accepted only
if it strictly lowers the cost, so the accepted cost sequence is monotone. Damping follows Nielsen's update rule; the cost test follows
MINPACK (actual and predicted relative reductions both below ``ftol``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RUNNING, XTOL, FTOL, GTOL, MAX_ITER, STALLED = 0, 1, 2, 3, -1, -2
STATUS_TEXT = {
    RUNNING: "running",
    XTOL: "step norm below tolerance",
    FTOL: "relative cost improvement below tolerance",
    GTOL: "projected gradient vanished",
    MAX_ITER: "iteration limit reached",
    STALLED: "damping overflow without progress",
}


@dataclass
class BatchSolution:
    x: np.ndarray
    cost: np.ndarray
    status: np.ndarray
    iterations: np.ndarray
    history: np.ndarray  # accepted cost after each iteration, NaN-padded

    @property
    def converged(self) -> np.ndarray:
        return self.status > 0


def least_squares_box(fun, x0, lower, upper, xtol=1e-10, ftol=1e-8, max_iter=200, gtol=1e-14, damping=1e-3):
    """Minimise a batch of box-constrained least-squares problems.

    ``fun(x, rows)`` receives trial points ``x`` of shape ``(b, p)`` for the
    batch members ``rows`` and returns residuals ``(b, m)`` and Jacobians
    ``(b, m, p)``. ``lower``/``upper`` broadcast against ``x0`` ``(B, p)``.
    """
    x = np.array(x0, dtype=float)
    B, P = x.shape
    lower = np.broadcast_to(np.asarray(lower, dtype=float), x.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), x.shape)
    x = np.clip(x, lower, upper)
    rows = np.arange(B)
    res, jac = fun(x, rows)
    cost = 0.5 * np.einsum("bm,bm->b", res, res)
    lam = np.full(B, damping)
    nu = np.full(B, 2.0)
    status = np.full(B, RUNNING)
    nit = np.zeros(B, dtype=int)
    history = np.full((B, max_iter + 1), np.nan)
    history[:, 0] = cost

    for it in range(max_iter):
        idx = np.nonzero(status == RUNNING)[0]
        if idx.size == 0:
            break
        J, r, xi = jac[idx], res[idx], x[idx]
        g = np.einsum("bmp,bm->bp", J, r)
        A = np.einsum("bmp,bmq->bpq", J, J)

        # projected gradient: components pushing into an active bound do not count
        lo_hit, hi_hit = xi <= lower[idx], xi >= upper[idx]
        pg = np.where((lo_hit & (g > 0)) | (hi_hit & (g < 0)), 0.0, g)
        small_g = np.max(np.abs(pg), axis=1) <= gtol * np.maximum(1.0, cost[idx])
        status[idx[small_g]] = GTOL

        # variables held at a bound are frozen for this step: first those the
        # gradient pushes outward, then any the damped step would push outward
        free = ~((lo_hit & (g > 0)) | (hi_hit & (g < 0)))
        eye = np.eye(P)
        d = np.diagonal(A, axis1=1, axis2=2).copy()
        d = np.where(d > 0, d, 1.0)
        damped = A + lam[idx, None, None] * (d[:, :, None] * eye)
        for _ in range(P):
            M = np.where(free[:, :, None] & free[:, None, :], damped, eye)
            delta = np.linalg.solve(M, np.where(free, -g, 0.0)[:, :, None])[:, :, 0]
            leaving = free & ((lo_hit & (delta < 0)) | (hi_hit & (delta > 0)))
            if not leaving.any():
                break
            free &= ~leaving
        # clipping a coupled step can turn it uphill; the step shortened to the
        # box boundary cannot, so take whichever the model rates better
        lo_i, hi_i = lower[idx], upper[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(delta > 0, (hi_i - xi) / delta, np.where(delta < 0, (lo_i - xi) / delta, np.inf))
        alpha = np.clip(np.min(room, axis=1), 0.0, 1.0)
        model = lambda st: -(np.einsum("bp,bp->b", g, st) + 0.5 * np.einsum("bp,bpq,bq->b", st, A, st))
        s_clip = np.clip(xi + delta, lo_i, hi_i) - xi
        s_cut = alpha[:, None] * delta
        pred_clip, pred_cut = model(s_clip), model(s_cut)
        use_clip = pred_clip >= pred_cut
        s = np.where(use_clip[:, None], s_clip, s_cut)
        predicted = np.where(use_clip, pred_clip, pred_cut)
        x_new = np.clip(xi + s, lo_i, hi_i)

        res_new, jac_new = fun(x_new, idx)
        cost_new = 0.5 * np.einsum("bm,bm->b", res_new, res_new)
        actual = cost[idx] - cost_new
        accept = (actual > 0) & ~small_g
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(predicted > 0, actual / predicted, 0.0)

        # Nielsen's damping update
        shrink = np.maximum(1.0 / 3.0, 1.0 - (2.0 * np.clip(rho, 0.0, 1.0) - 1.0) ** 3)
        lam[idx] = np.maximum(np.where(accept, lam[idx] * shrink, lam[idx] * nu[idx]), 1e-12)
        nu[idx] = np.where(accept, 2.0, nu[idx] * 2.0)

        acc = idx[accept]
        x[acc] = x_new[accept]
        res[acc] = res_new[accept]
        jac[acc] = jac_new[accept]
        cost[acc] = cost_new[accept]
        nit[idx] += 1
        history[idx, it + 1] = cost[idx]

        step_norm = np.sqrt(np.einsum("bp,bp->b", s, s))
        running = status[idx] == RUNNING
        hit_x = running & (step_norm < xtol)
        status[idx[hit_x]] = XTOL
        # MINPACK-style: actual and predicted relative reductions both below ftol
        scale = np.maximum(cost[idx] + np.where(accept, actual, 0.0), np.finfo(float).tiny)
        hit_f = running & ~hit_x & (np.abs(actual) / scale < ftol) & (predicted / scale < ftol)
        status[idx[hit_f]] = FTOL
        stalled = running & ~hit_x & ~hit_f & (lam[idx] > 1e16)
        status[idx[stalled]] = STALLED

    status[status == RUNNING] = MAX_ITER
    return BatchSolution(x=x, cost=cost, status=status, iterations=nit, history=history)
