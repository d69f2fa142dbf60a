"""Sparse primal-dual interior-point solver.

Solves problems in the standard form

    minimize    f(x)
    subject to  cl <= c(x) <= cu,   lb <= x <= lu

by introducing slacks for inequality rows (so every constraint row is
an equality against a bounded variable) and applying a log-barrier
primal-dual Newton iteration with a fraction-to-boundary rule and an
l1 merit line search.  The KKT systems are factored with SuperLU, with
Levenberg-style primal regularization when a factorization fails or a
direction of negative curvature is suspected.

The callback contract expects exact first and second derivatives; the
Lagrangian Hessian callback receives (x, lam, obj_factor) and must
return a symmetric sparse matrix over the x block only.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import InputError

__all__ = ["IpProblem", "IpResult", "IpOptions", "solve_ip"]

_BIG = 1e19


@dataclass
class IpProblem:
    """Callback bundle for :func:`solve_ip`."""

    n: int
    lb: np.ndarray
    ub: np.ndarray
    cl: np.ndarray
    cu: np.ndarray
    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    constraints: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], sp.spmatrix]
    hessian: Callable[[np.ndarray, np.ndarray, float], sp.spmatrix]

    def __post_init__(self):
        self.lb = np.asarray(self.lb, float)
        self.ub = np.asarray(self.ub, float)
        self.cl = np.asarray(self.cl, float)
        self.cu = np.asarray(self.cu, float)
        if self.lb.shape != (self.n,) or self.ub.shape != (self.n,):
            raise InputError("variable bound shapes do not match n")
        if self.cl.shape != self.cu.shape:
            raise InputError("constraint bound shapes differ")
        if np.any(self.lb > self.ub) or np.any(self.cl > self.cu):
            raise InputError("lower bound exceeds upper bound")

    @property
    def m(self) -> int:
        return self.cl.shape[0]


@dataclass
class IpOptions:
    tol: float = 1e-6
    max_iter: int = 300
    max_seconds: float = 1800.0
    mu_init: float = 0.1
    mu_min_factor: float = 0.1   # mu floor = tol * this
    kappa_mu: float = 0.2
    theta_mu: float = 1.5
    tau_min: float = 0.99
    reg_init: float = 1e-8
    reg_max: float = 1e8
    bound_push: float = 1e-2
    row_scale_max_grad: float = 100.0   # scale rows so max |dc_i/dx| <= this
    row_scale_min: float = 1e-8
    verbose: bool = False
    log_every: int = 10
    callback: Callable[[int, float, float, float], None] | None = None


@dataclass
class IpResult:
    status: str                 # converged | budget | failed
    x: np.ndarray
    lam: np.ndarray             # equality multipliers per constraint row
    objective: float
    kkt_error: float
    feas_error: float
    iterations: int
    message: str = ""
    mu: float = 0.0
    wall_time: float = 0.0


def _push_inside(v, lo, hi, push):
    """Move v strictly inside [lo, hi] by a relative margin."""
    v = np.array(v, float)
    span = np.minimum(hi - lo, 1.0)
    pl = np.where(np.isfinite(lo), push * np.maximum(span, 1e-6), 0.0)
    ph = np.where(np.isfinite(hi), push * np.maximum(span, 1e-6), 0.0)
    v = np.maximum(v, np.where(np.isfinite(lo), lo + pl, v))
    v = np.minimum(v, np.where(np.isfinite(hi), hi - ph, v))
    return v


def solve_ip(problem: IpProblem, x0: np.ndarray,
             options: IpOptions | None = None) -> IpResult:
    """Run the interior-point iteration from ``x0``."""
    opt = options or IpOptions()
    t0 = time.monotonic()
    n, m = problem.n, problem.m

    lb = np.where(problem.lb <= -_BIG, -np.inf, problem.lb)
    ub = np.where(problem.ub >= _BIG, np.inf, problem.ub)
    # Fixed variables (lb == ub) have no interior; relax the bounds by a
    # margin well below the tolerance so the barrier stays well defined.
    tight = np.isfinite(lb) & np.isfinite(ub) & (ub - lb < 2e-8)
    lb = np.where(tight, lb - 1e-8, lb)
    ub = np.where(tight, ub + 1e-8, ub)
    cl = np.where(problem.cl <= -_BIG, -np.inf, problem.cl)
    cu = np.where(problem.cu >= _BIG, np.inf, problem.cu)

    x = _push_inside(x0, lb, ub, opt.bound_push)

    # Gradient-based row scaling: rows whose Jacobian entries are huge at
    # the start point get scaled down so their multipliers (and with them
    # the merit penalty) stay moderate.
    J_raw = problem.jacobian(x).tocoo()
    rmax = np.zeros(m)
    np.maximum.at(rmax, J_raw.row, np.abs(J_raw.data))
    cscale = np.where(rmax > opt.row_scale_max_grad,
                      opt.row_scale_max_grad / np.maximum(rmax, 1e-300), 1.0)
    cscale = np.maximum(cscale, opt.row_scale_min)
    _csp = sp.diags(cscale, format="csr")

    def constraints(xv):
        return cscale * problem.constraints(xv)

    def jacobian(xv):
        return _csp @ problem.jacobian(xv)

    def hessian(xv, lamv, of):
        return problem.hessian(xv, cscale * lamv, of)

    cl = cscale * cl
    cu = cscale * cu

    # Slack variables: one per constraint row that is not an equality.
    eq_row = np.isfinite(cl) & np.isfinite(cu) & (cu - cl <= 1e-12)
    ineq = np.where(~eq_row)[0]
    ns = ineq.size

    # Extended variable z = (x, s); extended equality  g(z) = 0 where
    #   equality rows:    c_i(x) - cl_i = 0
    #   inequality rows:  c_i(x) - s_k  = 0, with cl_i <= s_k <= cu_i.
    zl = np.concatenate([lb, cl[ineq]])
    zu = np.concatenate([ub, cu[ineq]])
    rhs0 = np.where(eq_row, cl, 0.0)

    def g_of(x, s):
        c = constraints(x)
        r = c - rhs0
        r[ineq] -= s
        return r

    # sparse block [Jx, -I_sel] built from the x-Jacobian
    sel = sp.csc_matrix(
        (-np.ones(ns), (ineq, np.arange(ns))), shape=(m, ns))

    c0 = constraints(x)
    s = _push_inside(c0[ineq], cl[ineq], cu[ineq], opt.bound_push)
    z = np.concatenate([x, s])

    has_lo = np.isfinite(zl)
    has_hi = np.isfinite(zu)
    zllam = np.where(has_lo, 1.0, 0.0)   # duals for lower bounds
    zulam = np.where(has_hi, 1.0, 0.0)   # duals for upper bounds
    lam = np.zeros(m)

    mu = opt.mu_init
    mu_min = opt.tol * opt.mu_min_factor
    reg = 0.0
    status, message = "budget", "iteration budget exhausted"
    it = 0
    last_alpha = 0.0
    kkt = np.inf
    feas = np.inf

    def dual_inf(x, lam, zllam, zulam):
        grad = problem.gradient(x)
        J = jacobian(x)
        r = np.concatenate([grad + J.T @ lam, sel.T @ lam])
        r -= zllam
        r += zulam
        sd = max(1.0, (np.abs(lam).sum() + zllam.sum() + zulam.sum())
                 / max(1, m + 2 * (n + ns)))
        return np.max(np.abs(r)) / sd, grad, J

    for it in range(1, opt.max_iter + 1):
        if time.monotonic() - t0 > opt.max_seconds:
            status, message = "budget", "time budget exhausted"
            break
        xx, ss = z[:n], z[n:]
        gval = g_of(xx, ss)
        feas = np.max(np.abs(gval)) if m else 0.0
        din, grad, Jx = dual_inf(xx, lam, zllam, zulam)
        dlo = np.where(has_lo, z - zl, 1.0)
        dhi = np.where(has_hi, zu - z, 1.0)
        comp_lo = np.where(has_lo, zllam * dlo - mu, 0.0)
        comp_hi = np.where(has_hi, zulam * dhi - mu, 0.0)
        comp0 = max(np.max(np.abs(np.where(has_lo, zllam * dlo, 0.0)), initial=0.0),
                    np.max(np.abs(np.where(has_hi, zulam * dhi, 0.0)), initial=0.0))
        kkt = max(din, feas, comp0 if mu <= mu_min * 1.01 else 0.0)
        if opt.callback is not None:
            opt.callback(it, feas, din, mu)
        if opt.verbose and (it % opt.log_every == 0 or it == 1):
            print(f"  ip it {it:4d}  f {problem.objective(xx):+.6e} "
                  f"feas {feas:.2e} dual {din:.2e} mu {mu:.1e} "
                  f"reg {reg:.1e} |lam| {np.abs(lam).max(initial=0.0):.1e} "
                  f"alpha {last_alpha:.1e}")
        if max(din, feas, comp0) <= opt.tol:
            status, message = "converged", "KKT conditions satisfied"
            break
        # barrier subproblem convergence -> shrink mu
        err_mu = max(din, feas,
                     np.max(np.abs(comp_lo), initial=0.0),
                     np.max(np.abs(comp_hi), initial=0.0))
        if err_mu <= 10.0 * mu and mu > mu_min:
            mu = max(mu_min, min(opt.kappa_mu * mu, mu ** opt.theta_mu))
            continue

        # Newton step on the primal-dual system, condensed to (dz, dlam)
        sigma = zllam / dlo * has_lo + zulam / dhi * has_hi
        W = hessian(xx, lam, 1.0)
        Jz = sp.hstack([Jx, sel], format="csc")
        rd = np.concatenate([grad + Jx.T @ lam, sel.T @ lam])
        rd -= np.where(has_lo, mu / dlo, 0.0)
        rd += np.where(has_hi, mu / dhi, 0.0)

        step = None
        reg_try = reg
        for _ in range(40):
            H = sp.block_diag(
                [W + sp.eye(n) * reg_try, sp.eye(ns) * reg_try],
                format="csc")
            H = H + sp.diags(sigma, format="csc")
            K = sp.bmat([[H, Jz.T], [Jz, -sp.eye(m) * 1e-10]],
                        format="csc")
            try:
                lu = splu(K, permc_spec="COLAMD",
                          options={"SymmetricMode": True})
                sol = lu.solve(np.concatenate([-rd, -gval]))
            except (RuntimeError, ValueError):
                sol = None
            if sol is not None and np.all(np.isfinite(sol)):
                dz = sol[:n + ns]
                # curvature test on the regularized model keeps the
                # merit direction descent-compatible; gigantic steps
                # signal near-singularity and get re-regularized
                curv = dz @ (H @ dz)
                if curv >= -1e-12 * max(1.0, dz @ dz) \
                        and np.max(np.abs(dz)) < 1e6:
                    step = sol
                    break
            reg_try = max(10.0 * reg_try, opt.reg_init) \
                if reg_try > 0 else opt.reg_init
            if reg_try > opt.reg_max:
                break
        if step is None:
            status, message = "failed", "KKT factorization failed"
            break
        reg = reg_try / 10.0 if reg_try > opt.reg_init else 0.0
        dz = step[:n + ns]
        dlam = step[n + ns:]
        dzl = (mu - zllam * dlo - zllam * dz) / dlo * has_lo
        dzu = (mu - zulam * dhi + zulam * dz) / dhi * has_hi

        # fraction-to-boundary
        tau = max(opt.tau_min, 1.0 - mu)

        def max_alpha(margin, dv, active):
            """Largest step keeping margin + a*dv >= (1-tau)*margin."""
            bad = active & (dv < 0)
            if not np.any(bad):
                return 1.0
            return min(1.0, max(0.0, np.min(-tau * margin[bad] / dv[bad])))

        a_pr = min(max_alpha(dlo, dz, has_lo),
                   max_alpha(dhi, -dz, has_hi))
        a_du = min(max_alpha(zllam, dzl, has_lo),
                   max_alpha(zulam, dzu, has_hi))

        # l1 merit line search on the primal step; the penalty weight is
        # the smallest that makes the step a descent direction for the
        # merit model, so huge multipliers cannot freeze the step size
        c1n = np.abs(gval).sum()
        desc = rd @ dz + 0.5 * max(0.0, dz @ (H @ dz))
        nu = min(1e10, max(1.0, 2.2 * abs(desc) / max(c1n, 1e-10))) \
            if c1n > 1e-12 else 1.0

        def merit(zv):
            xv, sv = zv[:n], zv[n:]
            bar = 0.0
            dl = np.where(has_lo, zv - zl, 1.0)
            dh = np.where(has_hi, zu - zv, 1.0)
            if np.any(dl <= 0) or np.any(dh <= 0):
                return np.inf
            bar -= mu * np.sum(np.log(dl[has_lo]))
            bar -= mu * np.sum(np.log(dh[has_hi]))
            return (problem.objective(xv) + bar
                    + nu * np.abs(g_of(xv, sv)).sum())

        m0 = merit(z)
        # directional derivative estimate for Armijo
        dmer = rd @ dz - nu * np.abs(gval).sum()
        alpha = a_pr
        accepted = False
        best_alpha, best_m = 0.0, m0
        for _ in range(40):
            z_try = z + alpha * dz
            m1 = merit(z_try)
            if np.isfinite(m1) and m1 < best_m:
                best_alpha, best_m = alpha, m1
            if np.isfinite(m1) and \
                    m1 <= m0 + 1e-4 * alpha * min(dmer, 0.0) + 1e-14 * abs(m0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # take the best finite backtracked point if any improved the
            # merit; otherwise stay put and let regularization grow
            alpha = best_alpha
            z_try = z + alpha * dz
            if alpha == 0.0:
                reg = max(10.0 * max(reg, opt.reg_init), opt.reg_init)
                if reg > opt.reg_max:
                    status, message = "failed", "line search stalled"
                    break
                continue
        z = z_try
        last_alpha = alpha
        lam = lam + alpha * dlam
        zllam = np.clip(zllam + a_du * dzl, 0.0, None)
        zulam = np.clip(zulam + a_du * dzu, 0.0, None)
        # keep bound duals away from zero relative to mu (dual safeguard)
        dlo = np.where(has_lo, z - zl, 1.0)
        dhi = np.where(has_hi, zu - z, 1.0)
        zllam = np.where(has_lo, np.clip(zllam, mu / (1e10 * dlo),
                                         1e10 * mu / dlo), 0.0)
        zulam = np.where(has_hi, np.clip(zulam, mu / (1e10 * dhi),
                                         1e10 * mu / dhi), 0.0)

    xx = z[:n]
    return IpResult(
        status=status, x=xx, lam=cscale * lam,
        objective=float(problem.objective(xx)),
        kkt_error=float(kkt), feas_error=float(feas),
        iterations=it, message=message, mu=float(mu),
        wall_time=time.monotonic() - t0)
