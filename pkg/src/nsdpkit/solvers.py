"""First-order solvers for matrix-inequality constrained minimization.

Three outer algorithms share one smooth inner loop:

* ``solve_external_penalty``: minimize f + (rho_k / 2) ||neg part of
  G||_F^2 for an increasing penalty schedule; multiplier estimates are
  rho_k times the projected negative part.
* ``solve_augmented_lagrangian``: the safeguarded variant.  A carried
  estimate Ytilde enters through the shifted projection
  S(x) = proj_psd(-G(x) + Ytilde / rho); the penalty parameter is
  frozen whenever the measure V = S - Ytilde / rho shrinks by a fixed
  factor, and the next safeguard is the current multiplier projected
  into a norm ball.  With a zero-radius ball the method reduces to the
  external penalty scheme exactly.
* ``solve_sqp``: sequential linearization.  Each step solves
  min d'Hd + grad f . d subject to G(x) + DG(x)[d] PSD (itself a
  matrix-constrained problem, handled by the augmented Lagrangian), and
  a backtracking line search on f accepts the step.

The inner minimizer is gradient descent with a limited-memory
quasi-Newton direction (two-loop recursion, memory 5) and an Armijo
backtracking line search.  Objectives here are once differentiable but
not twice (the squared projection introduces kinks in the second
derivative), which is why no Newton variant is attempted.

Every outer iterate is recorded with its multiplier estimate, shift,
stationarity defect, and residuals, so traces can be replayed through
the sequential-certificate checks without recomputation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kkt, linalg, model


@dataclass(frozen=True)
class AlConfig:
    """Parameters of the safeguarded augmented Lagrangian loop."""

    rho1: float = 1.0
    gamma: float = 10.0
    theta: float = 0.5
    safeguard_radius: float = 1e3
    safeguard_policy: str = "project"   # "project", "zero", or "hold"
    eps0: float = 1e-1
    eps_decay: float = 0.5
    inner_max_iter: int = 4000
    inner_memory: int = 5
    stagnation_window: int = 200
    trust_radius: float = 1e6

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.gamma <= 1.0:
            raise ValueError("gamma must exceed 1")
        if self.rho1 <= 0.0:
            raise ValueError("rho1 must be positive")
        if self.safeguard_radius < 0.0:
            raise ValueError("safeguard radius must be nonnegative")
        if not 0.0 < self.eps_decay < 1.0:
            raise ValueError("eps_decay must lie in (0, 1)")
        if self.eps0 <= 0.0:
            raise ValueError("eps0 must be positive")
        if self.safeguard_policy not in ("project", "zero", "hold"):
            raise ValueError(f"unknown safeguard policy {self.safeguard_policy!r}")


@dataclass(frozen=True)
class InnerStats:
    reason: str          # "converged", "max_iter", "stagnation",
    #                      "line_search", "radius_exceeded"
    iterations: int
    grad_norm: float
    f_value: float


def inner_minimize(fun, grad, x0, grad_tol: float, max_iter: int = 4000,
                   memory: int = 5, stagnation_window: int = 200,
                   trust_radius: float | None = None):
    """Limited-memory descent to a gradient-norm tolerance.

    Returns (x, InnerStats).  Monotone: the returned point never has a
    larger objective value than x0.  Stops on the tolerance, the
    iteration cap, a gradient-norm plateau over ``stagnation_window``
    iterations, a failed line search, or the iterates leaving the ball
    of radius ``trust_radius`` (divergence guard).
    """
    x = np.asarray(x0, dtype=float).copy()
    f = float(fun(x))
    g = np.asarray(grad(x), dtype=float)
    gn = float(np.linalg.norm(g))
    best_gn = gn
    since_best = 0
    s_mem: list = []
    y_mem: list = []
    for it in range(max_iter):
        if gn <= grad_tol:
            return x, InnerStats("converged", it, gn, f)
        if trust_radius is not None and float(np.linalg.norm(x)) > trust_radius:
            return x, InnerStats("radius_exceeded", it, gn, f)
        if since_best >= stagnation_window:
            return x, InnerStats("stagnation", it, gn, f)
        # two-loop recursion for the quasi-Newton direction
        q = g.copy()
        pairs = list(zip(s_mem, y_mem, _rhos(s_mem, y_mem)))
        alphas = []
        for s, y, rho_i in reversed(pairs):
            a = rho_i * float(s @ q)
            alphas.append(a)
            q -= a * y
        if pairs:
            s_last, y_last = s_mem[-1], y_mem[-1]
            gamma = float(s_last @ y_last) / max(float(y_last @ y_last), 1e-300)
            q *= max(gamma, 1e-12)
        for (s, y, rho_i), a in zip(pairs, reversed(alphas)):
            b = rho_i * float(y @ q)
            q += (a - b) * s
        d = -q
        slope = float(g @ d)
        if not np.isfinite(slope) or slope >= -1e-14 * gn * float(np.linalg.norm(d)):
            d = -g
            slope = -gn * gn
        t = 1.0
        accepted = False
        for _ in range(60):
            x_new = x + t * d
            f_new = float(fun(x_new))
            if np.isfinite(f_new) and f_new <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return x, InnerStats("line_search", it, gn, f)
        g_new = np.asarray(grad(x_new), dtype=float)
        s_vec = x_new - x
        y_vec = g_new - g
        sy = float(s_vec @ y_vec)
        if sy > 1e-12 * float(np.linalg.norm(s_vec)) * float(np.linalg.norm(y_vec)):
            s_mem.append(s_vec)
            y_mem.append(y_vec)
            if len(s_mem) > memory:
                s_mem.pop(0)
                y_mem.pop(0)
        x, f, g = x_new, f_new, g_new
        gn = float(np.linalg.norm(g))
        if gn < best_gn * (1.0 - 1e-3):
            best_gn = gn
            since_best = 0
        else:
            since_best += 1
    return x, InnerStats("max_iter", max_iter, gn, f)


def _rhos(s_mem, y_mem):
    return [1.0 / max(float(s @ y), 1e-300) for s, y in zip(s_mem, y_mem)]


def _penalty_split(G: np.ndarray, rho: float, Ytilde: np.ndarray):
    """PSD split of the shifted constraint G - Ytilde/rho.

    Returns (plus, minus) from one spectral decomposition, so that
    minus == proj_psd(-G + Ytilde/rho) and plus == G + V for the
    displacement V = minus - Ytilde/rho.  With Ytilde == 0 this is
    exactly the split used by the penalty multiplier formula, which
    keeps the zero-safeguard loop and the external penalty method
    bitwise identical.
    """
    return linalg.moreau_split(G - Ytilde / rho)


def al_multiplier(problem: model.NsdpProblem, x, rho: float, Ytilde: np.ndarray) -> np.ndarray:
    """First-order multiplier estimate rho * proj_psd(-G(x) + Ytilde/rho)."""
    G = problem.g(np.asarray(x, dtype=float))
    _, minus = _penalty_split(G, rho, Ytilde)
    return rho * minus


def al_value(problem: model.NsdpProblem, x, rho: float, Ytilde: np.ndarray) -> float:
    """Augmented Lagrangian value at x for carried estimate Ytilde."""
    x = np.asarray(x, dtype=float)
    G = problem.g(x)
    _, S = _penalty_split(G, rho, Ytilde)
    return problem.f(x) + 0.5 * rho * linalg.frob(S) ** 2 \
        - linalg.frob(Ytilde) ** 2 / (2.0 * rho)


def al_gradient(problem: model.NsdpProblem, x, rho: float, Ytilde: np.ndarray) -> np.ndarray:
    """Gradient of the augmented Lagrangian in x.

    Equals the Lagrangian gradient at the first-order multiplier
    estimate; kept separate from ``al_value`` so the two can be
    cross-checked by finite differences.
    """
    x = np.asarray(x, dtype=float)
    Yhat = al_multiplier(problem, x, rho, Ytilde)
    return model.lagrangian_grad(problem, x, Yhat)


@dataclass(frozen=True)
class IterRecord:
    k: int
    x: np.ndarray
    y: np.ndarray
    rho: float
    delta: np.ndarray
    delta_vec: np.ndarray
    residual: kkt.KktResidual
    v_norm: float | None = None
    y_safe: np.ndarray | None = None
    inner: InnerStats | None = None
    step: float | None = None
    d_norm: float | None = None


@dataclass(frozen=True)
class SolverTrace:
    """Outer-iteration history plus the reason the loop stopped.

    termination is one of "converged", "iteration_cap", "unbounded",
    "stagnation", "line_search_failure", "subproblem_infeasible",
    "subproblem_failure".
    """

    records: tuple
    termination: str
    solver: str
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final(self) -> IterRecord:
        return self.records[-1]

    def certificate(self) -> kkt.AkktCertificate:
        return kkt.AkktCertificate(records=tuple(
            kkt.AkktRecord(x=r.x, y=r.y, delta=r.delta,
                           delta_vec=r.delta_vec, rho=r.rho)
            for r in self.records
        ))

    @property
    def rhos(self) -> list:
        return [r.rho for r in self.records]


def _as_schedule(sched):
    if callable(sched):
        return sched
    seq = list(sched)

    def lookup(k: int) -> float:
        idx = min(k - 1, len(seq) - 1)
        return float(seq[idx])

    return lookup


def _al_engine(problem: model.NsdpProblem, x0, config: AlConfig,
               target_tol: float | None, max_outer: int,
               rho_schedule=None, eps_schedule=None,
               adaptive_rho: bool = True, safeguard: bool = True,
               Ytilde0: np.ndarray | None = None,
               solver_name: str = "augmented_lagrangian") -> SolverTrace:
    """Shared outer loop for the penalty and augmented Lagrangian methods.

    With ``safeguard`` False the carried estimate is pinned to zero and
    ``rho_schedule`` drives the penalty growth; this is the external
    penalty method, and it matches the safeguarded loop with a
    zero-radius ball bit for bit when fed the same schedules.
    """
    x = np.asarray(x0, dtype=float).copy()
    m = problem.m
    Ytilde = np.zeros((m, m)) if Ytilde0 is None else np.asarray(Ytilde0, dtype=float).copy()
    rho = config.rho1 if rho_schedule is None else _as_schedule(rho_schedule)(1)
    rho_fn = _as_schedule(rho_schedule) if rho_schedule is not None else None
    eps_fn = _as_schedule(eps_schedule) if eps_schedule is not None else None
    records = []
    termination = "iteration_cap"
    v_prev = None
    x_prev = None
    stalled = 0
    for k in range(1, max_outer + 1):
        if rho_fn is not None:
            rho = rho_fn(k)
        if eps_fn is not None:
            eps_k = eps_fn(k)
        else:
            eps_k = config.eps0 * config.eps_decay ** (k - 1)
            if target_tol is not None:
                eps_k = max(eps_k, min(config.eps0, target_tol))
        rho_k = rho
        Yt = Ytilde

        x, stats = inner_minimize(
            lambda z: al_value(problem, z, rho_k, Yt),
            lambda z: al_gradient(problem, z, rho_k, Yt),
            x, grad_tol=eps_k,
            max_iter=config.inner_max_iter,
            memory=config.inner_memory,
            stagnation_window=config.stagnation_window,
            trust_radius=config.trust_radius,
        )
        G = problem.g(x)
        _, S = _penalty_split(G, rho_k, Yt)
        Y = rho_k * S
        V = S - Yt / rho_k
        v_now = linalg.frob(V)
        delta_vec = model.lagrangian_grad(problem, x, Y)
        residual = kkt.kkt_residual(problem, x, Y)
        records.append(IterRecord(
            k=k, x=x.copy(), y=Y, rho=rho_k, delta=V,
            delta_vec=delta_vec, residual=residual,
            v_norm=v_now, y_safe=Yt.copy(), inner=stats,
        ))
        if stats.reason == "radius_exceeded":
            termination = "unbounded"
            break
        if target_tol is not None and residual.max_entry <= target_tol:
            termination = "converged"
            break
        move = np.inf if x_prev is None else float(np.linalg.norm(x - x_prev))
        if stats.reason == "stagnation" and move <= 1e-14 * (1.0 + float(np.linalg.norm(x))):
            stalled += 1
        else:
            stalled = 0
        if stalled >= 2:
            termination = "stagnation"
            break
        x_prev = x.copy()
        if adaptive_rho and rho_fn is None:
            if k > 1 and v_prev is not None and v_now > config.theta * v_prev:
                rho = rho * config.gamma
        v_prev = v_now
        if safeguard:
            if config.safeguard_policy == "zero":
                Ytilde = np.zeros((m, m))
            elif config.safeguard_policy == "hold":
                pass
            else:
                Ytilde = _project_ball(Y, config.safeguard_radius)
    return SolverTrace(records=tuple(records), termination=termination,
                       solver=solver_name)


def _project_ball(Y: np.ndarray, radius: float) -> np.ndarray:
    """Project a PSD matrix onto the PSD Frobenius-norm ball."""
    if radius <= 0.0:
        return np.zeros_like(Y)
    Yp = linalg.proj_psd(Y)
    nrm = linalg.frob(Yp)
    if nrm > radius:
        Yp = Yp * (radius / nrm)
    return Yp


def solve_external_penalty(problem: model.NsdpProblem, x0, rho_schedule,
                           inner_tol_schedule, max_outer: int,
                           target_tol: float | None = None,
                           config: AlConfig | None = None) -> SolverTrace:
    """Quadratic external penalty method with a prescribed schedule.

    ``rho_schedule`` and ``inner_tol_schedule`` are sequences or
    callables indexed from 1.  Each outer iterate minimizes
    f + (rho_k/2) ||proj_psd(-G)||^2 to the scheduled gradient
    tolerance, warm-started from the previous iterate.
    """
    cfg = config or AlConfig()
    return _al_engine(problem, x0, cfg, target_tol, max_outer,
                      rho_schedule=rho_schedule, eps_schedule=inner_tol_schedule,
                      adaptive_rho=False, safeguard=False,
                      solver_name="external_penalty")


def solve_augmented_lagrangian(problem: model.NsdpProblem, x0,
                               config: AlConfig | None = None,
                               target_tol: float = 1e-6,
                               max_outer: int = 30) -> SolverTrace:
    """Safeguarded augmented Lagrangian loop (see the module docstring)."""
    cfg = config or AlConfig()
    return _al_engine(problem, x0, cfg, target_tol, max_outer,
                      solver_name="augmented_lagrangian")


def _bfgs_update(B: np.ndarray, s: np.ndarray, y: np.ndarray, cap: float) -> np.ndarray:
    """Damped BFGS update keeping B symmetric positive definite."""
    sBs = float(s @ B @ s)
    if sBs <= 1e-16:
        return B
    sy = float(s @ y)
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * (B @ s)
        sy = float(s @ y)
    if sy <= 1e-16:
        return B
    Bs = B @ s
    B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    B = linalg.sym_part(B)
    nrm = linalg.frob(B)
    if nrm > cap:
        B = B * (cap / nrm)
    lam_min = float(linalg.spectral_decompose(B).eigenvalues[-1])
    if lam_min < 1e-10:
        B = B + (1e-10 - lam_min) * np.eye(B.shape[0])
    return B


def solve_sqp(problem: model.NsdpProblem, x0, Y0: np.ndarray | None = None,
              target_tol: float = 1e-6,
              max_iter: int = 40, armijo_sigma: float = 1e-4,
              h_policy="bfgs", h_cap: float = 1e6,
              sub_config: AlConfig | None = None,
              sub_tol: float | None = None,
              sub_max_outer: int = 40) -> SolverTrace:
    """Sequential linearization with quasi-Newton curvature.

    The direction subproblem min d'Hd + grad f(x).d subject to
    G(x) + DG(x)[d] PSD is solved by the augmented Lagrangian; its
    multiplier is adopted as the next dual estimate.  The recorded
    constraint shift is DG(x)[d] plus the subproblem's own residual
    shift, so the shifted constraint is PSD and exactly complementary
    with the adopted multiplier and the trace passes the sequential
    certificate checks as the subproblem tolerance tightens.

    ``Y0`` warm-starts the first subproblem's carried dual estimate;
    afterwards each subproblem is warm-started from the previous
    multiplier.  ``h_policy`` is "bfgs" (damped update on Lagrangian
    gradient differences), "identity", or a callable
    (k, x, B_prev) -> matrix.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = problem.n
    B = np.eye(n)
    cfg = sub_config or AlConfig(trust_radius=1e8)
    stol = sub_tol if sub_tol is not None else min(1e-8, 1e-2 * target_tol)
    Y_carry = np.zeros((problem.m, problem.m)) if Y0 is None \
        else linalg.proj_psd(np.asarray(Y0, dtype=float))
    records = []
    termination = "iteration_cap"
    for k in range(1, max_iter + 1):
        if callable(h_policy):
            B = linalg.sym_part(np.asarray(h_policy(k, x, B), dtype=float))
        elif h_policy == "identity":
            B = np.eye(n)
        gf = problem.grad(x)
        G0 = problem.g(x)
        Ds = problem.dg(x)
        Bk = B.copy()

        def sub_f(d, gf=gf, Bk=Bk):
            return float(d @ Bk @ d + gf @ d)

        def sub_grad(d, gf=gf, Bk=Bk):
            return 2.0 * (Bk @ d) + gf

        def sub_g(d, G0=G0, Ds=Ds):
            out = G0.copy()
            for l in range(n):
                out = out + d[l] * Ds[l]
            return out

        def sub_dg(d, Ds=Ds):
            return Ds

        sub = model.NsdpProblem(n=n, m=problem.m, f_eval=sub_f, grad_f=sub_grad,
                                g_eval=sub_g, dg_eval=sub_dg,
                                name=f"{problem.name}:linearized@{k}")
        sub_trace = _al_engine(sub, np.zeros(n), cfg, stol, sub_max_outer,
                               Ytilde0=_project_ball(Y_carry, cfg.safeguard_radius),
                               solver_name="augmented_lagrangian")
        d = sub_trace.final.x
        if sub_trace.termination != "converged":
            feas = sub_trace.final.residual.feasibility
            if feas > 1e-4 and sub_trace.final.rho >= 1e6:
                termination = "subproblem_infeasible"
                diag = {"subproblem_point": [float(v) for v in d],
                        "subproblem_infeasibility": feas,
                        "subproblem_termination": sub_trace.termination}
                return SolverTrace(records=tuple(records), termination=termination,
                                   solver="sqp", diagnostics=diag)
            if sub_trace.final.residual.max_entry > min(1e-6, 1e2 * stol):
                termination = "subproblem_failure"
                diag = {"subproblem_termination": sub_trace.termination,
                        "subproblem_residual": sub_trace.final.residual.max_entry}
                return SolverTrace(records=tuple(records), termination=termination,
                                   solver="sqp", diagnostics=diag)
        Y_next = sub_trace.final.y
        Y_carry = Y_next
        lin_shift = np.zeros_like(G0)
        for l in range(n):
            lin_shift = lin_shift + d[l] * Ds[l]
        delta = linalg.sym_part(lin_shift + sub_trace.final.delta)
        delta_vec = model.lagrangian_grad(problem, x, Y_next)
        residual = kkt.kkt_residual(problem, x, Y_next)
        d_norm = float(np.linalg.norm(d))
        rec = IterRecord(k=k, x=x.copy(), y=Y_next, rho=sub_trace.final.rho,
                         delta=delta, delta_vec=delta_vec, residual=residual,
                         d_norm=d_norm)
        records.append(rec)
        if d_norm <= target_tol:
            termination = "converged"
            break
        slope = float(gf @ d)
        t = 1.0
        accepted = False
        f0 = problem.f(x)
        for _ in range(50):
            if problem.f(x + t * d) <= f0 + armijo_sigma * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            termination = "line_search_failure"
            break
        x_new = x + t * d
        if h_policy == "bfgs":
            s_vec = x_new - x
            y_vec = model.lagrangian_grad(problem, x_new, Y_next) - delta_vec
            B = _bfgs_update(B, s_vec, y_vec, h_cap)
        x = x_new
    return SolverTrace(records=tuple(records), termination=termination, solver="sqp")
