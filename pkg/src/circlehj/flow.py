"""Contact characteristic flow and the stationary periodic orbit.

The stationary smooth solution of H(x, u', u) = 0 is found by shooting:
where the graph speed dH/dp never vanishes, the orbit of the contact
system is a graph over the circle, so reparametrizing the characteristic
ODE by x turns the orbit search into a two-unknown periodic boundary
value problem for (p(0), u(0)).  A damped Newton iteration closes it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUp, NotConverged, TurningPoint
from .model import HamiltonianModel

B_MIN_TOL = 1e-6
_SWEEP_BLOW = 1e8


@dataclass(frozen=True)
class ContactState:
    """Point of the contact phase space; x is reduced mod 1."""

    x: float
    p: float
    u: float

    def reduced(self) -> "ContactState":
        return ContactState(self.x % 1.0, self.p, self.u)


@dataclass
class OrbitResult:
    """Stationary graph and derived quantities from a successful shot.

    Tables are sampled on the inclusive node set x_k = k/n, k = 0..n.
    ``speed`` is dH/dp along the graph (the CSV column ``B``); ``phase``
    is the rescaled travel time around the loop, increasing from 0 to
    2*pi (CSV column ``f``); ``loop_integral`` is the signed integral of
    -1/speed around the circle, whose magnitude equals the period.
    """

    x_nodes: np.ndarray
    t_of_x: np.ndarray
    p_of_x: np.ndarray
    u_of_x: np.ndarray
    speed: np.ndarray
    phase: np.ndarray
    period: float
    loop_integral: float
    h_residual: float
    p0: float
    u0: float
    model_name: str
    newton_iterations: int = 0

    def u0_at(self, x):
        return _interp_inclusive(self.x_nodes, self.u_of_x, x)

    def p0_at(self, x):
        return _interp_inclusive(self.x_nodes, self.p_of_x, x)

    def speed_at(self, x):
        return _interp_inclusive(self.x_nodes, self.speed, x)

    def phase_at(self, x):
        return _interp_inclusive(self.x_nodes, self.phase, x)

    def samples(self):
        """Orbit samples ordered by time: rows (t, x, p, u)."""
        order = np.argsort(self.t_of_x, kind="stable")
        return np.column_stack([self.t_of_x[order], self.x_nodes[order],
                                self.p_of_x[order], self.u_of_x[order]])


def _interp_inclusive(x_nodes, values, x):
    return np.interp(np.asarray(x, dtype=float) % 1.0, x_nodes, values)


def integrate_contact(model: HamiltonianModel, s0: ContactState, t_span, dt,
                      blow_limit=500.0):
    """Fixed-step RK4 integration of the contact characteristic system.

    Returns (times, states, winding): states keep x reduced mod 1 while
    winding counts signed circle traversals.  Raises BlowUp when |p| or
    |u| leaves the blow_limit window.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    steps = max(1, int(round((t1 - t0) / dt)))
    h = (t1 - t0) / steps

    def rhs(x, p, u):
        hp = float(model.d_p(x, p, u))
        hx = float(model.d_x(x, p, u))
        hu = float(model.d_u(x, p, u))
        hv = float(model.eval_H(x, p, u))
        return hp, -hx - hu * p, hp * p - hv

    x, p, u = float(s0.x), float(s0.p), float(s0.u)
    times = [t0]
    states = [ContactState(x % 1.0, p, u)]
    for k in range(steps):
        k1 = rhs(x, p, u)
        k2 = rhs(x + 0.5 * h * k1[0], p + 0.5 * h * k1[1], u + 0.5 * h * k1[2])
        k3 = rhs(x + 0.5 * h * k2[0], p + 0.5 * h * k2[1], u + 0.5 * h * k2[2])
        k4 = rhs(x + h * k3[0], p + h * k3[1], u + h * k3[2])
        x += h * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
        p += h * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
        u += h * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]) / 6.0
        if abs(p) > blow_limit or abs(u) > blow_limit:
            raise BlowUp(f"|p| or |u| exceeded {blow_limit:g} at t = {t0 + (k + 1) * h:g}")
        times.append(t0 + (k + 1) * h)
        states.append(ContactState(x % 1.0, p, u))
    winding = int(np.floor(x))
    return np.array(times), states, winding


def _quad_stage_tables(model, n):
    """Coefficient tables of a quadratic model at the RK4 stage points.

    The sweep visits only x = k/(2n); precomputing the x-dependence there
    lets the inner loop run in plain floats.
    """
    xs = np.arange(2 * n + 1) / (2.0 * n)
    a_f, a_d, b_f, b_d, V_f, V_d, lam = model.quad_coeffs
    A = np.broadcast_to(np.asarray(a_f(xs), float), xs.shape)
    Ap = np.broadcast_to(np.asarray(a_d(xs), float), xs.shape)
    B = np.broadcast_to(np.asarray(b_f(xs), float), xs.shape)
    Bp = np.broadcast_to(np.asarray(b_d(xs), float), xs.shape)
    Vv = np.broadcast_to(np.asarray(V_f(xs), float), xs.shape)
    Vp = np.broadcast_to(np.asarray(V_d(xs), float), xs.shape)
    c_hx = Vp - 0.5 * Ap * B * B - A * B * Bp
    c_h = Vv - 0.5 * A * B * B
    return (A.tolist(), Ap.tolist(), B.tolist(), Bp.tolist(),
            c_hx.tolist(), c_h.tolist(), float(lam))


def _quad_sweep(tables, p0, u0, n, b_min_tol, store):
    """Pure-float RK4 sweep of the graph ODE for quadratic models."""
    A, Ap, B, Bp, c_hx, c_h, lam = tables
    h = 1.0 / n
    t, p, u = 0.0, float(p0), float(u0)
    if store:
        ts = np.empty(n + 1)
        ps = np.empty(n + 1)
        us = np.empty(n + 1)
        ts[0], ps[0], us[0] = t, p, u

    def stage(i, pv, uv, x_report):
        q = pv + B[i]
        hp = A[i] * q
        if abs(hp) < b_min_tol:
            raise TurningPoint(
                f"|dH/dp| = {abs(hp):.3g} < {b_min_tol:g} near x = "
                f"{x_report:.6f}; the candidate graph is not transverse"
            )
        hx = (0.5 * Ap[i] * q + A[i] * Bp[i]) * q + c_hx[i]
        hval = 0.5 * A[i] * q * q + c_h[i] - lam * uv
        inv = 1.0 / hp
        return inv, inv * (-hx + lam * pv), pv - hval * inv

    for k in range(n):
        x = k * h
        i = 2 * k
        k1 = stage(i, p, u, x)
        k2 = stage(i + 1, p + 0.5 * h * k1[1], u + 0.5 * h * k1[2], x)
        k3 = stage(i + 1, p + 0.5 * h * k2[1], u + 0.5 * h * k2[2], x)
        k4 = stage(i + 2, p + h * k3[1], u + h * k3[2], x)
        t += h * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
        p += h * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
        u += h * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]) / 6.0
        if abs(p) > _SWEEP_BLOW or abs(u) > _SWEEP_BLOW:
            raise BlowUp(f"graph sweep blew up near x = {x:g}")
        if store:
            ts[k + 1], ps[k + 1], us[k + 1] = t, p, u
    if store:
        return ts, ps, us
    return t, p, u


def _generic_sweep(model, p0, u0, n, b_min_tol, store):
    """Scalar RK4 sweep calling the model callables directly."""
    h = 1.0 / n
    t, p, u = 0.0, float(p0), float(u0)
    if store:
        ts = np.empty(n + 1)
        ps = np.empty(n + 1)
        us = np.empty(n + 1)
        ts[0], ps[0], us[0] = t, p, u

    def rhs(x, pv, uv):
        hp = float(model.d_p(x, pv, uv))
        if abs(hp) < b_min_tol:
            raise TurningPoint(
                f"|dH/dp| = {abs(hp):.3g} < {b_min_tol:g} near x = {x:.6f}; "
                "the candidate graph is not transverse"
            )
        inv = 1.0 / hp
        hx = float(model.d_x(x, pv, uv))
        hu = float(model.d_u(x, pv, uv))
        hv = float(model.eval_H(x, pv, uv))
        return inv, inv * (-hx - hu * pv), pv - hv * inv

    for k in range(n):
        x = k * h
        k1 = rhs(x, p, u)
        k2 = rhs(x + 0.5 * h, p + 0.5 * h * k1[1], u + 0.5 * h * k1[2])
        k3 = rhs(x + 0.5 * h, p + 0.5 * h * k2[1], u + 0.5 * h * k2[2])
        k4 = rhs(x + h, p + h * k3[1], u + h * k3[2])
        t += h * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
        p += h * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
        u += h * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]) / 6.0
        if abs(p) > _SWEEP_BLOW or abs(u) > _SWEEP_BLOW:
            raise BlowUp(f"graph sweep blew up near x = {x:g}")
        if store:
            ts[k + 1], ps[k + 1], us[k + 1] = t, p, u
    if store:
        return ts, ps, us
    return t, p, u


def integrate_reduced(model: HamiltonianModel, p_start, u_start, n=1024,
                      b_min_tol=B_MIN_TOL):
    """RK4 sweep of the graph ODE in the circle coordinate on [0, 1].

    Integrates dt/dx = 1/H_p and the matching equations for p and u on n
    uniform steps; returns the inclusive tables (t, p, u) at x_k = k/n.
    Raises TurningPoint when |H_p| drops below b_min_tol.
    """
    if model.quad_coeffs is not None:
        tables = _quad_stage_tables(model, n)
        return _quad_sweep(tables, p_start, u_start, n, b_min_tol, store=True)
    return _generic_sweep(model, p_start, u_start, n, b_min_tol, store=True)


def shoot_stationary_orbit(model: HamiltonianModel, guess=(0.0, 0.0), n=1024,
                           newton_tol=1e-12, max_iter=100,
                           b_min_tol=B_MIN_TOL) -> OrbitResult:
    """Damped Newton solve of the periodic boundary value problem.

    The residual is (p(1) - p(0), u(1) - u(0)) from the circle sweep;
    periodicity forces the orbit onto the zero-energy surface, so the
    converged tables satisfy H = 0 and p = u' automatically.  Multiple
    branches are possible; the solver returns the one reached from the
    caller's guess.
    """
    if model.quad_coeffs is not None:
        tables = _quad_stage_tables(model, n)

        def sweep_tail(p0, u0):
            return _quad_sweep(tables, p0, u0, n, b_min_tol, store=False)
    else:
        def sweep_tail(p0, u0):
            return _generic_sweep(model, p0, u0, n, b_min_tol, store=False)

    def try_residual(qv):
        try:
            t1, p1, u1 = sweep_tail(qv[0], qv[1])
        except (TurningPoint, BlowUp):
            return None
        return np.array([p1 - qv[0], u1 - qv[1]])

    q = np.array(guess, dtype=float)
    t1, p1, u1 = sweep_tail(q[0], q[1])  # raises TurningPoint on a bad guess
    r = np.array([p1 - q[0], u1 - q[1]])
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if np.max(np.abs(r)) <= newton_tol:
            break
        jac = np.empty((2, 2))
        for j in range(2):
            eps = 1e-7 * (1.0 + abs(q[j]))
            qp = q.copy()
            qp[j] += eps
            rp = try_residual(qp)
            if rp is None:
                raise TurningPoint("graph speed vanished while forming the "
                                   "shooting Jacobian")
            jac[:, j] = (rp - r) / eps
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise NotConverged(f"singular shooting Jacobian at {q}") from exc
        scale = 1.0
        q_new, r_new = None, None
        for _ in range(9):
            cand = q + scale * step
            rc = try_residual(cand)
            if rc is not None and np.max(np.abs(rc)) < np.max(np.abs(r)):
                q_new, r_new = cand, rc
                break
            scale *= 0.5
        if q_new is None:
            raise NotConverged(
                f"damping failed at residual {np.max(np.abs(r)):.3g}; "
                "the shot does not improve along the Newton direction"
            )
        q, r = q_new, r_new
    else:
        raise NotConverged(
            f"shooting Newton did not reach {newton_tol:g} in {max_iter} steps "
            f"(residual {np.max(np.abs(r)):.3g})"
        )

    t, p, u = integrate_reduced(model, q[0], q[1], n=n, b_min_tol=b_min_tol)
    x_nodes = np.linspace(0.0, 1.0, n + 1)
    speed = np.asarray(model.d_p(x_nodes, p, u), dtype=float)
    h_res = float(np.max(np.abs(model.eval_H(x_nodes, p, u))))
    loop_integral = float(np.trapezoid(-1.0 / speed, x_nodes))
    period = float(abs(t[-1]))
    phase = 2.0 * np.pi * t / t[-1]
    return OrbitResult(
        x_nodes=x_nodes, t_of_x=t, p_of_x=p, u_of_x=u, speed=speed, phase=phase,
        period=period, loop_integral=loop_integral, h_residual=h_res,
        p0=float(q[0]), u0=float(q[1]), model_name=model.name,
        newton_iterations=iterations,
    )


def check_condition_A(orbit: OrbitResult, b_min_tol=B_MIN_TOL):
    """Transversality of the stationary graph: (holds, min |speed|)."""
    min_abs = float(np.min(np.abs(orbit.speed)))
    return min_abs > b_min_tol, min_abs
