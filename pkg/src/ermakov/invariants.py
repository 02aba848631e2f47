"""Invariant evaluation and drift reporting.

The conserved quantity exists in two algebraically equal forms:

* transformed-frame energy   E = (1/2) Q'^2 + V(Q) + W(1/Q)
* physical-frame (Ray-Reid)  E = (1/2) m^2 (q'f - qf')^2
                                 + integral of u F(u) du   up to u = q/f
                                 + integral of v G(v) dv   up to v = f/q

The integrals are indefinite, so the physical form is defined only up to
an additive constant; we fix lower limits u_ref / v_ref (default 0 when
the integrand is finite there, else 1).  When the couplings came from
potentials, u F(u) = V'(u) exactly, so V and W are the exact
antiderivatives and the drift evaluator uses them directly instead of
quadrature; bare-coupling scenarios fall back to adaptive Simpson.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ErmakovError, InvalidMassError, QuadratureError, SingularityError
from .expr import Func1, is_zero
from .integrators import Trajectory
from .model import PhysState, QFrameState, Scenario, to_xrho

__all__ = [
    "InvariantReport",
    "quad",
    "energy_Q",
    "ray_reid_invariant",
    "ermakov_lewis",
    "wronskian_identity_check",
    "default_ref",
    "invariant_series",
    "report_from_series",
    "drift_report",
]

_EPS_Q = 1e-10  # matches the dynamics singularity guard
_REL_SUPPRESS = 1e-12  # |e0| below this: relative drift is meaningless


# --- adaptive Simpson quadrature --------------------------------------------

def _sample(fn: Callable[[float], float], x: float) -> float:
    try:
        v = fn(x)
    except (ErmakovError, ZeroDivisionError, OverflowError, ValueError) as err:
        raise QuadratureError(f"integrand failed at x={x!r}: {err}") from err
    if not math.isfinite(v):
        raise QuadratureError(f"integrand is not finite at x={x!r} (got {v!r})")
    return v


def _simpson(fa: float, fm: float, fb: float, h: float) -> float:
    return (h / 6.0) * (fa + 4.0 * fm + fb)


def _adaptive(fn, a, b, fa, fm, fb, whole, tol, depth, max_depth):
    if depth > max_depth:
        raise QuadratureError(
            f"quadrature did not converge on [{a!r}, {b!r}] within "
            f"{max_depth} bisections")
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = _sample(fn, lm)
    frm = _sample(fn, rm)
    left = _simpson(fa, flm, fm, m - a)
    right = _simpson(fm, frm, fb, b - m)
    delta = left + right - whole
    if abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    half = 0.5 * tol
    return (_adaptive(fn, a, m, fa, flm, fm, left, half, depth + 1, max_depth)
            + _adaptive(fn, m, b, fm, frm, fb, right, half, depth + 1, max_depth))


def quad(fn: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
         max_depth: int = 50) -> float:
    """Adaptive Simpson integral of ``fn`` over [a, b].

    Absolute tolerance ``tol`` (stricter than the advertised mixed
    bound); exactly antisymmetric under swapping the limits.
    """
    if not tol > 0.0:
        raise QuadratureError(f"tol must be positive, got {tol!r}")
    if a == b:
        return 0.0
    if b < a:
        return -quad(fn, b, a, tol, max_depth)
    fa = _sample(fn, a)
    fb = _sample(fn, b)
    m = 0.5 * (a + b)
    fm = _sample(fn, m)
    whole = _simpson(fa, fm, fb, b - a)
    return _adaptive(fn, a, b, fa, fm, fb, whole, tol, 0, max_depth)


def default_ref(integrand: Callable[[float], float]) -> float:
    """Lower integration limit: 0 when the integrand is finite there,
    else 1 (the convention is reported in run metadata)."""
    try:
        v = integrand(0.0)
    except (ErmakovError, ZeroDivisionError, OverflowError, ValueError):
        return 1.0
    return 0.0 if math.isfinite(v) else 1.0


# --- pointwise invariants ----------------------------------------------------

def energy_Q(state: QFrameState, V: Func1 | None, W: Func1 | None) -> float:
    """Transformed-frame energy (1/2) Q'^2 + V(Q) + W(1/Q)."""
    val = 0.5 * state.Q_prime ** 2
    if V is not None and not is_zero(V.expr):
        val += V(state.Q)
    if W is not None and not is_zero(W.expr):
        if abs(state.Q) < _EPS_Q:
            raise SingularityError(f"|Q| = {abs(state.Q):.3e} too close to zero "
                                   f"for the 1/Q potential", state.tau)
        val += W(1.0 / state.Q)
    return val


def _wronskian(state: PhysState, m_val: float) -> float:
    return m_val * (state.q_dot * state.f - state.q * state.f_dot)


def ray_reid_invariant(state: PhysState, scn: Scenario, u_ref: float = 0.0,
                       v_ref: float = 0.0, tol: float = 1e-10) -> float:
    """Physical-frame invariant via quadrature of the coupling integrands.

    Defined up to the additive constant fixed by (u_ref, v_ref).
    Structurally-zero couplings contribute nothing and do not constrain
    q or f.
    """
    mv = scn.m(state.t)
    if not mv > 0.0:
        raise InvalidMassError(state.t, mv)
    val = 0.5 * _wronskian(state, mv) ** 2
    F, G = scn.coupling_F, scn.coupling_G
    if not is_zero(F.expr):
        if abs(state.f) < _EPS_Q:
            raise SingularityError("f too close to zero", state.t)
        val += quad(lambda u: u * F(u), u_ref, state.q / state.f, tol)
    if not is_zero(G.expr):
        if abs(state.q) < _EPS_Q:
            raise SingularityError("q too close to zero", state.t)
        val += quad(lambda v: v * G(v), v_ref, state.f / state.q, tol)
    return val


def ermakov_lewis(state: PhysState, m_val: float, Omega: float) -> float:
    """Closed form of the invariant for the constant-coupling (harmonic)
    case: (1/2) m^2 (q'f - qf')^2 + (1/2) Omega^2 (q/f)^2."""
    return 0.5 * _wronskian(state, m_val) ** 2 + 0.5 * (Omega * state.q / state.f) ** 2


def wronskian_identity_check(state: PhysState, m: Func1) -> tuple[float, float]:
    """Both sides of m^2 (q'f - qf')^2 == (x'rho - x rho')^2 under the
    x = q sqrt(m), rho = f sqrt(m) rescaling; equal to round-off."""
    mv = m(state.t)
    if not mv > 0.0:
        raise InvalidMassError(state.t, mv)
    lhs = _wronskian(state, mv) ** 2
    x, x_dot, rho, rho_dot = to_xrho(state, m)
    rhs = (x_dot * rho - x * rho_dot) ** 2
    return lhs, rhs


# --- drift reporting ---------------------------------------------------------

@dataclass(frozen=True)
class InvariantReport:
    e0: float
    max_abs_drift: float
    max_rel_drift: float
    samples: int
    frame_gap: float

    def __post_init__(self):
        for name in ("e0", "max_abs_drift", "max_rel_drift", "frame_gap"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"InvariantReport.{name} must be finite")


class _RunningIntegral:
    """Antiderivative along a trajectory's endpoint sequence.

    Integrates leg by leg from the previous endpoint instead of from
    the reference each time, caching endpoints, so evaluating the
    invariant over n samples costs O(n) quadratures of short intervals.
    Single-trajectory use only (not shared across workers).
    """

    def __init__(self, fn: Callable[[float], float], ref: float, tol: float):
        self.fn = fn
        self.tol = tol
        self.last_x = ref
        self.last_val = 0.0
        self.cache: dict[float, float] = {ref: 0.0}

    def value(self, x: float) -> float:
        hit = self.cache.get(x)
        if hit is not None:
            return hit
        val = self.last_val + quad(self.fn, self.last_x, x, self.tol)
        self.last_x = x
        self.last_val = val
        self.cache[x] = val
        return val


class _PotentialSide:
    """One coupling's contribution to the energy, evaluated either from
    its exact potential or by running quadrature of the integrand."""

    def __init__(self, potential: Func1 | None, coupling: Func1, tol: float):
        self.zero = is_zero(coupling.expr) and (
            potential is None or is_zero(potential.expr))
        self.potential = potential
        self.ref: float | None = None
        self.running: _RunningIntegral | None = None
        if not self.zero and potential is None:
            integrand = lambda w: w * coupling(w)  # noqa: E731
            self.ref = default_ref(integrand)
            self.running = _RunningIntegral(integrand, self.ref, tol)

    @property
    def path(self) -> str:
        if self.zero:
            return "zero"
        return "potential" if self.potential is not None else "quadrature"

    def value(self, arg: float) -> float:
        if self.zero:
            return 0.0
        if self.potential is not None:
            return self.potential(arg)
        return self.running.value(arg)


def invariant_series(traj: Trajectory, scn: Scenario, tol: float = 1e-10
                     ) -> tuple[np.ndarray, np.ndarray, dict]:
    """Physical-frame and transformed-frame energy at every sample of a
    physical trajectory (columns q, q_dot, f, f_dot, tau).

    Returns (e_phys, e_q, meta); meta records which evaluation path each
    side used and the reference points of any quadrature.
    """
    u_side = _PotentialSide(scn.potential_V, scn.coupling_F, tol)
    v_side = _PotentialSide(scn.potential_W, scn.coupling_G, tol)

    n = len(traj)
    e_phys = np.empty(n)
    e_q = np.empty(n)
    for i in range(n):
        t = traj.t[i]
        q, q_dot, f, f_dot, _tau = traj.y[i]
        mv = scn.m(t)
        if not mv > 0.0:
            raise InvalidMassError(t, mv)
        w = mv * (q_dot * f - q * f_dot)
        pot_u = pot_v = 0.0
        if not u_side.zero:
            if abs(f) < _EPS_Q:
                raise SingularityError("f too close to zero", t)
            pot_u = u_side.value(q / f)
        if not v_side.zero:
            if abs(q) < _EPS_Q:
                raise SingularityError("q too close to zero", t)
            pot_v = v_side.value(f / q)
        # the kinetic terms are algebraically equal but deliberately keep
        # their own arithmetic (m^2 (q'f-qf')^2 vs Q'^2): frame_gap measures
        # exactly this evaluation difference
        e_phys[i] = 0.5 * mv * mv * (q_dot * f - q * f_dot) ** 2 + pot_u + pot_v
        e_q[i] = 0.5 * w * w + pot_u + pot_v

    meta = {
        "u_side": u_side.path,
        "v_side": v_side.path,
        "u_ref": u_side.ref,
        "v_ref": v_side.ref,
        "quad_tol": tol,
    }
    return e_phys, e_q, meta


def report_from_series(e_phys: np.ndarray, e_q: np.ndarray) -> InvariantReport:
    """Summarize precomputed energy series.  Relative drift is suppressed
    (reported 0) when the initial value is numerically zero."""
    e0 = float(e_phys[0])
    max_abs = float(np.max(np.abs(e_phys - e0)))
    max_rel = max_abs / abs(e0) if abs(e0) >= _REL_SUPPRESS else 0.0
    gap = float(np.max(np.abs(e_phys - e_q)))
    return InvariantReport(e0=e0, max_abs_drift=max_abs, max_rel_drift=max_rel,
                           samples=len(e_phys), frame_gap=gap)


def drift_report(traj: Trajectory, scn: Scenario, tol: float = 1e-10
                 ) -> InvariantReport:
    """Evaluate the invariant along a physical trajectory and summarize
    its drift."""
    e_phys, e_q, _meta = invariant_series(traj, scn, tol)
    return report_from_series(e_phys, e_q)
