"""Right-hand sides for the three equivalent formulations, the
Lagrangian evaluators, and the total-derivative (gauge) residual check.

Physical frame (state q, f against t; couplings F, G; base frequency
w~2; mass m):

    d/dt(m q') + m w~2 q = G(f/q) / (m q^3)
    d/dt(m f') + m w~2 f = F(q/f) / (m f^3)
    dtau/dt = 1 / (m f^2)

Unit-mass pair (x = q sqrt(m), rho = f sqrt(m); shifted frequency
w^2 = (1/4)(m'/m)^2 - (1/2) m''/m + w~2; couplings g(v) = v G(v),
h(u) = u F(u)):

    x''   + w^2 x   = g(rho/x) / (rho x^2)
    rho'' + w^2 rho = h(x/rho) / (rho^2 x)

Transformed autonomous frame (Q = q/f against tau):

    Q'' = -V'(Q) + W'(1/Q) / Q^2

Singularity guard: any coordinate that appears in a denominator of an
*active* coupling term must stay at least EPS_SING away from zero;
structurally-zero couplings drop both the term and the guard, so e.g. a
harmonic q(t) may pass through zero when G = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidMassError, PotentialsUnavailableError, SingularityError
from .expr import Func1, is_zero
from .model import PhysState, QFrameState, Scenario

__all__ = [
    "EPS_SING",
    "DerivPhys",
    "rhs_phys",
    "rhs_xrho",
    "rhs_Q",
    "phys_ode",
    "xrho_ode",
    "qframe_ode",
    "qframe_accel",
    "qframe_accel_from_scenario",
    "qframe_ode_from_scenario",
    "lagrangian_Q",
    "lagrangian_q_tilde",
    "gauge_residual",
]

# Below this, the 1/q^3-type terms are considered blown up; abort rather
# than propagate garbage.
EPS_SING = 1e-10


@dataclass(frozen=True)
class DerivPhys:
    """Time derivatives of the physical-frame state components."""

    dq: float
    dq_dot: float
    df: float
    df_dot: float
    dtau: float


def _guard(name: str, value: float, t: float) -> None:
    if abs(value) < EPS_SING:
        raise SingularityError(f"|{name}| = {abs(value):.3e} fell below the "
                               f"singularity guard {EPS_SING:g}", t)


def _mass_at(scn: Scenario, t: float) -> float:
    mv = scn.m(t)
    if not mv > 0.0:
        raise InvalidMassError(t, mv)
    return mv


def rhs_phys(state: PhysState, scn: Scenario) -> DerivPhys:
    """Accelerations of the coupled q-f pair plus the tau clock rate."""
    t, q, q_dot, f, f_dot = state.t, state.q, state.q_dot, state.f, state.f_dot
    mv = _mass_at(scn, t)
    md = scn.m.deriv(t)
    omt2 = scn.omega_tilde_sq(t)

    _guard("f", f, t)  # dtau = 1/(m f^2) needs f regardless of couplings
    g_term = 0.0
    if not is_zero(scn.coupling_G.expr):
        _guard("q", q, t)
        g_term = scn.coupling_G(f / q) / (mv * mv * q ** 3)
    f_term = 0.0
    if not is_zero(scn.coupling_F.expr):
        f_term = scn.coupling_F(q / f) / (mv * mv * f ** 3)

    drag = md / mv
    return DerivPhys(
        dq=q_dot,
        dq_dot=-drag * q_dot - omt2 * q + g_term,
        df=f_dot,
        df_dot=-drag * f_dot - omt2 * f + f_term,
        dtau=1.0 / (mv * f * f),
    )


def rhs_xrho(x: float, x_dot: float, rho: float, rho_dot: float, t: float,
             omega_sq: Callable[[float], float],
             g: Func1, h: Func1) -> tuple[float, float, float, float]:
    """Accelerations of the unit-mass x-rho pair."""
    om2 = omega_sq(t)
    g_term = 0.0
    if not is_zero(g.expr):
        _guard("x", x, t)
        _guard("rho", rho, t)
        g_term = g(rho / x) / (rho * x * x)
    h_term = 0.0
    if not is_zero(h.expr):
        _guard("x", x, t)
        _guard("rho", rho, t)
        h_term = h(x / rho) / (rho * rho * x)
    return x_dot, -om2 * x + g_term, rho_dot, -om2 * rho + h_term


def rhs_Q(state: QFrameState, V: Func1 | None, W: Func1 | None) -> tuple[float, float]:
    """Autonomous transformed-frame equation of motion."""
    Q = state.Q
    accel = 0.0
    if V is not None and not is_zero(V.expr):
        accel -= V.deriv(Q)
    if W is not None and not is_zero(W.expr):
        _guard("Q", Q, state.tau)
        accel += W.deriv(1.0 / Q) / (Q * Q)
    return state.Q_prime, accel


# --- vector adapters for the integrators -----------------------------------
# State layouts: phys y = [q, q_dot, f, f_dot, tau];
#                x-rho y = [x, x_dot, rho, rho_dot];
#                Q-frame y = [Q, Q_prime].

def phys_ode(scn: Scenario) -> Callable[[float, np.ndarray], np.ndarray]:
    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        state = PhysState(t=t, tau=y[4], q=y[0], q_dot=y[1], f=y[2], f_dot=y[3])
        d = rhs_phys(state, scn)
        return np.array([d.dq, d.dq_dot, d.df, d.df_dot, d.dtau])
    return rhs


def xrho_ode(omega_sq: Callable[[float], float], g: Func1,
             h: Func1) -> Callable[[float, np.ndarray], np.ndarray]:
    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return np.array(rhs_xrho(y[0], y[1], y[2], y[3], t, omega_sq, g, h))
    return rhs


def qframe_ode(V: Func1 | None, W: Func1 | None) -> Callable[[float, np.ndarray], np.ndarray]:
    def rhs(tau: float, y: np.ndarray) -> np.ndarray:
        dQ, dQp = rhs_Q(QFrameState(tau=tau, Q=y[0], Q_prime=y[1]), V, W)
        return np.array([dQ, dQp])
    return rhs


def qframe_accel(V: Func1 | None, W: Func1 | None) -> Callable[[float], float]:
    """Position-only acceleration Q -> Q'' for the symplectic stepper."""
    def accel(Q: float) -> float:
        _, dQp = rhs_Q(QFrameState(tau=0.0, Q=Q, Q_prime=0.0), V, W)
        return dQp
    return accel


def qframe_accel_from_scenario(scn: Scenario) -> Callable[[float], float]:
    """Transformed-frame acceleration for any scenario.

    Prefers the potentials; scenarios built from bare couplings use the
    equivalent form Q'' = -Q F(Q) + G(1/Q)/Q^3 (same algebra that
    defines F and G from V' and W')."""
    if scn.potential_V is not None and scn.potential_W is not None:
        return qframe_accel(scn.potential_V, scn.potential_W)
    F, G = scn.coupling_F, scn.coupling_G
    V = scn.potential_V

    def accel(Q: float) -> float:
        val = 0.0
        if V is not None and not is_zero(V.expr):
            val -= V.deriv(Q)
        elif not is_zero(F.expr):
            val -= Q * F(Q)
        if scn.potential_W is not None and not is_zero(scn.potential_W.expr):
            _guard("Q", Q, 0.0)
            val += scn.potential_W.deriv(1.0 / Q) / (Q * Q)
        elif not is_zero(G.expr):
            _guard("Q", Q, 0.0)
            val += G(1.0 / Q) / (Q ** 3)
        return val
    return accel


def qframe_ode_from_scenario(scn: Scenario) -> Callable[[float, np.ndarray], np.ndarray]:
    accel = qframe_accel_from_scenario(scn)

    def rhs(tau: float, y: np.ndarray) -> np.ndarray:
        return np.array([y[1], accel(y[0])])
    return rhs


# --- Lagrangians and the gauge identity -------------------------------------

def lagrangian_Q(state: QFrameState, V: Func1 | None, W: Func1 | None) -> float:
    """L = (1/2) Q'^2 - V(Q) - W(1/Q)."""
    val = 0.5 * state.Q_prime ** 2
    if V is not None and not is_zero(V.expr):
        val -= V(state.Q)
    if W is not None and not is_zero(W.expr):
        _guard("Q", state.Q, state.tau)
        val -= W(1.0 / state.Q)
    return val


def _ddt_m_fdot(state: PhysState, scn: Scenario) -> float:
    """d/dt(m f') eliminated through the auxiliary equation of motion:
    -m w~2 f + F(q/f)/(m f^3).  Keeps every consumer step-size free."""
    mv = _mass_at(scn, state.t)
    _guard("f", state.f, state.t)
    val = -mv * scn.omega_tilde_sq(state.t) * state.f
    if not is_zero(scn.coupling_F.expr):
        val += scn.coupling_F(state.q / state.f) / (mv * state.f ** 3)
    return val


def _require_potentials(scn: Scenario) -> tuple[Func1, Func1]:
    if scn.potential_V is None or scn.potential_W is None:
        raise PotentialsUnavailableError(
            "Lagrangian evaluation needs V and W; this scenario was built "
            "from bare coupling functions")
    return scn.potential_V, scn.potential_W


def lagrangian_q_tilde(state: PhysState, scn: Scenario) -> float:
    """Transformed Lagrangian in physical variables:

        (1/2) m q'^2 + (1/2)(q^2/f) d/dt(m f')
          - V(q/f)/(m f^2) - W(f/q)/(m f^2)
    """
    V, W = _require_potentials(scn)
    t, q, q_dot, f = state.t, state.q, state.q_dot, state.f
    mv = _mass_at(scn, t)
    _guard("f", f, t)
    val = 0.5 * mv * q_dot ** 2 + 0.5 * (q * q / f) * _ddt_m_fdot(state, scn)
    if not is_zero(V.expr):
        val -= V(q / f) / (mv * f * f)
    if not is_zero(W.expr):
        _guard("q", q, t)
        val -= W(f / q) / (mv * f * f)
    return val


def gauge_residual(state: PhysState, scn: Scenario) -> float:
    """Difference between the transformed Lagrangian and the mapped
    autonomous one plus the total-derivative term:

        residual = L~ - [ L(Q, Q') * dtau/dt + dPhi/dt ]

    with Q = q/f, Q' = m (q'f - qf'), dtau/dt = 1/(m f^2) and
    Phi = +(1/2)(q^2/f) m f'.  (The sign of Phi is the convention that
    makes the identity hold; see the README.)  Zero up to round-off at
    every valid state.
    """
    _require_potentials(scn)
    t, q, q_dot, f, f_dot = state.t, state.q, state.q_dot, state.f, state.f_dot
    mv = _mass_at(scn, t)
    _guard("f", f, t)
    Q = q / f
    Q_prime = mv * (q_dot * f - q * f_dot)
    l_q = lagrangian_Q(QFrameState(tau=state.tau, Q=Q, Q_prime=Q_prime),
                       scn.potential_V, scn.potential_W)
    dmf = _ddt_m_fdot(state, scn)
    dphi_dt = (mv * q * q_dot * f_dot / f
               - 0.5 * mv * (q * f_dot / f) ** 2
               + 0.5 * (q * q / f) * dmf)
    return lagrangian_q_tilde(state, scn) - (l_q / (mv * f * f) + dphi_dt)
