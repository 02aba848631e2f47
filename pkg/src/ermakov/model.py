"""Scenario assembly: coupling-function algebra, the mass-induced
frequency shift, and the sectioned-text config format.

A Scenario is the full problem statement for one run: mass m(t),
base frequency-squared w~2(t), the two nonlinear couplings, initial
conditions and an integration plan.  Couplings can be given directly
(F of u = q/f, G of v = f/q) or derived from potentials
(V of Q, W of s = 1/Q) via

    F(u) = V'(u) / u          G(v) = W'(v) / v

and converted to the alternative normalization used by the
cross-checked oscillator pair via

    h(u) = u * F(u)           g(v) = v * G(v)
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass

from .errors import ConfigError, ErmakovError, ExprDomainError, InvalidMassError
from .expr import (
    Binary,
    Func1,
    Var,
    compile_func,
    constant_func,
    evaluate,
    func_from_expr,
    is_zero,
    rename_var,
)

__all__ = [
    "PhysState",
    "QFrameState",
    "IntegrationPlan",
    "Scenario",
    "ConfigDocument",
    "F_from_V",
    "G_from_W",
    "h_from_F",
    "g_from_G",
    "omega_sq_from_mass",
    "to_xrho",
    "parse_config",
    "load_config",
    "apply_overrides",
    "build_scenario",
    "METHODS",
]

METHODS = ("rk4", "adaptive54", "verlet")


@dataclass(frozen=True)
class PhysState:
    """Physical-frame state: oscillator q and auxiliary f at time t,
    plus the accumulated transformed time tau (dtau = dt / (m f^2))."""

    t: float
    tau: float
    q: float
    q_dot: float
    f: float
    f_dot: float


@dataclass(frozen=True)
class QFrameState:
    """Transformed-frame state: Q = q/f against the reparametrized time tau."""

    tau: float
    Q: float
    Q_prime: float


@dataclass(frozen=True)
class IntegrationPlan:
    method: str
    t_end: float
    dt: float | None = None          # fixed-step methods
    tol: float | None = None         # adaptive method
    output_stride: float = 0.1


@dataclass(frozen=True)
class Scenario:
    """Immutable, validated problem definition; safe to share across workers."""

    m: Func1                      # mass m(t), must stay positive
    omega_tilde_sq: Func1         # base frequency squared (may be negative)
    coupling_F: Func1             # F(u), u = q/f
    coupling_G: Func1             # G(v), v = f/q
    potential_V: Func1 | None     # V(Q) when the F-side was given as a potential
    potential_W: Func1 | None     # W(s), s = 1/Q, when the G-side was given as a potential
    initial: PhysState
    plan: IntegrationPlan


# --- coupling-function algebra --------------------------------------------

def _ratio_func(numerator_d1: Func1, new_var: str) -> Func1:
    """Build x -> P'(x)/x from a potential P, patching the removable
    singularity at 0 with the limit P''(0) when P'(0) == 0."""
    d1 = rename_var(numerator_d1.d1, new_var)
    if is_zero(d1):
        # keep derived zero couplings structurally zero so the dynamics
        # can drop the term (and its singularity guard) entirely
        return constant_func(0.0, new_var)
    expr = Binary("/", d1, Var(new_var))
    at_zero = None
    try:
        if evaluate(numerator_d1.d1, 0.0) == 0.0:
            at_zero = evaluate(numerator_d1.d2, 0.0)
    except ExprDomainError:
        pass
    return func_from_expr(expr, new_var, at_zero)


def F_from_V(V: Func1) -> Func1:
    """F(u) = V'(u)/u.  For even potentials (V'(0) = 0) the origin is a
    removable singularity and F(0) is defined by the limit V''(0);
    otherwise evaluation at exactly 0 raises a domain error."""
    return _ratio_func(V, "u")


def G_from_W(W: Func1) -> Func1:
    """G(v) = W'(v)/v, same removable-singularity treatment as F_from_V."""
    return _ratio_func(W, "v")


def _times_var(fn: Func1, var: str) -> Func1:
    if is_zero(fn.expr):
        return constant_func(0.0, var)
    expr = Binary("*", Var(var), rename_var(fn.expr, var))
    at_zero = None
    try:
        at_zero = 0.0 * fn(0.0)
    except ErmakovError:
        pass
    return func_from_expr(expr, var, at_zero)


def h_from_F(F: Func1) -> Func1:
    """h(u) = u * F(u): the coupling normalization in which the paired
    system's second equation reads rho'' + w^2 rho = h(x/rho)/(rho^2 x)."""
    return _times_var(F, "u")


def g_from_G(G: Func1) -> Func1:
    """g(v) = v * G(v), the first equation's counterpart of h_from_F."""
    return _times_var(G, "v")


# --- mass-induced frequency shift ------------------------------------------

def omega_sq_from_mass(m: Func1, omega_tilde_sq: Func1, t: float) -> float:
    """Effective frequency squared after scaling the mass away:

        w^2(t) = (1/4) (m'/m)^2 - (1/2) m''/m + w~2(t)

    May legitimately be negative (inverted oscillator).
    """
    mv = m(t)
    if not mv > 0.0:
        raise InvalidMassError(t, mv)
    md = m.deriv(t)
    mdd = m.deriv2(t)
    return 0.25 * (md / mv) ** 2 - 0.5 * mdd / mv + omega_tilde_sq(t)


def to_xrho(state: PhysState, m: Func1) -> tuple[float, float, float, float]:
    """Map (q, q_dot, f, f_dot) to the unit-mass pair via x = q sqrt(m),
    rho = f sqrt(m); velocities pick up the (1/2) q m'/sqrt(m) term."""
    mv = m(state.t)
    if not mv > 0.0:
        raise InvalidMassError(state.t, mv)
    s = math.sqrt(mv)
    md = m.deriv(state.t)
    x = state.q * s
    x_dot = state.q_dot * s + 0.5 * state.q * md / s
    rho = state.f * s
    rho_dot = state.f_dot * s + 0.5 * state.f * md / s
    return x, x_dot, rho, rho_dot


# --- config format ----------------------------------------------------------

_SCHEMA = {
    "functions": ("m", "omega_tilde_sq"),
    "coupling": ("V", "W", "F", "G"),
    "initial": ("q", "q_dot", "f", "f_dot", "t0"),
    "integration": ("method", "t_end", "dt", "tol", "output_stride"),
}

_COUPLING_VARS = {"V": "Q", "W": "s", "F": "u", "G": "v"}


@dataclass(frozen=True)
class ConfigDocument:
    """Parsed config: section -> key -> raw string value."""

    sections: dict[str, dict[str, str]]
    text: str
    path: str | None = None


def parse_config(text: str, path: str | None = None) -> ConfigDocument:
    """Parse the line-oriented `[section]` / `key = value` / `#`-comment
    format and reject unknown sections or keys."""
    cp = configparser.ConfigParser(
        comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str  # keys are case-sensitive (V vs v matters)
    try:
        cp.read_file(io.StringIO(text), source=path or "<config>")
    except configparser.Error as err:
        raise ConfigError(f"config parse error: {err}") from None
    sections: dict[str, dict[str, str]] = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in section [{sec}]")
        sections[sec] = dict(cp[sec])
    return ConfigDocument(sections, text, path)


def load_config(path: str) -> ConfigDocument:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), path)


def apply_overrides(doc: ConfigDocument, overrides: list[str]) -> ConfigDocument:
    """Apply ``section.key=value`` override strings on top of a document."""
    sections = {sec: dict(kv) for sec, kv in doc.sections.items()}
    for item in overrides:
        head, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        sec, dot, key = head.strip().partition(".")
        if not dot:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        if sec not in _SCHEMA or key not in _SCHEMA[sec]:
            raise ConfigError(f"override targets unknown key [{sec}] {key!r}")
        sections.setdefault(sec, {})[key] = value.strip()
    return ConfigDocument(sections, doc.text, doc.path)


def _get_float(sections, sec, key, default=None):
    raw = sections.get(sec, {}).get(key)
    if raw is None:
        if default is not None:
            return default
        raise ConfigError(f"missing required key {key!r} in section [{sec}]")
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{sec}] {key} = {raw!r} is not a number") from None


def _compile_key(sections, sec, key, var) -> Func1:
    raw = sections.get(sec, {}).get(key)
    if raw is None:
        raise ConfigError(f"missing required key {key!r} in section [{sec}]")
    try:
        return compile_func(raw, var)
    except ErmakovError as err:
        raise ConfigError(f"[{sec}] {key}: {err}") from None


def _coupling_side(sections, direct_key: str, potential_key: str,
                   derive) -> tuple[Func1, Func1 | None]:
    """Resolve one coupling from either the direct function or the
    potential; both at once is a construction error, neither means the
    coupling is absent (zero)."""
    coupling = sections.get("coupling", {})
    if direct_key in coupling and potential_key in coupling:
        raise ConfigError(
            f"[coupling] {potential_key} and {direct_key} are mutually exclusive; "
            f"give exactly one")
    if potential_key in coupling:
        pot = _compile_key(sections, "coupling", potential_key,
                           _COUPLING_VARS[potential_key])
        return derive(pot), pot
    if direct_key in coupling:
        return _compile_key(sections, "coupling", direct_key,
                            _COUPLING_VARS[direct_key]), None
    return constant_func(0.0, _COUPLING_VARS[direct_key]), None


def build_scenario(doc: ConfigDocument) -> Scenario:
    """Validate a config document and materialize the Scenario.

    Couplings given as potentials are converted here, so downstream
    dynamics only ever sees F and G (the potentials are kept for the
    energy evaluators).
    """
    sections = doc.sections
    m = _compile_key(sections, "functions", "m", "t")
    omega_tilde_sq = _compile_key(sections, "functions", "omega_tilde_sq", "t")

    coupling_F, potential_V = _coupling_side(sections, "F", "V", F_from_V)
    coupling_G, potential_W = _coupling_side(sections, "G", "W", G_from_W)

    t0 = _get_float(sections, "initial", "t0", default=0.0)
    initial = PhysState(
        t=t0,
        tau=0.0,
        q=_get_float(sections, "initial", "q"),
        q_dot=_get_float(sections, "initial", "q_dot"),
        f=_get_float(sections, "initial", "f"),
        f_dot=_get_float(sections, "initial", "f_dot"),
    )
    if initial.q == 0.0:
        raise ConfigError("initial q must be nonzero")
    if initial.f == 0.0:
        raise ConfigError("initial f must be nonzero")

    method = sections.get("integration", {}).get("method")
    if method is None:
        raise ConfigError("missing required key 'method' in section [integration]")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")
    t_end = _get_float(sections, "integration", "t_end")
    output_stride = _get_float(sections, "integration", "output_stride")
    dt = tol = None
    if not output_stride > 0.0:
        raise ConfigError("output_stride must be positive")
    if method in ("rk4", "verlet"):
        dt = _get_float(sections, "integration", "dt")
        if not dt > 0.0:
            raise ConfigError("dt must be positive")
        k = round(output_stride / dt)
        if k < 1 or abs(k * dt - output_stride) > 1e-9 * output_stride:
            raise ConfigError(f"dt={dt} does not subdivide "
                              f"output_stride={output_stride} exactly")
    if method == "adaptive54":
        tol = _get_float(sections, "integration", "tol")
        if not tol > 0.0:
            raise ConfigError("tol must be positive")
    # t_end == t0 is allowed and yields a single-sample trajectory
    if t_end < t0:
        raise ConfigError(f"t_end ({t_end}) must not precede t0 ({t0})")
    plan = IntegrationPlan(method=method, t_end=t_end, dt=dt, tol=tol,
                           output_stride=output_stride)

    try:
        m0 = m(t0)
    except ErmakovError as err:
        raise ConfigError(f"mass not evaluable at t0: {err}") from None
    if not m0 > 0.0:
        raise ConfigError(f"mass must be positive at t0, got m({t0}) = {m0}")

    return Scenario(m=m, omega_tilde_sq=omega_tilde_sq,
                    coupling_F=coupling_F, coupling_G=coupling_G,
                    potential_V=potential_V, potential_W=potential_W,
                    initial=initial, plan=plan)
