"""Time-dependent weight functions rho0, rho and the normalized coefficients.

All weights depend on ``t`` only.  Direct evaluators are defined on ``[0, T)``;
the inverse evaluators extend continuously by zero to ``t = T`` for the
polynomial-exponential family.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class WeightError(ValueError):
    """Raised for out-of-domain times or unsupported weight variants."""


@dataclass(frozen=True)
class Unit:
    """The constant weight 1."""


@dataclass(frozen=True)
class PolyExp:
    """(T - t)^s * exp(K1 / (T - t))."""

    s: float
    K1: float

    def __post_init__(self):
        if self.s < 0 or self.K1 <= 0:
            raise WeightError(f"PolyExp needs s >= 0 and K1 > 0, got s={self.s}, K1={self.K1}")


@dataclass(frozen=True)
class CarlemanTyped:
    """Declaration-only variant of the Carleman weights.

    No evaluator is provided: the auxiliary function entering these weights
    is not specified, so every evaluation raises.
    """

    K1: float
    K2: float


WeightKind = Unit | PolyExp | CarlemanTyped


@dataclass(frozen=True)
class WeightSpec:
    kind: WeightKind
    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise WeightError(f"final time must be positive, got {self.T}")


def rho0_default(T: float = 0.5, K1: float = 0.75) -> WeightSpec:
    """The weight (T-t)^{3/2} exp(K1/(T-t))."""
    return WeightSpec(PolyExp(1.5, K1), T)


def rho_default(T: float = 0.5, K1: float = 0.75) -> WeightSpec:
    """The weight exp(K1/(T-t))."""
    return WeightSpec(PolyExp(0.0, K1), T)


def _check_kind(spec: WeightSpec):
    if isinstance(spec.kind, CarlemanTyped):
        raise WeightError("CarlemanTyped weights have no evaluator")


def _as_array(t):
    return np.asarray(t, dtype=float)


def _direct(spec: WeightSpec, t):
    _check_kind(spec)
    tt = _as_array(t)
    if np.any(tt < 0) or np.any(tt > spec.T):
        raise WeightError("t outside [0, T]")
    if isinstance(spec.kind, Unit):
        return np.ones_like(tt)[()]
    if np.any(tt >= spec.T):
        raise WeightError("direct weight evaluation is undefined at t = T")
    tau = spec.T - tt
    k = spec.kind
    with np.errstate(over="ignore"):  # overflows to inf within ~1e-3 of T
        return (tau**k.s * np.exp(k.K1 / tau))[()]


def _inverse(spec: WeightSpec, t):
    _check_kind(spec)
    tt = _as_array(t)
    if np.any(tt < 0) or np.any(tt > spec.T):
        raise WeightError("t outside [0, T]")
    if isinstance(spec.kind, Unit):
        return np.ones_like(tt)[()]
    k = spec.kind
    tau = spec.T - tt
    out = np.zeros_like(tau)
    pos = tau > 0
    tp = tau[pos]
    # exp(-K1/tau) underflows cleanly to 0 well before tau^-s overflows
    out[pos] = tp ** (-k.s) * np.exp(-k.K1 / tp)
    return out[()]


def eval_rho0(spec: WeightSpec, t):
    """Evaluate rho0(t); raises at t = T for non-unit weights."""
    return _direct(spec, t)


def eval_rho0_inv(spec: WeightSpec, t):
    """Evaluate 1/rho0(t), extended by 0 at t = T."""
    return _inverse(spec, t)


def eval_rho(spec: WeightSpec, t):
    return _direct(spec, t)


def eval_rho_inv(spec: WeightSpec, t):
    return _inverse(spec, t)


def eval_rho0_inv2(spec: WeightSpec, t):
    """rho0^{-2}(t), the weight of the control-support term."""
    return _inverse(spec, t) ** 2


def normalized_coeffs(spec_rho0: WeightSpec, spec_rho: WeightSpec, t):
    """Coefficients (alpha1, alpha0) with rho^{-1} L*(rho0 psi) = alpha1 L*psi + alpha0 psi.

    Supported pairs: two PolyExp weights sharing K1 with rho of power 0, or two
    unit weights.  For rho0 = (T-t)^s e^{K1/(T-t)}, rho = e^{K1/(T-t)}:

        alpha1 = (T-t)^s
        alpha0 = -rho0'/rho = s (T-t)^{s-1} - K1 (T-t)^{s-2}

    The sign of alpha0 follows from L* containing -d/dt.
    """
    if spec_rho0.T != spec_rho.T:
        raise WeightError("weights must share the final time T")
    k0, k = spec_rho0.kind, spec_rho.kind
    tt = _as_array(t)
    if isinstance(k0, Unit) and isinstance(k, Unit):
        return np.ones_like(tt)[()], np.zeros_like(tt)[()]
    if not (isinstance(k0, PolyExp) and isinstance(k, PolyExp)):
        raise WeightError("unsupported weight pair for the normalized form")
    if k0.K1 != k.K1 or k.s != 0:
        raise WeightError("normalized form needs matching K1 and rho of power 0")
    if np.any(tt < 0) or np.any(tt >= spec_rho0.T):
        raise WeightError("normalized coefficients are defined on [0, T)")
    tau = spec_rho0.T - tt
    s = k0.s
    a1 = tau**s
    a0 = s * tau ** (s - 1) - k0.K1 * tau ** (s - 2)
    return a1[()], a0[()]
