"""Relaxation kernels g(t) and decay witnesses xi(t).

Two kernel families are supported, both with closed-form values, derivatives
and tail integrals:

    PronySum   g(t) = sum_i c_i exp(-a_i t)
    PowerLaw   g(t) = g0 (1 + t)^(-p),  p > 1

plus the Zero kernel (no memory). A kernel is admissible only if its total
mass stays below one, so that the residual stiffness ``l = 1 - int_0^inf g``
is positive.

A decay witness is a positive non-increasing function xi with
``g'(t) <= -xi(t) g(t)``; it sets the shape of the energy decay envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike


class KernelError(ValueError):
    """Raised for inadmissible kernels or misuse of kernel operations."""


def _times(t: ArrayLike) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise KernelError(f"kernel evaluated at negative time {float(np.min(arr))}")
    return arr


def _out(arr: np.ndarray) -> float | np.ndarray:
    return float(arr) if arr.ndim == 0 else arr


@dataclass(frozen=True)
class PronySum:
    """Sum of decaying exponentials, ``modes = ((c_1, a_1), ...)``."""

    modes: tuple[tuple[float, float], ...]

    def __post_init__(self):
        modes = tuple((float(c), float(a)) for c, a in self.modes)
        object.__setattr__(self, "modes", modes)
        if not modes:
            raise KernelError("prony kernel needs at least one mode")
        for c, a in modes:
            if not (math.isfinite(c) and math.isfinite(a)):
                raise KernelError(f"non-finite prony mode ({c}, {a})")
            if c < 0:
                raise KernelError(f"prony amplitude {c} must be >= 0")
            if a <= 0:
                raise KernelError(f"prony rate {a} must be > 0")
        if sum(c for c, _ in modes) <= 0:
            raise KernelError("prony kernel must have a positive amplitude")
        _require_positive_l(self)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([c for c, _ in self.modes])

    @property
    def rates(self) -> np.ndarray:
        return np.array([a for _, a in self.modes])

    def value(self, t):
        t = _times(t)
        c, a = self.amplitudes, self.rates
        return _out(np.sum(c * np.exp(-np.multiply.outer(t, a)), axis=-1))

    def derivative(self, t):
        t = _times(t)
        c, a = self.amplitudes, self.rates
        return _out(-np.sum(c * a * np.exp(-np.multiply.outer(t, a)), axis=-1))

    def tail(self, t):
        t = _times(t)
        c, a = self.amplitudes, self.rates
        return _out(np.sum((c / a) * np.exp(-np.multiply.outer(t, a)), axis=-1))


@dataclass(frozen=True)
class PowerLaw:
    """``g(t) = amplitude * (1 + t) ** (-exponent)`` with exponent > 1."""

    amplitude: float
    exponent: float

    def __post_init__(self):
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "exponent", float(self.exponent))
        if not self.amplitude > 0:
            raise KernelError(f"power-law amplitude {self.amplitude} must be > 0")
        if not self.exponent > 1:
            raise KernelError(f"power-law exponent {self.exponent} must be > 1 (finite mass)")
        _require_positive_l(self)

    def value(self, t):
        t = _times(t)
        return _out(self.amplitude * (1.0 + t) ** (-self.exponent))

    def derivative(self, t):
        t = _times(t)
        return _out(-self.exponent * self.amplitude * (1.0 + t) ** (-self.exponent - 1.0))

    def tail(self, t):
        t = _times(t)
        p = self.exponent
        return _out(self.amplitude / (p - 1.0) * (1.0 + t) ** (1.0 - p))


@dataclass(frozen=True)
class Zero:
    """The memoryless kernel ``g = 0``."""

    def value(self, t):
        return _out(np.zeros_like(_times(t)))

    derivative = value
    tail = value


RelaxationKernel = Union[PronySum, PowerLaw, Zero]


def _require_positive_l(k) -> None:
    mass = float(k.tail(0.0))
    if not mass < 1.0:
        raise KernelError(f"kernel mass {mass:.6g} >= 1 leaves no residual stiffness (need l > 0)")


def eval_g(k: RelaxationKernel, t):
    """g(t) in closed form; accepts scalars or arrays of nonnegative times."""
    return k.value(t)


def eval_dg(k: RelaxationKernel, t):
    return k.derivative(t)


def mass_tail(k: RelaxationKernel, t=0.0):
    """Closed-form tail integral ``int_t^inf g(s) ds``."""
    return k.tail(t)


def total_mass(k: RelaxationKernel) -> float:
    return float(k.tail(0.0))


def residual_stiffness(k: RelaxationKernel) -> float:
    """``l = 1 - int_0^inf g``."""
    return 1.0 - total_mass(k)


def mass_up_to(k: RelaxationKernel, t):
    """``int_0^t g(s) ds``."""
    return total_mass(k) - k.tail(t)


@dataclass(frozen=True)
class Constant:
    """xi(t) = a; yields exponential decay envelopes."""

    a: float

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        if not (math.isfinite(self.a) and self.a > 0):
            raise KernelError(f"witness constant {self.a} must be > 0")

    def value(self, t):
        return _out(np.full_like(np.asarray(t, dtype=float), self.a))

    def integral(self, t0, t):
        """``int_t0^t xi(s) ds``."""
        return _out(self.a * (np.asarray(t, dtype=float) - t0))


@dataclass(frozen=True)
class Hyperbolic:
    """xi(t) = a / (1 + t); yields polynomial decay envelopes."""

    a: float

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        if not (math.isfinite(self.a) and self.a > 0):
            raise KernelError(f"witness constant {self.a} must be > 0")

    def value(self, t):
        return _out(self.a / (1.0 + np.asarray(t, dtype=float)))

    def integral(self, t0, t):
        return _out(self.a * np.log((1.0 + np.asarray(t, dtype=float)) / (1.0 + t0)))


DecayWitness = Union[Constant, Hyperbolic]


def canonical_witness(k: RelaxationKernel) -> DecayWitness:
    """The tightest catalog witness for ``k``.

    Prony sums decay at least as fast as their slowest mode; a power law
    satisfies ``g'/g = -p/(1+t)`` exactly. The zero kernel gets ``xi = 1``.
    """
    if isinstance(k, PronySum):
        return Constant(float(np.min(k.rates)))
    if isinstance(k, PowerLaw):
        return Hyperbolic(k.exponent)
    return Constant(1.0)


@dataclass(frozen=True)
class G2Verdict:
    holds: bool
    violation_time: float | None = None
    worst_excess: float = 0.0


def default_sample_times(tau_bar: float = 1.0, n: int = 512) -> np.ndarray:
    """Log-spaced times on ``[0, 10*tau_bar + 50]`` (t = 0 included)."""
    t_max = 10.0 * tau_bar + 50.0
    return np.concatenate([[0.0], np.geomspace(1e-6, t_max, n - 1)])


def check_G2(k: RelaxationKernel, w: DecayWitness, times=None, rtol: float = 1e-12) -> G2Verdict:
    """Check ``g'(t) <= -xi(t) g(t)`` at each sample time.

    Equality cases (single Prony mode with ``a = xi``, power law with
    hyperbolic witness ``a = p``) are accepted up to a relative rounding
    slack ``rtol``.
    """
    if isinstance(k, Zero):
        raise KernelError("the (G2) decay condition does not apply to the zero kernel")
    if times is None:
        times = default_sample_times()
    times = _times(times)
    dg = np.atleast_1d(k.derivative(times))
    bound = -np.atleast_1d(w.value(times)) * np.atleast_1d(k.value(times))
    excess = dg - bound
    slack = rtol * np.maximum(np.abs(dg), np.abs(bound))
    bad = np.nonzero(excess > slack)[0]
    if bad.size:
        return G2Verdict(False, float(times[bad[0]]), float(np.max(excess)))
    return G2Verdict(True, None, float(np.max(excess)) if excess.size else 0.0)
