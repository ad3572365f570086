"""Stability conditions on the damping pair and the energy weights.

With ``d`` the slope bound of the delay and ``tau_bar`` its maximum, the
damping dominates the delayed feedback when ``|a1| < sqrt(1 - d) * a0``.
In that case the energy weight ``xi`` can be picked inside

    |a1| / sqrt(1 - d)  <  xi  <  2 a0 - |a1| / sqrt(1 - d)

and the exponential history weight ``lambda`` below

    (1 / tau_bar) * |log(|a1| / (xi sqrt(1 - d)))|.

We take the midpoint of the xi interval (which is always ``a0``) and half of
the lambda bound, capped at ``10 / tau_bar`` when ``a1 = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .delay import DelayProfile

LAMBDA_CAP_FACTOR = 10.0


@dataclass(frozen=True)
class DampingPair:
    a0: float
    a1: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "a1", float(self.a1))
        if not math.isfinite(self.a1):
            raise ValueError(f"a1 = {self.a1} must be finite")
        if not (math.isfinite(self.a0) and self.a0 > 0):
            raise ValueError(f"a0 = {self.a0} must be > 0")


@dataclass(frozen=True)
class FeasibilityCertificate:
    feasible: bool
    margin: float
    xi_interval: tuple[float, float] | None
    xi_chosen: float | None
    lambda_bound: float | None
    lambda_chosen: float | None
    a0: float
    a1: float
    d: float
    tau_bar: float

    @property
    def verdict(self) -> str:
        return "feasible" if self.feasible else "infeasible"

    def energy_weights(self) -> tuple[float, float]:
        """(xi, lambda) for the energy functional.

        Infeasible pairs still get a well-defined energy for reporting:
        xi = a0 (the interval midpoint formula) and lambda = 0.
        """
        if self.feasible:
            return self.xi_chosen, self.lambda_chosen
        return self.a0, 0.0

    def as_lines(self) -> list[str]:
        def fmt(x):
            return "none" if x is None else repr(x)

        lo, hi = self.xi_interval if self.xi_interval else (None, None)
        return [
            f"verdict={self.verdict}",
            f"a0={self.a0!r}",
            f"a1={self.a1!r}",
            f"d={self.d!r}",
            f"tau_bar={self.tau_bar!r}",
            f"margin={self.margin!r}",
            f"xi_lo={fmt(lo)}",
            f"xi_hi={fmt(hi)}",
            f"xi_chosen={fmt(self.xi_chosen)}",
            "xi_rule=midpoint (convention)",
            f"lambda_bound={fmt(self.lambda_bound)}",
            f"lambda_chosen={fmt(self.lambda_chosen)}",
            "lambda_rule=half of min(bound, 10/tau_bar) (convention)",
        ]

    def __str__(self) -> str:
        return "\n".join(self.as_lines())


def certify_values(a0: float, a1: float, d: float, tau_bar: float) -> FeasibilityCertificate:
    if not a0 > 0:
        raise ValueError(f"a0 = {a0} must be > 0")
    if not d < 1:
        raise ValueError(f"d = {d} must be < 1")
    if not tau_bar > 0:
        raise ValueError(f"tau_bar = {tau_bar} must be > 0")
    root = math.sqrt(1.0 - d)
    margin = root * a0 - abs(a1)
    xi_lo = abs(a1) / root
    xi_hi = 2.0 * a0 - xi_lo
    if not (margin > 0 and xi_lo < xi_hi):
        return FeasibilityCertificate(False, margin, None, None, None, None, a0, a1, d, tau_bar)
    xi = 0.5 * (xi_lo + xi_hi)
    cap = LAMBDA_CAP_FACTOR / tau_bar
    if a1 == 0:
        bound = math.inf
    else:
        bound = abs(math.log(abs(a1) / (xi * root))) / tau_bar
    lam = 0.5 * min(bound, cap)
    return FeasibilityCertificate(True, margin, (xi_lo, xi_hi), xi, bound, lam, a0, a1, d, tau_bar)


def certify(pair: DampingPair, profile: DelayProfile) -> FeasibilityCertificate:
    return certify_values(pair.a0, pair.a1, profile.d, profile.tau_max)


def sweep_boundary(a0: float, d: float, a1_values, tau_bar: float = 1.0) -> list[tuple[float, str, float]]:
    """(a1, verdict, margin) for each a1 value."""
    rows = []
    for a1 in a1_values:
        cert = certify_values(a0, float(a1), d, tau_bar)
        rows.append((float(a1), cert.verdict, cert.margin))
    return rows
