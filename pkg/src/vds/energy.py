"""Energy and Lyapunov functionals along a discrete trajectory.

The energy at time t has four parts

    kinetic   1/2 |u_t|^2
    elastic   1/2 (1 - int_0^t g) |grad u|^2
    memory    1/2 int_0^t g(t-s) |grad u(t) - grad u(s)|^2 ds
    delay     xi/2 int_{t-tau(t)}^t e^{lambda (s-t)} |u_t(s)|^2 ds

The memory part is expanded as ``G |grad u|^2 - 2 <grad u, grad H> + m2``
where H and m2 are the engine's history accumulators. ``G`` is the engine's
own quadrature of ``int_0^t g`` so that the expansion is an exact weighted
sum of squares; the same ``G`` is used in the elastic part.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .kernel import DecayWitness

CSV_COLUMNS = ("t", "E", "kinetic", "elastic", "memory", "delay", "I", "K", "L", "F")


class FitError(ValueError):
    pass


class InsufficientSignal(ValueError):
    pass


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    E: float
    kinetic: float
    elastic: float
    memory: float
    delay: float
    I: float = 0.0  # noqa: E741
    K: float = 0.0
    L: float = 0.0
    F: float = 0.0

    def row(self) -> tuple[float, ...]:
        return astuple(self)


assert tuple(f.name for f in fields(EnergyRecord)) == CSV_COLUMNS


def delay_integral(sim, lam: float) -> float:
    """Trapezoid value of ``int_{t-tau}^t e^{lam (s-t)} |u_t(s)|^2 ds``.

    Uses the scalar norms stored in the history buffer; the partial cell at
    the lower end uses the linearly interpolated norm.
    """
    buf = sim.buf
    n = sim.n
    t = sim.t
    tau = sim.tau()
    k, theta = buf.locate(t - tau)
    k_lo = k if theta == 0.0 else k + 1
    norms = buf.norms(k_lo, n)
    s = np.arange(k_lo, n + 1) * sim.dt
    vals = np.exp(lam * (s - t)) * norms
    total = 0.0
    if len(vals) > 1:
        total = sim.dt * (np.sum(vals) - 0.5 * (vals[0] + vals[-1]))
    if theta != 0.0:
        width = (1.0 - theta) * sim.dt
        low = buf.interpolated_norm_sq(t - tau) * math.exp(-lam * tau)
        total += 0.5 * width * (low + vals[0])
    return float(total)


def energy_parts(sim, xi: float, lam: float) -> tuple[float, float, float, float]:
    grid = sim.grid
    kinetic = 0.5 * grid.norm_sq(sim.v)
    g_mass = sim.conv.mass()
    grad_u = grid.grad_sq(sim.u)
    elastic = 0.5 * (1.0 - g_mass) * grad_u
    memory = 0.5 * (g_mass * grad_u - 2.0 * grid.grad_inner(sim.u, sim.conv.history()) + sim.conv.grad_history())
    # a sum of squares; only cancellation rounding can push it below zero
    memory = max(memory, 0.0)
    delay = 0.5 * xi * delay_integral(sim, lam)
    return kinetic, elastic, memory, delay


def energy(sim, xi: float, lam: float) -> EnergyRecord:
    kinetic, elastic, memory, delay = energy_parts(sim, xi, lam)
    return EnergyRecord(sim.t, kinetic + elastic + memory + delay, kinetic, elastic, memory, delay)


def lyapunov(sim, rec: EnergyRecord, N: float = 10.0, eps: float = 0.01) -> tuple[float, float, float]:
    """(I, K, L) with ``I = <u, u_t>``, ``K = -<u_t, int g(t-s)(u(t)-u(s)) ds>``."""
    grid = sim.grid
    I = grid.inner(sim.u, sim.v)  # noqa: E741
    K = -grid.inner(sim.v, sim.conv.mass() * sim.u - sim.conv.history())
    return I, K, N * rec.E + eps * I + K


def evaluate(sim, xi: float, lam: float, witness: DecayWitness | None = None, N: float = 10.0, eps: float = 0.01, C7: float = 1.0) -> EnergyRecord:
    """Full record: energy parts plus I, K, L and the composite F."""
    rec = energy(sim, xi, lam)
    I, K, L = lyapunov(sim, rec, N, eps)  # noqa: E741
    xi_t = float(witness.value(rec.t)) if witness is not None else 0.0
    F = xi_t * L + C7 * rec.E
    return EnergyRecord(rec.t, rec.E, rec.kinetic, rec.elastic, rec.memory, rec.delay, I, K, L, F)


@dataclass(frozen=True)
class MonotoneReport:
    max_uptick: float
    passed: bool
    worst_time: float | None = None


def check_monotone(records, tol: float = 1e-8) -> MonotoneReport:
    """Largest increase of E between consecutive records, relative to E(0)."""
    E = np.array([r.E for r in records], dtype=float)
    if len(E) < 2:
        return MonotoneReport(0.0, True)
    ups = np.maximum(np.diff(E), 0.0)
    j = int(np.argmax(ups))
    scale = E[0] if E[0] > 0 else 1.0
    uptick = float(ups[j] / scale)
    return MonotoneReport(uptick, uptick <= tol, float(records[j + 1].t) if ups[j] > 0 else None)


@dataclass(frozen=True)
class SandwichReport:
    beta1: float
    beta2: float
    passed: bool
    samples: int


def check_sandwich(records, threshold: float = 1e-12) -> SandwichReport:
    """Range of L/E over records with E above ``threshold * E(0)``."""
    E = np.array([r.E for r in records], dtype=float)
    L = np.array([r.L for r in records], dtype=float)
    if not len(E) or E[0] <= 0:
        raise InsufficientSignal("E(0) is zero; no ratio statistics")
    keep = E > threshold * E[0]
    if not np.any(keep):
        raise InsufficientSignal("E is below the positivity threshold everywhere")
    ratio = L[keep] / E[keep]
    b1, b2 = float(np.min(ratio)), float(np.max(ratio))
    return SandwichReport(b1, b2, b1 > 0 and math.isfinite(b2), int(np.sum(keep)))


@dataclass(frozen=True)
class DecayFit:
    K_fit: float
    k_fit: float
    r2: float
    t0: float
    t_end: float
    samples: int
    witness: str

    def envelope(self, X) -> np.ndarray:
        return self.K_fit * np.exp(-self.k_fit * np.asarray(X, dtype=float))

    def as_lines(self) -> list[str]:
        return [
            f"K_fit={self.K_fit!r}",
            f"k_fit={self.k_fit!r}",
            f"r2={self.r2!r}",
            f"t0={self.t0!r}",
            f"t_end={self.t_end!r}",
            f"samples={self.samples}",
            f"witness={self.witness}",
        ]


def witness_label(w: DecayWitness) -> str:
    return f"{type(w).__name__.lower()}(a={w.a!r})"


def fit_window(times, energies, t0: float):
    times = np.asarray(times, dtype=float)
    energies = np.asarray(energies, dtype=float)
    mask = times >= t0 - 1e-12
    return times[mask], energies[mask]


def fit_decay(times, energies, w: DecayWitness, t0: float) -> DecayFit:
    """Least-squares line ``log E = log K - k X`` with ``X = int_t0^t xi``.

    ``X`` uses the witness's closed-form integral: ``a (t - t0)`` for a
    constant witness, ``a log((1+t)/(1+t0))`` for a hyperbolic one.
    """
    t, E = fit_window(times, energies, t0)
    if len(t) < 3:
        raise FitError(f"fit window [{t0:g}, ...] holds {len(t)} samples; need at least 3")
    if np.any(~(E > 0)) or not np.all(np.isfinite(E)):
        bad = float(t[np.argmax(~(E > 0) | ~np.isfinite(E))])
        raise FitError(f"energy is not positive at t = {bad:g}; start the window before the noise floor")
    X = np.asarray(w.integral(t0, t), dtype=float)
    y = np.log(E)
    A = np.column_stack([np.ones_like(X), -X])
    (logK, k), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([logK, k])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(np.exp(logK)), float(k), r2, float(t0), float(t[-1]), int(len(t)), witness_label(w))


def fit_residuals(times, energies, fit: DecayFit, w: DecayWitness) -> tuple[np.ndarray, np.ndarray]:
    """(window times, log E - log envelope)."""
    t, E = fit_window(times, energies, fit.t0)
    X = np.asarray(w.integral(fit.t0, t), dtype=float)
    return t, np.log(E) - np.log(fit.envelope(X))
