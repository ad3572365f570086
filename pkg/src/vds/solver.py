"""Leapfrog time stepping for the damped viscoelastic wave equation

    u_tt - lap u + int_0^t g(t-s) lap u(s) ds + a0 u_t + a1 u_t(t - tau(t)) = 0

on a Dirichlet grid. The a0 damping is centered (semi-implicit), the memory
term and the delayed feedback are explicit. The stored velocity is the
centered difference ``v^n = (u^{n+1} - u^{n-1}) / (2 dt)``, so a state at
time ``t^n`` already carries ``u^{n+1}``.

Memory convolutions use the trapezoid rule on the time grid. For Prony
kernels the same quadrature is carried recursively, one accumulator per
mode; the direct engine re-sums the stored history and works for any kernel.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .delay import (
    CoverageError,
    DelayProfile,
    HistoryBuffer,
    TransportField,
    delay_consistency_error,
    delayed_velocity,
    seed_history,
    step_transport,
)
from .feasibility import DampingPair
from .field import Grid
from .kernel import PronySum, RelaxationKernel, Zero

DIVERGENCE_THRESHOLD = 1e12


class DivergenceError(RuntimeError):
    """The discrete solution blew up (non-finite or above the threshold)."""

    def __init__(self, t: float, max_abs: float):
        super().__init__(f"solution diverged at t = {t:.6g} (max |u| = {max_abs:.3e})")
        self.t = t
        self.max_abs = max_abs


class ZeroConvolution:
    """Memoryless engine; every accumulator is identically zero."""

    def __init__(self, grid: Grid, dt: float):
        self.grid = grid
        self.dt = dt
        self.n = 0

    def start(self, u0: np.ndarray) -> None:
        self.n = 0

    def advance(self, u_new: np.ndarray) -> None:
        self.n += 1

    def mass(self) -> float:
        return 0.0

    def history(self) -> np.ndarray:
        return self.grid.zeros()

    def grad_history(self) -> float:
        return 0.0

    def memory_force(self) -> np.ndarray:
        return self.grid.zeros()


class RecursiveConvolution:
    """Per-mode trapezoid accumulators for a Prony kernel.

    For each mode ``c e^{-a t}`` and integrand f the accumulator follows

        X^{n+1} = e^{-a dt} X^n + dt/2 * c * (e^{-a dt} f^n + f^{n+1}),

    which reproduces the trapezoid sum exactly. Three integrands are
    tracked: 1 (kernel mass up to t), u (history field) and |grad u|^2.
    The memory force is the Laplacian of the history field.
    """

    def __init__(self, grid: Grid, kernel: PronySum, dt: float):
        if not isinstance(kernel, PronySum):
            raise TypeError("recursive engine requires a Prony kernel")
        self.grid = grid
        self.dt = float(dt)
        self.c = kernel.amplitudes
        self.decay = np.exp(-kernel.rates * self.dt)
        self._e_field = self.decay.reshape((-1,) + (1,) * grid.dim)
        self._w_field = (0.5 * self.dt * self.c).reshape((-1,) + (1,) * grid.dim)
        m = len(self.c)
        self.mu = np.zeros((m, *grid.shape))
        self.m2 = np.zeros(m)
        self.g0 = np.zeros(m)
        self.n = 0
        self._u_last: np.ndarray | None = None
        self._s_last = 0.0

    def start(self, u0: np.ndarray) -> None:
        self.mu[:] = 0.0
        self.m2[:] = 0.0
        self.g0[:] = 0.0
        self.n = 0
        self._u_last = np.array(u0, dtype=float)
        self._s_last = self.grid.grad_sq(u0)

    def advance(self, u_new: np.ndarray) -> None:
        e, w = self.decay, 0.5 * self.dt * self.c
        s_new = self.grid.grad_sq(u_new)
        self.mu = self._e_field * self.mu + self._w_field * (self._e_field * self._u_last + u_new)
        self.m2 = e * self.m2 + w * (e * self._s_last + s_new)
        self.g0 = e * self.g0 + w * (e + 1.0)
        self._u_last = np.array(u_new, dtype=float)
        self._s_last = s_new
        self.n += 1

    def mass(self) -> float:
        return float(np.sum(self.g0))

    def history(self) -> np.ndarray:
        return np.sum(self.mu, axis=0)

    def grad_history(self) -> float:
        return float(np.sum(self.m2))

    def memory_force(self) -> np.ndarray:
        return self.grid.laplacian(self.history())


class DirectConvolution:
    """Trapezoid sums over the full stored history of u (any kernel)."""

    def __init__(self, grid: Grid, kernel: RelaxationKernel, dt: float, capacity: int = 1024):
        self.grid = grid
        self.kernel = kernel
        self.dt = float(dt)
        self._size = int(np.prod(grid.shape))
        self._u = np.zeros((capacity, self._size))
        self._s = np.zeros(capacity)
        self._g = np.zeros(0)
        self.n = -1
        self._cache_n = -2
        self._w: np.ndarray | None = None
        self._hist: np.ndarray | None = None

    def start(self, u0: np.ndarray) -> None:
        self.n = -1
        self._cache_n = -2
        self._append(u0)

    def _append(self, u: np.ndarray) -> None:
        self.n += 1
        if self.n >= len(self._s):
            grow = len(self._s)
            self._u = np.concatenate([self._u, np.zeros((grow, self._size))])
            self._s = np.concatenate([self._s, np.zeros(grow)])
        self._u[self.n] = np.ravel(u)
        self._s[self.n] = self.grid.grad_sq(u)

    def advance(self, u_new: np.ndarray) -> None:
        self._append(u_new)

    def weights(self) -> np.ndarray:
        """Trapezoid weights times ``g(t^n - t^k)`` for k = 0..n."""
        if self._cache_n == self.n:
            return self._w
        n = self.n
        if len(self._g) < n + 1:
            size = max(2 * len(self._g), n + 1, 64)
            self._g = np.asarray(self.kernel.value(np.arange(size) * self.dt), dtype=float)
        if n == 0:
            w = np.zeros(1)
        else:
            w = self._g[n::-1] * self.dt
            w[0] *= 0.5
            w[-1] *= 0.5
        self._w = w
        self._hist = (w @ self._u[: n + 1]).reshape(self.grid.shape)
        self._cache_n = n
        return w

    def mass(self) -> float:
        return float(np.sum(self.weights()))

    def history(self) -> np.ndarray:
        self.weights()
        return self._hist.copy()

    def grad_history(self) -> float:
        return float(self.weights() @ self._s[: self.n + 1])

    def memory_force(self) -> np.ndarray:
        return self.grid.laplacian(self.history())


def make_engine(grid: Grid, kernel: RelaxationKernel, dt: float, mode: str = "recursive"):
    if isinstance(kernel, Zero):
        return ZeroConvolution(grid, dt)
    if mode == "recursive":
        return RecursiveConvolution(grid, kernel, dt)
    if mode == "direct":
        return DirectConvolution(grid, kernel, dt)
    raise ValueError(f"unknown convolution engine {mode!r}")


def max_stable_dt(grid: Grid, profile: DelayProfile, dt_safety: float = 0.5) -> float:
    """``min(dt_safety * h / sqrt(dim), tau_min / 8)``."""
    return min(dt_safety * grid.h / math.sqrt(grid.dim), profile.tau_min / 8.0)


def damping_coefficients(pair: DampingPair | tuple[float, float]) -> tuple[float, float]:
    """(a0, a1) from a validated pair, or from a raw tuple with a0 >= 0.

    The raw form exists for the undamped (a0 = 0) conservation baseline,
    which a :class:`DampingPair` rejects.
    """
    if isinstance(pair, DampingPair):
        return pair.a0, pair.a1
    a0, a1 = (float(x) for x in pair)
    if not (math.isfinite(a0) and math.isfinite(a1) and a0 >= 0):
        raise ValueError(f"damping coefficients ({a0}, {a1}) need finite values and a0 >= 0")
    return a0, a1


class Simulation:
    """State of one discrete trajectory, advanced by :meth:`step`.

    At step ``n`` the object holds ``u = u^n``, ``u_next = u^{n+1}`` and the
    centered velocity ``v = v^n``; the convolution engine is current at
    ``t^n`` and the history buffer ends at ``v^n``.
    """

    def __init__(
        self,
        grid: Grid,
        kernel: RelaxationKernel,
        profile: DelayProfile,
        pair: DampingPair | tuple[float, float],
        u0: np.ndarray,
        u1: np.ndarray,
        f0: Callable[[float], np.ndarray] | None = None,
        dt: float | None = None,
        dt_safety: float = 0.5,
        engine: str = "recursive",
        transport: bool = False,
        n_rho: int = 64,
        delay_feedback: bool = True,
    ):
        self.grid = grid
        self.kernel = kernel
        self.profile = profile
        self.a0, self.a1 = damping_coefficients(pair)
        self.pair = pair
        self.delay_feedback = delay_feedback
        if dt is None:
            dt = max_stable_dt(grid, profile, dt_safety)
        else:
            limit = grid.h / math.sqrt(grid.dim)
            if dt > limit * (1 + 1e-12):
                raise ValueError(f"dt = {dt:g} exceeds the leapfrog stability limit h/sqrt(dim) = {limit:g}")
            if dt > profile.tau_min / 8.0 * (1 + 1e-12):
                raise ValueError(f"dt = {dt:g} must resolve the delay: need dt <= tau_min/8 = {profile.tau_min / 8:g}")
        self.dt = float(dt)
        u0 = np.array(u0, dtype=float)
        u1 = np.array(u1, dtype=float)
        if f0 is None:
            f0 = lambda s: u1  # noqa: E731
        self.f0 = f0

        self.conv = make_engine(grid, kernel, self.dt, engine)
        self.conv.start(u0)
        self.buf = HistoryBuffer(self.dt, profile.tau_max, grid.shape, grid.norm_sq)
        seed_history(self.buf, f0, profile(0.0), u1)
        self.transport = TransportField.from_history(f0, profile(0.0), u1, n_rho) if transport else None

        self.n = 0
        self.u = u0
        self.v = u1
        alpha = 0.5 * self.a0 * self.dt
        # ghost value u^{-1} = u^1 - 2 dt u1 in the centered update
        force = self._force(0, u0)
        self.u_next = u0 + self.dt * (1.0 - alpha) * u1 + 0.5 * self.dt**2 * force
        self._check_finite(self.u_next, self.dt)

    @property
    def t(self) -> float:
        return self.n * self.dt

    def tau(self) -> float:
        return self.profile(self.t)

    def _force(self, n: int, u: np.ndarray) -> np.ndarray:
        t = n * self.dt
        force = self.grid.laplacian(u) - self.conv.memory_force()
        if self.delay_feedback:
            force -= self.a1 * delayed_velocity(self.buf, t, self.profile(t))
        return force

    def _check_finite(self, u: np.ndarray, t: float) -> None:
        peak = float(np.max(np.abs(u))) if u.size else 0.0
        if not math.isfinite(peak) or peak > DIVERGENCE_THRESHOLD:
            raise DivergenceError(t, peak)

    def step(self) -> None:
        """Advance from ``t^n`` to ``t^{n+1}``."""
        dt = self.dt
        n1 = self.n + 1
        self.conv.advance(self.u_next)
        alpha = 0.5 * self.a0 * dt
        force = self._force(n1, self.u_next)
        u2 = (2.0 * self.u_next - (1.0 - alpha) * self.u + dt**2 * force) / (1.0 + alpha)
        self._check_finite(u2, (n1 + 1) * dt)
        v1 = (u2 - self.u) / (2.0 * dt)
        self.buf.push(n1, v1)
        if self.transport is not None:
            t = self.n * dt
            step_transport(self.transport, self.profile(t), self.profile.rate(t), v1, dt)
        self.u, self.u_next, self.v = self.u_next, u2, v1
        self.n = n1

    def memory_force(self) -> np.ndarray:
        return self.conv.memory_force()

    def consistency_error(self) -> float:
        if self.transport is None:
            raise ValueError("transport check is not enabled for this simulation")
        return delay_consistency_error(self.transport, self.buf, self.t, self.tau())


__all__ = [
    "CoverageError",
    "DivergenceError",
    "DirectConvolution",
    "RecursiveConvolution",
    "Simulation",
    "ZeroConvolution",
    "damping_coefficients",
    "make_engine",
    "max_stable_dt",
]
