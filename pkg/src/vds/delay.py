"""Time-varying delays and the machinery to look up delayed velocities.

The production path is :class:`HistoryBuffer`, a ring of velocity
snapshots on the time grid ``k * dt`` with linear interpolation in time.
:class:`TransportField` carries the same information as the transport
variable ``z(x, rho, t) = u_t(x, t - tau(t) rho)`` on ``rho in [0, 1]`` and is
only used to cross-check the buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np


class DelayError(ValueError):
    """Inadmissible delay profile."""


class CoverageError(LookupError):
    """A delayed lookup fell outside the buffered time range."""


class CFLError(ValueError):
    """Transport step violates the upwind stability bound."""


@dataclass(frozen=True)
class ConstantDelay:
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "tau", float(self.tau))
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise DelayError(f"delay tau = {self.tau} must be > 0")

    def __call__(self, t: float) -> float:
        return self.tau

    def rate(self, t: float) -> float:
        return 0.0

    @property
    def tau_min(self) -> float:
        return self.tau

    @property
    def tau_max(self) -> float:
        return self.tau

    @property
    def d(self) -> float:
        return 0.0


@dataclass(frozen=True)
class SinusoidalDelay:
    """``tau(t) = center + amp * sin(omega * t)``."""

    center: float
    amp: float
    omega: float

    def __post_init__(self):
        for name in ("center", "amp", "omega"):
            object.__setattr__(self, name, float(getattr(self, name)))
        problems = sinusoidal_problems(self.center, self.amp, self.omega)
        if problems:
            raise DelayError("; ".join(problems))

    def __call__(self, t: float) -> float:
        return self.center + self.amp * math.sin(self.omega * t)

    def rate(self, t: float) -> float:
        return self.amp * self.omega * math.cos(self.omega * t)

    @property
    def tau_min(self) -> float:
        return self.center - abs(self.amp)

    @property
    def tau_max(self) -> float:
        return self.center + abs(self.amp)

    @property
    def d(self) -> float:
        return abs(self.amp * self.omega)


DelayProfile = Union[ConstantDelay, SinusoidalDelay]


def sinusoidal_problems(center: float, amp: float, omega: float) -> list[str]:
    out = []
    if not all(math.isfinite(x) for x in (center, amp, omega)):
        return ["delay parameters must be finite"]
    if center - abs(amp) <= 0:
        out.append(f"tau_min = {center - abs(amp):g} <= 0; the delay must stay positive")
    d = abs(amp * omega)
    if d >= 1:
        out.append(f"d = {d:g} >= 1 violates the delay-speed bound d < 1")
    return out


class HistoryBuffer:
    """Ring of velocity snapshots at times ``k * dt`` (``k`` may be negative).

    Each slot keeps the field and its discrete squared L2 norm so the
    delay part of the energy can be integrated from scalars alone.
    """

    def __init__(self, dt: float, tau_max: float, shape: tuple[int, ...], norm_sq: Callable[[np.ndarray], float]):
        self.dt = float(dt)
        self.capacity = int(math.ceil(tau_max / dt)) + 2
        self.shape = tuple(shape)
        self._norm_sq = norm_sq
        self._fields = np.zeros((self.capacity, *self.shape))
        self._norms = np.zeros(self.capacity)
        self._index = np.full(self.capacity, np.iinfo(np.int64).min, dtype=np.int64)
        self.oldest: int | None = None
        self.newest: int | None = None

    def __len__(self) -> int:
        return 0 if self.newest is None else self.newest - self.oldest + 1

    def push(self, k: int, v: np.ndarray) -> None:
        if self.newest is not None and k != self.newest + 1:
            raise ValueError(f"history must be contiguous: got step {k} after {self.newest}")
        slot = k % self.capacity
        self._fields[slot] = v
        self._norms[slot] = self._norm_sq(v)
        self._index[slot] = k
        self.newest = k
        if self.oldest is None:
            self.oldest = k
        self.oldest = max(self.oldest, k - self.capacity + 1)

    def snapshot(self, k: int) -> np.ndarray:
        self._check(k, k)
        return self._fields[k % self.capacity]

    def norm_sq(self, k: int) -> float:
        self._check(k, k)
        return float(self._norms[k % self.capacity])

    def norms(self, k_lo: int, k_hi: int) -> np.ndarray:
        """Stored squared norms for steps ``k_lo..k_hi`` inclusive."""
        self._check(k_lo, k_hi)
        return self._norms[np.arange(k_lo, k_hi + 1) % self.capacity]

    def timestamps(self) -> np.ndarray:
        if self.newest is None:
            return np.empty(0)
        return np.arange(self.oldest, self.newest + 1) * self.dt

    def _check(self, k_lo: int, k_hi: int) -> None:
        if self.newest is None or k_lo < self.oldest or k_hi > self.newest:
            span = "empty" if self.newest is None else f"[{self.oldest * self.dt:g}, {self.newest * self.dt:g}]"
            raise CoverageError(
                f"lookup of steps {k_lo}..{k_hi} (t = {k_lo * self.dt:g}..{k_hi * self.dt:g}) "
                f"outside buffered range {span}; check dt and buffer capacity"
            )

    def locate(self, s: float) -> tuple[int, float]:
        """Split time ``s`` into grid index and fractional weight in [0, 1)."""
        p = s / self.dt
        k = round(p)
        if abs(p - k) <= 1e-9 * max(1.0, abs(p)):
            return int(k), 0.0
        k = math.floor(p)
        return int(k), p - k

    def interpolated_norm_sq(self, s: float) -> float:
        k, theta = self.locate(s)
        if theta == 0.0:
            return self.norm_sq(k)
        self._check(k, k + 1)
        return (1.0 - theta) * self.norm_sq(k) + theta * self.norm_sq(k + 1)


def delayed_velocity(buf: HistoryBuffer, t: float, tau_t: float) -> np.ndarray:
    """u_t at time ``t - tau_t`` by linear interpolation between snapshots."""
    k, theta = buf.locate(t - tau_t)
    if theta == 0.0:
        return buf.snapshot(k).copy()
    buf._check(k, k + 1)
    return (1.0 - theta) * buf.snapshot(k) + theta * buf.snapshot(k + 1)


def seed_history(
    buf: HistoryBuffer,
    f0: Callable[[float], np.ndarray],
    tau0: float,
    u1: np.ndarray,
) -> HistoryBuffer:
    """Fill snapshots at ``-m*dt, ..., -dt`` from ``f0(s)`` and ``u1`` at 0.

    ``m = ceil(tau0 / dt)``, so the earliest sample sits at or just before
    ``-tau0``. Since ``t - tau(t)`` is increasing when ``d < 1``, no later
    lookup reaches further back.
    """
    if len(buf):
        raise ValueError("seed_history needs an empty buffer")
    m = int(math.ceil(tau0 / buf.dt - 1e-9))
    for k in range(-m, 0):
        buf.push(k, np.asarray(f0(k * buf.dt), dtype=float))
    buf.push(0, np.asarray(u1, dtype=float))
    return buf


class TransportField:
    """``z(x, rho_j)`` on ``rho_j = j / n_rho``, j = 0..n_rho; axis 0 is rho."""

    def __init__(self, z: np.ndarray):
        self.z = np.array(z, dtype=float)
        self.n_rho = self.z.shape[0] - 1
        self.drho = 1.0 / self.n_rho
        self.rho = np.linspace(0.0, 1.0, self.n_rho + 1)

    @classmethod
    def from_history(cls, f0: Callable[[float], np.ndarray], tau0: float, u1: np.ndarray, n_rho: int = 64):
        rho = np.linspace(0.0, 1.0, n_rho + 1)
        z = np.empty((n_rho + 1, *np.shape(u1)))
        z[0] = u1
        for j in range(1, n_rho + 1):
            z[j] = f0(-rho[j] * tau0)
        return cls(z)

    @property
    def outflow(self) -> np.ndarray:
        """z at rho = 1, the delayed velocity."""
        return self.z[-1]


def transport_cfl(tau_t: float, dtau_t: float, dt: float, drho: float) -> float:
    """Courant number ``dt * max_rho (1 - tau' rho) / tau / drho``."""
    speed = max(1.0, 1.0 - dtau_t) / tau_t
    return dt * speed / drho


def step_transport(zf: TransportField, tau_t: float, dtau_t: float, v_now: np.ndarray, dt: float) -> TransportField:
    """One first-order upwind step of ``tau z_t + (1 - tau' rho) z_rho = 0``.

    The characteristic speed ``(1 - tau' rho) / tau`` is positive on
    ``[0, 1]`` because ``tau' <= d < 1``, so information flows from rho = 0
    (inflow ``v_now``) to rho = 1. Updates ``zf`` in place and returns it.
    """
    nu = transport_cfl(tau_t, dtau_t, dt, zf.drho)
    if nu > 1.0 + 1e-12:
        raise CFLError(
            f"transport CFL number {nu:.3f} > 1; need drho >= {zf.drho * nu:.3g} "
            f"(n_rho <= {int(zf.n_rho / nu)}) or a smaller dt"
        )
    c = (1.0 - dtau_t * zf.rho[1:]) / tau_t * (dt / zf.drho)
    c = c.reshape((-1,) + (1,) * (zf.z.ndim - 1))
    z = zf.z
    z[1:] = z[1:] - c * (z[1:] - z[:-1])
    z[0] = v_now
    return zf


def delay_consistency_error(zf: TransportField, buf: HistoryBuffer, t: float, tau_t: float) -> float:
    """Sup-norm gap between ``z(., 1, t)`` and the buffer's delayed velocity."""
    return float(np.max(np.abs(zf.outflow - delayed_velocity(buf, t, tau_t))))
