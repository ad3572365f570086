"""Drive one configured run: seed, step, sample records, fit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import energy as en
from .config import RunConfig
from .feasibility import FeasibilityCertificate, certify
from .kernel import G2Verdict, KernelError, Zero, check_G2, default_sample_times
from .solver import DivergenceError, Simulation, max_stable_dt


@dataclass
class RunResult:
    config: RunConfig
    certificate: FeasibilityCertificate
    dt: float
    n_steps: int
    records: list[en.EnergyRecord] = field(default_factory=list)
    snapshots: list[tuple[float, np.ndarray]] = field(default_factory=list)
    consistency: list[tuple[float, float]] = field(default_factory=list)
    g2: G2Verdict | None = None
    fit: en.DecayFit | None = None
    fit_error: str | None = None
    divergence: DivergenceError | None = None

    @property
    def diverged(self) -> bool:
        return self.divergence is not None

    @property
    def final_energy(self) -> float:
        return self.records[-1].E if self.records else math.nan


def time_step(cfg: RunConfig) -> tuple[float, int]:
    """Largest admissible dt that divides t_end exactly, and the step count."""
    dt_max = max_stable_dt(cfg.grid, cfg.delay, cfg.solver.dt_safety)
    n_steps = max(1, math.ceil(cfg.solver.t_end / dt_max - 1e-9))
    return cfg.solver.t_end / n_steps, n_steps


def build_simulation(cfg: RunConfig, dt: float) -> Simulation:
    grid = cfg.grid
    u0 = cfg.u0.build(grid)
    u1 = cfg.u1.build(grid)
    f0 = (lambda s: u1) if cfg.f0 == "u1" else (lambda s: grid.zeros())
    return Simulation(
        grid,
        cfg.kernel,
        cfg.delay,
        cfg.damping,
        u0,
        u1,
        f0=f0,
        dt=dt,
        engine=cfg.solver.engine,
        transport=cfg.solver.transport_check,
        n_rho=cfg.solver.n_rho,
    )


def run(cfg: RunConfig) -> RunResult:
    """Run the configured simulation to ``t_end``.

    Records are sampled every ``output_every`` steps and at the final step.
    A divergence stops the loop; the records gathered so far are kept and
    the error is stored on the result rather than raised.
    """
    cert = certify(cfg.damping, cfg.delay)
    xi, lam = cert.energy_weights()
    dt, n_steps = time_step(cfg)
    result = RunResult(cfg, cert, dt, n_steps)
    if not isinstance(cfg.kernel, Zero):
        try:
            result.g2 = check_G2(cfg.kernel, cfg.witness, default_sample_times(cfg.delay.tau_max))
        except KernelError:
            result.g2 = None
    e = cfg.energy
    snap_steps = {int(round(ts / dt)): ts for ts in cfg.solver.snapshots}
    every = cfg.solver.output_every

    try:
        sim = build_simulation(cfg, dt)
        for n in range(n_steps + 1):
            if n % every == 0 or n == n_steps:
                result.records.append(en.evaluate(sim, xi, lam, cfg.witness, e.N, e.eps, e.C7))
                if sim.transport is not None:
                    result.consistency.append((sim.t, sim.consistency_error()))
            if n in snap_steps:
                result.snapshots.append((sim.t, sim.u.copy()))
            if n < n_steps:
                sim.step()
    except DivergenceError as exc:
        result.divergence = exc

    times = [r.t for r in result.records]
    energies = [r.E for r in result.records]
    try:
        result.fit = en.fit_decay(times, energies, cfg.witness, cfg.fit_t0)
    except en.FitError as exc:
        result.fit_error = str(exc)
    return result
