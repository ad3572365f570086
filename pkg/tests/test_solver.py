import math

import numpy as np
import pytest

from oracles import damped_wave_energy, modal_dde
from vds import solver
from vds.delay import ConstantDelay, SinusoidalDelay
from vds.feasibility import DampingPair
from vds.field import Grid
from vds.kernel import PowerLaw, PronySum, Zero, mass_up_to
from vds.solver import (
    DirectConvolution,
    DivergenceError,
    RecursiveConvolution,
    Simulation,
    make_engine,
    max_stable_dt,
)

PRONY = PronySum(((0.5, 1.0),))


def smooth_field(grid, seed=0):
    (x,) = grid.coords()
    rng = np.random.default_rng(seed)
    return sum(rng.normal() * np.sin(m * np.pi * x) / m**2 for m in range(1, 6))


def test_accumulators_start_at_zero():
    g = Grid.line(1.0, 8)
    eng = RecursiveConvolution(g, PRONY, 0.01)
    eng.start(np.ones(8))
    assert eng.mass() == 0.0 and eng.grad_history() == 0.0
    assert not eng.history().any() and not eng.memory_force().any()


def test_mass_accumulator_matches_closed_form():
    c, a = 0.5, 1.0
    dt = 2e-5
    g = Grid.line(1.0, 1)
    eng = RecursiveConvolution(g, PronySum(((c, a),)), dt)
    eng.start(np.zeros(1))
    for _ in range(50_000):
        eng.advance(np.zeros(1))
    t = 50_000 * dt
    assert eng.mass() == pytest.approx(c / a * (1 - math.exp(-a * t)), rel=0, abs=1e-10)


def test_two_modes_are_sum_of_single_modes():
    grid = Grid.line(1.0, 16)
    dt = 0.01
    both = RecursiveConvolution(grid, PronySum(((0.2, 1.0), (0.3, 3.0))), dt)
    one = RecursiveConvolution(grid, PronySum(((0.2, 1.0),)), dt)
    two = RecursiveConvolution(grid, PronySum(((0.3, 3.0),)), dt)
    rng = np.random.default_rng(2)
    u0 = rng.normal(size=16)
    for e in (both, one, two):
        e.start(u0)
    for _ in range(50):
        u = rng.normal(size=16)
        for e in (both, one, two):
            e.advance(u)
    np.testing.assert_allclose(both.history(), one.history() + two.history(), rtol=1e-13)
    assert both.mass() == pytest.approx(one.mass() + two.mass(), rel=1e-14)
    assert both.grad_history() == pytest.approx(one.grad_history() + two.grad_history(), rel=1e-14)


@pytest.mark.parametrize("mode", ["recursive", "direct"])
def test_frozen_history_gives_mass_times_laplacian(mode):
    grid = Grid.line(1.0, 32)
    dt = 1e-3
    u_star = smooth_field(grid)
    eng = make_engine(grid, PRONY, dt, mode)
    eng.start(u_star)
    for _ in range(2000):
        eng.advance(u_star)
    expected = mass_up_to(PRONY, 2.0) * grid.laplacian(u_star)
    # trapezoid quadrature of the mass: O(dt^2)
    np.testing.assert_allclose(eng.memory_force(), expected, rtol=1e-6, atol=1e-9)


def test_recursive_and_direct_agree():
    grid = Grid.line(1.0, 32)
    dt = 0.01
    kernel = PronySum(((0.3, 0.5), (0.2, 4.0)))
    rec, direct = RecursiveConvolution(grid, kernel, dt), DirectConvolution(grid, kernel, dt)
    base = smooth_field(grid, 4)
    rec.start(base)
    direct.start(base)
    for n in range(1, 201):
        u = base * math.cos(0.1 * n) + 0.1 * math.sin(0.3 * n) * smooth_field(grid, 5)
        rec.advance(u)
        direct.advance(u)
        f_rec, f_dir = rec.memory_force(), direct.memory_force()
        assert np.max(np.abs(f_rec - f_dir)) <= 1e-8 * np.max(np.abs(f_dir))
        assert rec.grad_history() == pytest.approx(direct.grad_history(), rel=1e-10)


def test_recursive_engine_rejects_power_law():
    with pytest.raises(TypeError):
        make_engine(Grid.line(1.0, 4), PowerLaw(0.5, 2.0), 0.01, "recursive")
    with pytest.raises(ValueError):
        make_engine(Grid.line(1.0, 4), PRONY, 0.01, "fft")


def undamped(grid, u0, dt=None, **kw):
    return Simulation(grid, Zero(), ConstantDelay(1.0), (0.0, 0.0), u0, grid.zeros(), dt=dt, **kw)


def test_standing_wave():
    grid = Grid.line(1.0, 255)
    sim = undamped(grid, grid.sine_mode((1,)))
    steps = int(round(1.0 / sim.dt))
    for _ in range(steps):
        sim.step()
    (x,) = grid.coords()
    exact = math.cos(math.pi * sim.t) * np.sin(np.pi * x)
    assert np.max(np.abs(sim.u - exact)) < 1e-4


def test_zero_data_stays_zero():
    grid = Grid.line(1.0, 32)
    sim = Simulation(grid, PRONY, ConstantDelay(0.5), DampingPair(1.0, 0.5), grid.zeros(), grid.zeros(), f0=lambda s: grid.zeros())
    for _ in range(200):
        sim.step()
        assert not sim.u.any() and not sim.v.any()


def _damped_energy_error(dt):
    n = 16
    grid = Grid.line(1.0, n)
    lap = np.column_stack([grid.laplacian(e) for e in np.eye(n)])
    u0 = smooth_field(grid, 7)
    a0 = 0.8
    sim = Simulation(grid, Zero(), ConstantDelay(1.0), DampingPair(a0, 0.0), u0, grid.zeros(), dt=dt)
    times, energies = [], []
    while sim.t < 3.0 - 1e-9:
        times.append(sim.t)
        energies.append(0.5 * (grid.norm_sq(sim.v) + grid.grad_sq(sim.u)))
        sim.step()
    exact = grid.h * damped_wave_energy(lap, a0, u0, np.zeros(n), times)
    assert np.all(np.diff(energies) < 0)
    return np.max(np.abs(np.array(energies) / exact - 1))


def test_damped_energy_matches_matrix_exponential():
    coarse, fine = _damped_energy_error(0.01), _damped_energy_error(0.005)
    assert fine < 1.5e-3
    assert 3.5 < coarse / fine < 4.5


def _modal_error(dt_safety):
    grid = Grid.line(1.0, 31)
    tau = 0.5
    lam = float(grid.eigenvalues((1,)))
    sim = Simulation(
        grid,
        PRONY,
        ConstantDelay(tau),
        DampingPair(1.0, 0.5),
        grid.sine_mode((1,)),
        grid.zeros(),
        f0=lambda s: grid.zeros(),
        dt_safety=dt_safety,
    )
    t_end = 3.0
    ref = modal_dde(lam, 1.0, 0.5, tau, PRONY.modes, 1.0, t_end)
    # the sine mode is exactly discrete, so only time stepping error remains
    steps = int(round(t_end / sim.dt))
    for _ in range(steps):
        sim.step()
    q_ref, _ = ref(sim.t)
    mode = grid.sine_mode((1,))
    q = grid.inner(sim.u, mode) / grid.inner(mode, mode)
    return abs(q - q_ref)


def test_modal_delay_oracle_second_order():
    # h = 1/32, dt = safety * h divides tau = 0.5 for every safety below
    errs = [_modal_error(s) for s in (0.5, 0.25, 0.125)]
    assert errs[-1] < 1e-4
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(1.7 < r < 2.3 for r in rates), (errs, rates)


def test_zero_a1_ignores_delay_path():
    grid = Grid.line(1.0, 32)
    u0 = smooth_field(grid, 9)
    runs = []
    for feedback in (True, False):
        sim = Simulation(grid, PRONY, SinusoidalDelay(1.0, 0.3, 1.0), DampingPair(1.0, 0.0), u0, grid.zeros(), delay_feedback=feedback)
        for _ in range(300):
            sim.step()
        runs.append(sim.u.copy())
    assert np.array_equal(runs[0], runs[1])


def test_deterministic():
    grid = Grid.line(1.0, 32)
    out = []
    for _ in range(2):
        sim = Simulation(grid, PRONY, SinusoidalDelay(1.0, 0.3, 1.0), DampingPair(1.0, -0.5), smooth_field(grid), grid.zeros())
        for _ in range(300):
            sim.step()
        out.append(sim.u.tobytes())
    assert out[0] == out[1]


def test_divergence_reports_time(monkeypatch):
    monkeypatch.setattr(solver, "DIVERGENCE_THRESHOLD", 2.0)
    grid = Grid.line(1.0, 16)
    sim = Simulation(grid, Zero(), ConstantDelay(1.0), DampingPair(0.1, 0.0), grid.sine_mode((1,)), 10 * grid.sine_mode((1,)))
    with pytest.raises(DivergenceError) as info:
        for _ in range(1000):
            sim.step()
    assert info.value.t > 0 and info.value.max_abs > 2.0
    assert "diverged at t" in str(info.value)


def test_explicit_dt_validation():
    grid = Grid.line(1.0, 31)
    with pytest.raises(ValueError, match="stability"):
        undamped(grid, grid.zeros(), dt=0.05)
    with pytest.raises(ValueError, match="resolve the delay"):
        Simulation(grid, Zero(), ConstantDelay(0.1), DampingPair(1.0), grid.zeros(), grid.zeros(), dt=0.02)


def test_raw_damping_tuple_allows_zero_a0():
    grid = Grid.line(1.0, 8)
    sim = Simulation(grid, Zero(), ConstantDelay(1.0), (0.0, 0.0), grid.sine_mode((1,)), grid.zeros())
    assert (sim.a0, sim.a1) == (0.0, 0.0)
    with pytest.raises(ValueError):
        Simulation(grid, Zero(), ConstantDelay(1.0), (-1.0, 0.0), grid.zeros(), grid.zeros())


def test_max_stable_dt():
    assert max_stable_dt(Grid.line(1.0, 99), ConstantDelay(1.0)) == pytest.approx(0.005)
    assert max_stable_dt(Grid.line(1.0, 99), ConstantDelay(0.01)) == pytest.approx(0.00125)
    sq = Grid.rectangle(1.0, 1.0, 9, 9)
    assert max_stable_dt(sq, ConstantDelay(1.0)) == pytest.approx(0.5 * 0.1 / math.sqrt(2))


def test_two_dimensional_run_decays():
    grid = Grid.rectangle(1.0, 1.0, 15, 15)
    u0 = grid.sine_mode((1, 1))
    sim = Simulation(grid, PRONY, ConstantDelay(0.5), DampingPair(1.0, 0.5), u0, grid.zeros())
    e0 = grid.grad_sq(u0)
    for _ in range(int(round(4.0 / sim.dt))):
        sim.step()
    assert grid.grad_sq(sim.u) < 0.5 * e0
    assert np.all(np.isfinite(sim.u))
