import dataclasses

import numpy as np
import pytest
from scipy.optimize import root

from nddcert.certify import certify_ndd_detailed
from nddcert.characteristics import solve_equilibrium
from nddcert.core import NetworkDescriptor, SimulationConfig, SubsystemDescriptor
from nddcert.netsim import (
    NotConvergedError,
    Trajectory,
    integrate_network,
    integrate_subsystem,
    ndd_error,
    order_preservation_check,
    reduction_gap,
    simulate_to_steady_state,
    steady_state_output,
    sweep,
)
from nddcert.recipes import fig2_network
from conftest import make_linear_sub


# --- basic integration ----------------------------------------------------------

def test_zero_network_stays_at_origin(sim_cfg):
    net = fig2_network(0.0, 0.01)
    traj = integrate_network(net, sim_cfg, with_delta=True)
    assert np.max(np.abs(traj.states)) == 0.0
    assert np.max(np.abs(traj.y)) == 0.0


def test_isolated_subsystem_converges_to_static_characteristic(srna_sub, sim_cfg):
    traj = integrate_subsystem(srna_sub, 10.0, 0.0, sim_cfg)
    y_ss, ok = steady_state_output(traj, sim_cfg)
    assert ok
    phi = solve_equilibrium(srna_sub, 10.0, 0.0)
    assert abs(y_ss[0] - phi[2]) < 1e-4 * (1 + abs(phi[2]))


def test_triple_network_converges_to_finite_equilibrium(sim_cfg):
    net = fig2_network(10.0, 0.1)
    traj, y_ss, ok = simulate_to_steady_state(net, sim_cfg, with_delta=True)
    assert ok
    assert np.all(np.isfinite(y_ss))
    assert np.all(y_ss > 0)
    # identical subsystems with identical references settle symmetrically
    assert np.max(y_ss) - np.min(y_ss) < 1e-6


def test_trajectory_invariants_enforced():
    with pytest.raises(ValueError, match="strictly increasing"):
        Trajectory(
            np.array([0.0, 0.0, 1.0]),
            np.zeros((3, 1)),
            np.zeros((3, 1)),
            np.zeros((3, 1)),
            np.zeros((3, 1)),
            np.zeros((3, 1)),
        )
    with pytest.raises(ValueError, match="finite"):
        Trajectory(
            np.array([0.0, 1.0]),
            np.array([[0.0], [np.nan]]),
            np.zeros((2, 1)),
            np.zeros((2, 1)),
            np.zeros((2, 1)),
            np.zeros((2, 1)),
        )


# --- steady-state detection ---------------------------------------------------------

def test_constant_trajectory_detected_as_converged(sim_cfg):
    t = np.linspace(0.0, 40.0, 200)
    const = np.full((200, 1), 3.7)
    traj = Trajectory(t, const.copy(), const.copy(), const.copy(), const.copy(), const.copy())
    y_ss, ok = steady_state_output(traj, sim_cfg)
    assert ok and y_ss[0] == 3.7


def test_truncated_transient_not_converged(srna_sub):
    cfg = SimulationConfig(t_final=0.4)
    traj = integrate_subsystem(srna_sub, 10.0, 0.0, cfg)
    _, ok = steady_state_output(traj, cfg)
    assert not ok


def _fig2_stacked_oracle(r0, eps, w_coupled=True):
    """Independent equilibrium of the three-subsystem network: hand-written
    algebraic system solved with a general-purpose root finder."""
    alpha, lam, beta, kappa, delta = 100.0, 1.0, 1.0, 1.0, 1.0

    def residual(x):
        m, s, p = x[0::3], x[1::3], x[2::3]
        d = m / kappa
        w = (d.sum() - d) if w_coupled else np.zeros(3)
        out = np.empty(9)
        out[0::3] = r0 / eps - lam * m * s / eps - delta * m
        out[1::3] = beta * p / eps - lam * m * s / eps - delta * s
        out[2::3] = alpha * (m / kappa) / (1.0 + m / kappa + w) - delta * p
        return out

    seed = np.tile([0.15, 80.0, 10.0], 3)
    sol = root(residual, seed, method="hybr", tol=1e-12)
    assert sol.success, sol.message
    return sol.x[2::3]


def test_network_steady_state_matches_coupled_newton_oracle(sim_cfg):
    net = fig2_network(10.0, 0.01)
    _, y_ss, ok = simulate_to_steady_state(net, sim_cfg, with_delta=True)
    assert ok
    oracle = _fig2_stacked_oracle(10.0, 0.01)
    assert np.max(np.abs(y_ss - oracle)) < 1e-4


# --- the decoupling error metric ------------------------------------------------------

def test_no_unintended_map_means_zero_error(sim_cfg):
    net = dataclasses.replace(fig2_network(10.0, 0.01), unintended="none")
    assert ndd_error(net, sim_cfg) == 0.0


def test_error_decreases_with_attenuation(sim_cfg):
    errs = [ndd_error(fig2_network(10.0, eps), sim_cfg) for eps in (1e-1, 1e-2, 1e-3)]
    assert errs[0] > errs[1] > errs[2]


from nddcert.families import register_generic_ode

_OSCILLATOR_TAG = register_generic_ode(
    "test-harmonic-oscillator",
    n_states=2,
    rhs=lambda sub, x, r, w: np.array([x[1], -x[0]]),
    output_y=lambda sub, x: float(x[0]),
    output_d=lambda sub, x: float(x[0]),
    domain=([-2.0, -2.0], [2.0, 2.0]),
    input_domain=([0.0, 0.0], [1.0, 1.0]),
)


def _oscillator_net():
    sub = SubsystemDescriptor(
        index=1, kind="generic-ode", tag=_OSCILLATOR_TAG, epsilon=1.0, state_dim=2
    )
    return NetworkDescriptor(subsystems=(sub,), edges=(), unintended="none")


def test_error_metric_raises_when_not_converged():
    cfg = SimulationConfig(t_final=40.0, initial_state=(1.0, 0.0))
    with pytest.raises(NotConvergedError):
        ndd_error(_oscillator_net(), cfg)


_BLOWUP_TAG = register_generic_ode(
    "test-finite-time-blowup",
    n_states=1,
    rhs=lambda sub, x, r, w: np.array([1.0 + x[0] ** 2]),  # escapes in finite time
    output_y=lambda sub, x: float(x[0]),
    output_d=lambda sub, x: float(x[0]),
    domain=([0.0], [10.0]),
    input_domain=([0.0, 0.0], [1.0, 1.0]),
)


def test_finite_time_escape_is_reported():
    from nddcert.netsim import NonFiniteError, StepFloorError

    sub = SubsystemDescriptor(index=1, kind="generic-ode", tag=_BLOWUP_TAG, epsilon=1.0)
    net = NetworkDescriptor(subsystems=(sub,), edges=(), unintended="none")
    cfg = SimulationConfig(t_final=10.0)  # escape hits at t = tan^-1 limit ~ pi/2
    with pytest.raises((NonFiniteError, StepFloorError)):
        integrate_network(net, cfg, with_delta=False)
    with pytest.raises(NonFiniteError):
        integrate_network(net, SimulationConfig(t_final=10.0, solver="fixed-step", dt=0.01),
                          with_delta=False)


# --- sweeps ---------------------------------------------------------------------------

def test_empty_grid_gives_empty_result(sim_cfg):
    res = sweep(fig2_network(10.0, 0.01), sim_cfg, "epsilon", [])
    assert res.values == () and res.errors == ()


def test_epsilon_sweep_columns(sim_cfg):
    res = sweep(fig2_network(10.0, 0.01), sim_cfg, "epsilon", [1e-1, 1e-2])
    assert res.axis == "epsilon"
    assert all(res.converged)
    assert res.errors[0] > res.errors[1]
    assert all(s > 0 for s in res.seconds)


def test_reference_sweep_changes_sources(sim_cfg):
    res = sweep(fig2_network(10.0, 0.01), sim_cfg, "reference", [10.0, 40.0])
    assert all(res.converged)
    assert res.errors[1] > res.errors[0]


def test_sweep_records_failures_and_continues():
    cfg = SimulationConfig(t_final=40.0, initial_state=(1.0, 0.0))
    res = sweep(_oscillator_net(), cfg, "epsilon", [1e-1, 1e-2])
    assert res.converged == (False, False)
    assert all(np.isnan(e) for e in res.errors)


def test_parallel_sweep_matches_serial(sim_cfg, monkeypatch):
    net = fig2_network(10.0, 0.01)
    serial = sweep(net, sim_cfg, "epsilon", [1e-1, 3e-2], workers=1)
    monkeypatch.delenv("NDD_THREADS", raising=False)
    parallel = sweep(net, sim_cfg, "epsilon", [1e-1, 3e-2], workers=2)
    assert np.allclose(serial.errors, parallel.errors, rtol=1e-12)
    assert serial.values == parallel.values


def test_nu_sweep_on_convergent_instances_stays_at_epsilon_floor(sim_cfg):
    # equilibria do not move with the timescale parameter, so converged
    # points sit at the attenuation-limited floor
    net = fig2_network(10.0, 0.01)
    res = sweep(net, sim_cfg, "nu", [1.0, 0.3, 0.1])
    assert all(res.converged)
    spread = max(res.errors) - min(res.errors)
    assert spread < 1e-6 * max(res.errors)


# --- solver independence ---------------------------------------------------------------

def test_fixed_step_oracle_agrees_with_adaptive():
    net = fig2_network(5.0, 0.5)
    adaptive = SimulationConfig(t_final=40.0)
    fixed = SimulationConfig(t_final=40.0, solver="fixed-step")  # dt = nu/20
    _, y_a, ok_a = simulate_to_steady_state(net, adaptive, with_delta=True)
    _, y_f, ok_f = simulate_to_steady_state(net, fixed, with_delta=True)
    assert ok_a and ok_f
    assert np.max(np.abs(y_a - y_f)) / np.max(np.abs(y_a)) < 1e-5


# --- order preservation -------------------------------------------------------------------

def test_identical_initial_conditions_trivially_ordered(srna_sub, sim_cfg):
    assert order_preservation_check(srna_sub, [2.0], [2.0], 10.0, 0.0, sim_cfg)


def test_reduced_gene_flow_preserves_order(srna_sub, sim_cfg):
    assert order_preservation_check(srna_sub, [0.0], [5.0], 10.0, 0.0, sim_cfg)
    assert order_preservation_check(srna_sub, [1.0], [50.0], 10.0, 3.0, sim_cfg)


def test_regulated_plant_order_violated_for_every_candidate_order(rng):
    # the negative plant/controller cycle breaks both essential orthant orders
    sub = make_linear_sub(epsilon=0.01)
    cfg = SimulationConfig(t_final=2.0, store_points=300)
    for sigma in ((1, 1), (1, -1)):
        violated = False
        for _ in range(50):
            base = rng.uniform(-1.0, 1.0, size=2)
            bump = rng.uniform(0.0, 1.0, size=2) * np.asarray(sigma)
            if order_preservation_check(
                sub, base, base + bump, 1.0, 0.0, cfg, sigma_x=sigma, reduced=False
            ):
                continue
            violated = True
            break
        assert violated, f"no violation found for candidate order {sigma}"


# --- two-timescale reduction -----------------------------------------------------------

def test_reduction_gap_shrinks_with_timescale_separation(srna_sub):
    cfg = SimulationConfig(t_final=6.0, rel_tol=1e-10, abs_tol=1e-12, store_points=300)
    gaps = reduction_gap(srna_sub, 10.0, 0.0, cfg, [1.0, 0.1, 0.01])
    assert gaps[0] > gaps[1] > gaps[2]


# --- physical bounds and cross-checks -----------------------------------------------------

def test_mrna_time_average_respects_supply_bound(sim_cfg):
    net = fig2_network(10.0, 0.01)
    traj, _, ok = simulate_to_steady_state(net, sim_cfg, with_delta=True)
    assert ok
    tail = traj.times >= traj.times[-1] - 0.1 * (traj.times[-1] - traj.times[0])
    for i, sub in enumerate(net.subsystems):
        m = traj.states[tail, 3 * i]
        assert np.mean(m) <= 10.0 / sub.epsilon + 1e-6


def test_steady_state_disturbances_inside_certificate_box(sim_cfg):
    net = fig2_network(10.0, 0.01)
    verdict = certify_ndd_detailed(net)
    assert verdict.certified
    traj, _, ok = simulate_to_steady_state(net, sim_cfg, with_delta=True)
    assert ok
    box = verdict.report.ultimate_box.inflate(rel=0.10, abs_=1e-9)
    assert box.contains(traj.w[-1])
