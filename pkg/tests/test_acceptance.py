"""Acceptance suite: one test per release criterion, each printing a PASS line
(run with -s to see them during a green run)."""

import time

import numpy as np
from scipy.optimize import brentq

from nddcert.certify import gene_admissible_set, iterate_smallgain
from nddcert.characteristics import gain_psi_star, solve_equilibrium
from nddcert.core import IntervalBox, SimulationConfig
from nddcert.families import get_family
from nddcert.genecircuit import SrnaParams, psi_star_closed_form
from nddcert.monotone import (
    box_propagate,
    canonical_decomposition,
    sample_sign_pattern,
    subsystem_sign_analysis,
)
from nddcert.netsim import integrate_subsystem, reduction_gap
from nddcert.recipes import fig2_network, run_recipe
from conftest import make_linear_sub, make_srna_sub


def _report(n, detail):
    print(f"ACCEPTANCE {n} PASS: {detail}")


def test_criterion_01_admissible_boundary_and_certificate_flip():
    start = time.perf_counter()
    adm = gene_admissible_set(fig2_network(10.0, 1e-3))
    boundary = adm.spec.symmetric_boundary()
    assert boundary == 100.0 / 3.0  # exact closed form

    below = iterate_smallgain(fig2_network(32.0, 1e-3), np.full(3, 32.0))
    above = iterate_smallgain(fig2_network(35.0, 1e-3), np.full(3, 35.0))
    assert below.verdict == "certified-bounded"
    assert above.verdict == "diverged"
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    _report(1, f"boundary 100/3 exact; verdict flips between 32 and 35 ({elapsed:.2f}s)")


def test_criterion_02_dt_fixed_point_matches_scalar_oracle():
    start = time.perf_counter()
    net = fig2_network(10.0, 1e-3)
    rep = iterate_smallgain(net, np.full(3, 10.0))
    assert rep.verdict == "certified-bounded"

    # standalone oracle: the symmetric iterate solves w = 2 psi*(w) with the
    # closed-form gain, independent of the certificate loop
    prm = SrnaParams.from_descriptor(net.subsystems[0])
    w_star = brentq(
        lambda w: 2.0 * psi_star_closed_form(w, 10.0, prm) - w, 1e-6, 10.0, xtol=1e-12
    )
    assert np.all(np.abs(rep.ultimate_box.upper - w_star) < 1e-6)
    assert np.all(np.abs(rep.ultimate_box.lower - w_star) < 1e-6)
    assert abs(w_star - 2.0 / 7.0) < 5e-2
    assert np.all(np.abs(rep.ultimate_box.upper - 2.0 / 7.0) < 5e-2)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    _report(2, f"fixed point {w_star:.4f} vs 2/7 = {2/7:.4f} ({elapsed:.2f}s)")


def test_criterion_03_epsilon_sweep_shape(tmp_path):
    start = time.perf_counter()
    res = run_recipe("fig2b", outdir=tmp_path, r0_values=(10.0, 40.0))
    rows10 = sorted((r[1], r[2]) for r in res.rows if r[0] == 10.0 and r[3])
    rows40 = sorted((r[1], r[2]) for r in res.rows if r[0] == 40.0 and r[3])
    assert len(rows10) == len(rows40) == 11  # 3 decades, 5 points per decade

    errs10 = [e for _, e in sorted(rows10, key=lambda t: -t[0])]
    assert all(b < a for a, b in zip(errs10, errs10[1:])), errs10
    assert errs10[-1] < 0.10 * errs10[0]

    errs40 = [e for _, e in rows40]
    assert min(errs40) > 4.0
    elapsed = time.perf_counter() - start
    assert elapsed < 600.0
    _report(
        3,
        f"r0=10 strictly decreasing {errs10[0]:.3f}->{errs10[-1]:.4f}; "
        f"r0=40 floor {min(errs40):.2f} > 4.0 ({elapsed:.0f}s)",
    )


def test_criterion_04_closed_form_matches_composition():
    start = time.perf_counter()
    sub = make_srna_sub(epsilon=1e-2)
    prm = SrnaParams.from_descriptor(sub)
    worst = 0.0
    for r_star in np.linspace(6.0, 90.0, 10):
        for w_plus in np.linspace(0.0, 30.0, 10):
            composed = gain_psi_star(sub, w_plus, 0.0, r_star)
            closed = psi_star_closed_form(w_plus, r_star, prm)
            worst = max(worst, abs(composed - closed))
    assert worst <= 1e-8
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    _report(4, f"max |composed - closed form| = {worst:.2e} over 10x10 grid ({elapsed:.2f}s)")


def test_criterion_05_monotonicity_verdicts():
    start = time.perf_counter()
    plant = subsystem_sign_analysis(make_linear_sub(epsilon=0.01), reduced=False)
    assert not plant.verdict.monotone
    assert plant.verdict.witness_cycle is not None
    assert set(plant.verdict.witness_cycle) <= {"x", "z"}

    gene = subsystem_sign_analysis(make_srna_sub(), reduced=True)
    assert gene.verdict.monotone
    assert gene.verdict.sigma_u == (1, -1)
    assert gene.verdict.sigma_x == (1,)
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    _report(
        5,
        f"plant/controller loop non-monotone (witness {'->'.join(plant.verdict.witness_cycle)}); "
        f"reduced gene model orders (+1,-1;+1) ({elapsed:.2f}s)",
    )


def _decomposition_law_suite(f, domain, rng, n=1000, tol=1e-10):
    pattern = sample_sign_pattern(f, domain)
    fhat = canonical_decomposition(f, pattern)
    pts = domain.sample(n, rng)
    alt = domain.sample(n, rng)
    mid = domain.sample(n, rng)
    lo = np.minimum(pts, alt)
    hi = np.maximum(pts, alt)
    for k in range(n):
        assert np.max(np.abs(fhat(pts[k], pts[k]) - f(pts[k]))) <= tol
        assert np.all(fhat(lo[k], mid[k]) <= fhat(hi[k], mid[k]) + tol)
        assert np.all(fhat(mid[k], hi[k]) <= fhat(mid[k], lo[k]) + tol)
    center = domain.sample(1, rng)[0]
    span = 0.25 * (domain.upper - domain.lower)
    box = IntervalBox(
        np.maximum(center - span, domain.lower), np.minimum(center + span, domain.upper)
    )
    image = box_propagate(fhat, box)
    for x in box.sample(n, rng):
        assert image.contains(f(x), atol=tol)


def test_criterion_06_decomposition_laws_per_family(rng):
    gene = make_srna_sub()
    gene_fam = get_family(gene.kind)

    def gene_field(xi):
        return gene_fam.rhs_reduced(gene, xi[:1], xi[1], xi[2])

    _decomposition_law_suite(gene_field, IntervalBox([0.0, 0.5, 0.0], [99.0, 95.0, 30.0]), rng)

    plant = make_linear_sub()
    plant_fam = get_family(plant.kind)

    def plant_field(xi):
        return plant_fam.rhs_full(plant, xi[:2], xi[2], xi[3])

    _decomposition_law_suite(plant_field, IntervalBox([-5.0] * 4, [5.0] * 4), rng)

    def gene_statics(u):
        return solve_equilibrium(gene, u[0], u[1], reduced=True)

    _decomposition_law_suite(gene_statics, IntervalBox([5.0, 0.0], [95.0, 30.0]), rng)
    _report(6, "diagonal/monotonicity/containment laws hold on 1000 samples per family")


def _random_instances(rng, n=20):
    for _ in range(n):
        yield (
            float(rng.uniform(6.0, 90.0)),  # r
            float(rng.uniform(0.0, 8.0)),  # w
            float(10.0 ** rng.uniform(-2.0, -0.7)),  # eps
        )


def test_criterion_07_equilibrium_oracle_equivalence(rng):
    cases = [
        ("srna-feedback", lambda eps: make_srna_sub(epsilon=eps, nu=0.2), 60.0),
        ("linear-feedback-example", lambda eps: make_linear_sub(epsilon=eps), 40.0),
    ]
    for kind, build, horizon in cases:
        fam_checked = 0
        for r, w, eps in _random_instances(rng):
            sub = build(eps)
            fam = get_family(sub.kind)
            phi = solve_equilibrium(sub, r, w)
            cfg = SimulationConfig(t_final=horizon, rel_tol=1e-10, abs_tol=1e-12)
            scale = 1.0 + np.max(np.abs(phi))
            x0a = np.abs(rng.normal(size=phi.size)) * 2.0
            x0b = np.abs(rng.normal(size=phi.size)) * 20.0
            if kind == "linear-feedback-example":
                x0a, x0b = rng.normal(size=phi.size), 5.0 * rng.normal(size=phi.size)
            ya = integrate_subsystem(sub, r, w, cfg, x0=x0a).states[-1]
            yb = integrate_subsystem(sub, r, w, cfg, x0=x0b).states[-1]
            assert np.max(np.abs(ya - phi)) / scale < 1e-5
            assert np.max(np.abs(yb - phi)) / scale < 1e-5  # initial-condition independence
            fam_checked += 1
        assert fam_checked == 20
    _report(7, "Newton equilibria = long-horizon integration on 20 instances per family")


def test_criterion_08_two_timescale_reduction(srna_sub):
    cfg = SimulationConfig(t_final=6.0, rel_tol=1e-10, abs_tol=1e-12, store_points=400)
    gaps = reduction_gap(srna_sub, 10.0, 0.0, cfg, [1.0, 0.3, 0.1, 0.03, 0.01])
    assert all(b < a for a, b in zip(gaps, gaps[1:])), gaps
    _report(8, "reduction gap decreases monotonically: " + ", ".join(f"{g:.3g}" for g in gaps))


def test_criterion_09_cascade_recipes(tmp_path):
    start = time.perf_counter()
    ok = run_recipe("fig4b", outdir=tmp_path)
    import json

    manifest = json.loads(ok.manifest_path.read_text())
    assert manifest["certified"] is True
    nominal = manifest["nominal_outputs"]
    ok_errors = [r[2] for r in ok.rows if r[3]]
    assert ok_errors, "no converged grid points"
    assert min(ok_errors) < 0.05 * min(nominal)

    bad = run_recipe("fig4c", outdir=tmp_path)
    manifest_bad = json.loads(bad.manifest_path.read_text())
    assert manifest_bad["certified"] is False
    bad_errors = [r[2] for r in bad.rows if r[3]]
    assert bad_errors
    assert any(min(bad_errors) > 0.20 * y for y in manifest_bad["nominal_outputs"])
    elapsed = time.perf_counter() - start
    assert elapsed < 1200.0
    _report(
        9,
        f"cascade certifies with min error {min(ok_errors):.2e}; strong-tail variant fails "
        f"with floor {min(bad_errors):.2f} ({elapsed:.0f}s)",
    )


def test_criterion_10_attenuation_claims():
    sub0 = make_srna_sub()
    beta = sub0.param("beta")

    def h(r, w, eps):
        return solve_equilibrium(make_srna_sub(epsilon=eps), r, w, reduced=True)[0]

    rs = np.linspace(20.0, 90.0, 8)
    ladder = (0.1, 0.05, 0.02, 0.01)

    # setpoint deviation |h(r,0;eps) - r/beta|: pooled log-log slope in eps
    logs = {r: [] for r in rs}
    for r in rs:
        for eps in ladder:
            logs[r].append(np.log(abs(h(r, 0.0, eps) - r / beta)))
    x = np.log(np.array(ladder))
    xc = x - x.mean()
    num = sum(float(xc @ (np.array(v) - np.mean(v))) for v in logs.values())
    den = float(xc @ xc) * len(rs)
    slope = num / den
    assert 0.9 <= slope <= 1.1, slope

    # single deviation constant fitted on the ladder, verified off-grid
    k_star = max(
        abs(h(r, 0.0, eps) - r / beta) / eps for r in rs for eps in ladder
    )
    for r in rs:
        assert abs(h(r, 0.0, 0.008) - r / beta) <= 1.05 * k_star * 0.008

    # disturbance-induced shift bounded by eps*(k2*w + K*)
    ws = (1.0, 5.0, 20.0)
    eps_fit = 0.05
    k2 = max(abs(h(r, w, eps_fit) - h(r, 0.0, eps_fit)) / (eps_fit * w) for r in rs for w in ws)
    for r in rs:
        for w in ws:
            for eps in (0.02, 0.01):
                shift = abs(h(r, w, eps) - h(r, 0.0, eps))
                assert shift <= 1.05 * eps * (k2 * w + k_star)

    # reference sensitivity bound 1/beta + alpha/(2*delta*margin) on the
    # margin-5 admissible interval
    alpha, delta = sub0.param("alpha"), sub0.param("delta")
    cap = 1.0 / beta + alpha / (2.0 * delta * 5.0)
    r_grid = np.linspace(5.0, 95.0, 10)
    for eps in (0.05, 0.01):
        for w in (0.0, 1.0, 5.0, 20.0):
            for r in r_grid:
                step = 1e-5 * (1.0 + r)
                deriv = (h(r + step, w, eps) - h(r - step, w, eps)) / (2 * step)
                assert 0.0 < deriv <= cap, (r, w, eps, deriv)

    _report(
        10,
        f"slope {slope:.3f} in [0.9, 1.1]; shift bound holds with K*={k_star:.1f}, "
        f"k2={k2:.2f}; reference sensitivity <= {cap:.1f} pointwise",
    )
