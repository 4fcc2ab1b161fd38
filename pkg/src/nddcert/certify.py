"""Discrete-time small-gain certification.

The certificate iterates the bracket map

    w-(k+1) = Delta(psi*(w-(k), w+(k); r*, eps))
    w+(k+1) = Delta(psi*(w+(k), w-(k); r*, eps))

from (0, w0+), where w0+ is a family a-priori bound on the disturbance
inputs.  Convergence of the bracket to a stable box bounds the steady-state
disturbance amplification of the network.  A bounded bracket at one fixed eps
is not yet a certificate: the property the network-level result consumes is
that the ultimate box does not move as eps shrinks.  For the gene family the
literal iteration is bounded for every fixed eps (each mRNA is capped at
r/eps), so a blowup threshold alone can never fire; instead, after the
iteration converges we re-run it with all eps halved and report "diverged"
when the ultimate box magnitude grows by more than ``growth_tol`` (an
attractor scaling like 1/eps doubles, an eps-independent one stays put).

The module also houses the empirical exponential-decrease diagnostic, the
perturbed-update robustness probe, the analytic admissible reference set of
the gene family, and the end-to-end network certification pipeline.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    CertificateReport,
    IntervalBox,
    NetworkDescriptor,
    delta_matrix,
    network_violations,
    with_epsilon,
)
from .characteristics import gain_psi_star, nominal_reference
from .families import get_family
from .monotone import subsystem_sign_analysis

__all__ = [
    "DtState",
    "DtRunResult",
    "dt_trajectory",
    "iterate_smallgain",
    "UbDiagnostic",
    "empirical_exponential_ub",
    "ProbeRow",
    "ProbeResult",
    "DivergedAtP",
    "perturbed_robustness_probe",
    "AdmissibleSetSpec",
    "GeneAdmissibleResult",
    "gene_admissible_set",
    "MissingInitialBoundError",
    "NddCheck",
    "NddVerdict",
    "certify_ndd_detailed",
    "certify_ndd",
]

CONVERGE_REL = 1e-9
CONVERGE_STREAK = 50
DEFAULT_KMAX = 10_000
DEFAULT_BLOWUP = 1e9
REFINE_FACTOR = 0.5
GROWTH_TOL = 1.4


@dataclass(frozen=True)
class DtState:
    """One bracket iterate: lower and upper disturbance vectors at step k."""

    w_minus: np.ndarray
    w_plus: np.ndarray
    k: int

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.w_minus, self.w_plus])

    def norm(self) -> float:
        return float(np.max(np.abs(self.stacked())))


class MissingInitialBoundError(ValueError):
    """No a-priori disturbance bound available for this family mix."""


@dataclass
class DtRunResult:
    states: list  # of DtState
    status: str  # converged | blowup | kmax
    box: Optional[IntervalBox] = None  # final bracket when converged
    rate: Optional[float] = None  # tail contraction rate estimate

    @property
    def extent(self) -> float:
        return self.box.extent() if self.box is not None else float("inf")


def _initial_upper(net, r_star, w0_plus):
    if w0_plus is not None:
        w0 = np.asarray(w0_plus, dtype=float)
        if w0.shape != (net.n,):
            raise ValueError(f"w0_plus must have length {net.n}")
        return w0
    bounds = None
    kinds = {s.kind for s in net.subsystems}
    if len(kinds) == 1:
        bounds = get_family(next(iter(kinds))).apriori_disturbance_bound(net, r_star)
    if bounds is None:
        raise MissingInitialBoundError(
            "no built-in a-priori disturbance bound for this family mix; "
            "pass w0_plus explicitly"
        )
    return np.asarray(bounds, dtype=float)


def dt_trajectory(
    net: NetworkDescriptor,
    r_star,
    k_max: int = DEFAULT_KMAX,
    blowup: float = DEFAULT_BLOWUP,
    w0_plus=None,
    perturb: Optional[Callable[[float], float]] = None,
) -> DtRunResult:
    """Raw bracket iteration; perturb(|w|) is added to the upper update and
    subtracted from the lower one when given."""
    r_star = np.asarray(r_star, dtype=float)
    if r_star.shape != (net.n,):
        raise ValueError(f"r_star must have length {net.n}")
    mat = delta_matrix(net)
    subs = net.subsystems
    # disturbance inputs live in each family's declared domain; the bracket
    # never leaves it, and a perturbed update may not push below its floor
    floor = np.array([get_family(s.kind).input_domain(s).lower[1] for s in subs])

    w_plus = _initial_upper(net, r_star, w0_plus).copy()
    # symmetric start clipped to the domain floor: families on a nonnegative
    # orthant begin at (0, w0+), sign-free ones at (-w0+, w0+)
    w_minus = np.maximum(-w_plus, floor)
    if np.any(w_minus > w_plus):
        raise ValueError("initial bracket inverted")

    states = [DtState(w_minus.copy(), w_plus.copy(), 0)]
    streak = 0
    for k in range(1, k_max + 1):
        d_minus = np.array(
            [gain_psi_star(s, w_minus[i], w_plus[i], r_star[i]) for i, s in enumerate(subs)]
        )
        d_plus = np.array(
            [gain_psi_star(s, w_plus[i], w_minus[i], r_star[i]) for i, s in enumerate(subs)]
        )
        new_minus = mat @ d_minus
        new_plus = mat @ d_plus
        if perturb is not None:
            bump = perturb(states[-1].norm())
            new_minus = np.maximum(new_minus - bump, floor)
            new_plus = np.maximum(new_plus + bump, floor)
        scale = 1.0 + max(np.max(np.abs(w_minus)), np.max(np.abs(w_plus)))
        step = max(
            np.max(np.abs(new_minus - w_minus)), np.max(np.abs(new_plus - w_plus))
        )
        w_minus, w_plus = new_minus, new_plus
        states.append(DtState(w_minus.copy(), w_plus.copy(), k))
        if np.max(np.abs(np.concatenate([w_minus, w_plus]))) > blowup:
            return DtRunResult(states, "blowup")
        streak = streak + 1 if step < CONVERGE_REL * scale else 0
        if streak >= CONVERGE_STREAK:
            box = IntervalBox(np.minimum(w_minus, w_plus), np.maximum(w_minus, w_plus))
            return DtRunResult(states, "converged", box=box, rate=_tail_rate(states))
    return DtRunResult(states, "kmax")


def _tail_rate(states) -> Optional[float]:
    """Geometric contraction rate of the approach to the final iterate."""
    final = states[-1].stacked()
    dists = [np.max(np.abs(s.stacked() - final)) for s in states[:-1]]
    ratios = []
    for a, b in zip(dists[:-1], dists[1:]):
        if a > 1e-13 and b > 1e-13:
            ratios.append(b / a)
    if not ratios:
        return 0.0
    tail = ratios[-min(len(ratios), 200):]
    return float(np.exp(np.mean(np.log(np.clip(tail, 1e-16, None)))))


def iterate_smallgain(
    net: NetworkDescriptor,
    r_star,
    k_max: int = DEFAULT_KMAX,
    blowup: float = DEFAULT_BLOWUP,
    w0_plus=None,
    refine_factor: float = REFINE_FACTOR,
    growth_tol: float = GROWTH_TOL,
) -> CertificateReport:
    """Small-gain verdict for the network at its configured eps.

    certified-bounded: the bracket stabilizes and its magnitude survives the
    eps-refinement probe.  diverged: an iterate exceeds ``blowup`` at either
    eps, or the ultimate box inflates by more than ``growth_tol`` when every
    eps is scaled by ``refine_factor`` (the attractor is eps-dependent, so the
    disturbance bracket grows without bound as attenuation improves).
    inconclusive: no verdict within k_max steps.
    """
    run = dt_trajectory(net, r_star, k_max=k_max, blowup=blowup, w0_plus=w0_plus)
    if run.status == "blowup":
        return CertificateReport("diverged", iterations_used=len(run.states) - 1)
    if run.status == "kmax":
        return CertificateReport("inconclusive", iterations_used=len(run.states) - 1)

    refined_net = with_epsilon_scaled(net, refine_factor)
    w0_refined = None if w0_plus is None else np.asarray(w0_plus, float) / refine_factor
    refined = dt_trajectory(
        refined_net, r_star, k_max=k_max, blowup=blowup, w0_plus=w0_refined
    )
    iters = len(run.states) - 1 + len(refined.states) - 1
    if refined.status == "blowup":
        return CertificateReport("diverged", iterations_used=iters)
    if refined.status == "kmax":
        return CertificateReport("inconclusive", iterations_used=iters)
    if refined.extent > growth_tol * run.extent + 1e-9:
        return CertificateReport("diverged", iterations_used=iters)

    margin = None if run.rate is None else max(0.0, 1.0 - run.rate)
    return CertificateReport(
        "certified-bounded",
        ultimate_box=run.box,
        iterations_used=iters,
        contraction_margin=margin,
    )


def with_epsilon_scaled(net: NetworkDescriptor, factor: float) -> NetworkDescriptor:
    subs = tuple(
        dataclasses.replace(s, epsilon=s.epsilon * factor) for s in net.subsystems
    )
    return dataclasses.replace(net, subsystems=subs)


@dataclass(frozen=True)
class UbDiagnostic:
    bounded: bool
    r0_estimate: float
    decrease_margin: float


def empirical_exponential_ub(traj: Sequence[DtState], r0: Optional[float] = None) -> UbDiagnostic:
    """Observed-decrease test with V(k) = |w(k)|^2 on the stacked bracket.

    Finds the largest margin c and smallest radius r0 such that
    V(k+1) - V(k) <= -c |w(k)|^2 holds at every step with |w(k)| >= r0.  Pass
    r0 to evaluate the margin at a fixed radius instead.
    """
    norms = np.array([s.norm() for s in traj])
    if len(traj) < 2 or np.all(norms == 0.0):
        return UbDiagnostic(True, 0.0, float("inf"))
    v = norms**2
    ratios = np.full(len(traj) - 1, -np.inf)
    for k in range(len(traj) - 1):
        if norms[k] > 0:
            ratios[k] = (v[k + 1] - v[k]) / v[k]

    def worst(at_r0):
        mask = norms[:-1] >= at_r0
        if not mask.any():
            return None
        return float(np.max(ratios[mask]))

    if r0 is not None:
        w = worst(r0)
        if w is None:
            return UbDiagnostic(True, float(r0), float("inf"))
        return UbDiagnostic(w < 0, float(r0), -w)

    # scan candidate radii from large to small; keep the smallest that still
    # gives a strict decrease everywhere above it
    candidates = np.unique(norms[:-1][norms[:-1] > 0])
    best_r0 = None
    for cand in candidates[::-1]:
        w = worst(cand)
        if w is not None and w < 0:
            best_r0 = float(cand)
        else:
            break
    if best_r0 is None:
        return UbDiagnostic(False, float("inf"), -(worst(0.0) or 0.0))
    return UbDiagnostic(True, best_r0, -worst(best_r0))


@dataclass(frozen=True)
class ProbeRow:
    p: float
    inflation: float
    iterations: int


@dataclass(frozen=True)
class ProbeResult:
    rows: tuple
    kappa: float
    linear: bool


class DivergedAtP(RuntimeError):
    """Smallest probed perturbation level that destabilizes the iteration."""

    def __init__(self, p, rows):
        self.p = p
        self.rows = tuple(rows)
        super().__init__(f"perturbed iteration diverged at p = {p}")


def perturbed_robustness_probe(
    net: NetworkDescriptor,
    r_star,
    p_levels: Sequence[float],
    l1: float = 1.0,
    l2: float = 1.0,
    k_max: int = DEFAULT_KMAX,
    blowup: float = DEFAULT_BLOWUP,
    w0_plus=None,
) -> ProbeResult:
    """Ultimate-box inflation under the perturbed update +- p*(l1*|w| + l2).

    Checks that the inflation stays (approximately) linear in p on the probed
    range and reports the fitted slope kappa.
    """
    nominal = dt_trajectory(net, r_star, k_max=k_max, blowup=blowup, w0_plus=w0_plus)
    if nominal.status != "converged":
        raise DivergedAtP(0.0, [])
    base = nominal.box

    rows = []
    for p in sorted(float(p) for p in p_levels):
        if p == 0.0:
            rows.append(ProbeRow(0.0, 0.0, len(nominal.states) - 1))
            continue
        run = dt_trajectory(
            net,
            r_star,
            k_max=k_max,
            blowup=blowup,
            w0_plus=w0_plus,
            perturb=lambda nrm, _p=p: _p * (l1 * nrm + l2),
        )
        if run.status != "converged":
            raise DivergedAtP(p, rows)
        inflation = max(
            float(np.max(np.abs(run.box.upper - base.upper))),
            float(np.max(np.abs(run.box.lower - base.lower))),
        )
        rows.append(ProbeRow(p, inflation, len(run.states) - 1))

    ps = np.array([r.p for r in rows if r.p > 0])
    infl = np.array([r.inflation for r in rows if r.p > 0])
    if ps.size == 0:
        return ProbeResult(tuple(rows), 0.0, True)
    kappa = float(ps @ infl / (ps @ ps))  # least squares through the origin
    resid = infl - kappa * ps
    linear = bool(np.max(np.abs(resid)) <= 0.2 * max(np.max(infl), 1e-12))
    return ProbeResult(tuple(rows), kappa, linear)


@dataclass(frozen=True)
class AdmissibleSetSpec:
    """Analytic admissible-reference condition of the gene family.

    Membership: every reference inside its per-subsystem admissible interval
    and max_i sum_{j != i} delta*r_j/(alpha_j*beta_j - delta*r_j) < 1; the
    margin is one minus that max.
    """

    alphas: tuple
    betas: tuple
    delta: float
    rbars: tuple  # per-subsystem (lo, hi)

    def demand_ratio(self, j: int, r_j: float) -> float:
        return self.delta * r_j / (self.alphas[j] * self.betas[j] - self.delta * r_j)

    def max_crosstalk(self, r_star) -> float:
        r_star = np.asarray(r_star, dtype=float)
        ratios = np.array([self.demand_ratio(j, r) for j, r in enumerate(r_star)])
        totals = ratios.sum() - ratios
        return float(np.max(totals))

    def margin(self, r_star) -> float:
        return 1.0 - self.max_crosstalk(r_star)

    def in_rbar(self, r_star) -> bool:
        return all(
            lo <= r <= hi for r, (lo, hi) in zip(np.asarray(r_star, float), self.rbars)
        )

    def is_member(self, r_star) -> bool:
        return self.in_rbar(r_star) and self.margin(r_star) > 0.0

    def symmetric_boundary(self) -> float:
        """Reference level where identical subsystems hit margin zero:
        alpha*beta/(N*delta)."""
        if len(set(self.alphas)) != 1 or len(set(self.betas)) != 1:
            raise ValueError("closed-form boundary needs identical subsystems")
        n = len(self.alphas)
        return self.alphas[0] * self.betas[0] / (n * self.delta)


@dataclass(frozen=True)
class GeneAdmissibleResult:
    spec: AdmissibleSetSpec
    r_star: np.ndarray
    member: bool
    margin: float
    reason: Optional[str] = None


def gene_admissible_set(net: NetworkDescriptor) -> GeneAdmissibleResult:
    """Analytic membership verdict for the nominal reference of a gene network."""
    if any(s.kind != "srna-feedback" for s in net.subsystems):
        raise ValueError("analytic admissible set applies to gene-family networks only")
    deltas = {s.param("delta") for s in net.subsystems}
    if len(deltas) != 1:
        raise ValueError("analytic admissible set assumes a shared protein decay rate")
    spec = AdmissibleSetSpec(
        alphas=tuple(s.param("alpha") for s in net.subsystems),
        betas=tuple(s.param("beta") for s in net.subsystems),
        delta=deltas.pop(),
        rbars=tuple(get_family(s.kind).admissible_interval(s) for s in net.subsystems),
    )
    r_star = nominal_reference(net)
    if not spec.in_rbar(r_star):
        bad = [
            i + 1
            for i, (r, (lo, hi)) in enumerate(zip(r_star, spec.rbars))
            if not lo <= r <= hi
        ]
        return GeneAdmissibleResult(
            spec,
            r_star,
            member=False,
            margin=spec.margin(r_star),
            reason=f"ReferenceOutsideRbar: subsystems {bad}",
        )
    margin = spec.margin(r_star)
    if margin <= 0.0:
        return GeneAdmissibleResult(
            spec, r_star, member=False, margin=margin, reason="crosstalk sum >= 1"
        )
    return GeneAdmissibleResult(spec, r_star, member=True, margin=margin)


@dataclass(frozen=True)
class NddCheck:
    code: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class NddVerdict:
    certified: bool
    grounds: tuple
    checks: tuple
    report: CertificateReport
    r_star: np.ndarray
    ladder_reports: tuple = ()

    def failures(self):
        return [c for c in self.checks if not c.passed]


DEFAULT_EPS_LADDER = (1e-1, 1e-2, 1e-3)
LADDER_DIAMETER_TOL = 0.10


def certify_ndd_detailed(
    net: NetworkDescriptor,
    eps_ladder: Sequence[float] = DEFAULT_EPS_LADDER,
    k_max: int = DEFAULT_KMAX,
    blowup: float = DEFAULT_BLOWUP,
    w0_plus=None,
) -> NddVerdict:
    """Full certification pipeline with one check per structural hypothesis.

    Checks: prescribed-dag, unintended-cooperative, subsystem-monotone (on the
    reduced dynamics), reference-admissible, dt-bounded (small-gain bracket
    certified at every rung of the eps ladder with a collapsing bracket), and,
    when every subsystem is from the gene family, gene-analytic-smallgain.
    """
    checks = []
    structural = network_violations(net)
    checks.append(
        NddCheck(
            "prescribed-dag",
            not any(i.code in ("EdgeNotForward", "BadEdgeTarget", "BadEdgeSource", "BadIndex") for i in structural),
            "; ".join(str(i) for i in structural if "Edge" in i.code or i.code == "BadIndex"),
        )
    )
    checks.append(
        NddCheck(
            "unintended-cooperative",
            not any("Delta" in i.code for i in structural),
            "; ".join(str(i) for i in structural if "Delta" in i.code),
        )
    )
    if any(not c.passed for c in checks):
        return NddVerdict(
            False,
            (),
            tuple(checks),
            CertificateReport("inconclusive"),
            np.zeros(net.n),
        )

    two_timescale = any(s.fast_dim > 0 for s in net.subsystems)
    mono_fail = []
    for s in net.subsystems:
        try:
            analysis = subsystem_sign_analysis(s, reduced=True)
            if not analysis.verdict.monotone:
                mono_fail.append(
                    f"subsystem {s.index}: negative cycle "
                    + " -> ".join(analysis.verdict.witness_cycle)
                )
        except Exception as exc:  # sign-unstable or unregistered dynamics
            mono_fail.append(f"subsystem {s.index}: {exc}")
    checks.append(NddCheck("subsystem-monotone", not mono_fail, "; ".join(mono_fail)))

    r_star = nominal_reference(net)
    rbar_fail = []
    for i, s in enumerate(net.subsystems):
        lo, hi = get_family(s.kind).admissible_interval(s)
        if not lo <= r_star[i] <= hi:
            rbar_fail.append(f"subsystem {s.index}: r*={r_star[i]:.6g} outside [{lo:.6g}, {hi:.6g}]")
    checks.append(NddCheck("reference-admissible", not rbar_fail, "; ".join(rbar_fail)))

    # the DT iteration needs the structural and monotonicity preconditions,
    # but not the analytic gene verdict: both diagnostics run independently
    dt_prereqs_ok = all(c.passed for c in checks)

    gene = all(s.kind == "srna-feedback" for s in net.subsystems)
    analytic_member = None
    if gene:
        adm = gene_admissible_set(net)
        analytic_member = adm.member
        checks.append(
            NddCheck(
                "gene-analytic-smallgain",
                adm.member,
                adm.reason or f"margin {adm.margin:.4g}",
            )
        )

    ladder_reports = []
    dt_ok = dt_prereqs_ok
    dt_detail = []
    if dt_ok:
        diam_fracs = []
        for eps in eps_ladder:
            rung = iterate_smallgain(
                with_epsilon(net, eps), r_star, k_max=k_max, blowup=blowup, w0_plus=w0_plus
            )
            ladder_reports.append((eps, rung))
            if rung.verdict != "certified-bounded":
                dt_ok = False
                dt_detail.append(f"eps={eps:g}: {rung.verdict}")
            else:
                box = rung.ultimate_box
                diam_fracs.append(box.diameter() / (1.0 + box.extent()))
        if dt_ok and any(f > LADDER_DIAMETER_TOL for f in diam_fracs):
            dt_ok = False
            dt_detail.append(
                f"bracket did not collapse consistently: diameters {diam_fracs}"
            )
    else:
        dt_detail.append("skipped: structural or static checks failed")
    checks.append(NddCheck("dt-bounded", dt_ok, "; ".join(dt_detail)))

    certified = all(c.passed for c in checks)
    grounds = []
    if certified:
        grounds.append("two-timescale-small-gain" if two_timescale else "monotone-small-gain")
        if gene and analytic_member:
            grounds.append("gene-analytic")

    if certified:
        final_eps, final = ladder_reports[-1]
        report = CertificateReport(
            "certified-bounded",
            ultimate_box=final.ultimate_box,
            iterations_used=sum(r.iterations_used for _, r in ladder_reports),
            contraction_margin=final.contraction_margin,
            admissible_set_membership=analytic_member,
        )
    else:
        dt_runs = [r for _, r in ladder_reports]
        verdict = "diverged" if any(r.verdict == "diverged" for r in dt_runs) else "inconclusive"
        report = CertificateReport(
            verdict,
            iterations_used=sum(r.iterations_used for r in dt_runs),
            admissible_set_membership=analytic_member,
        )
    return NddVerdict(
        certified, tuple(grounds), tuple(checks), report, r_star, tuple(ladder_reports)
    )


def certify_ndd(net: NetworkDescriptor, **kwargs) -> CertificateReport:
    """Pipeline verdict; see certify_ndd_detailed for the per-check breakdown."""
    return certify_ndd_detailed(net, **kwargs).report
