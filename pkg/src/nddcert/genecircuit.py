"""Feedback-regulated genetic subsystem family (mRNA / small-RNA / protein).

Model summary.  Each subsystem transcribes mRNA m at reference rate r and
translates it into protein p at rate T(m, w) = alpha*(m/kappa)/(1 + m/kappa + w),
where w is the ribosome demand exerted by the other subsystems.  A small RNA s,
produced proportionally to p, annihilates m (rate lambda*m*s), closing a
feedback loop that pins the set point at p = r/beta as the design parameter
epsilon shrinks.  With the RNA species decaying a factor 1/nu faster than the
protein, the dynamics are

    nu*m' = r/eps - lambda*m*s/eps - delta*m
    nu*s' = beta*p/eps - lambda*m*s/eps - delta*s
    p'    = T(m, w) - delta*p,        y = p,   d = m/kappa.

Freezing p and r, the fast (m, s) block has a unique nonnegative equilibrium
with

    mbar = (A + sqrt(A^2 + 4 eps^2 delta^2 lambda r)) / (2 eps delta lambda),
    A    = r*lambda - beta*lambda*p - delta^2 eps^2.

sbar is not part of that closed form; it follows from the first fast equation
at steady state, r - lambda*mbar*sbar = eps*delta*mbar, so
sbar = (r - eps*delta*mbar)/(lambda*mbar) when mbar > 0.  When mbar = 0 (only
at r = 0) that expression is 0/0 and the second fast equation gives
sbar = beta*p/(eps*delta) instead.

Substituting mbar into the protein equation yields the scalar reduced model
pbar' = T(mbar(pbar, r), w) - delta*pbar with disturbance output mbar/kappa.
The reduced right hand side is strictly decreasing in pbar, so its equilibrium
is found by bracketed root finding on [0, alpha/delta].

An older parameterization writes the RNA decay rate as an explicit delta0
instead of nu; both generate the same vector field under nu = delta/delta0,
eps_nu_form = eps_delta0_form * delta0 / delta (see rhs_delta0_form).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .core import IntervalBox, SubsystemDescriptor
from .families import Family, register_family

__all__ = [
    "SrnaParams",
    "translation_rate",
    "srna_rhs",
    "srna_rhs_delta0",
    "boundary_layer_rhs",
    "mbar",
    "boundary_layer_equilibrium",
    "reduced_rhs",
    "reduced_disturbance",
    "reduced_equilibrium",
    "competition_delta",
    "hill_interaction",
    "psi_star_closed_form",
    "eta",
    "eta_star",
    "DenominatorNearZero",
    "delta0_to_nu_form",
]


class DenominatorNearZero(ArithmeticError):
    """alpha - delta*pbar vanished; the reference is outside the usable range."""


@dataclass(frozen=True)
class SrnaParams:
    """Rate constants of one feedback-regulated subsystem.

    alpha: translation rate constant (nM/hr); lam: mRNA/sRNA annihilation rate
    (1/(nM*hr)); beta: sRNA production rate (1/hr); kappa: ribosome
    dissociation constant (nM); delta: protein decay (1/hr); delta0: RNA decay
    (1/hr, only used by the explicit-decay form); epsilon, nu: dimensionless
    design and timescale parameters.
    """

    alpha: float
    lam: float
    beta: float
    kappa: float
    delta: float
    epsilon: float
    nu: float = 1.0
    delta0: Optional[float] = None

    def __post_init__(self):
        for name in ("alpha", "lam", "beta", "kappa", "delta", "epsilon", "nu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.delta0 is not None and not self.delta0 > 0:
            raise ValueError("delta0 must be strictly positive")

    @classmethod
    def from_descriptor(cls, sub: SubsystemDescriptor) -> "SrnaParams":
        p = sub.params_dict
        return cls(
            alpha=p["alpha"],
            lam=p["lambda"],
            beta=p["beta"],
            kappa=p["kappa"],
            delta=p["delta"],
            delta0=p.get("delta0"),
            epsilon=sub.epsilon,
            nu=sub.nu,
        )

    @property
    def output_ceiling(self) -> float:
        """Upper bound alpha/delta on the protein concentration."""
        return self.alpha / self.delta

    @property
    def setpoint_ceiling(self) -> float:
        """Upper end alpha*beta/delta of references the feedback can track."""
        return self.alpha * self.beta / self.delta


def translation_rate(m: float, w: float, p: SrnaParams) -> float:
    """Ribosome-limited translation rate alpha*(m/kappa)/(1 + m/kappa + w)."""
    mk = m / p.kappa
    return p.alpha * mk / (1.0 + mk + w)


def srna_rhs(state, r: float, w: float, p: SrnaParams) -> np.ndarray:
    """Full (m, s, p) dynamics in the timescale-separated form."""
    m, s, pr = state
    ann = p.lam * m * s / p.epsilon
    dm = (r / p.epsilon - ann - p.delta * m) / p.nu
    ds = (p.beta * pr / p.epsilon - ann - p.delta * s) / p.nu
    dp = translation_rate(m, w, p) - p.delta * pr
    return np.array([dm, ds, dp])


def srna_rhs_delta0(state, r: float, w: float, p: SrnaParams) -> np.ndarray:
    """Full (m, s, p) dynamics with an explicit RNA decay rate delta0."""
    if p.delta0 is None:
        raise ValueError("delta0 parameter required for the explicit-decay form")
    m, s, pr = state
    ann = p.lam * m * s / p.epsilon
    dm = r / p.epsilon - ann - p.delta0 * m
    ds = p.beta * pr / p.epsilon - ann - p.delta0 * s
    dp = translation_rate(m, w, p) - p.delta * pr
    return np.array([dm, ds, dp])


def delta0_to_nu_form(p: SrnaParams) -> SrnaParams:
    """Parameters whose timescale-separated form matches the delta0 form."""
    if p.delta0 is None:
        raise ValueError("delta0 parameter required")
    nu = p.delta / p.delta0
    return dataclasses.replace(p, nu=nu, epsilon=p.epsilon / nu)


def boundary_layer_rhs(z, pval: float, r: float, p: SrnaParams) -> np.ndarray:
    """Fast (m, s) dynamics with the protein level frozen, in fast time."""
    m, s = z
    ann = p.lam * m * s
    dm = (r - ann) / p.epsilon - p.delta * m
    ds = (p.beta * pval - ann) / p.epsilon - p.delta * s
    return np.array([dm, ds])


def mbar(pval: float, r: float, p: SrnaParams) -> float:
    """Fast-block equilibrium mRNA level for frozen protein pval.

    Uses the rationalized branch when A < 0 to avoid the catastrophic
    cancellation of A + sqrt(A^2 + small).
    """
    a = r * p.lam - p.beta * p.lam * pval - (p.delta * p.epsilon) ** 2
    c = 4.0 * (p.epsilon * p.delta) ** 2 * p.lam * r
    disc = np.sqrt(a * a + c)
    if a >= 0:
        return (a + disc) / (2.0 * p.epsilon * p.delta * p.lam)
    return 2.0 * p.epsilon * p.delta * r / (disc - a)


def boundary_layer_equilibrium(pval: float, r: float, p: SrnaParams) -> tuple:
    """Equilibrium (mbar, sbar) of the fast block; see module docstring for sbar."""
    m = mbar(pval, r, p)
    if m > 0.0:
        s = (r - p.epsilon * p.delta * m) / (p.lam * m)
    else:
        s = p.beta * pval / (p.epsilon * p.delta)
    return m, s


def reduced_rhs(p_slow: float, r: float, w: float, p: SrnaParams) -> float:
    """Scalar slow dynamics with the fast block at its equilibrium."""
    return translation_rate(mbar(p_slow, r, p), w, p) - p.delta * p_slow


def reduced_disturbance(p_slow: float, r: float, p: SrnaParams) -> float:
    """Reduced disturbance output mbar/kappa."""
    return mbar(p_slow, r, p) / p.kappa


def reduced_equilibrium(r: float, w: float, p: SrnaParams) -> float:
    """Equilibrium pbar of the reduced model by bracketed root finding.

    The residual is strictly decreasing in pbar, positive at 0 and negative at
    alpha/delta, so the bracket is always valid.
    """
    if r < 0 or w < -0.999:
        raise ValueError(f"inputs out of range: r={r}, w={w}")
    f0 = reduced_rhs(0.0, r, w, p)
    if f0 <= 0.0:
        return 0.0
    hi = p.output_ceiling
    return float(brentq(reduced_rhs, 0.0, hi, args=(r, w, p), xtol=1e-14, rtol=8.9e-16))


def competition_delta(d) -> np.ndarray:
    """Resource-competition coupling w_i = sum_{j != i} d_j."""
    d = np.asarray(d, dtype=float)
    return d.sum() - d


def hill_interaction(y_prev: float, B: float, k: float, n: float) -> float:
    """Activating Hill response B*(y/k)^n / (1 + (y/k)^n).

    Inputs are concentrations, so y_prev must be nonnegative; integration
    noise slightly below zero is floored.
    """
    if y_prev < -1e-6 * k:
        raise ValueError("hill input must be nonnegative")
    if y_prev <= 0.0:
        return 0.0
    x = (y_prev / k) ** n
    return B * x / (1.0 + x)


def eta(r: float, w: float, p: SrnaParams) -> float:
    """Equilibrium ribosome-demand ratio delta*pbar/(alpha - delta*pbar)."""
    dp = p.delta * reduced_equilibrium(r, w, p)
    den = p.alpha - dp
    if den < 1e-9 * p.alpha:
        raise DenominatorNearZero(f"alpha - delta*pbar = {den:.3g} at r={r}, w={w}")
    return dp / den


def eta_star(r: float, p: SrnaParams) -> float:
    """Nominal (epsilon -> 0) demand ratio delta*r/(alpha*beta - delta*r)."""
    return p.delta * r / (p.alpha * p.beta - p.delta * r)


def psi_star_closed_form(w_plus: float, r_star: float, p: SrnaParams) -> float:
    """Upper disturbance-output bound delta*pbar*(1+w)/(alpha - delta*pbar).

    Equivalent, through the steady-state balance of the reduced model, to
    mbar(pbar(r*, w+), r*)/kappa.
    """
    if w_plus < 0:
        raise ValueError("w_plus must be nonnegative")
    return eta(r_star, w_plus, p) * (1.0 + w_plus)


# --- family adapter -------------------------------------------------------

_RBAR_LO_FRAC = 0.05
_RBAR_HI_FRAC = 0.95


class SrnaFamily(Family):
    kind = "srna-feedback"

    @staticmethod
    def params(sub) -> SrnaParams:
        return SrnaParams.from_descriptor(sub)

    def state_labels(self, sub):
        return ("m", "s", "p")

    def slow_indices(self, sub):
        return (2,)

    def rhs_full(self, sub, state, r, w):
        return srna_rhs(state, r, w, self.params(sub))

    def rhs_reduced(self, sub, x, r, w):
        return np.array([reduced_rhs(float(np.atleast_1d(x)[0]), r, w, self.params(sub))])

    def output_y(self, sub, state):
        return float(state[2])

    def output_d_full(self, sub, state):
        return float(state[0]) / sub.param("kappa")

    def output_d_reduced(self, sub, x, r, w):
        return reduced_disturbance(float(np.atleast_1d(x)[0]), r, self.params(sub))

    def seed_state(self, sub, r, w, reduced):
        p = self.params(sub)
        pbar = reduced_equilibrium(r, w, p)
        if reduced:
            return np.array([pbar])
        m, s = boundary_layer_equilibrium(pbar, r, p)
        return np.array([m, s, pbar])

    def solve_reduced_scalar(self, sub, r, w):
        return reduced_equilibrium(r, w, self.params(sub))

    def nominal_output(self, sub, r):
        return float(r) / sub.param("beta")

    def admissible_interval(self, sub):
        ceiling = self.params(sub).setpoint_ceiling
        return (_RBAR_LO_FRAC * ceiling, _RBAR_HI_FRAC * ceiling)

    def characteristic_time(self, sub):
        return 1.0 / sub.param("delta")

    def apriori_disturbance_bound(self, net, r_star):
        # each mRNA is globally attracted to [0, r/eps], so d_j <= r_j/(eps_j kappa_j)
        r_star = np.asarray(r_star, dtype=float)
        caps = np.array(
            [r_star[i] / (s.epsilon * s.param("kappa")) for i, s in enumerate(net.subsystems)]
        )
        from .core import delta_matrix

        return delta_matrix(net) @ caps

    def state_domain(self, sub, reduced):
        p = self.params(sub)
        if reduced:
            return IntervalBox([0.0], [p.output_ceiling])
        return IntervalBox([0.0, 0.0, 0.0], [np.inf, np.inf, p.output_ceiling])

    def input_domain(self, sub):
        lo, hi = self.admissible_interval(sub)
        return IntervalBox([lo, 0.0], [hi, np.inf])


register_family(SrnaFamily())
