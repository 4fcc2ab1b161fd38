"""Static input/state and input/output characteristics.

For a subsystem with constant inputs (r, w) the equilibrium state phi(r, w)
is found by damped Newton iteration from a family seed, with a long-horizon
integration fallback when Newton stalls; the scalar reduced gene model gets a
dedicated bracketed solve (its residual is strictly decreasing in the state).
On top of the statics sit the disturbance gain functions psi / psi*, built by
composing canonical decompositions of phi and of the disturbance output map,
and the nominal reference vector r* obtained by one forward pass through the
feedback-free prescribed interaction graph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import NetworkDescriptor, SignedStructure, SubsystemDescriptor
from .families import get_family
from .monotone import canonical_decomposition, subsystem_sign_analysis

__all__ = [
    "NoConvergenceError",
    "MultipleRootsError",
    "NotMonotoneError",
    "solve_equilibrium",
    "static_io",
    "StaticCharacteristic",
    "static_characteristic",
    "certified_orders",
    "gain_psi",
    "gain_psi_star",
    "nominal_reference",
]

RESIDUAL_TOL = 1e-10
NEWTON_MAX_ITER = 50
FALLBACK_HORIZON_FACTOR = 200.0


class NoConvergenceError(RuntimeError):
    """Neither Newton nor the integration fallback reached an equilibrium."""


class MultipleRootsError(RuntimeError):
    """Two seeds converged to visibly different equilibria."""

    def __init__(self, first, second):
        self.first = np.asarray(first)
        self.second = np.asarray(second)
        super().__init__(
            f"distinct equilibria found: {self.first.tolist()} vs {self.second.tolist()}"
        )


class NotMonotoneError(RuntimeError):
    """Gain functions need a certified order and none exists."""

    def __init__(self, sub, witness=None):
        self.witness = witness
        msg = f"subsystem {sub.index} ({sub.kind}) has no certified orthant order"
        if witness:
            msg += f"; negative cycle {' -> '.join(witness)}"
        super().__init__(msg)


def _fd_jacobian(f, x, scale=1e-7):
    n = x.size
    fx = np.asarray(f(x), dtype=float)
    jac = np.empty((fx.size, n))
    for j in range(n):
        h = scale * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (np.asarray(f(xp), float) - np.asarray(f(xm), float)) / (2 * h)
    return jac


def _damped_newton(f, x0, tol_fn, max_iter=NEWTON_MAX_ITER):
    """Newton with residual-halving damping.  Returns (x, converged)."""
    x = np.array(x0, dtype=float)
    res = np.asarray(f(x), dtype=float)
    for _ in range(max_iter):
        norm = np.max(np.abs(res))
        if norm <= tol_fn(x):
            return x, True
        jac = _fd_jacobian(f, x)
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            return x, False
        lam = 1.0
        while lam > 1e-6:
            x_try = x + lam * step
            res_try = np.asarray(f(x_try), dtype=float)
            if np.all(np.isfinite(res_try)) and np.max(np.abs(res_try)) < norm:
                x, res = x_try, res_try
                break
            lam *= 0.5
        else:
            return x, False
    return x, np.max(np.abs(np.asarray(f(x), float))) <= tol_fn(x)


def _integrate_to_rest(fam, sub, r, w, x0, reduced):
    from scipy.integrate import solve_ivp

    rhs = fam.rhs_reduced if reduced else fam.rhs_full
    horizon = FALLBACK_HORIZON_FACTOR * fam.characteristic_time(sub)
    sol = solve_ivp(
        lambda t, x: rhs(sub, x, r, w),
        (0.0, horizon),
        np.atleast_1d(x0),
        method="LSODA",
        rtol=1e-10,
        atol=1e-12,
    )
    if not sol.success:
        raise NoConvergenceError(f"fallback integration failed: {sol.message}")
    return sol.y[:, -1]


def _residual_tol(phi):
    return RESIDUAL_TOL * (1.0 + float(np.max(np.abs(phi))))


def solve_equilibrium(
    sub: SubsystemDescriptor,
    r: float,
    w: float,
    reduced: bool = False,
    check_unique: bool = False,
) -> np.ndarray:
    """Equilibrium state of the (reduced) subsystem under constant inputs.

    Residual contract: max |rhs(phi, r, w)| <= 1e-10 * (1 + max |phi|).  With
    check_unique a second displaced seed is solved and a visible disagreement
    raises MultipleRootsError.
    """
    fam = get_family(sub.kind)
    rhs = fam.rhs_reduced if reduced else fam.rhs_full

    if reduced and fam.reduced_dim(sub) == 1:
        scalar = fam.solve_reduced_scalar(sub, r, w)
        if scalar is not None:
            return np.array([scalar])

    def f(x):
        return rhs(sub, x, r, w)

    def solve_from(seed):
        x, ok = _damped_newton(f, np.atleast_1d(seed), _residual_tol)
        if not ok:
            x = _integrate_to_rest(fam, sub, r, w, seed, reduced)
            x, ok = _damped_newton(f, x, _residual_tol)
        if not ok or not np.all(np.isfinite(x)):
            raise NoConvergenceError(
                f"no equilibrium for subsystem {sub.index} at r={r}, w={w}"
            )
        return x

    phi = solve_from(fam.seed_state(sub, r, w, reduced))
    if check_unique:
        alt = solve_from(2.0 * np.abs(phi) + 1.0)
        scale = 1.0 + np.max(np.abs(phi))
        if np.max(np.abs(alt - phi)) > 1e-6 * scale:
            raise MultipleRootsError(phi, alt)
    return phi


def static_io(sub, r, w, reduced: bool = False) -> tuple:
    """Equilibrium outputs (y, d) under constant inputs."""
    fam = get_family(sub.kind)
    phi = solve_equilibrium(sub, r, w, reduced=reduced)
    if reduced:
        return fam.output_y_reduced(sub, phi), fam.output_d_reduced(sub, phi, r, w)
    return fam.output_y(sub, phi), fam.output_d_full(sub, phi)


@dataclass(frozen=True)
class StaticCharacteristic:
    """Bundle of a subsystem's static maps and admissible reference interval."""

    index: int
    phi: Callable  # (r, w) -> equilibrium state vector
    outputs: Callable  # (r, w) -> (y, d)
    nominal: Callable  # r -> H(r)
    admissible_reference_interval: tuple
    nominal_is_estimate: bool


_EPS_LADDER = (1e-1, 1e-2, 1e-3)


def _estimated_nominal(sub, reduced):
    """H(r) from a shrinking-epsilon ladder with Richardson extrapolation."""
    import dataclasses as _dc

    def H(r):
        vals = []
        for eps in _EPS_LADDER:
            s = _dc.replace(sub, epsilon=eps)
            fam = get_family(s.kind)
            phi = solve_equilibrium(s, r, 0.0, reduced=reduced)
            y = fam.output_y_reduced(s, phi) if reduced else fam.output_y(s, phi)
            vals.append(y)
        # linear-in-epsilon model: extrapolate the last two rungs to eps = 0
        e1, e2 = _EPS_LADDER[-2], _EPS_LADDER[-1]
        return vals[-1] + (vals[-1] - vals[-2]) * e2 / (e1 - e2)

    return H


def static_characteristic(sub, reduced: bool = True) -> StaticCharacteristic:
    fam = get_family(sub.kind)

    def phi(r, w):
        return solve_equilibrium(sub, r, w, reduced=reduced)

    def outputs(r, w):
        return static_io(sub, r, w, reduced=reduced)

    analytic = fam.nominal_output(sub, 1.0)
    if analytic is None:
        nominal = _estimated_nominal(sub, reduced)
        estimate = True
    else:
        nominal = lambda r: fam.nominal_output(sub, r)  # noqa: E731
        estimate = False
    return StaticCharacteristic(
        index=sub.index,
        phi=phi,
        outputs=outputs,
        nominal=nominal,
        admissible_reference_interval=tuple(fam.admissible_interval(sub)),
        nominal_is_estimate=estimate,
    )


def certified_orders(sub, reduced: bool = True):
    """(sigma_u, sigma_x) over inputs (r, w) and the (reduced) states."""
    analysis = subsystem_sign_analysis(sub, reduced=reduced)
    if not analysis.verdict.monotone:
        raise NotMonotoneError(sub, analysis.verdict.witness_cycle)
    return np.asarray(analysis.verdict.sigma_u), np.asarray(analysis.verdict.sigma_x)


_RHO_PATTERN_CACHE: dict = {}


def _disturbance_pattern(sub, reduced: bool = True) -> SignedStructure:
    """Sampled sign pattern of the disturbance output map over (x, r, w)."""
    from .monotone import sample_sign_pattern
    from .core import IntervalBox

    key = (sub, reduced)
    if key in _RHO_PATTERN_CACHE:
        return _RHO_PATTERN_CACHE[key]
    fam = get_family(sub.kind)
    sdom = fam.state_domain(sub, reduced)
    udom = fam.input_domain(sub)
    domain = IntervalBox(
        np.concatenate([sdom.lower, udom.lower]), np.concatenate([sdom.upper, udom.upper])
    )
    nx = sdom.dim

    if reduced:
        def rho(xi):
            return np.array([fam.output_d_reduced(sub, xi[:nx], xi[nx], xi[nx + 1])])
    else:
        def rho(xi):
            return np.array([fam.output_d_full(sub, xi[:nx])])

    pattern = sample_sign_pattern(rho, domain)
    _RHO_PATTERN_CACHE[key] = pattern
    return pattern


class _GainMachinery:
    """Per-subsystem decomposition evaluators, built once and reused."""

    def __init__(self, sub, reduced):
        sigma_u, sigma_x = certified_orders(sub, reduced=reduced)
        fam = get_family(sub.kind)
        self.sub = sub
        self.reduced = reduced
        self.nx = sigma_x.size
        phi_struct = SignedStructure.from_orders(sigma_u, sigma_x)
        self._equilibria: dict = {}

        def phi_of_u(u):
            key = (float(u[0]), float(u[1]))
            hit = self._equilibria.get(key)
            if hit is None:
                hit = solve_equilibrium(sub, key[0], key[1], reduced=reduced)
                if len(self._equilibria) > 200000:
                    self._equilibria.clear()
                self._equilibria[key] = hit
            return hit

        self.phi_hat = canonical_decomposition(phi_of_u, phi_struct)

        nx = self.nx
        if reduced:
            def rho(arg):
                return np.array([fam.output_d_reduced(sub, arg[:nx], arg[nx], arg[nx + 1])])
        else:
            def rho(arg):
                return np.array([fam.output_d_full(sub, arg[:nx])])

        self.rho_hat = canonical_decomposition(rho, _disturbance_pattern(sub, reduced))

    def psi(self, u_plus, u_minus) -> float:
        x_plus = self.phi_hat(u_plus, u_minus)
        x_minus = self.phi_hat(u_minus, u_plus)
        arg_plus = np.concatenate([x_plus, u_plus])
        arg_minus = np.concatenate([x_minus, u_minus])
        return float(self.rho_hat(arg_plus, arg_minus)[0])


_GAIN_CACHE: dict = {}


def _gain_machinery(sub, reduced=True) -> _GainMachinery:
    key = (sub, reduced)
    if key not in _GAIN_CACHE:
        _GAIN_CACHE[key] = _GainMachinery(sub, reduced)
    return _GAIN_CACHE[key]


def gain_psi(sub, u_plus, u_minus, reduced: bool = True) -> float:
    """Disturbance gain psi(u+, u-) by composing canonical decompositions.

    u = (r, w).  When the inputs settle into a box [u-, u+], the asymptotic
    disturbance output is bracketed by [psi(u-, u+), psi(u+, u-)]; the slot
    position selects the end of the bracket, so both argument orders are
    meaningful.  Requires a certified order.
    """
    u_plus = np.asarray(u_plus, dtype=float)
    u_minus = np.asarray(u_minus, dtype=float)
    if u_plus.shape != (2,) or u_minus.shape != (2,):
        raise ValueError("u arguments are (r, w) pairs")
    return _gain_machinery(sub, reduced).psi(u_plus, u_minus)


def gain_psi_star(sub, w_plus, w_minus, r_star, reduced: bool = True) -> float:
    """psi with the reference pinned at r*: psi((r*, w+), (r*, w-))."""
    return gain_psi(sub, (r_star, w_plus), (r_star, w_minus), reduced=reduced)


def nominal_reference(net: NetworkDescriptor) -> np.ndarray:
    """Reference vector r* of the disturbance-free network.

    Forward pass in index order: each subsystem's reference is the sum of its
    constant sources and of the interaction functions applied to the parents'
    nominal outputs; uniqueness is structural since edges only point forward.
    """
    r_star = np.zeros(net.n)
    y_star = np.zeros(net.n)
    for sub in net.subsystems:
        i = sub.index
        total = 0.0
        for e in net.edges_into(i):
            if e.kind == "constant":
                total += e.evaluate(None)
            else:
                total += e.evaluate(y_star[e.src - 1])
        r_star[i - 1] = total
        fam = get_family(sub.kind)
        h = fam.nominal_output(sub, total)
        if h is None:
            char = static_characteristic(sub)
            h = char.nominal(total)
        y_star[i - 1] = h
    return r_star
