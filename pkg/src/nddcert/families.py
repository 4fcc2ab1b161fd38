"""Subsystem family registry.

A family supplies the executable pieces behind a SubsystemDescriptor: right
hand sides (full and reduced), output maps, equilibrium seeds, sampling
domains and, where known analytically, the nominal characteristic and the
admissible reference interval.  Built-in kinds:

* ``linear-feedback-example`` -- a first-order plant x' = -x + z + w under a
  fast integral-like controller z' = -z + (r - x)/eps.  Exact statics:
  x = z = (r + eps*w)/(1 + eps), so the nominal characteristic is H(r) = r.
  The plant/controller loop carries a negative undirected cycle, which makes
  this the stock non-monotone fixture.  The family has no intrinsic
  disturbance output; we take d = z, the control effort.
* ``srna-feedback`` -- registered by the genecircuit module.
* ``generic-ode`` -- user-registered callables, see register_generic_ode.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import IntervalBox

__all__ = ["Family", "get_family", "register_family", "register_generic_ode"]


class Family:
    """Hook collection for one subsystem kind; subclasses override as needed."""

    kind = "abstract"

    # state layout -------------------------------------------------------
    def state_labels(self, sub) -> tuple:
        raise NotImplementedError

    def slow_indices(self, sub) -> tuple:
        raise NotImplementedError

    def reduced_labels(self, sub) -> tuple:
        return tuple(self.state_labels(sub)[i] for i in self.slow_indices(sub))

    def full_dim(self, sub) -> int:
        return len(self.state_labels(sub))

    def reduced_dim(self, sub) -> int:
        return len(self.slow_indices(sub))

    # dynamics -----------------------------------------------------------
    def rhs_full(self, sub, state, r, w) -> np.ndarray:
        raise NotImplementedError

    def rhs_reduced(self, sub, x, r, w) -> np.ndarray:
        # families without a fast block are their own reduction
        if self.reduced_dim(sub) == self.full_dim(sub):
            return self.rhs_full(sub, x, r, w)
        raise NotImplementedError

    # outputs ------------------------------------------------------------
    def output_y(self, sub, state) -> float:
        raise NotImplementedError

    def output_d_full(self, sub, state) -> float:
        raise NotImplementedError

    def output_d_reduced(self, sub, x, r, w) -> float:
        if self.reduced_dim(sub) == self.full_dim(sub):
            return self.output_d_full(sub, x)
        raise NotImplementedError

    def output_y_reduced(self, sub, x) -> float:
        if self.reduced_dim(sub) == self.full_dim(sub):
            return self.output_y(sub, x)
        return float(np.atleast_1d(x)[0])

    # statics ------------------------------------------------------------
    def seed_state(self, sub, r, w, reduced: bool) -> np.ndarray:
        dim = self.reduced_dim(sub) if reduced else self.full_dim(sub)
        return np.zeros(dim)

    def solve_reduced_scalar(self, sub, r, w) -> Optional[float]:
        """Family-specific scalar equilibrium solver, or None for generic Newton."""
        return None

    def nominal_output(self, sub, r) -> Optional[float]:
        """H(r) when known in closed form, else None (estimated numerically)."""
        return None

    def admissible_interval(self, sub) -> tuple:
        raise NotImplementedError

    def characteristic_time(self, sub) -> float:
        return 1.0

    # certification ------------------------------------------------------
    def apriori_disturbance_bound(self, net, r_star) -> Optional[np.ndarray]:
        """Family-specific a-priori bound on the disturbance inputs, or None."""
        return None

    # sampling domains ---------------------------------------------------
    def state_domain(self, sub, reduced: bool) -> IntervalBox:
        raise NotImplementedError

    def input_domain(self, sub) -> IntervalBox:
        """Box for (r, w)."""
        raise NotImplementedError


_REGISTRY: dict = {}


def register_family(family: Family):
    _REGISTRY[family.kind] = family
    return family


def get_family(kind: str) -> Family:
    if kind not in _REGISTRY:
        if kind == "srna-feedback":
            from . import genecircuit  # noqa: F401  registers on import
        if kind not in _REGISTRY:
            raise KeyError(f"no family registered for kind {kind!r}")
    return _REGISTRY[kind]


class LinearFeedbackFamily(Family):
    kind = "linear-feedback-example"

    def state_labels(self, sub):
        return ("x", "z")

    def slow_indices(self, sub):
        return (0, 1)

    def rhs_full(self, sub, state, r, w):
        x, z = state
        eps = sub.epsilon
        return np.array([-x + z + w, -z + (r - x) / eps])

    def output_y(self, sub, state):
        return float(state[0])

    def output_d_full(self, sub, state):
        return float(state[1])

    def seed_state(self, sub, r, w, reduced):
        eq = (r + sub.epsilon * w) / (1.0 + sub.epsilon)
        return np.array([eq, eq - w])

    def nominal_output(self, sub, r):
        return float(r)

    def admissible_interval(self, sub):
        return (0.0, sub.param("r_max", 100.0))

    def state_domain(self, sub, reduced):
        cap = sub.param("domain_cap", 1e3)
        return IntervalBox([-cap, -cap], [cap, cap])

    def input_domain(self, sub):
        cap = sub.param("domain_cap", 1e3)
        return IntervalBox([-cap, -cap], [cap, cap])

    def characteristic_time(self, sub):
        return 1.0


register_family(LinearFeedbackFamily())


class GenericOdeFamily(Family):
    """Escape hatch driven by user-registered callables.

    Hooks are looked up by the descriptor's ``tag``; register with
    register_generic_ode before building descriptors.  Callables must be
    module-level functions if networks are to cross process boundaries.
    """

    kind = "generic-ode"

    def __init__(self):
        self._specs = {}

    def register(self, tag, spec: dict):
        self._specs[tag] = spec

    def _spec(self, sub):
        if sub.tag not in self._specs:
            raise KeyError(
                f"generic-ode subsystem {sub.index} references unregistered tag {sub.tag!r}"
            )
        return self._specs[sub.tag]

    def state_labels(self, sub):
        s = self._spec(sub)
        return tuple(s.get("state_labels") or tuple(f"x{i}" for i in range(s["n_states"])))

    def slow_indices(self, sub):
        s = self._spec(sub)
        return tuple(s.get("slow_indices", range(s["n_states"])))

    def rhs_full(self, sub, state, r, w):
        return np.asarray(self._spec(sub)["rhs"](sub, np.asarray(state, float), r, w), float)

    def rhs_reduced(self, sub, x, r, w):
        s = self._spec(sub)
        if "rhs_reduced" in s:
            return np.asarray(s["rhs_reduced"](sub, np.asarray(x, float), r, w), float)
        return super().rhs_reduced(sub, x, r, w)

    def output_y(self, sub, state):
        return float(self._spec(sub)["output_y"](sub, np.asarray(state, float)))

    def output_d_full(self, sub, state):
        return float(self._spec(sub)["output_d"](sub, np.asarray(state, float)))

    def output_d_reduced(self, sub, x, r, w):
        s = self._spec(sub)
        if "output_d_reduced" in s:
            return float(s["output_d_reduced"](sub, np.asarray(x, float), r, w))
        return super().output_d_reduced(sub, x, r, w)

    def seed_state(self, sub, r, w, reduced):
        s = self._spec(sub)
        if "seed" in s:
            return np.asarray(s["seed"](sub, r, w, reduced), float)
        return super().seed_state(sub, r, w, reduced)

    def nominal_output(self, sub, r):
        s = self._spec(sub)
        if "nominal_output" in s:
            return float(s["nominal_output"](sub, r))
        return None

    def admissible_interval(self, sub):
        return tuple(self._spec(sub).get("admissible_interval", (0.0, 100.0)))

    def characteristic_time(self, sub):
        return float(self._spec(sub).get("characteristic_time", 1.0))

    def apriori_disturbance_bound(self, net, r_star):
        return None

    def state_domain(self, sub, reduced):
        s = self._spec(sub)
        key = "reduced_domain" if reduced else "domain"
        dom = s.get(key, s.get("domain"))
        if dom is None:
            n = self.reduced_dim(sub) if reduced else self.full_dim(sub)
            return IntervalBox(np.zeros(n), np.full(n, np.inf))
        return dom if isinstance(dom, IntervalBox) else IntervalBox(*dom)

    def input_domain(self, sub):
        dom = self._spec(sub).get("input_domain")
        if dom is None:
            return IntervalBox([0.0, 0.0], [np.inf, np.inf])
        return dom if isinstance(dom, IntervalBox) else IntervalBox(*dom)


_GENERIC = register_family(GenericOdeFamily())


def register_generic_ode(tag: str, *, n_states: int, rhs, output_y, output_d, **hooks):
    """Register callables behind a generic-ode descriptor tag.

    Required: rhs(sub, state, r, w) -> derivative, output_y(sub, state),
    output_d(sub, state).  Optional hooks: state_labels, slow_indices,
    rhs_reduced, output_d_reduced, seed, nominal_output, admissible_interval,
    characteristic_time, domain, reduced_domain, input_domain.
    """
    spec = {"n_states": int(n_states), "rhs": rhs, "output_y": output_y, "output_d": output_d}
    spec.update(hooks)
    _GENERIC.register(tag, spec)
    return tag
