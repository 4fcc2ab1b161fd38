"""Shared domain types: subsystems, networks, interval boxes, sign structures,
simulation configuration and certificate reports.

All descriptor types are immutable (frozen dataclasses with tuple-backed
fields), hashable and picklable, so they can be shared freely across parallel
workers and used as cache keys.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "ValidationIssue",
    "NetworkValidationError",
    "IntervalBox",
    "SignedStructure",
    "SubsystemDescriptor",
    "Edge",
    "NetworkDescriptor",
    "SimulationConfig",
    "CertificateReport",
    "network_violations",
    "validate_network",
    "delta_matrix",
    "apply_unintended",
    "with_epsilon",
    "with_nu",
    "with_reference",
]

SUBSYSTEM_KINDS = ("generic-ode", "srna-feedback", "linear-feedback-example")
EDGE_KINDS = ("hill", "constant", "affine")
UNINTENDED_TAGS = ("none", "resource-competition")


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    message: str
    location: Optional[str] = None

    def __str__(self):
        loc = f" [{self.location}]" if self.location else ""
        return f"{self.code}: {self.message}{loc}"


class NetworkValidationError(ValueError):
    """Raised by validate_network; carries every violation found."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))


def _as_pairs(params) -> tuple:
    """Normalize a parameter mapping to a sorted tuple of (name, float) pairs."""
    if params is None:
        return ()
    if isinstance(params, tuple):
        items = params
    else:
        items = params.items()
    return tuple(sorted((str(k), float(v)) for k, v in items))


class IntervalBox:
    """Componentwise interval vector [lower, upper], lower <= upper."""

    __slots__ = ("lower", "upper")

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError(
                f"interval bounds must be vectors of equal length, "
                f"got {lower.shape} and {upper.shape}"
            )
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ValueError("interval bounds must not contain NaN")
        if np.any(lower > upper):
            bad = int(np.argmax(lower > upper))
            raise ValueError(
                f"lower > upper in component {bad}: {lower[bad]} > {upper[bad]}"
            )
        self.lower = lower
        self.upper = upper
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.lower.size

    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def diameter(self) -> float:
        """Infinity-norm width of the box."""
        return float(np.max(self.upper - self.lower)) if self.dim else 0.0

    def extent(self) -> float:
        """Largest corner magnitude, max(|lower|, |upper|) in infinity norm."""
        if self.dim == 0:
            return 0.0
        return float(max(np.max(np.abs(self.lower)), np.max(np.abs(self.upper))))

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def sample(self, n, rng) -> np.ndarray:
        """n uniform points inside the box, shape (n, dim)."""
        u = rng.random((n, self.dim))
        return self.lower + u * (self.upper - self.lower)

    def inflate(self, rel: float = 0.0, abs_: float = 0.0) -> "IntervalBox":
        pad = rel * np.maximum(np.abs(self.lower), np.abs(self.upper)) + abs_
        return IntervalBox(self.lower - pad, self.upper + pad)

    def __eq__(self, other):
        return (
            isinstance(other, IntervalBox)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __repr__(self):
        return f"IntervalBox({self.lower.tolist()}, {self.upper.tolist()})"


class SignedStructure:
    """Sign pattern of a map's partial derivatives plus optional orthant orders.

    ``lam`` is an (n_out x n_in) matrix with entries in {-1, 0, +1}; 0 marks a
    structurally zero partial (no dependence observed).  ``sigma_u`` and
    ``sigma_x`` are set when the structure was inferred from a monotonicity
    verdict, in which case lam restricted to nonzero entries agrees with the
    outer product sigma_x * sigma_u^T.
    """

    __slots__ = ("lam", "sigma_u", "sigma_x")

    def __init__(self, lam, sigma_u=None, sigma_x=None):
        lam = np.atleast_2d(np.asarray(lam, dtype=int))
        if not np.all(np.isin(lam, (-1, 0, 1))):
            raise ValueError("sign pattern entries must be in {-1, 0, +1}")
        self.lam = lam
        self.lam.setflags(write=False)
        self.sigma_u = None if sigma_u is None else np.asarray(sigma_u, dtype=int)
        self.sigma_x = None if sigma_x is None else np.asarray(sigma_x, dtype=int)
        for sig in (self.sigma_u, self.sigma_x):
            if sig is not None and not np.all(np.isin(sig, (-1, 1))):
                raise ValueError("order vectors must have entries in {-1, +1}")

    @classmethod
    def from_orders(cls, sigma_u, sigma_x) -> "SignedStructure":
        """Input-to-state pattern sigma_x * sigma_u^T of an order-preserving system."""
        sigma_u = np.asarray(sigma_u, dtype=int)
        sigma_x = np.asarray(sigma_x, dtype=int)
        lam = np.outer(sigma_x, sigma_u)
        return cls(lam, sigma_u=sigma_u, sigma_x=sigma_x)

    @property
    def n_out(self) -> int:
        return self.lam.shape[0]

    @property
    def n_in(self) -> int:
        return self.lam.shape[1]

    def __repr__(self):
        return f"SignedStructure({self.lam.tolist()})"


@dataclass(frozen=True)
class SubsystemDescriptor:
    """One subsystem: family tag, parameters and scalar I/O signature.

    ``index`` is the 1-based position in the network; prescribed edges must go
    from lower to higher index.  ``params`` is stored as a sorted tuple of
    (name, value) pairs so descriptors stay hashable; use ``params_dict`` or
    ``param`` for access.  ``tag`` selects a registered implementation for the
    generic-ode family and is unused otherwise.
    """

    index: int
    kind: str
    params: tuple = ()
    epsilon: float = 0.01
    nu: float = 1.0
    state_dim: int = 1
    fast_dim: int = 0
    tag: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "params", _as_pairs(self.params))
        if self.kind not in SUBSYSTEM_KINDS:
            raise ValueError(f"unknown subsystem kind {self.kind!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.state_dim < 1 or self.fast_dim < 0:
            raise ValueError("state_dim must be >= 1 and fast_dim >= 0")

    @property
    def params_dict(self) -> dict:
        return dict(self.params)

    def param(self, name: str, default=None) -> float:
        for k, v in self.params:
            if k == name:
                return v
        if default is None:
            raise KeyError(f"subsystem {self.index}: missing parameter {name!r}")
        return float(default)

    @property
    def total_dim(self) -> int:
        return self.state_dim + self.fast_dim


@dataclass(frozen=True)
class Edge:
    """Directed prescribed interaction j -> i, or a constant reference source.

    ``src`` is None for constant sources.  Contributions of several edges into
    the same target sum.
    """

    dst: int
    kind: str
    params: tuple = ()
    src: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "params", _as_pairs(self.params))
        if self.kind not in EDGE_KINDS:
            raise ValueError(f"unknown edge type {self.kind!r}")
        if self.kind == "constant" and self.src is not None:
            raise ValueError("constant edges carry no source subsystem")
        if self.kind != "constant" and self.src is None:
            raise ValueError(f"{self.kind} edge needs a source subsystem")

    def param(self, name: str) -> float:
        for k, v in self.params:
            if k == name:
                return v
        raise KeyError(f"edge to {self.dst}: missing parameter {name!r}")

    def evaluate(self, y_src: Optional[float]) -> float:
        if self.kind == "constant":
            return self.param("r_star")
        if self.kind == "hill":
            from .genecircuit import hill_interaction

            return hill_interaction(y_src, self.param("B"), self.param("k"), self.param("n"))
        if self.kind == "affine":
            return self.param("a") * y_src + self.param("b")
        raise AssertionError(self.kind)


@dataclass(frozen=True)
class NetworkDescriptor:
    """N subsystems, a feedback-free prescribed map and a cooperative
    unintended map.

    ``unintended`` is "none", "resource-competition", or a custom nonnegative
    zero-diagonal matrix (tuple of row tuples) applied as w = M d.
    """

    subsystems: tuple
    edges: tuple = ()
    unintended: Union[str, tuple] = "none"

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        object.__setattr__(self, "edges", tuple(self.edges))
        if not isinstance(self.unintended, str):
            mat = tuple(tuple(float(v) for v in row) for row in self.unintended)
            object.__setattr__(self, "unintended", mat)

    @property
    def n(self) -> int:
        return len(self.subsystems)

    def subsystem(self, index: int) -> SubsystemDescriptor:
        return self.subsystems[index - 1]

    def edges_into(self, index: int):
        return [e for e in self.edges if e.dst == index]


@dataclass(frozen=True)
class SimulationConfig:
    """Integration and steady-state detection settings."""

    t_final: float = 40.0
    initial_state: Union[str, tuple] = "default"
    solver: str = "adaptive-embedded"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    steady_state_window: float = 0.1
    steady_state_threshold: float = 1e-7
    dt: Optional[float] = None
    store_points: int = 400

    def __post_init__(self):
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.solver not in ("adaptive-embedded", "fixed-step"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not 0 < self.steady_state_window <= 1:
            raise ValueError("steady_state_window is a fraction of the horizon")
        if not self.steady_state_threshold > 0:
            raise ValueError("steady_state_threshold must be positive")
        if isinstance(self.initial_state, str):
            if self.initial_state != "default":
                raise ValueError("initial_state is 'default' or a vector")
        else:
            object.__setattr__(
                self, "initial_state", tuple(float(v) for v in self.initial_state)
            )


_VERDICTS = ("certified-bounded", "diverged", "inconclusive")


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of the discrete-time small-gain test."""

    verdict: str
    ultimate_box: Optional[IntervalBox] = None
    iterations_used: int = 0
    contraction_margin: Optional[float] = None
    admissible_set_membership: Optional[bool] = None

    def __post_init__(self):
        if self.verdict not in _VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if (self.verdict == "certified-bounded") != (self.ultimate_box is not None):
            raise ValueError("ultimate_box present iff verdict is certified-bounded")

    @property
    def certified(self) -> bool:
        return self.verdict == "certified-bounded"


def network_violations(net: NetworkDescriptor) -> list:
    """All structural violations of the interaction-map constraints."""
    issues = []
    n = net.n
    for pos, sub in enumerate(net.subsystems, start=1):
        if sub.index != pos:
            issues.append(
                ValidationIssue(
                    "BadIndex",
                    f"subsystem at position {pos} has index {sub.index}",
                    f"subsystems[{pos - 1}]",
                )
            )
    for k, e in enumerate(net.edges):
        loc = f"edges[{k}]"
        if not 1 <= e.dst <= n:
            issues.append(
                ValidationIssue("BadEdgeTarget", f"edge target {e.dst} out of range", loc)
            )
        if e.src is not None:
            if not 1 <= e.src <= n:
                issues.append(
                    ValidationIssue(
                        "BadEdgeSource", f"edge source {e.src} out of range", loc
                    )
                )
            elif e.src >= e.dst:
                issues.append(
                    ValidationIssue(
                        "EdgeNotForward",
                        f"edge {e.src}->{e.dst} must go from lower to higher index",
                        loc,
                    )
                )
    if not isinstance(net.unintended, str):
        mat = np.asarray(net.unintended, dtype=float)
        if mat.shape != (n, n):
            issues.append(
                ValidationIssue(
                    "BadDeltaShape",
                    f"custom unintended matrix is {mat.shape}, expected {(n, n)}",
                    "unintended",
                )
            )
        else:
            if np.any(mat < 0):
                i, j = np.unravel_index(int(np.argmin(mat)), mat.shape)
                issues.append(
                    ValidationIssue(
                        "NonCooperativeDelta",
                        f"negative entry M[{i}][{j}] = {mat[i, j]}",
                        "unintended",
                    )
                )
            if np.any(np.diag(mat) != 0):
                issues.append(
                    ValidationIssue(
                        "SelfCouplingDelta",
                        "unintended matrix must have zero diagonal",
                        "unintended",
                    )
                )
    elif net.unintended not in UNINTENDED_TAGS:
        issues.append(
            ValidationIssue(
                "UnknownDelta", f"unknown unintended tag {net.unintended!r}", "unintended"
            )
        )
    return issues


def validate_network(net: NetworkDescriptor) -> NetworkDescriptor:
    """Return the network unchanged if valid, else raise with all violations."""
    issues = network_violations(net)
    if issues:
        raise NetworkValidationError(issues)
    return net


def delta_matrix(net: NetworkDescriptor) -> np.ndarray:
    """Matrix M of the cooperative static map w = M d."""
    n = net.n
    if isinstance(net.unintended, str):
        if net.unintended == "none":
            return np.zeros((n, n))
        if net.unintended == "resource-competition":
            return np.ones((n, n)) - np.eye(n)
        raise ValueError(f"unknown unintended tag {net.unintended!r}")
    return np.asarray(net.unintended, dtype=float)


def apply_unintended(net: NetworkDescriptor, d) -> np.ndarray:
    return delta_matrix(net) @ np.asarray(d, dtype=float)


def _replace_subs(net, repl: Callable[[SubsystemDescriptor], SubsystemDescriptor]):
    return dataclasses.replace(net, subsystems=tuple(repl(s) for s in net.subsystems))


def with_epsilon(net: NetworkDescriptor, epsilon: float) -> NetworkDescriptor:
    """All subsystems share the given disturbance-attenuation parameter."""
    return _replace_subs(net, lambda s: dataclasses.replace(s, epsilon=float(epsilon)))


def with_nu(net: NetworkDescriptor, nu: float) -> NetworkDescriptor:
    """All subsystems share the given timescale parameter."""
    return _replace_subs(net, lambda s: dataclasses.replace(s, nu=float(nu)))


def with_reference(net: NetworkDescriptor, r0: float) -> NetworkDescriptor:
    """Set every constant source edge to the given reference value."""
    edges = tuple(
        dataclasses.replace(e, params={"r_star": float(r0)}) if e.kind == "constant" else e
        for e in net.edges
    )
    return dataclasses.replace(net, edges=edges)
