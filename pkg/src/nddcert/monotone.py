"""Monotonicity structure: sampled sign-stability of Jacobians, incidence
graphs, undirected negative-cycle detection via two-coloring, and canonical
decomposition functions for bracketing a map between ordered evaluations.

Sign patterns are established empirically: central finite differences at
quasi-random points of the declared domain.  Unbounded domain coordinates are
truncated at a cap and sampled log-spaced, which makes the verdict sound only
on the sampled region; analysis results carry a ``domain_truncated`` flag so
reports can surface the caveat.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .core import IntervalBox, SignedStructure
from .families import get_family

__all__ = [
    "SignUnstableError",
    "sample_sign_pattern",
    "IncidenceGraph",
    "build_incidence_graph",
    "MonotoneVerdict",
    "detect_negative_undirected_cycle",
    "canonical_decomposition",
    "compose_decompositions",
    "box_propagate",
    "DecompositionError",
    "SignAnalysis",
    "subsystem_sign_analysis",
]

DEFAULT_SAMPLES = 256
DEFAULT_FD_STEP = 1e-6
DEFAULT_DEADBAND = 1e-9
DOMAIN_CAP = 1e3
_LOG_FLOOR = 1e-3


class SignUnstableError(ValueError):
    """Opposite strict derivative signs observed for one Jacobian entry."""

    def __init__(self, row, col, point_pos, point_neg):
        self.row = int(row)
        self.col = int(col)
        self.point_pos = np.asarray(point_pos)
        self.point_neg = np.asarray(point_neg)
        super().__init__(
            f"partial ({row},{col}) changes sign: positive at "
            f"{self.point_pos.tolist()}, negative at {self.point_neg.tolist()}"
        )


def _truncate_domain(domain: IntervalBox, cap: float):
    """Clip infinite bounds at +-cap; report which coordinates were clipped."""
    lo = domain.lower.copy()
    hi = domain.upper.copy()
    truncated = ~np.isfinite(lo) | ~np.isfinite(hi)
    lo[~np.isfinite(lo)] = -cap
    hi[~np.isfinite(hi)] = cap
    return lo, hi, bool(truncated.any()), truncated


def _sample_points(lo, hi, truncated_mask, n_samples, seed):
    """Halton points; truncated coordinates get log-spaced offsets from lo."""
    dim = lo.size
    sampler = qmc.Halton(d=dim, scramble=True, seed=seed)
    u = sampler.random(n_samples)
    # keep finite-difference stencils strictly inside the domain
    u = 1e-4 + u * (1 - 2e-4)
    pts = np.empty_like(u)
    for j in range(dim):
        if truncated_mask[j]:
            span = hi[j] - lo[j]
            pts[:, j] = lo[j] + np.expm1(u[:, j] * np.log1p(span / _LOG_FLOOR)) * _LOG_FLOOR
        else:
            pts[:, j] = lo[j] + u[:, j] * (hi[j] - lo[j])
    return pts


def sample_sign_pattern(
    rhs: Callable[[np.ndarray], np.ndarray],
    domain: IntervalBox,
    n_samples: int = DEFAULT_SAMPLES,
    fd_step: float = DEFAULT_FD_STEP,
    tau_zero: float = DEFAULT_DEADBAND,
    seed: int = 0,
    cap: float = DOMAIN_CAP,
) -> SignedStructure:
    """Observed sign pattern of d(rhs)/d(coordinate) over the sampled domain.

    Entries whose derivative magnitude never exceeds tau_zero are recorded as
    structural zeros.  Raises SignUnstableError with two witness points when
    strict opposite signs show up.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lo, hi, _, truncated_mask = _truncate_domain(domain, cap)
    pts = _sample_points(lo, hi, truncated_mask, n_samples, seed)
    dim = domain.dim
    f0 = np.asarray(rhs(pts[0]), dtype=float)
    n_out = f0.size

    signs = np.zeros((n_out, dim), dtype=int)
    pos_witness = {}
    neg_witness = {}
    for xi in pts:
        for j in range(dim):
            h = fd_step * (1.0 + abs(xi[j]))
            xp = xi.copy()
            xm = xi.copy()
            xp[j] += h
            xm[j] -= h
            deriv = (np.asarray(rhs(xp), float) - np.asarray(rhs(xm), float)) / (2 * h)
            for i in range(n_out):
                if deriv[i] > tau_zero:
                    pos_witness.setdefault((i, j), xi.copy())
                    if signs[i, j] < 0:
                        raise SignUnstableError(i, j, xi, neg_witness[(i, j)])
                    signs[i, j] = 1
                elif deriv[i] < -tau_zero:
                    neg_witness.setdefault((i, j), xi.copy())
                    if signs[i, j] > 0:
                        raise SignUnstableError(i, j, pos_witness[(i, j)], xi)
                    signs[i, j] = -1
    return SignedStructure(signs)


@dataclass(frozen=True)
class IncidenceGraph:
    """Signed digraph of observed dependencies among state/input coordinates.

    ``nodes`` are (label, role) pairs with role "state" or "input"; ``edges``
    are (src_node, dst_node, sign) index triples.  An edge src -> dst exists
    iff the sampled partial of the dst state's dynamics w.r.t. the src
    coordinate is nonzero.
    """

    nodes: tuple
    edges: tuple

    def node_index(self, label: str) -> int:
        for i, (lab, _) in enumerate(self.nodes):
            if lab == label:
                return i
        raise KeyError(label)

    def self_loops(self):
        return [e for e in self.edges if e[0] == e[1]]

    def without_self_loops(self) -> "IncidenceGraph":
        return IncidenceGraph(self.nodes, tuple(e for e in self.edges if e[0] != e[1]))


def build_incidence_graph(
    pattern: SignedStructure,
    state_labels: Optional[Sequence[str]] = None,
    input_labels: Optional[Sequence[str]] = None,
) -> IncidenceGraph:
    """Graph over [states, inputs] induced by a sampled sign pattern.

    The pattern rows are the state dynamics; columns are states followed by
    inputs.  Self-dependencies (diagonal) become self-loops, which the cycle
    test later discards.
    """
    n_states = pattern.n_out
    n_inputs = pattern.n_in - n_states
    if n_inputs < 0:
        raise ValueError("pattern has fewer columns than dynamics rows")
    state_labels = tuple(state_labels or (f"x{i}" for i in range(n_states)))
    input_labels = tuple(input_labels or (f"u{k}" for k in range(n_inputs)))
    if len(state_labels) != n_states or len(input_labels) != n_inputs:
        raise ValueError("label counts do not match the pattern shape")
    nodes = tuple((lab, "state") for lab in state_labels) + tuple(
        (lab, "input") for lab in input_labels
    )
    edges = []
    for i in range(n_states):  # row i: dynamics of state i
        for j in range(pattern.n_in):  # column j: coordinate j
            s = int(pattern.lam[i, j])
            if s != 0:
                edges.append((j, i, s))  # j -> state i
    return IncidenceGraph(nodes, tuple(edges))


@dataclass(frozen=True)
class MonotoneVerdict:
    monotone: bool
    sigma_u: Optional[tuple] = None
    sigma_x: Optional[tuple] = None
    witness_cycle: Optional[tuple] = None  # node labels, first == last

    def structure(self) -> SignedStructure:
        if not self.monotone:
            raise ValueError("no order structure: system is not order-preserving")
        return SignedStructure.from_orders(self.sigma_u, self.sigma_x)


def detect_negative_undirected_cycle(g: IncidenceGraph) -> MonotoneVerdict:
    """Two-coloring consistency sweep over the undirected signed graph.

    Self-loops are exempt (a state's own decay does not constrain the order).
    Returns inferred orders (sigma_u; sigma_x) on success, or a witness cycle
    whose sign product is negative.  The verdict is independent of node
    visitation order: components are rooted at their lowest-index state node
    (lowest-index node if the component has no states) with color +1.
    """
    g = g.without_self_loops()
    n = len(g.nodes)
    adj = [[] for _ in range(n)]
    for a, b, s in g.edges:
        adj[a].append((b, s))
        adj[b].append((a, s))
    for nbrs in adj:
        nbrs.sort()

    color = [0] * n
    parent = [-1] * n
    parent_sign = [1] * n

    def walk_up(v):
        path = [v]
        while parent[path[-1]] != -1:
            path.append(parent[path[-1]])
        return path

    def witness(u, v):
        # cycle through the BFS tree: u ... root ... v plus the closing edge
        pu, pv = walk_up(u), walk_up(v)
        anc = None
        set_u = set(pu)
        for node in pv:
            if node in set_u:
                anc = node
                break
        up = pu[: pu.index(anc) + 1]
        down = pv[: pv.index(anc)][::-1]
        cycle = [v] + up + down
        return tuple(g.nodes[i][0] for i in cycle)

    state_first = sorted(range(n), key=lambda i: (g.nodes[i][1] != "state", i))
    for root in state_first:
        if color[root] != 0:
            continue
        color[root] = 1
        queue = [root]
        while queue:
            u = queue.pop(0)
            for v, s in adj[u]:
                want = color[u] * s
                if color[v] == 0:
                    color[v] = want
                    parent[v] = u
                    parent_sign[v] = s
                    queue.append(v)
                elif color[v] != want:
                    return MonotoneVerdict(False, witness_cycle=witness(u, v))

    sigma_x = tuple(c for c, (_, role) in zip(color, g.nodes) if role == "state")
    sigma_u = tuple(c for c, (_, role) in zip(color, g.nodes) if role == "input")
    return MonotoneVerdict(True, sigma_u=sigma_u, sigma_x=sigma_x)


class DecompositionError(RuntimeError):
    """A decomposition evaluator produced an inverted bracket."""


def canonical_decomposition(f: Callable, structure: SignedStructure) -> Callable:
    """Evaluator fhat(x_plus, x_minus) built from f and its sign pattern.

    Row i of fhat evaluates f_i with the coordinates carrying a nonnegative
    partial taken from x_plus and the rest from x_minus; fhat(x, x) = f(x).
    """
    lam = structure.lam
    n_out, n_in = lam.shape
    take_plus = lam >= 0  # structural zeros may come from either side

    def fhat(x_plus, x_minus):
        xp = np.atleast_1d(np.asarray(x_plus, dtype=float))
        xm = np.atleast_1d(np.asarray(x_minus, dtype=float))
        if xp.shape != (n_in,) or xm.shape != (n_in,):
            raise ValueError(f"expected argument vectors of length {n_in}")
        out = np.empty(n_out)
        for i in range(n_out):
            arg = np.where(take_plus[i], xp, xm)
            out[i] = np.asarray(f(arg), dtype=float).reshape(-1)[i]
        return out

    return fhat


def compose_decompositions(f_hat: Callable, g_hat: Callable) -> Callable:
    """Decomposition of f o g: hhat(x1, x2) = fhat(ghat(x1, x2), ghat(x2, x1))."""

    def hhat(x1, x2):
        inner = g_hat(x1, x2)
        inner_swapped = g_hat(x2, x1)
        return f_hat(inner, inner_swapped)

    return hhat


def box_propagate(f_hat: Callable, box: IntervalBox) -> IntervalBox:
    """Image bracket [fhat(lower, upper), fhat(upper, lower)] of a box."""
    lo = f_hat(box.lower, box.upper)
    hi = f_hat(box.upper, box.lower)
    if np.any(lo > hi):
        raise DecompositionError(
            f"propagated bracket inverted: lower={np.asarray(lo).tolist()} "
            f"upper={np.asarray(hi).tolist()}"
        )
    return IntervalBox(lo, hi)


@dataclass(frozen=True)
class SignAnalysis:
    """Per-subsystem monotonicity report."""

    index: int
    reduced: bool
    pattern: SignedStructure
    graph: IncidenceGraph
    verdict: MonotoneVerdict
    domain_truncated: bool
    state_labels: tuple
    input_labels: tuple


_ANALYSIS_CACHE: dict = {}


def subsystem_sign_analysis(
    sub,
    reduced: bool = True,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> SignAnalysis:
    """Sampled sign pattern, incidence graph and order verdict for a subsystem.

    Uses the (reduced) dynamics as a map of [states, r, w].  Results are cached
    per descriptor; descriptors are immutable so the cache stays valid.
    """
    key = (sub, reduced, n_samples, seed)
    if key in _ANALYSIS_CACHE:
        return _ANALYSIS_CACHE[key]
    fam = get_family(sub.kind)
    sdom = fam.state_domain(sub, reduced)
    udom = fam.input_domain(sub)
    domain = IntervalBox(
        np.concatenate([sdom.lower, udom.lower]), np.concatenate([sdom.upper, udom.upper])
    )
    nx = sdom.dim
    rhs = fam.rhs_reduced if reduced else fam.rhs_full

    def field(xi):
        return rhs(sub, xi[:nx], xi[nx], xi[nx + 1])

    pattern = sample_sign_pattern(field, domain, n_samples=n_samples, seed=seed)
    labels = fam.reduced_labels(sub) if reduced else fam.state_labels(sub)
    graph = build_incidence_graph(pattern, labels, ("r", "w"))
    verdict = detect_negative_undirected_cycle(graph)
    _, _, truncated, _ = _truncate_domain(domain, DOMAIN_CAP)
    result = SignAnalysis(
        index=sub.index,
        reduced=reduced,
        pattern=pattern,
        graph=graph,
        verdict=verdict,
        domain_truncated=truncated,
        state_labels=tuple(labels),
        input_labels=("r", "w"),
    )
    _ANALYSIS_CACHE[key] = result
    return result
