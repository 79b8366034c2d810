"""Directed leader-follower graphs and the semi-Markov topology switcher.

Node 0 is the virtual leader; followers are 1..n. Edge (j -> i) means agent i
receives from j. Graph ensembles are validated at load time: every graph must
have a leader-rooted spanning tree and the jump-chain transition matrix must
be irreducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TopologyValidationError(ValueError):
    """Raised when a graph ensemble or switcher violates its connectivity
    assumptions (leader-rooted spanning tree / irreducible jump chain)."""


@dataclass(frozen=True)
class Digraph:
    """Weighted follower digraph plus leader links.

    ``adjacency[i, j] = a_ij > 0`` iff follower i receives from follower j
    (1-based agents stored 0-based); ``leader_links[i] = a_i0``.
    """

    adjacency: np.ndarray
    leader_links: np.ndarray
    name: str = ""

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=np.float64)
        L0 = np.asarray(self.leader_links, dtype=np.float64)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "leader_links", L0)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be square")
        if L0.shape != (A.shape[0],):
            raise ValueError("leader_links length must match agent count")
        if np.any(A < 0) or np.any(L0 < 0):
            raise ValueError("edge weights must be nonnegative")
        if np.any(np.diag(A) != 0):
            raise ValueError("adjacency diagonal must be zero (no self edges)")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def inclusive_adjacency(self) -> np.ndarray:
        """0/1 adjacency with self-loops: a_check[i, j] = 1 iff j in the
        inclusive neighborhood of i (a_ij > 0 or j == i)."""
        a_check = (self.adjacency > 0).astype(np.float64)
        np.fill_diagonal(a_check, 1.0)
        return a_check


def follower_laplacian(g: Digraph) -> np.ndarray:
    """Follower block of the leader-augmented Laplacian: diag of row sums
    including leader links, minus the adjacency."""
    d = g.adjacency.sum(axis=1) + g.leader_links
    return np.diag(d) - g.adjacency


def has_leader_rooted_spanning_tree(g: Digraph) -> bool:
    """True iff every follower is reachable from the leader along the
    information-flow direction (j -> i when a_ij > 0)."""
    n = g.n
    reached = g.leader_links > 0
    frontier = list(np.flatnonzero(reached))
    while frontier:
        j = frontier.pop()
        for i in np.flatnonzero(g.adjacency[:, j] > 0):
            if not reached[i]:
                reached[i] = True
                frontier.append(i)
    return bool(reached.all())


def is_irreducible(P: np.ndarray) -> bool:
    """True iff the directed graph of positive transition probabilities is
    strongly connected (checked by forward/backward reachability from state 0)."""
    P = np.asarray(P)
    N = P.shape[0]

    def reachable(adj):
        seen = np.zeros(N, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(adj[i] > 0):
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        return seen

    return bool(reachable(P).all() and reachable(P.T).all())


class TopologyEnsemble:
    """The fixed graph set {G_r} with cached follower Laplacians and their
    extreme singular values. Immutable after construction."""

    def __init__(self, graphs: list[Digraph]):
        if not graphs:
            raise TopologyValidationError("ensemble must contain at least one graph")
        n = graphs[0].n
        for idx, g in enumerate(graphs):
            if g.n != n:
                raise TopologyValidationError("all graphs must have the same agent count")
            if not has_leader_rooted_spanning_tree(g):
                raise TopologyValidationError(
                    f"graph {g.name or idx} has no leader-rooted spanning tree "
                    "(every follower must be reachable from the leader)"
                )
        self.graphs = list(graphs)
        self.n = n
        self.laplacians = [follower_laplacian(g) for g in graphs]
        svals = [np.linalg.svd(L, compute_uv=False) for L in self.laplacians]
        self.sigma_min = np.array([s[-1] for s in svals])
        self.sigma_max = np.array([s[0] for s in svals])
        if np.any(self.sigma_min <= 0):
            raise TopologyValidationError("every follower Laplacian must have sigma_min > 0")

    def __len__(self) -> int:
        return len(self.graphs)


@dataclass
class SemiMarkovSwitcher:
    """Semi-Markov jump process over graph indices.

    The embedded chain jumps per the row-stochastic matrix ``transition``
    (zero diagonal) and holds each state for an Exp(rate) sojourn time.
    Stateful and single-owner; ``advance`` must be called with nondecreasing
    times and is deterministic under a fixed seed.
    """

    transition: np.ndarray
    rate: float
    initial_distribution: np.ndarray | None = None
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=np.float64)
        self.transition = P
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise TopologyValidationError("transition matrix must be square")
        if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise TopologyValidationError("transition matrix rows must sum to 1")
        if np.any(np.diag(P) != 0):
            raise TopologyValidationError("transition matrix diagonal must be zero")
        if np.any(P < 0):
            raise TopologyValidationError("transition probabilities must be nonnegative")
        if not is_irreducible(P):
            raise TopologyValidationError("transition matrix must be irreducible")
        if self.rate <= 0:
            raise TopologyValidationError("sojourn rate must be positive")
        if self.initial_distribution is not None:
            pi0 = np.asarray(self.initial_distribution, dtype=np.float64)
            pi0 = pi0 / pi0.sum()
            self.initial_distribution = pi0
        self.reset()

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    def reset(self, seed: int | None = None):
        """Re-seed and draw the initial state and first sojourn deadline."""
        if seed is not None:
            self.seed = seed
        self._rng = np.random.default_rng(self.seed)
        if self.initial_distribution is not None:
            self.state = int(self._rng.choice(self.num_states, p=self.initial_distribution))
        else:
            self.state = 0
        self._deadline = self._rng.exponential(1.0 / self.rate)
        self._last_t = 0.0

    def advance(self, t: float) -> int:
        """State index active at time t (right-continuous, piecewise constant)."""
        if t < self._last_t:
            raise ValueError(f"advance called with decreasing time: {t} < {self._last_t}")
        self._last_t = t
        while t >= self._deadline:
            self.state = int(self._rng.choice(self.num_states, p=self.transition[self.state]))
            self._deadline += self._rng.exponential(1.0 / self.rate)
        return self.state

    def sample_jumps(self, n_jumps: int):
        """Run the embedded chain ``n_jumps`` jumps ahead.

        Returns (states, sojourns): the state entered at each jump and the
        sojourn time drawn for it. Statistically identical to driving
        :meth:`advance` past each deadline, without scanning wall-clock
        time; the process continues from the last jump afterwards.
        """
        states = np.empty(n_jumps, dtype=np.int64)
        sojourns = np.empty(n_jumps)
        for k in range(n_jumps):
            self.state = int(self._rng.choice(self.num_states, p=self.transition[self.state]))
            sojourn = self._rng.exponential(1.0 / self.rate)
            self._deadline += sojourn
            states[k] = self.state
            sojourns[k] = sojourn
        return states, sojourns


def ensemble_from_dict(data: dict) -> tuple[TopologyEnsemble, dict]:
    """Build a validated ensemble plus switcher settings from a parsed
    topology preset (see presets/*.yaml for the format)."""
    n = int(data["n"])
    graphs = []
    for gspec in data["graphs"]:
        A = np.zeros((n, n))
        for j, i, w in gspec.get("edges", []):
            if not (1 <= i <= n and 1 <= j <= n):
                raise TopologyValidationError(f"edge ({j}->{i}) out of range for n={n}")
            A[i - 1, j - 1] = float(w)
        L0 = np.asarray(gspec.get("leader_links", [0.0] * n), dtype=np.float64)
        graphs.append(Digraph(adjacency=A, leader_links=L0, name=str(gspec.get("name", ""))))
    ensemble = TopologyEnsemble(graphs)
    switcher_cfg = dict(data.get("switcher", {}))
    return ensemble, switcher_cfg


def make_switcher(switcher_cfg: dict, num_graphs: int, seed: int = 0) -> SemiMarkovSwitcher | None:
    """Switcher for an ensemble; None for a single fixed graph."""
    if num_graphs == 1:
        return None
    P = np.asarray(switcher_cfg["transition_matrix"], dtype=np.float64)
    if P.shape != (num_graphs, num_graphs):
        raise TopologyValidationError(
            f"transition matrix is {P.shape} but the ensemble has {num_graphs} graphs"
        )
    return SemiMarkovSwitcher(
        transition=P,
        rate=float(switcher_cfg.get("sojourn_rate", 0.5)),
        initial_distribution=switcher_cfg.get("initial_distribution"),
        seed=int(switcher_cfg.get("seed", seed)),
    )
