"""Tabular Markov control processes, reward features and built-in environments.

An MCP is stored densely: ``transitions[s, a, s']`` and ``features[s, a, s', i]``.
Terminal states are absorbing with zero features, so discounted quantities are
well defined without episode bookkeeping.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

ATOL = 1e-12

# Dense (S, A, S) tensors; beyond this the item grid is no longer desk-scale.
MAX_DENSE_STATES = 1024


class MDPError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TabularMCP:
    transitions: np.ndarray
    initial_dist: np.ndarray
    discount: float
    terminal_states: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=float)
        mu = np.asarray(self.initial_dist, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise MDPError(f"transitions must have shape (S, A, S), got {P.shape}")
        if mu.shape != (P.shape[0],):
            raise MDPError(f"initial_dist has shape {mu.shape}, expected ({P.shape[0]},)")
        if not 0.0 <= self.discount < 1.0:
            raise MDPError(f"discount must lie in [0, 1), got {self.discount}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > ATOL):
            raise MDPError("every transition row must be a probability distribution")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > ATOL:
            raise MDPError("initial_dist must be a probability distribution")
        terminal = frozenset(int(s) for s in self.terminal_states)
        for s in terminal:
            if not np.all(P[s, :, s] == 1.0):
                raise MDPError(f"terminal state {s} is not absorbing")
        P.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "initial_dist", mu)
        object.__setattr__(self, "terminal_states", terminal)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.terminal_states)] = True
        return mask


@dataclass(frozen=True, eq=False)
class FeatureMap:
    features: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.features, dtype=float)
        if phi.ndim != 4 or phi.shape[0] != phi.shape[2]:
            raise MDPError(f"features must have shape (S, A, S, d), got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise MDPError("features must be finite")
        phi.setflags(write=False)
        object.__setattr__(self, "features", phi)

    @property
    def dim(self) -> int:
        return self.features.shape[-1]

    def expected(self, mcp: TabularMCP) -> np.ndarray:
        """Expected one-step features E[phi(s, a, S')] with shape (S, A, d)."""
        return np.einsum("ijk,ijkl->ijl", mcp.transitions, self.features)


def check_features(mcp: TabularMCP, phi: FeatureMap) -> None:
    if phi.features.shape[:3] != mcp.transitions.shape:
        raise MDPError(
            f"feature tensor {phi.features.shape[:3]} does not match MCP {mcp.transitions.shape}"
        )
    for s in mcp.terminal_states:
        if np.any(phi.features[s] != 0):
            raise MDPError(f"features out of terminal state {s} must be zero")


@dataclass(frozen=True)
class TaskWeight:
    w: tuple
    kind: str = "convex"

    def __post_init__(self):
        w = tuple(float(x) for x in np.asarray(self.w, dtype=float).ravel())
        object.__setattr__(self, "w", w)
        if self.kind not in ("convex", "linear"):
            raise MDPError(f"unknown task kind {self.kind!r}")
        if self.kind == "convex":
            arr = np.array(w)
            if np.any(arr < 0) or abs(arr.sum() - 1.0) > ATOL:
                raise MDPError(f"convex task weights must lie on the simplex, got {w}")

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.w)

    def __len__(self):
        return len(self.w)


def as_weight(w) -> np.ndarray:
    if isinstance(w, TaskWeight):
        return w.vector
    return np.asarray(w, dtype=float)


@dataclass(frozen=True, eq=False)
class NonlinearReward:
    """Arbitrary reward table r[s, a, s'] that is not a fixed linear function of the features."""

    reward: np.ndarray
    name: str = "nonlinear"
    nonlinear: bool = True

    def __post_init__(self):
        r = np.asarray(self.reward, dtype=float)
        if r.ndim != 3 or not np.all(np.isfinite(r)):
            raise MDPError("reward must be a finite (S, A, S) table")
        r.setflags(write=False)
        object.__setattr__(self, "reward", r)


def task_reward(phi: FeatureMap, w) -> np.ndarray:
    """Reward table r[s, a, s'] = phi(s, a, s') . w."""
    w = as_weight(w)
    if w.shape != (phi.dim,):
        raise MDPError(f"feature dim {phi.dim} does not match weight dim {w.shape[0]}")
    return phi.features @ w


def reachable_states(mcp: TabularMCP) -> np.ndarray:
    """Boolean mask of states reachable from the support of mu under some action sequence."""
    adj = mcp.transitions.sum(axis=1) > 0
    seen = mcp.initial_dist > 0
    frontier = seen.copy()
    while frontier.any():
        nxt = adj[frontier].any(axis=0) & ~seen
        seen |= nxt
        frontier = nxt
    return seen


# ---------------------------------------------------------------------------
# Built-in environments

# phi(s_i) for the arm landing in s_i; s4 = [1, 1] sits strictly inside the
# convex hull of the other three, so no direction z ever prefers it.
COUNTEREXAMPLE_FEATURES = np.array([[0.0, 0.5], [2.0, 1.0], [1.0, 2.0], [1.0, 1.0]])


def build_counterexample(discount: float = 0.9):
    """Five-state MDP: s0 has four deterministic arms a1..a4 into terminal states s1..s4."""
    n = 5
    P = np.zeros((n, 4, n))
    phi = np.zeros((n, 4, n, 2))
    for a in range(4):
        P[0, a, a + 1] = 1.0
        phi[0, a, a + 1] = COUNTEREXAMPLE_FEATURES[a]
    for s in range(1, n):
        P[s, :, s] = 1.0
    mu = np.zeros(n)
    mu[0] = 1.0
    mcp = TabularMCP(P, mu, discount, frozenset(range(1, n)))
    return mcp, FeatureMap(phi)


def counterexample_reward(mcp: TabularMCP, phi: FeatureMap) -> NonlinearReward:
    """State-dependent task: weight [1,0] at s1, [-1,-1] at s2 and s3, [1,1] at s4."""
    state_w = {1: [1.0, 0.0], 2: [-1.0, -1.0], 3: [-1.0, -1.0], 4: [1.0, 1.0]}
    r = np.zeros(mcp.transitions.shape)
    for s_next, w in state_w.items():
        r[:, :, s_next] = phi.features[:, :, s_next] @ np.array(w)
    return NonlinearReward(r, name="counterexample")


# UP, DOWN, LEFT, RIGHT as (drow, dcol)
GRID_MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True, eq=False)
class ItemGridLayout:
    width: int
    height: int
    items: tuple  # ((row, col, type), ...)
    start: tuple
    toroidal: bool

    def encode(self, pos: int, mask: int) -> int:
        return mask * self.width * self.height + pos

    def decode(self, s: int) -> tuple:
        n = self.width * self.height
        return s % n, s // n

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def terminal(self) -> int:
        return self.width * self.height * (1 << self.n_items)


def item_grid_layout(width, height, items_per_type, toroidal=False, seed=0) -> ItemGridLayout:
    rng = np.random.default_rng(seed)
    cells = rng.permutation(width * height)[: 2 * items_per_type + 1]
    start = divmod(int(cells[0]), width)
    items = []
    for k, c in enumerate(cells[1:]):
        r, col = divmod(int(c), width)
        items.append((r, col, k // items_per_type))
    return ItemGridLayout(width, height, tuple(items), start, toroidal)


def build_item_grid(width, height, items_per_type, toroidal=False, seed=0, discount=0.95):
    """Two-type item collection grid; returns (mcp, phi, layout).

    State = (agent cell, bitmask of items still present) plus one absorbing
    terminal reached once every item has been collected.
    """
    if width < 1 or height < 1 or items_per_type < 1:
        raise MDPError("width, height and items_per_type must be positive")
    n_cells = width * height
    if 2 * items_per_type + 1 > n_cells:
        raise MDPError(f"{2 * items_per_type} items and a start cell do not fit in {n_cells} cells")
    n_states = n_cells * (1 << (2 * items_per_type)) + 1
    if n_states > MAX_DENSE_STATES:
        raise MDPError(
            f"item grid needs {n_states} states, above the dense limit of {MAX_DENSE_STATES}"
        )
    layout = item_grid_layout(width, height, items_per_type, toroidal, seed)
    item_at = {r * width + c: (k, t) for k, (r, c, t) in enumerate(layout.items)}
    full = (1 << layout.n_items) - 1
    terminal = layout.terminal

    P = np.zeros((n_states, 4, n_states))
    phi = np.zeros((n_states, 4, n_states, 2))
    for mask in range(full + 1):
        for pos in range(n_cells):
            s = layout.encode(pos, mask)
            row, col = divmod(pos, width)
            for a, (dr, dc) in enumerate(GRID_MOVES):
                nr, nc = row + dr, col + dc
                if toroidal:
                    nr, nc = nr % height, nc % width
                elif not (0 <= nr < height and 0 <= nc < width):
                    nr, nc = row, col
                npos = nr * width + nc
                nmask = mask
                hit = item_at.get(npos)
                if hit is not None and mask >> hit[0] & 1:
                    nmask = mask & ~(1 << hit[0])
                s_next = terminal if nmask == 0 else layout.encode(npos, nmask)
                P[s, a, s_next] = 1.0
                if nmask != mask:
                    phi[s, a, s_next, hit[1]] = 1.0
    P[terminal, :, terminal] = 1.0
    mu = np.zeros(n_states)
    mu[layout.encode(layout.start[0] * width + layout.start[1], full)] = 1.0
    mcp = TabularMCP(P, mu, discount, frozenset({terminal}))
    return mcp, FeatureMap(phi), layout


def sequential_item_reward(mcp: TabularMCP, phi: FeatureMap, layout: ItemGridLayout,
                           first_type: int = 0) -> NonlinearReward:
    """Reward 1 per item of ``first_type``; an item of the other type pays 1 only once
    every ``first_type`` item is gone and 0 if collected early."""
    first_bits = sum(1 << k for k, (_, _, t) in enumerate(layout.items) if t == first_type)
    other = 1 - first_type
    done_first = np.zeros(mcp.n_states)
    for s in range(mcp.n_states):
        if s not in mcp.terminal_states and layout.decode(s)[1] & first_bits == 0:
            done_first[s] = 1.0
    r = phi.features[..., first_type] + phi.features[..., other] * done_first[:, None, None]
    return NonlinearReward(r, name=f"sequential-type{first_type}-first")


def build_random_mcp(seed, n_states, n_actions, d, discount=0.9, branching=2):
    """Random dense MCP with ``branching`` successors per (s, a) and uniform [0,1]^d features."""
    if n_states < 1 or n_actions < 1:
        raise MDPError("n_states and n_actions must be positive")
    if d < 2:
        raise MDPError(f"feature dimension must be at least 2, got {d}")
    if not 1 <= branching <= n_states:
        raise MDPError(f"branching must lie in [1, {n_states}], got {branching}")
    rng = np.random.default_rng(seed)
    P = np.zeros((n_states, n_actions, n_states))
    for s, a in itertools.product(range(n_states), range(n_actions)):
        succ = rng.choice(n_states, size=branching, replace=False)
        p = rng.gamma(1.0, size=branching) + 1e-3
        P[s, a, succ] = p / p.sum()
    # renormalise against rounding so rows sum to 1 within 1e-12
    P /= P.sum(axis=2, keepdims=True)
    phi = rng.uniform(0.0, 1.0, size=(n_states, n_actions, n_states, d))
    phi = phi * (P > 0)[..., None]
    mu = np.zeros(n_states)
    mu[0] = 1.0
    return TabularMCP(P, mu, discount), FeatureMap(phi)


def build_corridors(payoffs, length=3, discount=0.9):
    """Independent corridors sharing no states.

    Action 0 stays put everywhere with zero features. From s0, action i+1
    enters corridor i; inside a corridor any other action advances one cell,
    and leaving the last cell pays ``payoffs[i]`` and ends the episode. A
    policy that never walks a corridor carries no information about it.
    """
    payoffs = np.atleast_2d(np.asarray(payoffs, dtype=float))
    k, d = payoffs.shape
    if k < 1 or length < 1:
        raise MDPError("need at least one corridor of positive length")
    n_states = 1 + k * length + 1
    terminal = n_states - 1
    n_actions = k + 1
    P = np.zeros((n_states, n_actions, n_states))
    phi = np.zeros((n_states, n_actions, n_states, d))
    P[:, 0, :] = np.eye(n_states)
    for i in range(k):
        first = 1 + i * length
        P[0, i + 1, first] = 1.0
        for j in range(length):
            s = first + j
            nxt = s + 1 if j < length - 1 else terminal
            P[s, 1:, nxt] = 1.0
            if nxt == terminal:
                phi[s, 1:, terminal] = payoffs[i]
    P[terminal, :, terminal] = 1.0
    mu = np.zeros(n_states)
    mu[0] = 1.0
    return TabularMCP(P, mu, discount, frozenset({terminal})), FeatureMap(phi)
