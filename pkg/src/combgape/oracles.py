"""Exact offline solvers and perturb-and-solve action-class generators.

Two combinatorial problems back the experiments:

* unbounded knapsack (integer item counts, capacity ``W``), solved by a DP over
  capacities;
* balanced transportation problems, solved by the transportation simplex
  (northwest-corner start, MODI potentials, Bland's rule while pivots are
  degenerate).

The generators draw perturbed objective vectors, solve each exactly and keep
the distinct solutions as the candidate action class.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import DEDUPE_TOL, ActionClass

MAX_GENERATION_ATTEMPTS = 10
FEAS_TOL = 1e-9


class GenerationError(RuntimeError):
    """Perturb-and-solve failed to produce at least two distinct actions."""


class CostMatrixError(ValueError):
    """Malformed cost-matrix file."""


# ---------------------------------------------------------------------------
# knapsack


@dataclass(frozen=True)
class KnapsackSpec:
    weights: tuple[int, ...]
    values: tuple[float, ...]
    capacity: int

    def __post_init__(self) -> None:
        weights = tuple(int(w) for w in self.weights)
        values = tuple(float(v) for v in self.values)
        if len(weights) != len(values) or not weights:
            raise ValueError("weights and values must be nonempty and of equal length")
        if min(weights) < 1:
            raise ValueError("weights must be >= 1")
        if int(self.capacity) < 0:
            raise ValueError("capacity must be >= 0")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "capacity", int(self.capacity))

    @property
    def d(self) -> int:
        return len(self.weights)


def solve_unbounded_knapsack(spec: KnapsackSpec) -> NDArray[np.int64]:
    """Optimal item counts for the unbounded knapsack.

    ``best[c]`` is the best value of any packing of weight at most ``c``.
    Reconstruction walks down from ``W`` and, at each capacity, takes the
    lowest-index item that reproduces ``best[c]``; if none does the capacity
    is slack and is decremented.
    """
    W, w, v = spec.capacity, spec.weights, spec.values
    best = [0.0] * (W + 1)
    for c in range(1, W + 1):
        b = best[c - 1]
        for s in range(spec.d):
            if w[s] <= c:
                cand = best[c - w[s]] + v[s]
                if cand > b:
                    b = cand
        best[c] = b

    counts = np.zeros(spec.d, dtype=np.int64)
    c = W
    while c > 0:
        for s in range(spec.d):
            if w[s] <= c and best[c - w[s]] + v[s] == best[c]:
                counts[s] += 1
                c -= w[s]
                break
        else:
            c -= 1
    return counts


def knapsack_value(spec: KnapsackSpec, counts: ArrayLike) -> float:
    return float(np.dot(np.asarray(spec.values), np.asarray(counts, dtype=np.float64)))


# ---------------------------------------------------------------------------
# transportation problem


@dataclass(frozen=True, eq=False)
class TransportSpec:
    cost: NDArray[np.float64]
    supply: NDArray[np.float64]
    demand: NDArray[np.float64]

    def __post_init__(self) -> None:
        cost = np.array(self.cost, dtype=np.float64)
        supply = np.array(self.supply, dtype=np.float64)
        demand = np.array(self.demand, dtype=np.float64)
        if cost.ndim != 2 or cost.shape != (supply.size, demand.size):
            raise ValueError("cost must be m x n with len(supply) = m, len(demand) = n")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise ValueError("costs must be finite and nonnegative")
        if np.any(supply <= 0) or np.any(demand <= 0):
            raise ValueError("supplies and demands must be positive")
        for a in (cost, supply, demand):
            a.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "supply", supply)
        object.__setattr__(self, "demand", demand)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape

    def is_balanced(self, tol: float = FEAS_TOL) -> bool:
        return abs(float(self.supply.sum()) - float(self.demand.sum())) <= tol


@dataclass
class TransportSolution:
    plan: NDArray[np.float64]
    basis: list[tuple[int, int]]
    u: NDArray[np.float64]
    v: NDArray[np.float64]
    pivots: int = 0

    def reduced_costs(self, cost: NDArray) -> NDArray[np.float64]:
        return cost - self.u[:, None] - self.v[None, :]


def _northwest_corner(supply: NDArray, demand: NDArray) -> tuple[NDArray, list[tuple[int, int]]]:
    m, n = supply.size, demand.size
    a, b = supply.copy(), demand.copy()
    plan = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        q = min(a[i], b[j])
        plan[i, j] = q
        basis.append((i, j))
        a[i] -= q
        b[j] -= q
        if i == m - 1 and j == n - 1:
            break
        # on a simultaneous tie step down so the basis stays a spanning tree
        if j == n - 1 or (i < m - 1 and a[i] <= b[j]):
            i += 1
        else:
            j += 1
    return plan, basis


def _potentials(cost: NDArray, basis: list[tuple[int, int]]) -> tuple[NDArray, NDArray]:
    m, n = cost.shape
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    by_row: list[list[int]] = [[] for _ in range(m)]
    by_col: list[list[int]] = [[] for _ in range(n)]
    for i, j in basis:
        by_row[i].append(j)
        by_col[j].append(i)
    u[0] = 0.0
    queue = deque([("r", 0)])
    while queue:
        kind, x = queue.popleft()
        if kind == "r":
            for j in by_row[x]:
                if np.isnan(v[j]):
                    v[j] = cost[x, j] - u[x]
                    queue.append(("c", j))
        else:
            for i in by_col[x]:
                if np.isnan(u[i]):
                    u[i] = cost[i, x] - v[x]
                    queue.append(("r", i))
    if np.isnan(u).any() or np.isnan(v).any():
        raise RuntimeError("transport basis is not a spanning tree")
    return u, v


def _cycle(basis: list[tuple[int, int]], m: int, enter: tuple[int, int]) -> list[tuple[int, int]]:
    """Cells of the unique cycle created by adding ``enter`` to the basis tree.

    Returned in traversal order starting with ``enter``; even positions gain
    flow, odd positions lose it.
    """
    # bipartite tree: row i -> node i, column j -> node m + j
    adj: dict[int, list[int]] = {}
    for i, j in basis:
        adj.setdefault(i, []).append(m + j)
        adj.setdefault(m + j, []).append(i)
    r, c = enter
    start, goal = m + c, r
    parent = {start: -1}
    queue = deque([start])
    while queue:
        x = queue.popleft()
        if x == goal:
            break
        for y in adj.get(x, ()):
            if y not in parent:
                parent[y] = x
                queue.append(y)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    # path runs row r -> ... -> column c; consecutive nodes are basic cells
    cells = [enter]
    for a, b in zip(path, path[1:]):
        cells.append((a, b - m) if a < m else (b, a - m))
    return cells


def solve_transport_full(spec: TransportSpec, tol: float = 1e-12, max_pivots: int = 100_000) -> TransportSolution:
    if not spec.is_balanced():
        raise ValueError("transport spec is unbalanced: total supply != total demand")
    cost = spec.cost
    m, n = cost.shape
    plan, basis = _northwest_corner(spec.supply, spec.demand)
    in_basis = np.zeros((m, n), dtype=bool)
    for cell in basis:
        in_basis[cell] = True
    bland = False
    for pivots in range(max_pivots):
        u, v = _potentials(cost, basis)
        red = cost - u[:, None] - v[None, :]
        red[in_basis] = 0.0
        neg = red < -tol
        if not neg.any():
            return TransportSolution(plan, sorted(basis), u, v, pivots)
        if bland:
            flat = int(np.argmax(neg.ravel()))
        else:
            flat = int(np.argmin(red.ravel()))
        enter = divmod(flat, n)
        cells = _cycle(basis, m, enter)
        losing = cells[1::2]
        theta = min(plan[c] for c in losing)
        leave = min(c for c in losing if plan[c] == theta)
        for k, c in enumerate(cells):
            plan[c] += theta if k % 2 == 0 else -theta
        plan[leave] = 0.0
        basis.remove(leave)
        basis.append(enter)
        in_basis[leave] = False
        in_basis[enter] = True
        # Bland's rule only during degenerate stretches; any strict improvement resets it
        bland = theta == 0.0
    raise RuntimeError("transportation simplex exceeded the pivot limit")


def solve_transport(spec: TransportSpec) -> NDArray[np.float64]:
    """Optimal (basic) transport plan for a balanced spec."""
    return solve_transport_full(spec).plan


def transport_residuals(spec: TransportSpec, plan: NDArray) -> float:
    """Largest violation of the coupling and nonnegativity constraints."""
    r = np.abs(plan.sum(axis=1) - spec.supply).max()
    c = np.abs(plan.sum(axis=0) - spec.demand).max()
    return float(max(r, c, max(0.0, -plan.min())))


def load_cost_matrix(path: str | Path) -> NDArray[np.float64]:
    """Read a headerless CSV of nonnegative reals into an m x n matrix."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CostMatrixError(f"{path}: {exc}") from exc
    rows = [r for r in csv.reader(text.splitlines()) if any(cell.strip() for cell in r)]
    if not rows:
        raise CostMatrixError(f"{path}: empty cost matrix")
    width = len(rows[0])
    out = []
    for lineno, row in enumerate(rows, 1):
        if len(row) != width:
            raise CostMatrixError(f"{path}: row {lineno} has {len(row)} entries, expected {width}")
        try:
            vals = [float(cell) for cell in row]
        except ValueError as exc:
            raise CostMatrixError(f"{path}: row {lineno}: {exc}") from exc
        if any(not np.isfinite(x) or x < 0 for x in vals):
            raise CostMatrixError(f"{path}: row {lineno}: costs must be finite and nonnegative")
        out.append(vals)
    return np.array(out, dtype=np.float64)


def bundled_cost_matrix() -> NDArray[np.float64]:
    """The shipped 9 x 9 drive-time matrix (hours)."""
    ref = resources.files("combgape").joinpath("data/cost_matrix_9x9.csv")
    with resources.as_file(ref) as p:
        return load_cost_matrix(p)


# ---------------------------------------------------------------------------
# perturb-and-solve generation


@dataclass
class GeneratedExperiment:
    """An instance built by perturb-and-solve.

    ``perturbations[k]`` is the objective vector whose exact optimum is
    ``actions[k]``; ``mu`` is the true reward vector the bandit estimates.
    """

    spec: KnapsackSpec | TransportSpec
    mu: NDArray[np.float64]
    actions: ActionClass
    perturbations: NDArray[np.float64]
    n_samples: int
    metadata: dict = field(default_factory=dict)


def dedupe_rows(rows: NDArray, tol: float = DEDUPE_TOL) -> NDArray[np.intp]:
    """Indices of the first occurrence of each distinct row (max-norm ``tol``)."""
    kept: list[int] = []
    for k in range(rows.shape[0]):
        if kept and np.any(np.all(np.abs(rows[kept] - rows[k]) <= tol, axis=1)):
            continue
        kept.append(k)
    return np.array(kept, dtype=np.intp)


def _perturb_and_solve(solve, draw, n_samples: int, rng: np.random.Generator, tol: float):
    for _attempt in range(MAX_GENERATION_ATTEMPTS):
        params = np.array([draw(rng) for _ in range(n_samples)])
        sols = np.array([solve(p) for p in params], dtype=np.float64)
        keep = dedupe_rows(sols, tol)
        if keep.size >= 2:
            return sols[keep], params[keep]
    raise GenerationError(
        f"fewer than 2 distinct actions after {MAX_GENERATION_ATTEMPTS} attempts of {n_samples} samples"
    )


def generate_knapsack_experiment(
    d: int,
    rng: np.random.Generator,
    n_samples: int = 100,
    capacity: int = 100,
    weight_range: tuple[int, int] = (5, 50),
    value_spread: float = 5.0,
    perturbation_width: float = 5.0,
) -> GeneratedExperiment:
    """Random unbounded-knapsack instance with a perturb-and-solve action class.

    Weights are uniform integers in ``weight_range``; values are
    ``w + U[-value_spread, value_spread]``. Each candidate action solves the
    knapsack under values ``U[w - perturbation_width, w + perturbation_width]``.
    The true reward vector is the value vector.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    lo, hi = weight_range
    weights = rng.integers(lo, hi, endpoint=True, size=d)
    values = weights + rng.uniform(-value_spread, value_spread, size=d)
    spec = KnapsackSpec(tuple(weights), tuple(values), capacity)
    wf = weights.astype(np.float64)

    def draw(g):
        return g.uniform(wf - perturbation_width, wf + perturbation_width)

    def solve(vp):
        return solve_unbounded_knapsack(KnapsackSpec(spec.weights, tuple(vp), capacity))

    actions, params = _perturb_and_solve(solve, draw, n_samples, rng, 0.0)
    return GeneratedExperiment(
        spec=spec,
        mu=np.array(values, dtype=np.float64),
        actions=ActionClass(actions),
        perturbations=params,
        n_samples=n_samples,
        metadata={"kind": "knapsack", "capacity": capacity},
    )


def generate_transport_experiment(
    cost: ArrayLike | str | Path | None,
    rng: np.random.Generator,
    n_samples: int = 1000,
    perturbation_width: float = 1.0,
) -> GeneratedExperiment:
    """Optimal-transport instance with a perturb-and-solve action class.

    Supplies and demands are ``U[0, 1]`` normalized to sum to one. Each
    candidate plan solves the problem under costs ``U[c - w, c + w]`` (clipped
    at zero). Arms are edges in row-major order, and since the bandit
    maximizes, the true reward vector is the negated flattened cost.
    """
    if cost is None:
        gamma = bundled_cost_matrix()
    elif isinstance(cost, (str, Path)):
        gamma = load_cost_matrix(cost)
    else:
        gamma = np.array(cost, dtype=np.float64)
    m, n = gamma.shape
    supply = rng.uniform(0.0, 1.0, size=m)
    demand = rng.uniform(0.0, 1.0, size=n)
    supply /= supply.sum()
    demand /= demand.sum()
    # exact balance so the northwest corner terminates cleanly
    demand[-1] += supply.sum() - demand.sum()
    spec = TransportSpec(gamma, supply, demand)

    def draw(g):
        return np.maximum(g.uniform(gamma - perturbation_width, gamma + perturbation_width), 0.0).ravel()

    def solve(cp):
        return solve_transport(TransportSpec(cp.reshape(m, n), supply, demand)).ravel()

    actions, params = _perturb_and_solve(solve, draw, n_samples, rng, DEDUPE_TOL)
    return GeneratedExperiment(
        spec=spec,
        mu=-gamma.ravel(),
        actions=ActionClass(actions),
        perturbations=params,
        n_samples=n_samples,
        metadata={"kind": "transport", "m": m, "n": n, "arm_index": "i*n+j"},
    )
