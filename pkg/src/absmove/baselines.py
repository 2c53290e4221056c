"""Reference solvers: exact search and a K-means-seeded evolutionary climber.

The exact oracle certifies optimality on small and moderate instances; the
evolutionary baseline reproduces the classic init-then-mutate comparison
point. Both consume the same instance/feasible-set inputs as the fast solver
and return the same Placement type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bilp import BilpInstance, FeasibleSets, Placement, evaluate_placement, make_placement
from .errors import InfeasibleSetError, OracleCapError
from .gcm import Gcm, abs_cell_centers, cell_center_abs, gu_cells_of_positions


@dataclass(frozen=True)
class EaConfig:
    """Evolutionary search knobs: rounds, per-round mutants, move range."""

    rounds: int = 3000
    mutation_radius: float = 300.0
    mutants: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.mutants < 1:
            raise ValueError("mutants must be at least 1")
        if self.mutation_radius < 0.0:
            raise ValueError("mutation_radius must be non-negative")


def exact_optimum(
    instance: BilpInstance,
    fs: FeasibleSets,
    cap: int = 5_000_000,
    branch_and_bound: bool = True,
) -> Placement:
    """Provably optimal placement by depth-first search over per-ABS pools.

    ABSs are processed smallest pool first; at each node candidates are
    ordered by marginal gain and the subtree is cut when the current value
    plus the sum of best-remaining marginals cannot beat the incumbent
    (coverage is submodular, so those marginals only shrink with depth).
    With ``branch_and_bound`` off, the raw enumeration size is checked
    against ``cap`` and oversized instances are rejected.
    """
    z = instance.z_sub
    w = instance.weights
    pools = [np.asarray(p, dtype=int) for p in instance.per_abs_pos]
    order = sorted(range(instance.n_abs), key=lambda i: (len(pools[i]), i))
    pools = [pools[i] for i in order]

    space = math.prod(len(p) for p in pools)
    if not branch_and_bound and space > cap:
        raise OracleCapError(
            f"instance too large for exhaustive oracle: {space} > cap {cap}; "
            "enable branch_and_bound"
        )

    n = instance.n_abs
    best_val = -1
    best_cells: list[int] | None = None
    chosen: list[int] = []

    def gains(pool: np.ndarray, covered: np.ndarray) -> np.ndarray:
        return (z[pool] & ~covered) @ w

    def dfs(depth: int, covered: np.ndarray, value: int) -> None:
        nonlocal best_val, best_cells
        if depth == n:
            if value > best_val:
                best_val, best_cells = value, chosen.copy()
            return
        if branch_and_bound:
            bound = value
            for k in range(depth, n):
                avail = pools[k][~np.isin(pools[k], chosen)]
                if avail.size:
                    bound += int(gains(avail, covered).max())
            if bound <= best_val:
                return
        pool = pools[depth][~np.isin(pools[depth], chosen)]
        if pool.size == 0:
            return
        g = gains(pool, covered)
        for t in np.lexsort((pool, -g)):
            if branch_and_bound and value + int(g[t]) <= best_val and depth == n - 1:
                break
            p = int(pool[t])
            chosen.append(p)
            dfs(depth + 1, covered | z[p], value + int((z[p] & ~covered) @ w))
            chosen.pop()

    dfs(0, np.zeros(len(w), dtype=bool), 0)
    if best_cells is None:
        raise InfeasibleSetError("no feasible assignment of distinct cells exists")
    # Undo the pool reordering so cells line up with ABS labels.
    by_abs = [0] * n
    for slot, i in enumerate(order):
        by_abs[i] = best_cells[slot]
    cells = instance.u_ids[np.array(by_abs, dtype=int)]
    return make_placement(instance.spec, cells, best_val)


def kmeans_centroids(gu_positions, n: int, seed: int = 0) -> np.ndarray:
    """Lloyd's algorithm on horizontal GU positions.

    Capped at 100 iterations, converged when no centroid moves more than
    1e-6 m. An emptied cluster is re-seeded at the GU farthest from its
    assigned centroid.
    """
    pts = np.atleast_2d(np.asarray(gu_positions, dtype=float))[:, :2]
    m = len(pts)
    if n < 1:
        raise ValueError("need at least one centroid")
    if m < n:
        raise ValueError(f"need at least {n} points, got {m}")
    rng = np.random.default_rng(seed)
    centroids = pts[rng.choice(m, size=n, replace=False)].copy()
    for _ in range(100):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        new = centroids.copy()
        for k in range(n):
            mask = labels == k
            if mask.any():
                new[k] = pts[mask].mean(axis=0)
            else:
                new[k] = pts[d2[np.arange(m), labels].argmax()]
        shift = np.hypot(*(new - centroids).T).max()
        centroids = new
        if shift <= 1e-6:
            break
    return centroids


def kmeans_init(gu_positions, n_abs: int, gcm: Gcm, seed: int = 0) -> Placement:
    """Snap K-means centroids of the GU cloud to distinct valid ABS cells."""
    centroids = kmeans_centroids(gu_positions, n_abs, seed)
    centers = abs_cell_centers(gcm.spec)[:, :2]
    valid_ids = np.flatnonzero(gcm.abs_cell_valid) + 1
    if len(valid_ids) < n_abs:
        raise ValueError("fewer valid cells than ABSs")
    cells: list[int] = []
    for c in centroids:
        d = np.hypot(centers[valid_ids - 1, 0] - c[0], centers[valid_ids - 1, 1] - c[1])
        for t in np.argsort(d, kind="stable"):
            cell = int(valid_ids[t])
            if cell not in cells:
                cells.append(cell)
                break
    value = evaluate_placement(gcm, cells, gu_positions)
    return make_placement(gcm.spec, cells, value)


def ea_step(
    current: Placement,
    fs: FeasibleSets,
    gcm: Gcm,
    gu_positions,
    cfg: EaConfig,
) -> Placement:
    """One generation of mutate-and-select around a feasible placement.

    Every candidate perturbs the input placement: each ABS cell is redrawn
    uniformly from the reachable cells within ``mutation_radius`` of its
    input cell, resampling a few times for distinctness and keeping the
    input cell when that fails. After rounds x mutants candidates the best
    one is returned, with the unmutated incumbent always in the running, so
    coverage never decreases. Iterative refinement, where wanted, is chained
    through successive calls.
    """
    if cfg.mutation_radius > fs.radius:
        raise ValueError(
            f"mutation radius {cfg.mutation_radius} exceeds movement radius {fs.radius}"
        )
    rng = np.random.default_rng(cfg.seed)
    centers = abs_cell_centers(gcm.spec)[:, :2]
    n = len(current.abs_cells)
    v_ids, counts = np.unique(
        gu_cells_of_positions(gcm.spec, np.atleast_2d(np.asarray(gu_positions, float))),
        return_counts=True,
    )
    z_cols = gcm.z[:, v_ids - 1]

    def value_of(cells: list[int]) -> int:
        return int(counts @ z_cols[np.asarray(cells) - 1].any(axis=0))

    def pool_of(cell: int, n_idx: int) -> np.ndarray:
        c = cell_center_abs(gcm.spec, cell)[:2]
        ids = fs.per_abs[n_idx]
        d = np.hypot(centers[ids - 1, 0] - c[0], centers[ids - 1, 1] - c[1])
        return ids[d <= cfg.mutation_radius]

    base = list(current.abs_cells)
    best_cells = list(base)
    best_val = current.coverage_value
    pools = [pool_of(base[i], i) for i in range(n)]
    for _ in range(cfg.rounds):
        for _ in range(cfg.mutants):
            cand: list[int] = []
            for i in range(n):
                cell = base[i]
                for _ in range(8):
                    pick = int(pools[i][rng.integers(len(pools[i]))])
                    if pick not in cand:
                        cell = pick
                        break
                if cell in cand:
                    # Distinctness could not be restored; keep the input cell.
                    cell = base[i]
                if cell in cand:
                    continue
                cand.append(cell)
            if len(cand) != n:
                continue
            val = value_of(cand)
            if val > best_val:
                best_cells, best_val = cand, val
    return make_placement(gcm.spec, best_cells, best_val)
