"""Per-period placement subproblem in sparse matrix form.

Variables are stacked as x = (C_1..C_V, a_1..a_U), where C_v indicates that
occupied ground grid v is covered and a_u that traversal cell u is selected.
The inequality system E x <= l stacks, in order: one total-count row, one
reachability row per ABS, one row per (selected-cell, grid) pair tying C_v to
a_u, and one row per grid tying C_v to the selected cells that cover it.
Binary bounds are left to the solvers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import InfeasibleSetError
from .gcm import Gcm, GridSpec, abs_cell_centers, cell_center_abs, gu_cells_of_positions, valid_abs_cells
from .env import Environment


@dataclass(frozen=True)
class FeasibleSets:
    """Reachable traversal cells per ABS for one planning round."""

    per_abs: tuple[np.ndarray, ...]
    union: np.ndarray
    radius: float


@dataclass(frozen=True, eq=False)
class Placement:
    """One traversal cell per ABS; cells are distinct, indices 1-based."""

    abs_cells: tuple[int, ...]
    positions: np.ndarray
    coverage_value: int

    def __post_init__(self) -> None:
        if len(self.abs_cells) == 0:
            raise ValueError("placement must contain at least one cell")
        if len(set(self.abs_cells)) != len(self.abs_cells):
            raise ValueError(f"placement cells must be distinct, got {self.abs_cells}")


def make_placement(spec: GridSpec, cells, coverage_value: int) -> Placement:
    cells = tuple(int(c) for c in cells)
    positions = np.stack([cell_center_abs(spec, c) for c in cells])
    return Placement(abs_cells=cells, positions=positions, coverage_value=int(coverage_value))


def feasible_sets(
    current_xy,
    spec: GridSpec,
    env: Environment | None,
    radius: float,
    valid: np.ndarray | None = None,
) -> FeasibleSets:
    """Valid traversal cells within the flight radius of each ABS.

    ``current_xy`` is an (N, 2) array of horizontal positions. ``valid`` may
    carry a precomputed validity mask (e.g. from a loaded connectivity map),
    in which case ``env`` may be None.
    """
    current_xy = np.atleast_2d(np.asarray(current_xy, dtype=float))
    if radius < 0.0:
        raise ValueError("radius must be non-negative")
    if valid is None:
        if env is None:
            raise ValueError("need either an environment or a validity mask")
        valid = valid_abs_cells(env, spec)
    centers = abs_cell_centers(spec)[:, :2]
    per_abs = []
    for n, pos in enumerate(current_xy):
        d = np.hypot(centers[:, 0] - pos[0], centers[:, 1] - pos[1])
        ids = np.flatnonzero(valid & (d <= radius)) + 1
        if ids.size == 0:
            raise InfeasibleSetError(
                f"ABS {n} at ({pos[0]:.1f}, {pos[1]:.1f}) has no reachable valid cell "
                f"within radius {radius:.1f} m"
            )
        per_abs.append(ids.astype(np.int64))
    union = np.unique(np.concatenate(per_abs))
    return FeasibleSets(per_abs=tuple(per_abs), union=union, radius=float(radius))


@dataclass(eq=False)
class BilpInstance:
    """Sparse instance data plus the index maps needed to decode solutions.

    Column k < n_v is C for grid ``v_ids[k]`` (weight ``weights[k]``); column
    n_v + t is a for traversal cell ``u_ids[t]``. ``d`` is ``l`` divided by
    the variable count, matching the per-variable split of the dual objective.
    """

    e: sparse.csc_matrix
    r: np.ndarray
    l: np.ndarray
    d: np.ndarray
    n_abs: int
    u_ids: np.ndarray
    v_ids: np.ndarray
    weights: np.ndarray
    z_sub: np.ndarray
    per_abs_pos: tuple[np.ndarray, ...]
    spec: GridSpec
    total_gus: int

    @property
    def n_v(self) -> int:
        return len(self.v_ids)

    @property
    def n_u(self) -> int:
        return len(self.u_ids)

    @property
    def n_cols(self) -> int:
        return self.n_v + self.n_u

    @property
    def n_rows(self) -> int:
        return 1 + self.n_abs + self.n_u * self.n_v + self.n_v

    def coverage_of(self, u_positions) -> int:
        """Weighted covered count for cells given as positions into u_ids."""
        pos = np.asarray(u_positions, dtype=int)
        if pos.size == 0:
            return 0
        return int(self.weights @ self.z_sub[pos].any(axis=0))

    def positions_of_cells(self, cells) -> np.ndarray:
        """Map 1-based traversal cell ids to positions in u_ids."""
        cells = np.asarray(cells, dtype=np.int64)
        pos = np.searchsorted(self.u_ids, cells)
        if np.any(pos >= len(self.u_ids)) or np.any(self.u_ids[pos] != cells):
            raise ValueError("cell outside the instance's feasible union")
        return pos


def assemble(
    gcm: Gcm,
    fs: FeasibleSets,
    gu_positions,
    n_abs: int,
    weight_multiplicity: bool = True,
) -> BilpInstance:
    """Build E, r, l, d for the current GU snapshot and feasible sets.

    Only occupied ground grids get C columns. With ``weight_multiplicity``
    each grid's objective weight is its GU count, so a full cover scores M;
    without it every occupied grid weighs 1.
    """
    if n_abs < 1:
        raise ValueError("n_abs must be at least 1")
    if len(fs.per_abs) != n_abs:
        raise ValueError(
            f"feasible sets built for {len(fs.per_abs)} ABSs, instance needs {n_abs}"
        )
    gu_positions = np.atleast_2d(np.asarray(gu_positions, dtype=float))
    spec = gcm.spec
    v_all = gu_cells_of_positions(spec, gu_positions)
    v_ids, counts = np.unique(v_all, return_counts=True)
    weights = counts.astype(np.int64) if weight_multiplicity else np.ones(len(v_ids), np.int64)

    u_ids = fs.union.astype(np.int64)
    n_v, n_u = len(v_ids), len(u_ids)
    n_cols = n_v + n_u
    n_rows = 1 + n_abs + n_u * n_v + n_v
    z_sub = gcm.z[np.ix_(u_ids - 1, v_ids - 1)]
    per_abs_pos = tuple(np.searchsorted(u_ids, ids) for ids in fs.per_abs)

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []

    def put(r_, c_, v_):
        rows.append(np.asarray(r_, dtype=np.int64).ravel())
        cols.append(np.asarray(c_, dtype=np.int64).ravel())
        data.append(np.asarray(v_, dtype=float).ravel())

    # Total selected cells <= N.
    put(np.zeros(n_u), n_v + np.arange(n_u), np.ones(n_u))
    # At least one selected cell per ABS, as -sum <= -1.
    for n, pos in enumerate(per_abs_pos):
        put(np.full(len(pos), 1 + n), n_v + pos, -np.ones(len(pos)))
    # Pair rows: z_uv * a_u - C_v <= 0, laid out cell-major.
    base = 1 + n_abs
    pair_rows = base + np.arange(n_u * n_v)
    put(pair_rows, np.tile(np.arange(n_v), n_u), -np.ones(n_u * n_v))
    zu, zv = np.nonzero(z_sub)
    put(base + zu * n_v + zv, n_v + zu, np.ones(len(zu)))
    # Cover rows: C_v - sum_u z_uv a_u <= 0.
    base2 = 1 + n_abs + n_u * n_v
    put(base2 + np.arange(n_v), np.arange(n_v), np.ones(n_v))
    put(base2 + zv, n_v + zu, -np.ones(len(zu)))

    e = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows, n_cols),
    ).tocsc()
    r = np.concatenate([weights.astype(float), np.zeros(n_u)])
    l = np.concatenate([[float(n_abs)], -np.ones(n_abs), np.zeros(n_u * n_v + n_v)])
    d = l / n_cols
    return BilpInstance(
        e=e, r=r, l=l, d=d, n_abs=n_abs, u_ids=u_ids, v_ids=v_ids,
        weights=weights, z_sub=z_sub, per_abs_pos=per_abs_pos, spec=spec,
        total_gus=len(gu_positions),
    )


def evaluate_placement(
    gcm: Gcm, cells, gu_positions, weight_multiplicity: bool = True
) -> int:
    """Weighted count of GUs whose ground grid is covered by some cell."""
    cells = np.asarray(cells, dtype=np.int64)
    if cells.size == 0:
        return 0
    gu_positions = np.atleast_2d(np.asarray(gu_positions, dtype=float))
    v_ids, counts = np.unique(gu_cells_of_positions(gcm.spec, gu_positions), return_counts=True)
    if not weight_multiplicity:
        counts = np.ones_like(counts)
    covered = gcm.z[cells - 1][:, v_ids - 1].any(axis=0)
    return int(counts @ covered)


def coverage_rate(covered: float, total_gus: int) -> float:
    """Fraction of GUs covered; the per-step metric."""
    if total_gus <= 0:
        raise ValueError("total_gus must be positive")
    if not 0 <= covered <= total_gus:
        raise ValueError(f"covered count {covered} outside [0, {total_gus}]")
    return covered / total_gus


def dump_instance(instance: BilpInstance, path) -> None:
    """Debug dump: coordinate triplets of E plus a row/column legend."""
    lines = [
        "# placement subproblem dump",
        f"# rows {instance.n_rows} cols {instance.n_cols} nnz {instance.e.nnz}",
        "# columns: C <grid id> <weight> | a <cell id>",
    ]
    for k, v in enumerate(instance.v_ids):
        lines.append(f"col {k} C {v} {instance.weights[k]}")
    for t, u in enumerate(instance.u_ids):
        lines.append(f"col {instance.n_v + t} a {u}")
    lines.append("# rows: total | abs <n> | pair <cell id> <grid id> | cover <grid id>")
    lines.append("row 0 total")
    for n in range(instance.n_abs):
        lines.append(f"row {1 + n} abs {n}")
    base = 1 + instance.n_abs
    for t, u in enumerate(instance.u_ids):
        for k, v in enumerate(instance.v_ids):
            lines.append(f"row {base + t * instance.n_v + k} pair {u} {v}")
    base2 = base + instance.n_u * instance.n_v
    for k, v in enumerate(instance.v_ids):
        lines.append(f"row {base2 + k} cover {v}")
    coo = instance.e.tocoo()
    lines.append("# entries: row col value; then rhs")
    for i, j, val in zip(coo.row, coo.col, coo.data):
        lines.append(f"e {i} {j} {val!r}")
    for i, val in enumerate(instance.l):
        if val != 0.0:
            lines.append(f"l {i} {val!r}")
    for j, val in enumerate(instance.r):
        if val != 0.0:
            lines.append(f"r {j} {val!r}")
    Path(path).write_text("\n".join(lines) + "\n")
