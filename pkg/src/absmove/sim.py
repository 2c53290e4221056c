"""Trial engine: GU mobility, ABS flight kinematics, periodic replanning.

A trial spans I = total_time/step steps grouped into E periods of J steps.
Each period opens with a flight phase toward the placement planned during the
previous period, then a hover/serve phase. Planning for period e is triggered
``lead`` steps before the period starts, using the GU positions reported at
that instant; GUs keep moving while the plan is computed, so the measured
coverage includes that staleness.

Coverage is logged per step in two modes: "simplified" snaps ABSs and GUs to
their grid cells and reads the connectivity map, "actual" evaluates the full
channel chain at the continuous positions.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .baselines import EaConfig, ea_step, exact_optimum, kmeans_centroids
from .bilp import FeasibleSets, Placement, assemble, evaluate_placement, feasible_sets, make_placement
from .channel import ChannelParams, coverage_mask
from .env import Environment, generate_environment, obstructed_mask
from .errors import ConfigError, ContractViolationError, InfeasibleSetError
from .gcm import (
    Gcm,
    GridSpec,
    abs_cell_centers,
    build_gcm,
    cell_center_abs,
    gu_cells_of_positions,
    nearest_valid_abs_cell,
)
from .online_solver import SolverReport, solve


@dataclass(frozen=True)
class EnvConfig:
    """Building layout knobs; the area size comes from the grid spec."""

    num_blocks: int = 300
    block_width: float = 25.0
    height_low: float = 30.0
    height_high: float = 89.0

    def __post_init__(self) -> None:
        if self.num_blocks < 0:
            raise ConfigError("num_blocks must be non-negative")
        if self.block_width <= 0:
            raise ConfigError("block_width must be positive")
        if not 0 < self.height_low <= self.height_high:
            raise ConfigError("heights must satisfy 0 < low <= high")


@dataclass(frozen=True)
class SolverConfig:
    """Which placement solver runs each period, and its knobs."""

    name: str = "online"
    duplication: int = 3
    step_size: float | None = None
    tie_high: bool = False
    ea_rounds: int = 3000
    ea_mutants: int = 1
    ea_mutation_radius: float | None = None
    oracle_cap: int = 5_000_000
    oracle_branch_and_bound: bool = True

    def __post_init__(self) -> None:
        if self.name not in ("online", "oracle", "kmeans-ea"):
            raise ConfigError(f"unknown solver {self.name!r}")
        if self.duplication < 1:
            raise ConfigError("duplication must be at least 1")
        if self.ea_rounds < 1 or self.ea_mutants < 1:
            raise ConfigError("ea_rounds and ea_mutants must be at least 1")


def _check_multiple(name: str, value: float, step: float) -> int:
    k = value / step
    if abs(k - round(k)) > 1e-9:
        raise ConfigError(f"{name} ({value} s) must be an integer multiple of step ({step} s)")
    return int(round(k))


@dataclass(frozen=True)
class TrialConfig:
    """Full description of one trial; everything random is seeded here."""

    spec: GridSpec
    channel: ChannelParams
    env: EnvConfig = EnvConfig()
    solver: SolverConfig = SolverConfig()
    total_time: float = 200.0
    period: float = 20.0
    flight_time: float = 10.0
    service_time: float = 10.0
    planning_time: float = 5.0
    step: float = 1.0
    n_abs: int = 2
    n_gus: int = 20
    abs_speed: float = 30.0
    gu_speed: float = 2.0
    env_seed: int = 0
    mobility_seed: int = 1
    init_seed: int = 2
    solver_seed: int = 3
    plan_before_start: bool = False
    weight_multiplicity: bool = True

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise ConfigError("step must be positive")
        if abs(self.flight_time + self.service_time - self.period) > 1e-9:
            raise ConfigError(
                f"flight_time + service_time must equal period: "
                f"{self.flight_time} + {self.service_time} != {self.period}"
            )
        if not 0 <= self.planning_time <= self.period:
            raise ConfigError("planning_time must lie in [0, period]")
        _check_multiple("total_time", self.total_time, self.step)
        _check_multiple("period", self.period, self.step)
        _check_multiple("flight_time", self.flight_time, self.step)
        k = self.total_time / self.period
        if abs(k - round(k)) > 1e-9:
            raise ConfigError("total_time must be an integer number of periods")
        if self.n_abs < 1 or self.n_gus < 1:
            raise ConfigError("n_abs and n_gus must be at least 1")
        if self.abs_speed < 0 or self.gu_speed < 0:
            raise ConfigError("speeds must be non-negative")
        if abs(self.spec.abs_alt - self.channel.abs_alt) > 1e-9:
            raise ConfigError(
                f"grid altitude {self.spec.abs_alt} differs from channel altitude "
                f"{self.channel.abs_alt}"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.total_time / self.step))

    @property
    def steps_per_period(self) -> int:
        return int(round(self.period / self.step))

    @property
    def flight_steps(self) -> int:
        return int(round(self.flight_time / self.step))

    @property
    def n_periods(self) -> int:
        return int(round(self.total_time / self.period))

    @property
    def lead_steps(self) -> int:
        return math.ceil(self.planning_time / self.step - 1e-9)

    @property
    def movement_radius(self) -> float:
        return self.abs_speed * self.flight_time


@dataclass(frozen=True)
class PlanState:
    """Inputs frozen at the planning instant."""

    anchor_cells: tuple[int, ...]
    gu_positions: np.ndarray
    period: int


@dataclass(frozen=True)
class PeriodRecord:
    period: int
    trigger_step: int
    anchor_cells: tuple[int, ...]
    target_cells: tuple[int, ...]
    planned_value: int
    planning_time_s: float
    over_budget: bool
    report: SolverReport | None = None


@dataclass(frozen=True)
class TrialLog:
    cfg: TrialConfig
    cr_simplified: np.ndarray
    cr_actual: np.ndarray
    abs_positions: np.ndarray
    gu_positions: np.ndarray
    periods: tuple[PeriodRecord, ...]
    acr_simplified: float
    acr_actual: float
    boundary_violations: int
    exclusion_violations: int

    @property
    def mean_planning_time(self) -> float:
        planned = [p.planning_time_s for p in self.periods if p.trigger_step >= 0]
        return float(np.mean(planned)) if planned else 0.0


def _period_seed(base: int, period: int, stream: int) -> int:
    return int(np.random.SeedSequence([base, period, stream]).generate_state(1)[0])


def initial_gu_positions(env: Environment, m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws over the area, rejecting points inside any footprint."""
    out = np.empty((m, 2))
    for i in range(m):
        for _ in range(1000):
            p = rng.uniform((0.0, 0.0), (env.d1, env.d2))
            if not obstructed_mask(env, p[None, :])[0]:
                out[i] = p
                break
        else:
            raise InfeasibleSetError("could not draw a free ground position in 1000 tries")
    return out


def step_gu(
    positions: np.ndarray,
    env: Environment,
    gu_speed: float,
    dt: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Constant-pace random-direction move, resampled away from obstacles.

    Every GU travels exactly gu_speed*dt in a fresh uniform direction; a
    move that would land outside the area or inside a footprint redraws its
    direction up to 100 times and then stays put for this step.
    """
    positions = np.asarray(positions, dtype=float)
    if gu_speed * dt == 0.0:
        return positions.copy()
    m = len(positions)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=m)
    step_len = gu_speed * dt
    cand = positions + step_len * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    inside = (
        (cand[:, 0] >= 0.0) & (cand[:, 0] <= env.d1)
        & (cand[:, 1] >= 0.0) & (cand[:, 1] <= env.d2)
    )
    bad = ~inside
    bad[inside] = obstructed_mask(env, cand[inside])
    out = cand.copy()
    for i in np.flatnonzero(bad):
        for _ in range(100):
            t = rng.uniform(0.0, 2.0 * np.pi)
            c = positions[i] + step_len * np.array([np.cos(t), np.sin(t)])
            if not (0.0 <= c[0] <= env.d1 and 0.0 <= c[1] <= env.d2):
                continue
            if not obstructed_mask(env, c[None, :])[0]:
                out[i] = c
                break
        else:
            out[i] = positions[i]
    return out


def fly_step(
    current: np.ndarray,
    target: np.ndarray,
    v_max: float,
    dt: float,
    time_left: float,
) -> np.ndarray:
    """One step of straight-line flight that arrives exactly on schedule.

    Speed is min(v_max, remaining_distance / remaining_flight_time), so the
    per-step displacement never exceeds v_max*dt and the target is reached
    by the end of the flight phase.
    """
    current = np.asarray(current, dtype=float)
    target = np.asarray(target, dtype=float)
    delta = target - current
    dist = np.linalg.norm(delta, axis=-1)
    out = current.copy()
    moving = dist > 0.0
    if not np.any(moving):
        return out
    if time_left <= 0.0:
        raise ContractViolationError("flight phase exhausted before arrival")
    speed = np.minimum(v_max, dist[moving] / time_left)
    step_len = np.minimum(speed * dt, dist[moving])
    out[moving] += delta[moving] * (step_len / dist[moving])[:, None]
    arrived = np.isclose(step_len, dist[moving])
    idx = np.flatnonzero(moving)[arrived]
    out[idx] = target[idx]
    return out


def plan_period(state: PlanState, gcm: Gcm, cfg: TrialConfig) -> PeriodRecord:
    """Solve one placement instance from the frozen planning inputs.

    Wall time is measured and compared against the planning budget; an
    overrun is flagged in the record but never aborts the trial.
    """
    anchor_xy = np.stack([cell_center_abs(gcm.spec, c)[:2] for c in state.anchor_cells])
    t0 = time.perf_counter()
    fs = feasible_sets(
        anchor_xy, gcm.spec, None, cfg.movement_radius, valid=gcm.abs_cell_valid
    )
    sc = cfg.solver
    if sc.name == "kmeans-ea":
        placement = _kmeans_ea_plan(state, gcm, fs, cfg)
        report = None
    elif sc.name == "oracle":
        instance = assemble(gcm, fs, state.gu_positions, cfg.n_abs, cfg.weight_multiplicity)
        placement = exact_optimum(instance, fs, sc.oracle_cap, sc.oracle_branch_and_bound)
        report = None
    else:
        instance = assemble(gcm, fs, state.gu_positions, cfg.n_abs, cfg.weight_multiplicity)
        report = solve(
            instance,
            fs,
            duplication=sc.duplication,
            step_size=sc.step_size,
            seed=_period_seed(cfg.solver_seed, state.period, 0),
            tie_high=sc.tie_high,
        )
        placement = report.placement
    elapsed = time.perf_counter() - t0
    if report is None:
        report = SolverReport(
            placement=placement,
            coverage_value=placement.coverage_value,
            restart_values=(placement.coverage_value,),
            best_restart=0,
            iterations=0,
            gap_bound=0.0,
            step_size=0.0,
            duplication=1,
            seed=cfg.solver_seed,
            elapsed_s=elapsed,
        )
    return PeriodRecord(
        period=state.period,
        trigger_step=-1,
        anchor_cells=state.anchor_cells,
        target_cells=placement.abs_cells,
        planned_value=placement.coverage_value,
        planning_time_s=elapsed,
        over_budget=elapsed > cfg.planning_time,
        report=report,
    )


def _kmeans_ea_plan(state: PlanState, gcm: Gcm, fs: FeasibleSets, cfg: TrialConfig) -> Placement:
    """Seed each ABS at the reachable cell nearest its GU-cluster centroid,
    then climb by mutation."""
    sc = cfg.solver
    centroids = kmeans_centroids(
        state.gu_positions, cfg.n_abs, _period_seed(cfg.solver_seed, state.period, 1)
    )
    centers = abs_cell_centers(gcm.spec)[:, :2]
    cells: list[int] = []
    for i, c in enumerate(centroids):
        ids = fs.per_abs[i]
        d = np.hypot(centers[ids - 1, 0] - c[0], centers[ids - 1, 1] - c[1])
        for t in np.argsort(d, kind="stable"):
            if int(ids[t]) not in cells:
                cells.append(int(ids[t]))
                break
        else:
            raise InfeasibleSetError(f"no distinct reachable cell left for ABS {i}")
    value = evaluate_placement(gcm, cells, state.gu_positions)
    start = make_placement(gcm.spec, cells, value)
    ea_cfg = EaConfig(
        rounds=sc.ea_rounds,
        mutation_radius=fs.radius if sc.ea_mutation_radius is None else sc.ea_mutation_radius,
        mutants=sc.ea_mutants,
        seed=_period_seed(cfg.solver_seed, state.period, 2),
    )
    return ea_step(start, fs, gcm, state.gu_positions, ea_cfg)


def run_trial(
    cfg: TrialConfig,
    environment: Environment | None = None,
    gcm: Gcm | None = None,
) -> TrialLog:
    """Execute one full trial and log both coverage modes every step."""
    if environment is None:
        environment = generate_environment(
            cfg.spec.d1,
            cfg.spec.d2,
            cfg.env.num_blocks,
            cfg.env.block_width,
            (cfg.env.height_low, cfg.env.height_high),
            cfg.env_seed,
        )
    if gcm is None:
        gcm = build_gcm(environment, cfg.channel, cfg.spec)

    n, m = cfg.n_abs, cfg.n_gus
    i_total, j_steps = cfg.n_steps, cfg.steps_per_period
    rng_init = np.random.default_rng([cfg.init_seed])
    rng_mob = np.random.default_rng([cfg.mobility_seed])

    valid_ids = np.flatnonzero(gcm.abs_cell_valid) + 1
    if len(valid_ids) < n:
        raise InfeasibleSetError(f"only {len(valid_ids)} valid cells for {n} ABSs")
    start_cells = tuple(int(c) for c in rng_init.choice(valid_ids, size=n, replace=False))
    abs_pos = np.stack([cell_center_abs(cfg.spec, c) for c in start_cells])
    gu_pos = initial_gu_positions(environment, m, rng_init)

    # Planning triggers: period e plans at step (e-1)*J - lead (clamped to 0).
    triggers: dict[int, list[int]] = {}
    first_planned = 1 if cfg.plan_before_start else 2
    for e in range(first_planned, cfg.n_periods + 1):
        triggers.setdefault(max(0, (e - 1) * j_steps - cfg.lead_steps), []).append(e)

    current_cells = start_cells
    flight_target: np.ndarray | None = None
    target_cells: tuple[int, ...] | None = None
    # Where the ABSs will sit at the start of the period being planned for:
    # the most recently planned targets, activated or not.
    latest_plan_cells: tuple[int, ...] | None = None
    pending: dict[int, PeriodRecord] = {}
    records: dict[int, PeriodRecord] = {}

    def fire_trigger(step_idx: int) -> None:
        nonlocal latest_plan_cells
        for e in sorted(triggers.get(step_idx, [])):
            anchor = latest_plan_cells if latest_plan_cells is not None else current_cells
            state = PlanState(anchor_cells=tuple(anchor), gu_positions=gu_pos.copy(), period=e)
            rec = plan_period(state, gcm, cfg)
            rec = replace(rec, trigger_step=step_idx)
            pending[e] = rec
            records[e] = rec
            latest_plan_cells = rec.target_cells

    abs_hist = np.empty((i_total + 1, n, 3))
    gu_hist = np.empty((i_total + 1, m, 2))
    abs_hist[0], gu_hist[0] = abs_pos, gu_pos
    cr_simpl = np.empty(i_total)
    cr_act = np.empty(i_total)
    boundary_bad = 0
    exclusion_bad = 0
    h = cfg.channel.abs_alt

    fire_trigger(0)

    for i in range(1, i_total + 1):
        gu_pos = step_gu(gu_pos, environment, cfg.gu_speed, cfg.step, rng_mob)

        step_in_period = (i - 1) % j_steps  # 0 on a period's first step
        if step_in_period == 0:
            e = (i - 1) // j_steps + 1
            rec = pending.pop(e, None)
            if rec is not None:
                target_cells = rec.target_cells
                tgt = np.stack([cell_center_abs(cfg.spec, c) for c in target_cells])
                far = np.linalg.norm(tgt[:, :2] - abs_pos[:, :2], axis=1)
                if np.any(far > cfg.movement_radius * (1.0 + 1e-9)):
                    raise ContractViolationError(
                        "planned target outside the reachable flight radius"
                    )
                flight_target = tgt
            else:
                records.setdefault(
                    e,
                    PeriodRecord(
                        period=e,
                        trigger_step=-1,
                        anchor_cells=current_cells,
                        target_cells=current_cells,
                        planned_value=-1,
                        planning_time_s=0.0,
                        over_budget=False,
                    ),
                )

        if flight_target is not None and step_in_period < cfg.flight_steps:
            time_left = cfg.flight_time - step_in_period * cfg.step
            abs_pos = fly_step(abs_pos, flight_target, cfg.abs_speed, cfg.step, time_left)
            if step_in_period == cfg.flight_steps - 1:
                assert target_cells is not None
                if not np.allclose(abs_pos, flight_target, atol=1e-6):
                    raise ContractViolationError("flight phase ended short of the target")
                abs_pos = flight_target.copy()
                current_cells = target_cells
                flight_target = None

        # Eq-style placement constraints: inside the area, outside tall
        # footprints. Violations are tallied, not fatal.
        xy = abs_pos[:, :2]
        out_of_area = (
            (xy[:, 0] < 0) | (xy[:, 0] > cfg.spec.d1)
            | (xy[:, 1] < 0) | (xy[:, 1] > cfg.spec.d2)
        )
        boundary_bad += int(out_of_area.sum())
        exclusion_bad += int(obstructed_mask(environment, xy, min_height=h).sum())

        snapped = [nearest_valid_abs_cell(gcm, p) for p in xy]
        v_cells = gu_cells_of_positions(cfg.spec, gu_pos)
        covered = gcm.z[np.array(snapped) - 1][:, v_cells - 1].any(axis=0)
        cr_simpl[i - 1] = covered.mean()

        gu3 = np.column_stack([gu_pos, np.full(m, cfg.channel.gu_alt)])
        covered_act = np.zeros(m, dtype=bool)
        for p in abs_pos:
            covered_act |= coverage_mask(cfg.channel, environment, p, gu3)
        cr_act[i - 1] = covered_act.mean()

        abs_hist[i], gu_hist[i] = abs_pos, gu_pos
        fire_trigger(i)

    period_list = tuple(records[e] for e in sorted(records))
    return TrialLog(
        cfg=cfg,
        cr_simplified=cr_simpl,
        cr_actual=cr_act,
        abs_positions=abs_hist,
        gu_positions=gu_hist,
        periods=period_list,
        acr_simplified=float(cr_simpl.mean()),
        acr_actual=float(cr_act.mean()),
        boundary_violations=boundary_bad,
        exclusion_violations=exclusion_bad,
    )


def validate_trial_log(log: TrialLog, gcm: Gcm | None = None) -> None:
    """Check the kinematic and accounting contracts of a finished trial.

    Raises ContractViolationError on the first failure.
    """
    cfg = log.cfg
    step_cap = cfg.abs_speed * cfg.step + 1e-9
    moves = np.linalg.norm(np.diff(log.abs_positions, axis=0), axis=2)
    if moves.size and moves.max() > step_cap:
        raise ContractViolationError(
            f"ABS displacement {moves.max():.12f} exceeds per-step cap {step_cap:.12f}"
        )
    xy = log.abs_positions[..., :2].reshape(-1, 2)
    if (
        (xy[:, 0] < -1e-9).any() or (xy[:, 0] > cfg.spec.d1 + 1e-9).any()
        or (xy[:, 1] < -1e-9).any() or (xy[:, 1] > cfg.spec.d2 + 1e-9).any()
    ):
        raise ContractViolationError("logged ABS position outside the service area")
    for name, cr, acr in (
        ("simplified", log.cr_simplified, log.acr_simplified),
        ("actual", log.cr_actual, log.acr_actual),
    ):
        if abs(float(cr.mean()) - acr) > 1e-12:
            raise ContractViolationError(f"{name} ACR does not match its per-step mean")
        if cr.min() < 0.0 or cr.max() > 1.0:
            raise ContractViolationError(f"{name} per-step CR outside [0, 1]")
    for rec in log.periods:
        if len(set(rec.target_cells)) != len(rec.target_cells):
            raise ContractViolationError(f"period {rec.period} targets not distinct")
        if gcm is not None:
            for c in rec.target_cells:
                if not gcm.abs_cell_valid[c - 1]:
                    raise ContractViolationError(
                        f"period {rec.period} target {c} is not a valid cell"
                    )


def export_metrics_csv(log: TrialLog, path) -> None:
    """Per-step coverage in both modes; floats via repr for stable bytes."""
    lines = ["step,cr_simplified,cr_actual"]
    for i in range(len(log.cr_simplified)):
        lines.append(f"{i + 1},{float(log.cr_simplified[i])!r},{float(log.cr_actual[i])!r}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def export_periods_csv(log: TrialLog, path) -> None:
    lines = [
        "period,trigger_step,anchor_cells,target_cells,planned_value,"
        "planning_time_s,over_budget,gap_bound"
    ]
    for rec in log.periods:
        anchor = ";".join(str(c) for c in rec.anchor_cells)
        target = ";".join(str(c) for c in rec.target_cells)
        bound = rec.report.gap_bound if rec.report is not None else 0.0
        lines.append(
            f"{rec.period},{rec.trigger_step},{anchor},{target},{rec.planned_value},"
            f"{rec.planning_time_s!r},{int(rec.over_budget)},{bound!r}"
        )
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def export_trajectory_json(log: TrialLog, path) -> None:
    payload = {
        "step_seconds": log.cfg.step,
        "abs_positions": log.abs_positions.tolist(),
        "gu_positions": log.gu_positions.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")
