"""Simulator backends and the lane-keeping controller under test.

Three built-in backends share one deterministic pure-pursuit controller but
differ in vehicle dynamics: an ideal kinematic bicycle, a kinematic bicycle
with actuator delay and a steering-rate limit, and a dynamic bicycle with
linear tire slip and reduced steering range.  The divergence is deliberate:
the same road can fail on one backend and pass on another, which is what the
ensemble search exploits.

A rollout follows the interpolated center line until the vehicle passes the
end of the road or its cross-track error exceeds the cutoff.  Rollouts are
pure functions of (genotype, backend, run_seed).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from . import road as road_mod
from .errors import InvalidRoad
from .road import RoadConstraints, RoadGenotype

KINEMATIC_IDEAL = "kinematic-ideal"
KINEMATIC_LAGGED = "kinematic-lagged"
DYNAMIC_SLIP = "dynamic-slip"

END_OF_ROAD = "end-of-road"
XTE_CUTOFF = "xte-cutoff"

#: Simulation stops once |cross-track error| exceeds this (meters).
DEFAULT_XTE_CUTOFF = 3.0
#: A test fails when its maximum |cross-track error| exceeds this (meters).
DEFAULT_ORACLE_THRESHOLD = 2.2

WHEELBASE = 2.5       # m
LOOKAHEAD = 8.0       # m, pure-pursuit target distance along the path


@dataclass(frozen=True)
class BackendSpec:
    """Configuration of one simulated vehicle backend."""

    id: str
    dynamics_kind: str
    max_steer: float                  # degrees
    steer_rate_limit: float | None    # degrees per second, None = unlimited
    actuator_delay: int               # whole simulation steps
    speed: float = 10.0               # m/s
    timestep: float = 0.05            # s (20 Hz)
    noise_std: float = 0.02           # m, position sensing noise

    def __post_init__(self) -> None:
        if self.timestep <= 0 or self.speed <= 0:
            raise ValueError("speed and timestep must be positive")
        if not (0.0 < self.max_steer < 90.0):
            raise ValueError("max_steer must be in (0, 90) degrees")
        if self.actuator_delay < 0:
            raise ValueError("actuator_delay must be >= 0")


def builtin_ensemble() -> list[BackendSpec]:
    """The three built-in divergent backends (ids A, B, C)."""
    return [
        BackendSpec(id="A", dynamics_kind=KINEMATIC_IDEAL,
                    max_steer=30.0, steer_rate_limit=None, actuator_delay=0),
        BackendSpec(id="B", dynamics_kind=KINEMATIC_LAGGED,
                    max_steer=25.0, steer_rate_limit=40.0, actuator_delay=3),
        BackendSpec(id="C", dynamics_kind=DYNAMIC_SLIP,
                    max_steer=19.0, steer_rate_limit=None, actuator_delay=0),
    ]


def backend_by_id(backend_id: str) -> BackendSpec:
    for spec in builtin_ensemble():
        if spec.id == backend_id:
            return spec
    raise KeyError(f"unknown backend id: {backend_id!r}")


@dataclass(frozen=True)
class SimulationTrace:
    """Pose and signed cross-track error time series of one rollout."""

    poses: np.ndarray         # (k, 3): x, y, heading in degrees
    xte: np.ndarray           # (k,), signed, positive left of the center line
    terminated_by: str        # END_OF_ROAD or XTE_CUTOFF
    timestep: float

    def max_abs_xte(self) -> float:
        return float(np.abs(self.xte).max())


@dataclass(frozen=True)
class Evaluation:
    fitness: float            # -min(max |xte|, cutoff); in [-cutoff, 0]
    failed: bool


def evaluate(trace: SimulationTrace,
             oracle_threshold: float = DEFAULT_ORACLE_THRESHOLD,
             cutoff: float = DEFAULT_XTE_CUTOFF) -> Evaluation:
    """Score a trace: fitness is the negated worst deviation, clamped at the
    cutoff; the oracle fires on strict exceedance of the threshold."""
    worst = trace.max_abs_xte()
    return Evaluation(fitness=-min(worst, cutoff), failed=worst > oracle_threshold)


# ---------------------------------------------------------------------------
# Center-line frame: projection and cross-track error
# ---------------------------------------------------------------------------

class PathFrame:
    """Precomputed segment data of a sampled path for fast projection."""

    def __init__(self, samples: np.ndarray):
        self.samples = samples
        self.ax = np.ascontiguousarray(samples[:-1, 0])
        self.ay = np.ascontiguousarray(samples[:-1, 1])
        self.dx = np.ascontiguousarray(samples[1:, 0] - samples[:-1, 0])
        self.dy = np.ascontiguousarray(samples[1:, 1] - samples[:-1, 1])
        seg_len = np.hypot(self.dx, self.dy)
        self.seg_len = seg_len
        self.inv_len2 = 1.0 / np.maximum(seg_len * seg_len, 1e-18)
        self.cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.total = float(self.cum[-1])
        self.count = len(seg_len)
        end_len = max(float(seg_len[-1]), 1e-9)
        self.end = (float(samples[-1, 0]), float(samples[-1, 1]))
        self.end_dir = (float(self.dx[-1]) / end_len, float(self.dy[-1]) / end_len)

    def project(self, px: float, py: float,
                lo: int = 0, hi: int | None = None) -> tuple[float, float, int, float]:
        """Nearest point on the path (restricted to segments [lo, hi)).

        Returns (arc position, signed cross-track error, segment index,
        segment parameter).  Positive error means left of the travel
        direction.
        """
        sl = slice(lo, hi)
        ax, ay, dx, dy = self.ax[sl], self.ay[sl], self.dx[sl], self.dy[sl]
        rx = px - ax
        ry = py - ay
        t = (rx * dx + ry * dy) * self.inv_len2[sl]
        np.clip(t, 0.0, 1.0, out=t)
        ex = rx - t * dx
        ey = ry - t * dy
        dist2 = ex * ex + ey * ey
        k = int(np.argmin(dist2))
        i = lo + k
        ti = float(t[k])
        cross = float(dx[k]) * float(ey[k]) - float(dy[k]) * float(ex[k])
        sign = 1.0 if cross > 0 else (-1.0 if cross < 0 else 0.0)
        s = float(self.cum[i]) + ti * float(self.seg_len[i])
        return s, sign * math.sqrt(float(dist2[k])), i, ti

    def point_at(self, s: float) -> tuple[float, float]:
        """Point at arc position s; positions past the end extend straight
        along the final heading (keeps the pursuit target ahead of the
        vehicle near the finish instead of letting it orbit the end point)."""
        if s > self.total:
            over = s - self.total
            return (self.end[0] + over * self.end_dir[0],
                    self.end[1] + over * self.end_dir[1])
        s = max(s, 0.0)
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(max(i, 0), self.count - 1)
        seg = float(self.seg_len[i])
        t = 0.0 if seg == 0 else (s - float(self.cum[i])) / seg
        return float(self.ax[i] + t * self.dx[i]), float(self.ay[i] + t * self.dy[i])


# ---------------------------------------------------------------------------
# Vehicle dynamics
# ---------------------------------------------------------------------------

# dynamic-slip bicycle constants
_VEHICLE_MASS = 1200.0        # kg
_YAW_INERTIA = 1800.0         # kg m^2
_DIST_FRONT = 1.2             # m, CoG to front axle
_DIST_REAR = 1.3              # m, CoG to rear axle
_CORNERING_STIFFNESS = 45000.0  # N/rad per axle
_SLIP_SUBSTEPS = 5


class _VehicleState:
    __slots__ = ("x", "y", "heading", "steer", "lat_vel", "yaw_rate")

    def __init__(self, x: float, y: float, heading: float):
        self.x = x
        self.y = y
        self.heading = heading    # radians
        self.steer = 0.0          # radians, currently applied
        self.lat_vel = 0.0        # m/s, body frame (dynamic model only)
        self.yaw_rate = 0.0       # rad/s (dynamic model only)


def _step_kinematic(state: _VehicleState, steer: float, speed: float, dt: float) -> None:
    state.x += speed * math.cos(state.heading) * dt
    state.y += speed * math.sin(state.heading) * dt
    state.heading += speed / WHEELBASE * math.tan(steer) * dt


def _step_dynamic_slip(state: _VehicleState, steer: float, speed: float, dt: float) -> None:
    h = dt / _SLIP_SUBSTEPS
    for _ in range(_SLIP_SUBSTEPS):
        vy, r = state.lat_vel, state.yaw_rate
        alpha_f = math.atan2(vy + _DIST_FRONT * r, speed) - steer
        alpha_r = math.atan2(vy - _DIST_REAR * r, speed)
        f_front = -_CORNERING_STIFFNESS * alpha_f
        f_rear = -_CORNERING_STIFFNESS * alpha_r
        vy_dot = (f_front + f_rear) / _VEHICLE_MASS - speed * r
        r_dot = (_DIST_FRONT * f_front - _DIST_REAR * f_rear) / _YAW_INERTIA
        state.lat_vel += vy_dot * h
        state.yaw_rate += r_dot * h
        state.heading += state.yaw_rate * h
        cos_h, sin_h = math.cos(state.heading), math.sin(state.heading)
        state.x += (speed * cos_h - state.lat_vel * sin_h) * h
        state.y += (speed * sin_h + state.lat_vel * cos_h) * h


def _pure_pursuit(frame: PathFrame, px: float, py: float, heading: float,
                  hint: int, progress: float) -> tuple[float, float]:
    """Steering command (radians) toward a point LOOKAHEAD meters ahead.

    The sensed position is projected near the vehicle's current path segment
    (``hint``; the sensing noise is far smaller than the window).  The target
    arc position never moves backward past ``progress``: without that floor a
    vehicle thrown off by an impossible bend can chase its own receding
    projection in a perpetual circle instead of diverging.

    Returns (steering command, updated progress).
    """
    lo = max(0, hint - 4)
    hi = min(frame.count, hint + 5)
    s, _, _, _ = frame.project(px, py, lo, hi)
    progress = max(progress, s)
    tx, ty = frame.point_at(progress + LOOKAHEAD)
    dx, dy = tx - px, ty - py
    chord = math.hypot(dx, dy)
    if chord < 1e-9:
        return 0.0, progress
    alpha = math.atan2(dy, dx) - heading
    return math.atan2(2.0 * WHEELBASE * math.sin(alpha), chord), progress


def prepare(genotype: RoadGenotype,
            constraints: RoadConstraints = RoadConstraints()) -> road_mod.RoadPath:
    """Validate a genotype and interpolate its center line once.

    Raises InvalidRoad on constraint violations.  Campaigns call this a
    single time per test and then roll every backend on the shared path.
    """
    verdict = road_mod.check_genotype(genotype, constraints)
    if not verdict.ok:
        raise InvalidRoad(f"road violates constraints: {', '.join(verdict.violations)}")
    polyline = road_mod.build_road(genotype, constraints)
    return road_mod.interpolate(polyline, constraints.samples_per_segment)


def simulate(genotype: RoadGenotype,
             backend: BackendSpec,
             run_seed: int | list[int] = 0,
             constraints: RoadConstraints = RoadConstraints(),
             cutoff: float = DEFAULT_XTE_CUTOFF) -> SimulationTrace:
    """Roll the lane-keeping controller along a road on one backend.

    Raises InvalidRoad when the genotype violates the road constraints.
    The rollout is bitwise deterministic for fixed inputs; sensing noise is
    the only stochastic element and is driven entirely by ``run_seed``.
    """
    return simulate_path(prepare(genotype, constraints), backend, run_seed,
                         cutoff=cutoff)


def simulate_path(path: road_mod.RoadPath,
                  backend: BackendSpec,
                  run_seed: int | list[int] = 0,
                  cutoff: float = DEFAULT_XTE_CUTOFF) -> SimulationTrace:
    """Rollout along an already-interpolated center line."""
    frame = PathFrame(path.samples)
    rng = np.random.default_rng(run_seed)

    start = path.samples[0]
    first = path.samples[1] - path.samples[0]
    state = _VehicleState(float(start[0]), float(start[1]),
                          math.atan2(float(first[1]), float(first[0])))

    max_steer = math.radians(backend.max_steer)
    dt = backend.timestep
    delay_queue = [0.0] * backend.actuator_delay

    poses: list[tuple[float, float, float]] = []
    xtes: list[float] = []
    terminated = END_OF_ROAD

    # generous cap; reaching it means the vehicle neither finished nor left
    max_steps = int(4 * frame.total / (backend.speed * dt)) + 400
    noise = rng.normal(0.0, 1.0, (max_steps, 2)) * backend.noise_std
    progress = 0.0
    for step in range(max_steps):
        s, xte, seg_idx, _ = frame.project(state.x, state.y)
        if s >= frame.total - 1e-9 and poses:
            # passed the end of the last segment; the beyond-end pose is not
            # part of the drive and would inflate xte with overshoot
            terminated = END_OF_ROAD
            break
        poses.append((state.x, state.y, math.degrees(state.heading)))
        xtes.append(xte)
        if abs(xte) > cutoff:
            terminated = XTE_CUTOFF
            break

        command, progress = _pure_pursuit(
            frame, state.x + noise[step, 0], state.y + noise[step, 1],
            state.heading, seg_idx, progress)
        command = max(-max_steer, min(max_steer, command))

        if backend.actuator_delay > 0:
            delay_queue.append(command)
            command = delay_queue.pop(0)
        if backend.steer_rate_limit is not None:
            max_delta = math.radians(backend.steer_rate_limit) * dt
            delta = max(-max_delta, min(max_delta, command - state.steer))
            state.steer += delta
        else:
            state.steer = command

        if backend.dynamics_kind == DYNAMIC_SLIP:
            _step_dynamic_slip(state, state.steer, backend.speed, dt)
        else:
            _step_kinematic(state, state.steer, backend.speed, dt)
    else:
        raise RuntimeError("rollout exceeded the step cap without terminating")

    return SimulationTrace(poses=np.array(poses, dtype=float),
                           xte=np.array(xtes, dtype=float),
                           terminated_by=terminated,
                           timestep=dt)


def with_noise(backend: BackendSpec, noise_std: float) -> BackendSpec:
    return replace(backend, noise_std=noise_std)


def trace_to_csv(trace: SimulationTrace) -> str:
    """CSV export with columns t, x, y, heading_deg, xte."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", "x", "y", "heading_deg", "xte"])
    for i, ((x, y, h), e) in enumerate(zip(trace.poses, trace.xte)):
        writer.writerow([f"{i * trace.timestep:.3f}", repr(float(x)), repr(float(y)),
                         repr(float(h)), repr(float(e))])
    return buf.getvalue()
