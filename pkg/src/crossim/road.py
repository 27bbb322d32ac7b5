"""Road genotypes, spline geometry, validity checks, and genetic operators.

A road is encoded as a fixed-length vector of per-segment angles (degrees,
measured from the horizontal axis) and lengths (meters).  Decoding walks the
segments from an origin/heading into a control polyline; a centripetal
Catmull-Rom spline through the control points gives the drivable center line.

Coordinates are planar meters, y pointing north.  An angle of 0 points east
(+x) and 90 points north, so the default initial heading of 90 produces
northbound roads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpan, GenerationExhausted

ANGLE_MIN, ANGLE_MAX = -180.0, 180.0   # half-open: [-180, 180)
LENGTH_MIN, LENGTH_MAX = 10.0, 20.0

# Violation kinds reported by validate()
SELF_INTERSECTION = "self-intersection"
OUT_OF_BOUNDS = "out-of-bounds"
TURN_ANGLE = "turn-angle"


def wrap_angle(a: float) -> float:
    """Normalize an angle in degrees to [-180, 180)."""
    return (a + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle used as map bounds."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


#: Default map: 200 x 200 m centered on the origin.
DEFAULT_BOUNDS = Rect(-100.0, -100.0, 100.0, 100.0)


@dataclass(frozen=True)
class RoadGenotype:
    """The search variable: n segment angles (degrees) and n lengths (meters)."""

    angles: tuple[float, ...]
    lengths: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.angles) != len(self.lengths):
            raise ValueError("angles and lengths must have equal size")
        if not self.angles:
            raise ValueError("genotype needs at least one segment")
        for a in self.angles:
            if not (ANGLE_MIN <= a < ANGLE_MAX):
                raise ValueError(f"angle {a} outside [{ANGLE_MIN}, {ANGLE_MAX})")
        for l in self.lengths:
            if not (LENGTH_MIN <= l <= LENGTH_MAX):
                raise ValueError(f"length {l} outside [{LENGTH_MIN}, {LENGTH_MAX}]")

    @property
    def n(self) -> int:
        return len(self.angles)

    def to_vector(self) -> list[float]:
        """Flat [a_1..a_n, l_1..l_n] form used in result files."""
        return list(self.angles) + list(self.lengths)

    @classmethod
    def from_vector(cls, vector: list[float] | tuple[float, ...]) -> RoadGenotype:
        if len(vector) % 2 != 0:
            raise ValueError("genotype vector must have even length")
        n = len(vector) // 2
        return cls(tuple(float(v) for v in vector[:n]),
                   tuple(float(v) for v in vector[n:]))


@dataclass(frozen=True)
class ControlPolyline:
    """Ordered control points of a road (n + 2 points for n segments)."""

    points: tuple[tuple[float, float], ...]
    lane_width: float = 4.0

    def __post_init__(self) -> None:
        if len(self.points) < 3:
            raise ValueError("polyline needs at least 3 control points")
        for p, q in zip(self.points, self.points[1:]):
            if p == q:
                raise ValueError("consecutive control points must be distinct")

    @property
    def n_segments(self) -> int:
        return len(self.points) - 2


@dataclass(frozen=True)
class RoadPath:
    """Densely sampled center line produced by spline interpolation."""

    samples: np.ndarray       # (k, 2) float64
    arc_length: float

    def __post_init__(self) -> None:
        if self.samples.ndim != 2 or self.samples.shape[1] != 2:
            raise ValueError("samples must be a (k, 2) array")
        if self.arc_length <= 0:
            raise ValueError("arc length must be positive")


@dataclass(frozen=True)
class RoadFeatures:
    """Static descriptors: max triplet curvature (1/m) and number of turns."""

    curvature: float
    turn_count: int


@dataclass(frozen=True)
class ValidityVerdict:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class RoadConstraints:
    """Everything needed to build, check, and randomly generate roads."""

    n_segments: int = 5
    origin: tuple[float, float] = (0.0, 0.0)
    heading: float = 90.0                  # northbound
    lead_in: float = 10.0                  # run-up before the first segment
    lane_width: float = 4.0
    bounds: Rect = DEFAULT_BOUNDS
    max_turn_angle: float = 90.0           # between consecutive segments
    samples_per_segment: int = 25
    segment_attempts: int = 50
    restarts: int = 20


def _unit(angle_deg: float) -> tuple[float, float]:
    r = math.radians(angle_deg)
    return math.cos(r), math.sin(r)


def encode(genotype: RoadGenotype,
           origin: tuple[float, float] = (0.0, 0.0),
           heading: float = 90.0,
           lead_in: float = 10.0,
           lane_width: float = 4.0) -> ControlPolyline:
    """Decode a genotype into its control polyline.

    The second control point sits at ``origin``; the first is placed
    ``lead_in`` meters behind it along ``heading`` so the spline has a
    well-defined entry direction.  Each following point extends the previous
    one by the segment's length along its absolute angle.
    """
    hx, hy = _unit(heading)
    points = [(origin[0] - lead_in * hx, origin[1] - lead_in * hy), origin]
    for angle, length in zip(genotype.angles, genotype.lengths):
        ux, uy = _unit(angle)
        px, py = points[-1]
        points.append((px + length * ux, py + length * uy))
    return ControlPolyline(tuple(points), lane_width=lane_width)


def decode(polyline: ControlPolyline) -> RoadGenotype:
    """Recover the genotype from a control polyline (inverse of encode)."""
    angles = []
    lengths = []
    # skip the lead-in segment between the first two points
    for (x0, y0), (x1, y1) in zip(polyline.points[1:], polyline.points[2:]):
        angles.append(wrap_angle(math.degrees(math.atan2(y1 - y0, x1 - x0))))
        lengths.append(math.hypot(x1 - x0, y1 - y0))
    return RoadGenotype(tuple(angles), tuple(lengths))


# ---------------------------------------------------------------------------
# Catmull-Rom interpolation (centripetal, alpha = 0.5)
# ---------------------------------------------------------------------------

_CR_ALPHA = 0.5


def _knot(t0: float, p0: np.ndarray, p1: np.ndarray) -> float:
    d = float(np.hypot(*(p1 - p0)))
    if d == 0.0:
        raise DegenerateSpan("coincident control points")
    return t0 + d ** _CR_ALPHA


def _span_points(p0, p1, p2, p3, ts: np.ndarray) -> np.ndarray:
    """Evaluate one centripetal Catmull-Rom span (Barry-Goldman form)."""
    t0 = 0.0
    t1 = _knot(t0, p0, p1)
    t2 = _knot(t1, p1, p2)
    t3 = _knot(t2, p2, p3)
    t = (t1 + ts * (t2 - t1))[:, None]

    a1 = (t1 - t) / (t1 - t0) * p0 + (t - t0) / (t1 - t0) * p1
    a2 = (t2 - t) / (t2 - t1) * p1 + (t - t1) / (t2 - t1) * p2
    a3 = (t3 - t) / (t3 - t2) * p2 + (t - t2) / (t3 - t2) * p3
    b1 = (t2 - t) / (t2 - t0) * a1 + (t - t0) / (t2 - t0) * a2
    b2 = (t3 - t) / (t3 - t1) * a2 + (t - t1) / (t3 - t1) * a3
    return (t2 - t) / (t2 - t1) * b1 + (t - t1) / (t2 - t1) * b2


def interpolate(polyline: ControlPolyline, samples_per_segment: int = 25) -> RoadPath:
    """Sample the centripetal Catmull-Rom curve through all control points.

    Endpoint spans use mirrored phantom points, so the curve interpolates the
    first and last control point as well as every interior one.  Each span
    contributes ``samples_per_segment`` samples; span boundaries land exactly
    on the control points.

    Raises DegenerateSpan when two consecutive control points coincide.
    """
    if samples_per_segment < 2:
        raise ValueError("samples_per_segment must be >= 2")
    pts = np.asarray(polyline.points, dtype=float)
    ext = np.vstack([2 * pts[0] - pts[1], pts, 2 * pts[-1] - pts[-2]])

    ts_inner = np.arange(samples_per_segment - 1) / (samples_per_segment - 1)
    chunks = []
    for i in range(len(pts) - 1):
        p0, p1, p2, p3 = ext[i], ext[i + 1], ext[i + 2], ext[i + 3]
        span = _span_points(p0, p1, p2, p3, ts_inner)
        # force exact control-point hits at span starts
        span[0] = p1
        chunks.append(span)
    chunks.append(pts[-1][None, :])
    samples = np.vstack(chunks)

    deltas = np.diff(samples, axis=0)
    arc = float(np.hypot(deltas[:, 0], deltas[:, 1]).sum())
    return RoadPath(samples=samples, arc_length=arc)


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

def circumradius(a: tuple[float, float], b: tuple[float, float],
                 c: tuple[float, float]) -> float:
    """Radius of the circle through three points; inf when collinear."""
    ab = math.dist(a, b)
    bc = math.dist(b, c)
    ca = math.dist(c, a)
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    area = abs(cross) / 2.0
    if area == 0.0:
        return math.inf
    return ab * bc * ca / (4.0 * area)


#: Heading-change runs below this total are treated as noise, not turns.
TURN_NOISE_DEG = 5.0


def features(polyline: ControlPolyline) -> RoadFeatures:
    """Maximum triplet curvature and the number of turns of a road.

    Curvature is the largest reciprocal circumradius over consecutive
    control-point triplets (collinear triplets contribute zero).  A turn is a
    maximal run of same-sign heading changes between consecutive segments
    whose accumulated magnitude exceeds TURN_NOISE_DEG.
    """
    pts = polyline.points
    curvature = 0.0
    for a, b, c in zip(pts, pts[1:], pts[2:]):
        r = circumradius(a, b, c)
        if math.isfinite(r):
            curvature = max(curvature, 1.0 / r)

    headings = [math.degrees(math.atan2(q[1] - p[1], q[0] - p[0]))
                for p, q in zip(pts, pts[1:])]
    changes = [wrap_angle(h1 - h0) for h0, h1 in zip(headings, headings[1:])]

    turns = 0
    run_sign = 0
    run_total = 0.0
    for ch in changes + [0.0]:          # sentinel flushes the last run
        sign = (ch > 0) - (ch < 0)
        if sign != run_sign:
            if run_sign != 0 and run_total > TURN_NOISE_DEG:
                turns += 1
            run_sign = sign
            run_total = 0.0
        run_total += abs(ch)
    return RoadFeatures(curvature=curvature, turn_count=turns)


# ---------------------------------------------------------------------------
# Validity
# ---------------------------------------------------------------------------

#: Segments whose directions differ by less than this relative sine are
#: treated as parallel; guards the intersection test against float noise on
#: straight roads.
PARALLEL_EPS = 1e-9


def segments_intersect(a1, d1, a2, d2) -> bool:
    """Whether segments (a1, a1+d1) and (a2, a2+d2) share a point."""
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    scale = math.hypot(d1[0], d1[1]) * math.hypot(d2[0], d2[1])
    fx, fy = a2[0] - a1[0], a2[1] - a1[1]
    t_num = fx * d2[1] - fy * d2[0]
    u_num = fx * d1[1] - fy * d1[0]
    if abs(denom) > PARALLEL_EPS * scale:
        t = t_num / denom
        u = u_num / denom
        return 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0
    # parallel: intersect only when collinear and overlapping
    fscale = math.hypot(fx, fy) * math.hypot(d2[0], d2[1])
    if abs(t_num) > PARALLEL_EPS * max(fscale, scale):
        return False
    axis = 0 if abs(d1[0]) >= abs(d1[1]) else 1
    i0, i1 = sorted((a1[axis], a1[axis] + d1[axis]))
    j0, j1 = sorted((a2[axis], a2[axis] + d2[axis]))
    return max(i0, j0) <= min(i1, j1)


def _segments_intersect_any(samples: np.ndarray) -> bool:
    """Pairwise test over the sampled path, skipping adjacent pairs."""
    a = samples[:-1]
    d = samples[1:] - samples[:-1]
    lengths = np.hypot(d[:, 0], d[:, 1])
    k = len(a)
    if k < 3:
        return False
    ii, jj = np.triu_indices(k, 2)
    ai, di = a[ii], d[ii]
    aj, dj = a[jj], d[jj]
    denom = di[:, 0] * dj[:, 1] - di[:, 1] * dj[:, 0]
    scale = lengths[ii] * lengths[jj]
    diff = aj - ai
    t_num = diff[:, 0] * dj[:, 1] - diff[:, 1] * dj[:, 0]
    u_num = diff[:, 0] * di[:, 1] - diff[:, 1] * di[:, 0]
    nonpar = np.abs(denom) > PARALLEL_EPS * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(nonpar, t_num / denom, np.nan)
        u = np.where(nonpar, u_num / denom, np.nan)
    if bool((nonpar & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)).any()):
        return True
    if not bool(nonpar.all()):
        fscale = np.hypot(diff[:, 0], diff[:, 1]) * lengths[jj]
        coll = ~nonpar & (np.abs(t_num) <= PARALLEL_EPS * np.maximum(fscale, scale))
        for p in np.nonzero(coll)[0]:
            if _collinear_overlap(ai[p], di[p], aj[p], dj[p]):
                return True
    return False


def _collinear_overlap(ai, di, aj, dj) -> bool:
    axis = 0 if abs(di[0]) >= abs(di[1]) else 1
    i0, i1 = sorted((ai[axis], ai[axis] + di[axis]))
    j0, j1 = sorted((aj[axis], aj[axis] + dj[axis]))
    return max(i0, j0) <= min(i1, j1)


def turn_angles(polyline: ControlPolyline) -> list[float]:
    """Absolute heading change (degrees) between consecutive segments."""
    pts = polyline.points
    headings = [math.degrees(math.atan2(q[1] - p[1], q[0] - p[0]))
                for p, q in zip(pts, pts[1:])]
    return [abs(wrap_angle(h1 - h0)) for h0, h1 in zip(headings, headings[1:])]


def validate(polyline: ControlPolyline,
             map_bounds: Rect = DEFAULT_BOUNDS,
             max_turn_angle: float = 90.0,
             samples_per_segment: int = 25) -> ValidityVerdict:
    """Check a road against all validity constraints.

    The verdict lists every violated constraint: self-intersection of the
    interpolated path, samples outside the map rectangle, and turning angles
    between consecutive segments above the threshold.
    """
    violations = []

    if any(t > max_turn_angle for t in turn_angles(polyline)):
        violations.append(TURN_ANGLE)

    path = interpolate(polyline, samples_per_segment)
    xs, ys = path.samples[:, 0], path.samples[:, 1]
    inside = ((xs >= map_bounds.x_min) & (xs <= map_bounds.x_max)
              & (ys >= map_bounds.y_min) & (ys <= map_bounds.y_max))
    if not bool(inside.all()):
        violations.append(OUT_OF_BOUNDS)

    if _segments_intersect_any(path.samples):
        violations.append(SELF_INTERSECTION)

    return ValidityVerdict(tuple(violations))


def build_road(genotype: RoadGenotype, constraints: RoadConstraints) -> ControlPolyline:
    return encode(genotype, origin=constraints.origin, heading=constraints.heading,
                  lead_in=constraints.lead_in, lane_width=constraints.lane_width)


def check_genotype(genotype: RoadGenotype, constraints: RoadConstraints) -> ValidityVerdict:
    return validate(build_road(genotype, constraints),
                    map_bounds=constraints.bounds,
                    max_turn_angle=constraints.max_turn_angle,
                    samples_per_segment=constraints.samples_per_segment)


# ---------------------------------------------------------------------------
# Random generation and genetic operators
# ---------------------------------------------------------------------------

def sample_random(rng: np.random.Generator,
                  constraints: RoadConstraints = RoadConstraints()) -> RoadGenotype:
    """Generate a random valid genotype, segment by segment.

    Each segment's heading is drawn relative to the previous one within the
    turn-angle limit, and the growing control polygon is kept inside the map.
    The full spline check runs once per candidate; failures trigger a restart.
    Raises GenerationExhausted when the retry budget runs out.
    """
    for _ in range(constraints.restarts):
        genotype = _sample_once(rng, constraints)
        if genotype is not None and check_genotype(genotype, constraints).ok:
            return genotype
    raise GenerationExhausted(
        f"no valid road after {constraints.restarts} restarts")


def _sample_once(rng: np.random.Generator,
                 constraints: RoadConstraints) -> RoadGenotype | None:
    heading = constraints.heading
    x, y = constraints.origin
    pts = [constraints.origin]
    angles: list[float] = []
    lengths: list[float] = []
    prev_heading = heading
    for _ in range(constraints.n_segments):
        for _attempt in range(constraints.segment_attempts):
            turn = rng.uniform(-constraints.max_turn_angle, constraints.max_turn_angle)
            seg_heading = wrap_angle(prev_heading + turn)
            length = rng.uniform(LENGTH_MIN, LENGTH_MAX)
            ux, uy = _unit(seg_heading)
            nx, ny = x + length * ux, y + length * uy
            if constraints.bounds.contains(nx, ny):
                angles.append(seg_heading)
                lengths.append(length)
                prev_heading = seg_heading
                x, y = nx, ny
                pts.append((x, y))
                break
        else:
            return None
    return RoadGenotype(tuple(angles), tuple(lengths))


#: Default mutation range for angle perturbations, in degrees.
MUTATION_EXTENT = (-8.0, 8.0)


def mutate(genotype: RoadGenotype,
           rng: np.random.Generator,
           rate: float = 0.1,
           extent_range: tuple[float, float] = MUTATION_EXTENT,
           constraints: RoadConstraints = RoadConstraints()) -> RoadGenotype:
    """Per-gene mutation; invalid mutants are replaced by a fresh random road.

    Angle genes shift by a uniform delta from ``extent_range`` (wrapped back
    into range); length genes are redrawn uniformly within the length bounds.
    """
    if rate <= 0.0:
        return genotype
    angles = list(genotype.angles)
    lengths = list(genotype.lengths)
    changed = False
    for i in range(genotype.n):
        if rng.random() < rate:
            angles[i] = wrap_angle(angles[i] + rng.uniform(*extent_range))
            changed = True
        if rng.random() < rate:
            lengths[i] = rng.uniform(LENGTH_MIN, LENGTH_MAX)
            changed = True
    if not changed:
        return genotype
    mutant = RoadGenotype(tuple(angles), tuple(lengths))
    if check_genotype(mutant, constraints).ok:
        return mutant
    return sample_random(rng, constraints)


def crossover(p1: RoadGenotype,
              p2: RoadGenotype,
              rng: np.random.Generator,
              constraints: RoadConstraints = RoadConstraints()
              ) -> tuple[RoadGenotype, RoadGenotype]:
    """One-point crossover exchanging road tails past a random cut.

    The cut index is uniform in [1, n-1] and applies to both the angle and
    the length vector.  Invalid offspring are replaced by random roads.
    """
    if p1.n != p2.n:
        raise ValueError("parents must have the same segment count")
    cut = int(rng.integers(1, p1.n))
    o1 = RoadGenotype(p1.angles[:cut] + p2.angles[cut:],
                      p1.lengths[:cut] + p2.lengths[cut:])
    o2 = RoadGenotype(p2.angles[:cut] + p1.angles[cut:],
                      p2.lengths[:cut] + p1.lengths[cut:])
    out = []
    for child in (o1, o2):
        if check_genotype(child, constraints).ok:
            out.append(child)
        else:
            out.append(sample_random(rng, constraints))
    return out[0], out[1]
