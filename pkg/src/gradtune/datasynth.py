"""Procedural generator, renderer and constraint oracle for the synthetic tasks.

Eight binary tasks over 32x32 grayscale stimuli built from line segments:

    ac    angle (20..160 deg)        vs crossing segment pair
    acl   ac plus one distractor line
    at    angle                      vs triangle (each angle 20..160 deg)
    atl   at plus one distractor line
    sbl   sharp angle (20..80)       vs blunt angle (100..160), one distractor
    sbt   sharp triangle             vs blunt triangle, one distractor
    sb2l  sbl with two distractor lines
    cnc   crossing pair              vs non-crossing pair

Label 0 is the first-named concept of the task (angle / sharp / crossing),
label 1 the second.  Every segment is at least 13 px long and lies inside
the frame; crossing points must sit between 20% and 80% along each segment;
distractors may not touch any figure segment (nor each other).  A sharp
triangle has all angles in [20, 80] degrees, a blunt one has its largest
angle in [100, 160] and all angles at least 20.

Rendering: figures are drawn as 1 px anti-aliased strokes, white (1.0) on a
dark random background or black (0.0) on a light one.  Backgrounds are
blockwise value noise at block sizes 1 / 2 / 4 / 8 px ("kinds" 0..3), dark
values in [0, 0.4] and light in [0.6, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import ImageSplit, LabeledDataset
from .numerics import SeededRng, derive_seed

FRAME = 32.0
MARGIN = 1.0  # sampled endpoints keep this distance from the frame edge
MIN_SEG_LEN = 13.0
CROSS_WINDOW = (0.2, 0.8)
ANGLE_FULL = (20.0, 160.0)
SHARP = (20.0, 80.0)
BLUNT = (100.0, 160.0)
ANGLE_MIN = 20.0
DARK_BAND = (0.0, 0.4)
LIGHT_BAND = (0.6, 1.0)
BLOCK_SIZES = (1, 2, 4, 8)
_TOL = 1e-9  # validator slack for float round trips through coordinates

Point = tuple[float, float]


class SampleBudgetError(RuntimeError):
    """Rejection budget exhausted; indicates a geometry-sampler bug."""


class _Budget:
    def __init__(self, attempts: int = 10_000):
        self.left = attempts

    def spend(self):
        if self.left <= 0:
            raise SampleBudgetError("scene rejection budget (10^4 attempts) exceeded")
        self.left -= 1


@dataclass(frozen=True)
class Segment:
    p0: Point
    p1: Point

    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])

    def segments(self) -> tuple["Segment", ...]:
        return (self,)


@dataclass(frozen=True)
class Angle:
    vertex: Point
    p1: Point
    p2: Point

    def segments(self) -> tuple[Segment, Segment]:
        return (Segment(self.vertex, self.p1), Segment(self.vertex, self.p2))

    def amplitude(self) -> float:
        return angle_amplitude(*self.segments())


@dataclass(frozen=True)
class Triangle:
    a: Point
    b: Point
    c: Point

    def segments(self) -> tuple[Segment, Segment, Segment]:
        return (Segment(self.a, self.b), Segment(self.b, self.c), Segment(self.c, self.a))

    def angles(self) -> tuple[float, float, float]:
        def at(v, u, w):
            return _ray_angle((u[0] - v[0], u[1] - v[1]), (w[0] - v[0], w[1] - v[1]))

        return (at(self.a, self.b, self.c), at(self.b, self.c, self.a), at(self.c, self.a, self.b))


@dataclass(frozen=True)
class CrossingPair:
    s1: Segment
    s2: Segment

    def segments(self) -> tuple[Segment, Segment]:
        return (self.s1, self.s2)


@dataclass(frozen=True)
class NonCrossingPair:
    s1: Segment
    s2: Segment

    def segments(self) -> tuple[Segment, Segment]:
        return (self.s1, self.s2)


@dataclass
class Scene:
    task: str
    label: int
    figures: list
    distractors: list[Segment]
    polarity: str  # white_on_dark | black_on_light
    background_kind: int  # 0..3, index into BLOCK_SIZES

    def all_segments(self) -> list[Segment]:
        segs = [s for fig in self.figures for s in fig.segments()]
        segs.extend(self.distractors)
        return segs


@dataclass
class Stimulus:
    pixels: np.ndarray  # float64 (32, 32) in [0, 1]
    label: int

    def to_u8(self) -> np.ndarray:
        return np.rint(self.pixels * 255.0).astype(np.uint8)


@dataclass(frozen=True)
class TaskDef:
    figures: tuple[tuple[str, tuple[float, float] | None], tuple[str, tuple[float, float] | None]]
    n_distractors: int


TASKS: dict[str, TaskDef] = {
    "ac": TaskDef((("angle", ANGLE_FULL), ("crossing", None)), 0),
    "acl": TaskDef((("angle", ANGLE_FULL), ("crossing", None)), 1),
    "at": TaskDef((("angle", ANGLE_FULL), ("triangle", ANGLE_FULL)), 0),
    "atl": TaskDef((("angle", ANGLE_FULL), ("triangle", ANGLE_FULL)), 1),
    "sbl": TaskDef((("angle", SHARP), ("angle", BLUNT)), 1),
    "sbt": TaskDef((("triangle", SHARP), ("triangle", BLUNT)), 1),
    "sb2l": TaskDef((("angle", SHARP), ("angle", BLUNT)), 2),
    "cnc": TaskDef((("crossing", None), ("noncrossing", None)), 0),
}


# --- geometry ---------------------------------------------------------------


def _ray_angle(r1: Point, r2: Point) -> float:
    n1 = math.hypot(*r1)
    n2 = math.hypot(*r2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("zero-length ray")
    cosv = (r1[0] * r2[0] + r1[1] * r2[1]) / (n1 * n2)
    return math.degrees(math.acos(max(-1.0, min(1.0, cosv))))


def angle_amplitude(s1: Segment, s2: Segment) -> float:
    """Amplitude in degrees of the angle formed by two rays sharing an endpoint."""
    for v in (s1.p0, s1.p1):
        for w in (s2.p0, s2.p1):
            if v == w:
                other1 = s1.p1 if v == s1.p0 else s1.p0
                other2 = s2.p1 if w == s2.p0 else s2.p0
                return _ray_angle(
                    (other1[0] - v[0], other1[1] - v[1]), (other2[0] - v[0], other2[1] - v[1])
                )
    raise ValueError("segments do not share an endpoint")


def segments_cross(s1: Segment, s2: Segment) -> tuple[float, float] | None:
    """Parameters of the open-segment intersection point, or None.

    Collinear overlap reports None (such pairs are rejected at sampling).
    """
    d1 = (s1.p1[0] - s1.p0[0], s1.p1[1] - s1.p0[1])
    d2 = (s2.p1[0] - s2.p0[0], s2.p1[1] - s2.p0[1])
    denom = d1[0] * d2[1] - d1[1] * d2[0]
    scale = math.hypot(*d1) * math.hypot(*d2)
    if abs(denom) <= 1e-12 * scale:
        return None
    r = (s2.p0[0] - s1.p0[0], s2.p0[1] - s1.p0[1])
    t1 = (r[0] * d2[1] - r[1] * d2[0]) / denom
    t2 = (r[0] * d1[1] - r[1] * d1[0]) / denom
    if 0.0 < t1 < 1.0 and 0.0 < t2 < 1.0:
        return (t1, t2)
    return None


def _orient(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _in_bbox(a: Point, b: Point, p: Point) -> bool:
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def segments_touch(s1: Segment, s2: Segment) -> bool:
    """True when the closed segments share any point (incl. endpoints, overlap)."""
    a, b, c, d = s1.p0, s1.p1, s2.p0, s2.p1
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)) and o1 != 0 and o2 != 0 and o3 != 0 and o4 != 0:
        return True
    if o1 == 0 and _in_bbox(a, b, c):
        return True
    if o2 == 0 and _in_bbox(a, b, d):
        return True
    if o3 == 0 and _in_bbox(c, d, a):
        return True
    if o4 == 0 and _in_bbox(c, d, b):
        return True
    return False


# --- samplers ---------------------------------------------------------------


def _sample_point(rng: SeededRng) -> Point:
    return (rng.uniform(MARGIN, FRAME - MARGIN), rng.uniform(MARGIN, FRAME - MARGIN))


def _ray_limit(p: Point, dx: float, dy: float) -> float:
    """Largest t keeping p + t*(dx, dy) inside the margin box."""
    t = math.inf
    if dx > 0:
        t = min(t, (FRAME - MARGIN - p[0]) / dx)
    elif dx < 0:
        t = min(t, (MARGIN - p[0]) / dx)
    if dy > 0:
        t = min(t, (FRAME - MARGIN - p[1]) / dy)
    elif dy < 0:
        t = min(t, (MARGIN - p[1]) / dy)
    return t


def _sample_angle(window, rng: SeededRng, budget: _Budget) -> Angle:
    lo, hi = window
    while True:
        budget.spend()
        vertex = _sample_point(rng)
        theta1 = rng.uniform(0.0, 2.0 * math.pi)
        amp = rng.uniform(lo, hi)
        theta2 = theta1 + math.radians(amp) * (1.0 if rng.coin() else -1.0)
        ends = []
        for theta in (theta1, theta2):
            dx, dy = math.cos(theta), math.sin(theta)
            tmax = _ray_limit(vertex, dx, dy)
            if tmax <= MIN_SEG_LEN:
                break
            length = rng.uniform(MIN_SEG_LEN, tmax)
            ends.append((vertex[0] + length * dx, vertex[1] + length * dy))
        if len(ends) == 2:
            return Angle(vertex, ends[0], ends[1])


def _sample_triangle(window, rng: SeededRng, budget: _Budget) -> Triangle:
    lo, hi = window
    while True:
        budget.spend()
        tri = Triangle(_sample_point(rng), _sample_point(rng), _sample_point(rng))
        if any(s.length() < MIN_SEG_LEN for s in tri.segments()):
            continue
        angs = tri.angles()
        if min(angs) >= ANGLE_MIN and lo <= max(angs) <= hi:
            return tri


def _sample_segment(rng: SeededRng, budget: _Budget) -> Segment:
    while True:
        budget.spend()
        seg = Segment(_sample_point(rng), _sample_point(rng))
        if seg.length() >= MIN_SEG_LEN:
            return seg


def _segment_through(
    point: Point, rng: SeededRng, budget: _Budget, avoid_dir=None, tries: int = 16
) -> tuple[Segment, Point] | None:
    """A segment whose 20-80% window contains ``point``, or None.

    Points too close to a frame corner have no direction with enough
    backward extent; the caller resamples the point when this gives up.
    """
    for _ in range(tries):
        budget.spend()
        theta = rng.uniform(0.0, 2.0 * math.pi)
        dx, dy = math.cos(theta), math.sin(theta)
        if avoid_dir is not None and abs(dx * avoid_dir[1] - dy * avoid_dir[0]) < 1e-3:
            continue  # near-parallel pairs make the crossing recompute ill-conditioned
        t = rng.uniform(*CROSS_WINDOW)
        back = _ray_limit(point, -dx, -dy)
        fwd = _ray_limit(point, dx, dy)
        lmax = min(back / t, fwd / (1.0 - t))
        if lmax <= MIN_SEG_LEN:
            continue
        length = rng.uniform(MIN_SEG_LEN, lmax)
        p0 = (point[0] - t * length * dx, point[1] - t * length * dy)
        p1 = (point[0] + (1.0 - t) * length * dx, point[1] + (1.0 - t) * length * dy)
        return Segment(p0, p1), (dx, dy)
    return None


def _sample_crossing(window, rng: SeededRng, budget: _Budget) -> CrossingPair:
    while True:
        budget.spend()
        point = _sample_point(rng)
        first = _segment_through(point, rng, budget)
        if first is None:
            continue
        second = _segment_through(point, rng, budget, avoid_dir=first[1])
        if second is None:
            continue
        return CrossingPair(first[0], second[0])


def _sample_noncrossing(window, rng: SeededRng, budget: _Budget) -> NonCrossingPair:
    while True:
        budget.spend()
        s1 = _sample_segment(rng, budget)
        s2 = _sample_segment(rng, budget)
        if not segments_touch(s1, s2):
            return NonCrossingPair(s1, s2)


_FIGURE_SAMPLERS = {
    "angle": _sample_angle,
    "triangle": _sample_triangle,
    "crossing": _sample_crossing,
    "noncrossing": _sample_noncrossing,
}


def _sample_distractor(existing: list[Segment], rng: SeededRng, budget: _Budget) -> Segment:
    while True:
        budget.spend()
        cand = _sample_segment(rng, budget)
        if not any(segments_touch(cand, seg) for seg in existing):
            return cand


def sample_scene(task: str, label: int, rng: SeededRng) -> Scene:
    """Rejection-sample a scene satisfying every constraint of the task."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {sorted(TASKS)}")
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    td = TASKS[task]
    budget = _Budget()
    polarity = "white_on_dark" if rng.coin() else "black_on_light"
    background_kind = rng.below(4)
    kind, window = td.figures[label]
    figure = _FIGURE_SAMPLERS[kind](window, rng, budget)
    placed = list(figure.segments())
    distractors: list[Segment] = []
    for _ in range(td.n_distractors):
        d = _sample_distractor(placed, rng, budget)
        distractors.append(d)
        placed.append(d)
    scene = Scene(task, label, [figure], distractors, polarity, background_kind)
    check = validate_scene(scene)
    if not check.ok:
        raise SampleBudgetError(f"sampler produced an invalid scene: {check.reason}")
    return scene


# --- validation (independent oracle over raw coordinates) -------------------


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate_scene(s: Scene) -> ValidationResult:
    def fail(reason: str) -> ValidationResult:
        return ValidationResult(False, reason)

    td = TASKS.get(s.task)
    if td is None:
        return fail(f"unknown task {s.task!r}")
    if s.label not in (0, 1):
        return fail(f"bad label {s.label!r}")
    for seg in s.all_segments():
        if seg.length() < MIN_SEG_LEN - _TOL:
            return fail(f"segment too short: {seg.length():.3f} px")
        for p in (seg.p0, seg.p1):
            if not (0.0 <= p[0] <= FRAME and 0.0 <= p[1] <= FRAME):
                return fail(f"segment endpoint outside the frame: {p}")
    if len(s.figures) != 1:
        return fail(f"expected exactly one figure, found {len(s.figures)}")
    figure = s.figures[0]
    kind, window = td.figures[s.label]

    if kind == "angle":
        if not isinstance(figure, Angle):
            return fail(f"expected an angle, found {type(figure).__name__}")
        try:
            amp = angle_amplitude(*figure.segments())
        except ValueError as e:
            return fail(str(e))
        if not (window[0] - _TOL <= amp <= window[1] + _TOL):
            return fail(f"angle amplitude {amp:.3f} outside [{window[0]}, {window[1]}]")
    elif kind == "triangle":
        if not isinstance(figure, Triangle):
            return fail(f"expected a triangle, found {type(figure).__name__}")
        angs = figure.angles()
        if min(angs) < ANGLE_MIN - _TOL:
            return fail(f"triangle angle {min(angs):.3f} below {ANGLE_MIN}")
        if not (window[0] - _TOL <= max(angs) <= window[1] + _TOL):
            return fail(f"largest triangle angle {max(angs):.3f} outside [{window[0]}, {window[1]}]")
    elif kind == "crossing":
        if not isinstance(figure, CrossingPair):
            return fail(f"expected a crossing pair, found {type(figure).__name__}")
        params = segments_cross(figure.s1, figure.s2)
        if params is None:
            return fail("segments do not cross")
        lo, hi = CROSS_WINDOW
        if not all(lo - _TOL <= t <= hi + _TOL for t in params):
            return fail(f"crossing parameters {params} outside the 20-80% window")
    elif kind == "noncrossing":
        if not isinstance(figure, NonCrossingPair):
            return fail(f"expected a non-crossing pair, found {type(figure).__name__}")
        if segments_touch(figure.s1, figure.s2):
            return fail("non-crossing pair intersects")
    else:  # pragma: no cover
        return fail(f"unhandled figure kind {kind!r}")

    if len(s.distractors) != td.n_distractors:
        return fail(f"expected {td.n_distractors} distractors, found {len(s.distractors)}")
    fig_segs = list(figure.segments())
    for i, d in enumerate(s.distractors):
        if any(segments_touch(d, seg) for seg in fig_segs):
            return fail("distractor crosses figure")
        if any(segments_touch(d, other) for other in s.distractors[:i]):
            return fail("distractors cross each other")
    return ValidationResult(True)


# --- rendering --------------------------------------------------------------

_PIXEL_CENTERS = np.arange(int(FRAME)) + 0.5
_XX, _YY = np.meshgrid(_PIXEL_CENTERS, _PIXEL_CENTERS)  # x along columns, y along rows


def _segment_coverage(seg: Segment) -> np.ndarray:
    (x0, y0), (x1, y1) = seg.p0, seg.p1
    dx, dy = x1 - x0, y1 - y0
    l2 = dx * dx + dy * dy
    px = _XX - x0
    py = _YY - y0
    t = np.clip((px * dx + py * dy) / l2, 0.0, 1.0)
    dist = np.hypot(px - t * dx, py - t * dy)
    return np.clip(1.0 - dist, 0.0, 1.0)


def render(scene: Scene, rng: SeededRng) -> Stimulus:
    """Rasterise a validated scene onto a fresh random background."""
    if scene.polarity not in ("white_on_dark", "black_on_light"):
        raise ValueError(f"bad polarity {scene.polarity!r}")
    if not 0 <= scene.background_kind < len(BLOCK_SIZES):
        raise ValueError(f"bad background kind {scene.background_kind!r}")
    block = BLOCK_SIZES[scene.background_kind]
    dark = scene.polarity == "white_on_dark"
    lo, hi = DARK_BAND if dark else LIGHT_BAND
    ink = 1.0 if dark else 0.0
    cells = int(FRAME) // block
    noise = rng.uniform_block(cells * cells, lo, hi).reshape(cells, cells)
    img = np.repeat(np.repeat(noise, block, axis=0), block, axis=1)
    cov = np.zeros_like(img)
    for seg in scene.all_segments():
        np.maximum(cov, _segment_coverage(seg), out=cov)
    img = img * (1.0 - cov) + ink * cov
    np.clip(img, 0.0, 1.0, out=img)
    return Stimulus(img, scene.label)


# --- dataset assembly -------------------------------------------------------


def stimulus_at(task: str, seed: int, index: int) -> tuple[np.ndarray, int]:
    """Stimulus ``index`` of the dataset stream: (uint8 image, label).

    Each index gets its own derived stream, so any stimulus is reproducible
    without generating the rest.
    """
    label = index % 2
    rng = SeededRng(derive_seed(seed, index))
    scene = sample_scene(task, label, rng)
    return render(scene, rng).to_u8(), label


def generate_dataset(
    task: str, sizes: tuple[int, int, int] = (330_000, 10_000, 10_000), seed: int = 0
) -> LabeledDataset:
    """Class-balanced train/valid/test stimuli; labels alternate by global index."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; choose from {sorted(TASKS)}")
    if len(sizes) != 3 or any(n < 2 for n in sizes):
        raise ValueError(f"split sizes must each be >= 2, got {sizes}")
    side = int(FRAME)
    splits = []
    start = 0
    for n in sizes:
        images = np.empty((n, side, side), dtype=np.uint8)
        labels = np.empty(n, dtype=np.uint8)
        for i in range(n):
            images[i], labels[i] = stimulus_at(task, seed, start + i)
        splits.append(ImageSplit(images, labels))
        start += n
    return LabeledDataset(task, *splits)
