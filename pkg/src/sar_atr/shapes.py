"""Roll-symmetric target shapes and their scattering-center reduction.

Body frame: the symmetry axis is the first coordinate, the geometric center
sits at the origin and the nose is at ``axial = -L/2``.  A pose angle of zero
means the line of sight runs along the body axis from nose to tail
(nose-on); range increases along the line of sight.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

L_RANGE = (1.0, 4.0)
DIAMETER_RANGE = (1.0, 2.0)
RING_DEPTH_RANGE = (0.05, 0.2)
RING_PROBABILITY = 0.5
COLLAR_DIAMETER = 0.1

# Amplitude floor of the angular falloff; the remaining 0.8 scales with aspect.
FALLOFF_FLOOR = 0.2


class ShapeClass(enum.IntEnum):
    CYLINDER = 0
    CONE = 1
    DOME_CYLINDER = 2
    HOURGLASS = 3

    @property
    def label(self) -> str:
        return _CLASS_NAMES[self]

    @classmethod
    def from_label(cls, name: str) -> "ShapeClass":
        for member, label in _CLASS_NAMES.items():
            if label == name:
                return member
        raise ValueError(f"unknown shape class {name!r}")


_CLASS_NAMES = {
    ShapeClass.CYLINDER: "cylinder",
    ShapeClass.CONE: "cone",
    ShapeClass.DOME_CYLINDER: "dome-cylinder",
    ShapeClass.HOURGLASS: "hourglass",
}


class CenterKind(str, enum.Enum):
    TIP = "tip"
    EDGE = "edge"
    JUNCTION = "junction"
    RING = "ring"
    DOME = "dome"


# Frequency exponent of each kind of scatterer.
ALPHA = {
    CenterKind.TIP: -1.0,
    CenterKind.EDGE: -0.5,
    CenterKind.JUNCTION: 0.5,
    CenterKind.RING: -0.5,
    CenterKind.DOME: 0.0,
}

_NEAR, _POINT, _FAR = -1, 0, 1


@dataclass(frozen=True)
class Ring:
    axial_position: float  # measured from the nose, in [0, L]
    depth: float


@dataclass(frozen=True)
class TargetGeometry:
    shape_class: ShapeClass
    L: float
    D: float
    D1: float
    D2: float
    L_C: float
    D_C: float
    ring: Ring | None = None

    @property
    def size_scalar(self) -> float:
        if self.shape_class == ShapeClass.HOURGLASS:
            return max(self.L, self.D1, self.D2)
        return max(self.L, self.D)

    def to_record(self) -> dict:
        """Flat manifest record; ring fields are ``None`` when there is no ring."""
        return {
            "shape_class": self.shape_class.label,
            "L": self.L,
            "D": self.D,
            "D1": self.D1,
            "D2": self.D2,
            "L_C": self.L_C,
            "D_C": self.D_C,
            "ring_pos": None if self.ring is None else self.ring.axial_position,
            "ring_depth": None if self.ring is None else self.ring.depth,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "TargetGeometry":
        ring = None
        if rec.get("ring_pos") is not None:
            ring = Ring(float(rec["ring_pos"]), float(rec["ring_depth"]))
        return cls(
            shape_class=ShapeClass.from_label(rec["shape_class"]),
            L=float(rec["L"]),
            D=float(rec["D"]),
            D1=float(rec["D1"]),
            D2=float(rec["D2"]),
            L_C=float(rec["L_C"]),
            D_C=float(rec["D_C"]),
            ring=ring,
        )


@dataclass(frozen=True)
class ScatteringCenter:
    """A single GDT scatterer.

    Rim-like centers (edges, junctions, rings) come in near/far pairs that
    share ``axial`` and ``radius``; ``side`` is -1 for the near point of the
    rim, +1 for the far point and 0 for on-axis point scatterers.  For the
    dome, ``axial`` is the crest and ``radius`` the sphere radius.
    """

    kind: CenterKind
    axial: float
    radius: float
    base_amplitude: float
    side: int = _POINT

    @property
    def alpha(self) -> float:
        return ALPHA[self.kind]

    @property
    def body_position(self) -> np.ndarray:
        return np.array([self.axial, self.side * self.radius, 0.0])

    @property
    def name(self) -> str:
        if self.side == _NEAR:
            return f"{self.kind.value}-near"
        if self.side == _FAR:
            return f"{self.kind.value}-far"
        return self.kind.value


def make_target(shape_class: ShapeClass, L: float, D: float = 1.5,
                D1: float = 1.5, D2: float = 1.5,
                ring: Ring | None = None) -> TargetGeometry:
    return TargetGeometry(
        shape_class=ShapeClass(shape_class),
        L=float(L),
        D=float(D),
        D1=float(D1),
        D2=float(D2),
        L_C=float(L) / 2 + 0.1,
        D_C=COLLAR_DIAMETER,
        ring=ring,
    )


def sample_target(rng: np.random.Generator,
                  shape_class: ShapeClass | None = None) -> TargetGeometry:
    """Draw a random target.  Every draw consumes the same number of variates."""
    cls_draw = int(rng.integers(4))
    L = rng.uniform(*L_RANGE)
    D, D1, D2 = rng.uniform(*DIAMETER_RANGE, size=3)
    has_ring = rng.random() < RING_PROBABILITY
    ring_frac = rng.random()
    depth = rng.uniform(*RING_DEPTH_RANGE)
    if shape_class is None:
        shape_class = ShapeClass(cls_draw)
    ring = Ring(float(ring_frac * L), float(depth)) if has_ring else None
    return make_target(shape_class, L, float(D), float(D1), float(D2), ring)


def local_radius(geom: TargetGeometry, axial: float) -> float:
    """Body radius at an axial station in [-L/2, L/2]."""
    half = geom.L / 2
    a = min(max(axial, -half), half)
    cls = geom.shape_class
    if cls == ShapeClass.CYLINDER:
        return geom.D / 2
    if cls == ShapeClass.CONE:
        return geom.D / 2 * (a + half) / geom.L
    if cls == ShapeClass.DOME_CYLINDER:
        rho = geom.D / 2
        center = -half + rho
        if a >= center:
            return rho
        return math.sqrt(max(rho * rho - (a - center) ** 2, 0.0))
    # hourglass: collar of diameter D_C between the two cone frusta
    collar = geom.L_C / 2
    if abs(a) <= collar:
        return geom.D_C / 2
    base = geom.D1 / 2 if a < 0 else geom.D2 / 2
    t = (abs(a) - collar) / (half - collar)
    return geom.D_C / 2 + t * (base - geom.D_C / 2)


def _pair(kind: CenterKind, axial: float, radius: float, near_amp: float,
          far_amp: float) -> list[ScatteringCenter]:
    return [
        ScatteringCenter(kind, axial, radius, near_amp, _NEAR),
        ScatteringCenter(kind, axial, radius, far_amp, _FAR),
    ]


def scattering_centers(geom: TargetGeometry) -> list[ScatteringCenter]:
    half = geom.L / 2
    cls = geom.shape_class
    centers: list[ScatteringCenter] = []
    if cls == ShapeClass.CYLINDER:
        centers += _pair(CenterKind.EDGE, -half, geom.D / 2, 1.0, 0.5)
        centers += _pair(CenterKind.EDGE, half, geom.D / 2, 1.0, 0.5)
    elif cls == ShapeClass.CONE:
        centers.append(ScatteringCenter(CenterKind.TIP, -half, 0.0, 0.8))
        centers += _pair(CenterKind.EDGE, half, geom.D / 2, 1.0, 0.5)
    elif cls == ShapeClass.DOME_CYLINDER:
        rho = geom.D / 2
        centers.append(ScatteringCenter(CenterKind.DOME, -half, rho, 1.2))
        centers += _pair(CenterKind.JUNCTION, -half + rho, rho, 0.3, 0.15)
        centers += _pair(CenterKind.EDGE, half, rho, 1.0, 0.5)
    else:
        collar = geom.L_C / 2
        centers += _pair(CenterKind.EDGE, -half, geom.D1 / 2, 1.0, 0.5)
        centers += _pair(CenterKind.JUNCTION, -collar, geom.D_C / 2, 0.4, 0.2)
        centers += _pair(CenterKind.JUNCTION, collar, geom.D_C / 2, 0.4, 0.2)
        centers += _pair(CenterKind.EDGE, half, geom.D2 / 2, 1.0, 0.5)
    if geom.ring is not None:
        axial = -half + geom.ring.axial_position
        amp = 4.0 * geom.ring.depth
        centers += _pair(CenterKind.RING, axial, local_radius(geom, axial),
                         amp, amp / 2)
    return centers


def project_to_los(centers: list[ScatteringCenter],
                   theta: float) -> list[tuple[float, ScatteringCenter]]:
    """Range of every center along the line of sight, relative to the body center.

    Rim centers are re-evaluated at the rim points nearest and farthest along
    the line of sight, so the result only depends on ``theta`` and never on
    the roll of the body.
    """
    c, s = math.cos(theta), abs(math.sin(theta))
    out = []
    for ctr in centers:
        if ctr.kind == CenterKind.DOME:
            # specular point of the nose sphere
            r = (ctr.axial + ctr.radius) * c - ctr.radius
        else:
            r = ctr.axial * c + ctr.side * ctr.radius * s
        out.append((r, ctr))
    return out


def angular_falloff(center: ScatteringCenter, theta: float) -> float:
    """Aspect-dependent amplitude factor in [FALLOFF_FLOOR, 1]."""
    if center.kind in (CenterKind.TIP, CenterKind.DOME):
        # nose features are shadowed from the rear hemisphere
        return FALLOFF_FLOOR + (1 - FALLOFF_FLOOR) * max(math.cos(theta), 0.0)
    return FALLOFF_FLOOR + (1 - FALLOFF_FLOOR) * abs(math.sin(theta))


def with_ring(geom: TargetGeometry, axial_position: float,
              depth: float = 0.1) -> TargetGeometry:
    return replace(geom, ring=Ring(axial_position, depth))
