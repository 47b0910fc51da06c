"""Random scenes of colored 2-D shapes and their hard-edged rasterization.

Coordinates are in the unit square with x to the right and y downward, so a
smaller y is higher up in the image. Every shape is defined in a local frame
whose area centroid sits at the origin; ``Entity.center`` is therefore the
centroid of the painted region, not the center of its bounding box.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SHAPES = ("square", "rectangle", "triangle", "pentagon", "cross", "circle", "semicircle", "ellipse")
COLORS = ("red", "green", "blue", "yellow", "magenta", "cyan", "gray")

RGB = {
    "red": (255, 0, 0),
    "green": (0, 255, 0),
    "blue": (0, 0, 255),
    "yellow": (255, 255, 0),
    "magenta": (255, 0, 255),
    "cyan": (0, 255, 255),
    "gray": (128, 128, 128),
}

# shapes whose two extents are tied together
ISOTROPIC = frozenset({"square", "pentagon", "cross", "circle"})
# rotation is fixed to zero for these
UNROTATED = frozenset({"square", "circle"})

CROSS_ARM = 1.0 / 3.0
SEMICIRCLE_OFFSET = 4.0 / (3.0 * math.pi)


class PlacementError(RuntimeError):
    """The rejection sampler ran out of attempts to place entities."""


@dataclass(frozen=True)
class Entity:
    shape: str
    color: str
    center: tuple[float, float]
    size: tuple[float, float]
    rotation: float = 0.0
    z: int = 0


@dataclass(frozen=True)
class Scene:
    entities: tuple[Entity, ...] = ()
    canvas: int = 64


@dataclass(frozen=True)
class SceneConfig:
    canvas: int = 64
    min_entities: int = 4
    max_entities: int = 10
    min_size: float = 0.1
    max_size: float = 0.25
    # occluded area / occluded entity's area
    overlap_threshold: float = 0.25
    # overlapping pairs are only sampled when behind/front captions are wanted
    allow_overlap: bool = False
    shapes: tuple[str, ...] = SHAPES
    colors: tuple[str, ...] = COLORS
    entity_attempts: int = 200
    scene_attempts: int = 20

    def validate(self) -> None:
        if self.min_entities < 1 or self.max_entities < self.min_entities:
            raise ValueError(f"invalid entity count range [{self.min_entities}, {self.max_entities}]")
        if not (0.0 < self.min_size <= self.max_size < 1.0):
            raise ValueError(f"invalid size range [{self.min_size}, {self.max_size}]")
        if self.canvas < 1:
            raise ValueError("canvas must be positive")
        if not 0.0 <= self.overlap_threshold <= 1.0:
            raise ValueError("overlap threshold must lie in [0, 1]")


def _outline(shape: str, n: int = 128) -> np.ndarray:
    """Boundary points of a shape in its local frame (half-extent units)."""
    if shape in ("square", "rectangle"):
        return np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    if shape == "triangle":
        return np.array([[0.0, -4.0 / 3.0], [1.0, 2.0 / 3.0], [-1.0, 2.0 / 3.0]])
    if shape == "pentagon":
        angles = -np.pi / 2 + 2 * np.pi * np.arange(5) / 5
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if shape == "cross":
        a = CROSS_ARM
        return np.array([[-a, -1], [a, -1], [a, -a], [1, -a], [1, a], [a, a],
                         [a, 1], [-a, 1], [-a, a], [-1, a], [-1, -a], [-a, -a]], dtype=float)
    if shape in ("circle", "ellipse"):
        t = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if shape == "semicircle":
        # flat side at the bottom, shifted so the area centroid is the origin
        t = np.pi + np.pi * np.arange(n + 1) / n
        return np.stack([np.cos(t), np.sin(t) + SEMICIRCLE_OFFSET], axis=1)
    raise ValueError(f"unknown shape {shape!r}")


def _convex_contains(poly: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # vertices in clockwise screen order (y down), i.e. positive cross products inside
    inside = np.ones(u.shape, dtype=bool)
    for (x0, y0), (x1, y1) in zip(poly, np.roll(poly, -1, axis=0)):
        inside &= (x1 - x0) * (v - y0) - (y1 - y0) * (u - x0) >= 0
    return inside


_TRIANGLE = _outline("triangle")
_PENTAGON = _outline("pentagon")


def local_contains(shape: str, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Point-in-shape test in the local frame."""
    if shape in ("square", "rectangle"):
        return (np.abs(u) <= 1) & (np.abs(v) <= 1)
    if shape in ("circle", "ellipse"):
        return u * u + v * v <= 1
    if shape == "triangle":
        return _convex_contains(_TRIANGLE, u, v)
    if shape == "pentagon":
        return _convex_contains(_PENTAGON, u, v)
    if shape == "cross":
        au, av = np.abs(u), np.abs(v)
        return ((au <= CROSS_ARM) & (av <= 1)) | ((au <= 1) & (av <= CROSS_ARM))
    if shape == "semicircle":
        w = v - SEMICIRCLE_OFFSET
        return (u * u + w * w <= 1) & (w <= 0)
    raise ValueError(f"unknown shape {shape!r}")


def _to_local(entity: Entity, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    theta = 2 * math.pi * entity.rotation
    c, s = math.cos(theta), math.sin(theta)
    dx, dy = x - entity.center[0], y - entity.center[1]
    # inverse rotation, then scale by the half extents
    u = (c * dx + s * dy) / (entity.size[0] / 2)
    v = (-s * dx + c * dy) / (entity.size[1] / 2)
    return u, v


_OUTLINES: dict[str, np.ndarray] = {}


def outline(entity: Entity) -> np.ndarray:
    """Boundary points of the entity in unit canvas coordinates."""
    if entity.shape not in _OUTLINES:
        _OUTLINES[entity.shape] = _outline(entity.shape)
    pts = _OUTLINES[entity.shape] * (np.array(entity.size) / 2)
    theta = 2 * math.pi * entity.rotation
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T + np.array(entity.center)


@lru_cache(maxsize=8192)
def bounding_box(entity: Entity) -> tuple[float, float, float, float]:
    pts = outline(entity)
    (x0, y0), (x1, y1) = pts.min(axis=0), pts.max(axis=0)
    return float(x0), float(y0), float(x1), float(y1)


def inside_canvas(entity: Entity) -> bool:
    x0, y0, x1, y1 = bounding_box(entity)
    return x0 >= 0.0 and y0 >= 0.0 and x1 <= 1.0 and y1 <= 1.0


@lru_cache(maxsize=8192)
def _mask_cached(entity: Entity, canvas: int) -> np.ndarray:
    centers = (np.arange(canvas) + 0.5) / canvas
    x0, y0, x1, y1 = bounding_box(entity)
    # only pixel centers inside the (slightly padded) bounding box can be inside
    c0 = max(int(math.floor(x0 * canvas - 1)), 0)
    c1 = min(int(math.ceil(x1 * canvas + 1)), canvas)
    r0 = max(int(math.floor(y0 * canvas - 1)), 0)
    r1 = min(int(math.ceil(y1 * canvas + 1)), canvas)
    mask = np.zeros((canvas, canvas), dtype=bool)
    if c1 <= c0 or r1 <= r0:
        return mask
    u, v = _to_local(entity, centers[None, c0:c1], centers[r0:r1, None])
    mask[r0:r1, c0:c1] = local_contains(entity.shape, u, v)
    mask.setflags(write=False)
    return mask


def entity_mask(entity: Entity, canvas: int) -> np.ndarray:
    """Boolean canvas x canvas mask of pixels whose centers lie inside the entity."""
    return _mask_cached(entity, canvas)


def render(scene: Scene) -> np.ndarray:
    """Paint entities onto a black canvas in ascending z order; uint8 (H, W, 3)."""
    image = np.zeros((scene.canvas, scene.canvas, 3), dtype=np.uint8)
    for entity in sorted(scene.entities, key=lambda e: e.z):
        image[entity_mask(entity, scene.canvas)] = RGB[entity.color]
    return image


def coordinate_map(height: int, width: int) -> np.ndarray:
    """(height, width, 2) grid; channel 0 ramps along x, channel 1 along y, both over [-1, 1]."""
    if height < 1 or width < 1:
        raise ValueError("grid dimensions must be positive")
    xs = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    ys = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    grid = np.empty((height, width, 2))
    grid[..., 0] = xs[None, :]
    grid[..., 1] = ys[:, None]
    return grid


def overlaps(a: Entity, b: Entity, canvas: int) -> bool:
    """Whether the full (unoccluded) rendered regions of two entities share a pixel."""
    return bool(np.any(entity_mask(a, canvas) & entity_mask(b, canvas)))


def _sample_entity(rng: np.random.Generator, config: SceneConfig, z: int) -> Entity:
    shape = config.shapes[rng.integers(len(config.shapes))]
    color = config.colors[rng.integers(len(config.colors))]
    w = rng.uniform(config.min_size, config.max_size)
    h = w if shape in ISOTROPIC else rng.uniform(config.min_size, config.max_size)
    rotation = 0.0 if shape in UNROTATED else float(rng.uniform(0.0, 1.0))
    center = (float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.0, 1.0)))
    return Entity(shape, color, center, (float(w), float(h)), rotation, z)


def _place(rng: np.random.Generator, config: SceneConfig, count: int) -> tuple[Entity, ...] | None:
    canvas = config.canvas
    placed: list[Entity] = []
    # pixels of each placed entity hidden by entities drawn after it
    hidden: list[np.ndarray] = []
    for z in range(count):
        for _ in range(config.entity_attempts):
            entity = _sample_entity(rng, config, z)
            if not inside_canvas(entity):
                continue
            mask = entity_mask(entity, canvas)
            if not mask.any():
                continue
            ok = True
            for i, other in enumerate(placed):
                other_mask = entity_mask(other, canvas)
                shared = mask & other_mask
                if not shared.any():
                    continue
                if not config.allow_overlap:
                    ok = False
                    break
                occluded = hidden[i] | shared
                if occluded.sum() > config.overlap_threshold * other_mask.sum():
                    ok = False
                    break
            if not ok:
                continue
            for i, other in enumerate(placed):
                hidden[i] = hidden[i] | (mask & entity_mask(other, canvas))
            placed.append(entity)
            hidden.append(np.zeros((canvas, canvas), dtype=bool))
            break
        else:
            return None
    return tuple(placed)


def sample_scene(seed: int, config: SceneConfig | None = None) -> Scene:
    """Sample a scene deterministically from ``seed``.

    The entity count is drawn once; if entities cannot be placed the placement
    is restarted with the same count, so the count distribution stays uniform.
    """
    config = config or SceneConfig()
    config.validate()
    rng = np.random.default_rng(seed)
    count = int(rng.integers(config.min_entities, config.max_entities + 1))
    for _ in range(config.scene_attempts):
        entities = _place(rng, config, count)
        if entities is not None:
            return Scene(entities, config.canvas)
    raise PlacementError(f"could not place {count} entities for seed {seed}")


def visible_mask(scene: Scene, entity: Entity) -> np.ndarray:
    """Pixels of ``entity`` not painted over by entities with a higher z."""
    mask = entity_mask(entity, scene.canvas).copy()
    for other in scene.entities:
        if other.z > entity.z:
            mask &= ~entity_mask(other, scene.canvas)
    return mask


def save_png(image: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(image, mode="RGB").save(path)
