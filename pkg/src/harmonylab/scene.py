"""Random black/white shape compositions on a gray canvas.

A composition is an ordered list of parametric shapes (circle, rectangle,
equilateral triangle) in normalized [0,1]^2 coordinates, rendered onto a
square tri-level raster. Generation is fully deterministic: every shape
draws its attributes from its own PCG64 stream spawned from the dataset
seed, so regenerating with the same (config, seed) reproduces the scene
bit for bit on any platform.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

# Raster pixel classes.
GRAY = 0
BLACK = 1
WHITE = 2

KINDS = ("circle", "rectangle", "triangle")
COLORS = ("black", "white")

_COLOR_CODE = {"black": BLACK, "white": WHITE}


class ConfigError(ValueError):
    """Invalid generation configuration."""


class FormatError(ValueError):
    """A composition or raster file violates the expected format."""


@dataclass
class ShapeSpec:
    """One shape: kind, fill color, pose and kind-specific size parameters.

    Size parameters: circle -> radius; rectangle -> width, height;
    triangle -> circumradius of the equilateral base triangle. All in
    normalized canvas units. Rotation is in radians, applied in the
    x-right / y-down image frame.
    """

    kind: str
    color: str
    center: tuple[float, float]
    rotation: float
    params: dict[str, float]

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown shape kind {self.kind!r}")
        if self.color not in COLORS:
            raise ConfigError(f"unknown color {self.color!r}")
        if not all(math.isfinite(v) for v in self.center) or not math.isfinite(self.rotation):
            raise ConfigError("center and rotation must be finite")
        for key, value in self.params.items():
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{self.kind} parameter {key}={value} must be positive and finite")

    def area(self) -> float:
        """Analytic area of the full shape, ignoring canvas clipping."""
        if self.kind == "circle":
            return math.pi * self.params["radius"] ** 2
        if self.kind == "rectangle":
            return self.params["width"] * self.params["height"]
        # Equilateral triangle with circumradius R has side R*sqrt(3).
        return 3.0 * math.sqrt(3.0) / 4.0 * self.params["circumradius"] ** 2

    def bounding_radius(self) -> float:
        """Radius of the minimal enclosing circle."""
        if self.kind == "circle":
            return self.params["radius"]
        if self.kind == "rectangle":
            return 0.5 * math.hypot(self.params["width"], self.params["height"])
        return self.params["circumradius"]

    def bounding_box(self) -> tuple[float, float]:
        """(width, height) of the axis-aligned box around the rotated shape."""
        if self.kind == "circle":
            d = 2.0 * self.params["radius"]
            return d, d
        if self.kind == "rectangle":
            w, h = self.params["width"], self.params["height"]
            c, s = abs(math.cos(self.rotation)), abs(math.sin(self.rotation))
            return w * c + h * s, w * s + h * c
        vx, vy = self._triangle_vertices()
        return float(vx.max() - vx.min()), float(vy.max() - vy.min())

    def _triangle_vertices(self) -> tuple[np.ndarray, np.ndarray]:
        # Rotation 0 points the apex toward -y (visually up).
        r = self.params["circumradius"]
        angles = self.rotation - math.pi / 2 + 2.0 * math.pi / 3.0 * np.arange(3)
        return (self.center[0] + r * np.cos(angles),
                self.center[1] + r * np.sin(angles))


@dataclass
class Composition:
    """A generated scene plus the canvas it renders onto."""

    id: str
    seed: int
    resolution: int
    gray_level: int
    shapes: list[ShapeSpec] = field(default_factory=list)


@dataclass
class GenConfig:
    """Shape counts per (kind, color), size ranges per kind, and canvas."""

    counts: dict[tuple[str, str], int]
    size_range: dict[str, tuple[float, float]]
    resolution: int = 512
    gray_level: int = 128

    def validate(self) -> None:
        if self.resolution <= 0:
            raise ConfigError("resolution must be positive")
        if not 0 < self.gray_level < 255:
            raise ConfigError("gray_level must lie strictly between 0 (black) and 255 (white)")
        for (kind, color), n in self.counts.items():
            if kind not in KINDS or color not in COLORS:
                raise ConfigError(f"unknown count key {(kind, color)!r}")
            if n < 0:
                raise ConfigError("shape counts must be >= 0")
        for kind in KINDS:
            if any(k == kind and n > 0 for (k, _), n in self.counts.items()):
                if kind not in self.size_range:
                    raise ConfigError(f"missing size range for {kind}")
        for kind, (lo, hi) in self.size_range.items():
            if not (0 < lo <= hi):
                raise ConfigError(f"invalid size range for {kind}: [{lo}, {hi}]")

    def total_count(self) -> int:
        return sum(self.counts.values())


def default_config() -> GenConfig:
    return GenConfig(
        counts={(kind, color): 1 for kind in KINDS for color in COLORS},
        size_range={"circle": (0.04, 0.12), "rectangle": (0.08, 0.25), "triangle": (0.06, 0.16)},
    )


def generate(config: GenConfig, seed: int, comp_id: str | None = None) -> Composition:
    """Generate a composition deterministically from (config, seed).

    Stream splitting: SeedSequence(seed) spawns one child stream per shape
    plus one for the draw-order shuffle. Each shape draws, in order:
    center x, center y, rotation, then its size parameters (rectangle
    draws width then height). Shapes are created kind-major / color-minor
    and finally shuffled to randomize the paint (overdraw) order.
    """
    config.validate()
    total = config.total_count()
    children = np.random.SeedSequence(seed).spawn(total + 1)
    shapes: list[ShapeSpec] = []
    idx = 0
    for kind in KINDS:
        for color in COLORS:
            for _ in range(config.counts.get((kind, color), 0)):
                rng = np.random.Generator(np.random.PCG64(children[idx]))
                idx += 1
                cx, cy = rng.uniform(), rng.uniform()
                rotation = rng.uniform(0.0, 2.0 * math.pi)
                lo, hi = config.size_range[kind]
                if kind == "circle":
                    params = {"radius": rng.uniform(lo, hi)}
                elif kind == "rectangle":
                    params = {"width": rng.uniform(lo, hi), "height": rng.uniform(lo, hi)}
                else:
                    params = {"circumradius": rng.uniform(lo, hi)}
                shapes.append(ShapeSpec(kind, color, (cx, cy), rotation, params))
    order_rng = np.random.Generator(np.random.PCG64(children[total]))
    shapes = [shapes[i] for i in order_rng.permutation(total)]
    return Composition(
        id=comp_id if comp_id is not None else f"{seed:016x}",
        seed=seed,
        resolution=config.resolution,
        gray_level=config.gray_level,
        shapes=shapes,
    )


def shape_mask(shape: ShapeSpec, resolution: int) -> np.ndarray:
    """Boolean footprint of a shape: pixels whose center lies inside it.

    Boundary is inclusive. Pixel (row i, col j) has its center at
    ((j + 0.5)/res, (i + 0.5)/res) in normalized coordinates.
    """
    mask = np.zeros((resolution, resolution), dtype=bool)
    bw, bh = shape.bounding_box()
    cx, cy = shape.center
    j0 = max(0, int(math.floor((cx - bw / 2) * resolution - 0.5)))
    j1 = min(resolution - 1, int(math.ceil((cx + bw / 2) * resolution - 0.5)))
    i0 = max(0, int(math.floor((cy - bh / 2) * resolution - 0.5)))
    i1 = min(resolution - 1, int(math.ceil((cy + bh / 2) * resolution - 0.5)))
    if j1 < j0 or i1 < i0:
        return mask
    xs = (np.arange(j0, j1 + 1) + 0.5) / resolution
    ys = (np.arange(i0, i1 + 1) + 0.5) / resolution
    X, Y = np.meshgrid(xs, ys)
    if shape.kind == "circle":
        inside = (X - cx) ** 2 + (Y - cy) ** 2 <= shape.params["radius"] ** 2
    elif shape.kind == "rectangle":
        c, s = math.cos(shape.rotation), math.sin(shape.rotation)
        u = c * (X - cx) + s * (Y - cy)
        v = -s * (X - cx) + c * (Y - cy)
        inside = (np.abs(u) <= shape.params["width"] / 2) & (np.abs(v) <= shape.params["height"] / 2)
    else:
        vx, vy = shape._triangle_vertices()
        inside = np.ones_like(X, dtype=bool)
        sign = 0.0
        for k in range(3):
            ax, ay = vx[k], vy[k]
            bx, by = vx[(k + 1) % 3], vy[(k + 1) % 3]
            cross = (bx - ax) * (Y - ay) - (by - ay) * (X - ax)
            if sign == 0.0:
                sign = 1.0 if cross.sum() >= 0 else -1.0
            inside &= sign * cross >= 0
    mask[i0:i1 + 1, j0:j1 + 1] = inside
    return mask


def rasterize(comp: Composition) -> np.ndarray:
    """Paint shapes in list order onto a gray canvas (later shapes overdraw)."""
    raster = np.full((comp.resolution, comp.resolution), GRAY, dtype=np.uint8)
    for shape in comp.shapes:
        raster[shape_mask(shape, comp.resolution)] = _COLOR_CODE[shape.color]
    return raster


# ---------------------------------------------------------------------------
# Serialization

def composition_to_dict(comp: Composition) -> dict:
    return {
        "id": comp.id,
        "seed": comp.seed,
        "canvas": {"resolution": comp.resolution, "gray_level": comp.gray_level},
        "shapes": [
            {
                "kind": s.kind,
                "color": s.color,
                "center": [s.center[0], s.center[1]],
                "rotation": s.rotation,
                "params": dict(s.params),
            }
            for s in comp.shapes
        ],
    }


def composition_from_dict(data: dict) -> Composition:
    try:
        shapes = [
            ShapeSpec(
                kind=s["kind"],
                color=s["color"],
                center=(float(s["center"][0]), float(s["center"][1])),
                rotation=float(s["rotation"]),
                params={k: float(v) for k, v in s["params"].items()},
            )
            for s in data["shapes"]
        ]
        comp = Composition(
            id=data["id"],
            seed=int(data["seed"]),
            resolution=int(data["canvas"]["resolution"]),
            gray_level=int(data["canvas"]["gray_level"]),
            shapes=shapes,
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise FormatError(f"malformed composition document: missing or bad field {exc}") from exc
    for shape in comp.shapes:
        shape.validate()
    return comp


def save_composition(path, comp: Composition) -> None:
    with open(path, "w") as fh:
        json.dump(composition_to_dict(comp), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_composition(path) -> Composition:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return composition_from_dict(data)


def save_raster(path, raster: np.ndarray, gray_level: int) -> None:
    """Write an 8-bit grayscale PNG with values {0: black, gray_level, 255: white}."""
    lut = np.array([gray_level, 0, 255], dtype=np.uint8)
    Image.fromarray(lut[raster], mode="L").save(path, format="PNG")


def load_raster(path, gray_level: int) -> np.ndarray:
    img = np.asarray(Image.open(path).convert("L"))
    raster = np.full(img.shape, 255, dtype=np.uint8)  # sentinel
    raster[img == gray_level] = GRAY
    raster[img == 0] = BLACK
    raster[img == 255] = WHITE
    bad = (img != gray_level) & (img != 0) & (img != 255)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise FormatError(
            f"{path}: pixel ({i}, {j}) has value {img[i, j]}, expected one of {{0, {gray_level}, 255}}"
        )
    return raster


# ---------------------------------------------------------------------------
# Dataset-level generation config (CLI): counts may be ranges.

def sample_gen_config(dataset_cfg: dict, rng: np.random.Generator) -> GenConfig:
    """Draw a concrete GenConfig from a dataset spec whose counts may be [lo, hi]."""
    counts = {}
    for kind in KINDS:
        per_kind = dataset_cfg.get("counts", {}).get(kind, {})
        for color in COLORS:
            spec = per_kind.get(color, 0)
            if isinstance(spec, (list, tuple)):
                lo, hi = int(spec[0]), int(spec[1])
                counts[(kind, color)] = int(rng.integers(lo, hi + 1))
            else:
                counts[(kind, color)] = int(spec)
    size_range = {k: (float(v[0]), float(v[1])) for k, v in dataset_cfg.get("size_range", {}).items()}
    if not size_range:
        size_range = default_config().size_range
    return GenConfig(
        counts=counts,
        size_range=size_range,
        resolution=int(dataset_cfg.get("resolution", 512)),
        gray_level=int(dataset_cfg.get("gray_level", 128)),
    )
