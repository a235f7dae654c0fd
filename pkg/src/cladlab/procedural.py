"""Procedural texture and polygon rendering for the synthetic benchmark.

Each class index owns one texture family and one polygon family, so either
cue alone identifies the class.  Textures are two-tone patterns whose hues
sit in a narrow class-specific band of the color wheel; shapes are convex or
star polygons with a class-specific point count.
"""

import numpy as np

from .errors import ConfigurationError

TEXTURE_KINDS = (
    "stripes_h",
    "stripes_v",
    "stripes_diag",
    "checker_coarse",
    "checker_fine",
    "noise_1oct",
    "noise_2oct",
    "noise_3oct",
    "dots",
)

# (number of points, inner/outer radius ratio); ratio None means convex.
SHAPE_KINDS = (
    ("triangle", 3, None),
    ("square", 4, None),
    ("pentagon", 5, None),
    ("hexagon", 6, None),
    ("star3", 3, 0.40),
    ("star4", 4, 0.45),
    ("star5", 5, 0.45),
    ("star6", 6, 0.50),
    ("star7", 7, 0.55),
)


def hsv_to_rgb(h, s, v):
    """Vectorized HSV -> RGB, all components in [0, 1]."""
    h = np.asarray(h, dtype=np.float64) % 1.0
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    table = np.stack(
        [
            np.stack([v, t, p], axis=-1),
            np.stack([q, v, p], axis=-1),
            np.stack([p, v, t], axis=-1),
            np.stack([p, q, v], axis=-1),
            np.stack([t, p, v], axis=-1),
            np.stack([v, p, q], axis=-1),
        ],
        axis=0,
    )
    return np.take_along_axis(table, i[None, ..., None], axis=0)[0]


def class_bg_hue(class_index: int, num_classes: int) -> float:
    return (class_index + 0.5) / num_classes


def class_fg_hue(class_index: int, num_classes: int) -> float:
    # offset half a bin so foreground hues interleave with background hues
    return (class_index + 1.0) / num_classes


def _value_noise(size: int, cell: int, rng: np.random.Generator) -> np.ndarray:
    """Bilinear-upsampled random grid; one octave of value noise in [0, 1]."""
    n = size // cell + 2
    grid = rng.random((n, n))
    coords = np.arange(size) / cell
    i0 = coords.astype(int)
    frac = coords - i0
    g = grid[np.ix_(i0, i0)]
    gx = grid[np.ix_(i0, i0 + 1)]
    gy = grid[np.ix_(i0 + 1, i0)]
    gxy = grid[np.ix_(i0 + 1, i0 + 1)]
    fx = frac[None, :]
    fy = frac[:, None]
    return (
        g * (1 - fx) * (1 - fy) + gx * fx * (1 - fy) + gy * (1 - fx) * fy + gxy * fx * fy
    )


def _pattern(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """Blend weight in [0, 1] between the two texture tones, shape (size, size)."""
    yy, xx = np.mgrid[0:size, 0:size]
    if kind == "stripes_h":
        period = int(rng.integers(3, 6))
        return ((yy + int(rng.integers(0, period))) // period % 2).astype(np.float64)
    if kind == "stripes_v":
        period = int(rng.integers(3, 6))
        return ((xx + int(rng.integers(0, period))) // period % 2).astype(np.float64)
    if kind == "stripes_diag":
        period = int(rng.integers(4, 7))
        return ((yy + xx + int(rng.integers(0, period))) // period % 2).astype(np.float64)
    if kind == "checker_coarse":
        period = int(rng.integers(4, 7))
        return (((yy // period) + (xx // period)) % 2).astype(np.float64)
    if kind == "checker_fine":
        period = int(rng.integers(2, 4))
        return (((yy // period) + (xx // period)) % 2).astype(np.float64)
    if kind == "noise_1oct":
        return _value_noise(size, 8, rng)
    if kind == "noise_2oct":
        w = _value_noise(size, 8, rng) + 0.5 * _value_noise(size, 4, rng)
        return w / 1.5
    if kind == "noise_3oct":
        w = (
            _value_noise(size, 8, rng)
            + 0.5 * _value_noise(size, 4, rng)
            + 0.25 * _value_noise(size, 2, rng)
        )
        return w / 1.75
    if kind == "dots":
        period = int(rng.integers(5, 8))
        radius = period * 0.30
        cy = (yy + int(rng.integers(0, period))) % period - period / 2 + 0.5
        cx = (xx + int(rng.integers(0, period))) % period - period / 2 + 0.5
        return (cy**2 + cx**2 <= radius**2).astype(np.float64)
    raise ConfigurationError(f"unknown texture kind {kind!r}")


def render_texture(
    class_index: int,
    num_classes: int,
    size: int,
    rng: np.random.Generator,
    hue_jitter: float = 0.04,
    saturation: tuple[float, float] = (0.35, 0.60),
    contrast: float = 1.0,
) -> np.ndarray:
    """Render one background texture image for a class, (size, size, 3) in [0, 1].

    ``contrast`` scales the two-tone separation; low values mute the pattern
    while leaving the hue band (the main background cue) intact.
    """
    if not 0 <= class_index < len(TEXTURE_KINDS):
        raise ConfigurationError(f"no texture family for class {class_index}")
    kind = TEXTURE_KINDS[class_index]
    hue = class_bg_hue(class_index, num_classes)
    h1 = hue + rng.uniform(-hue_jitter, hue_jitter)
    h2 = hue + rng.uniform(-hue_jitter, hue_jitter)
    base = hsv_to_rgb(h1, rng.uniform(*saturation), rng.uniform(0.30, 0.45))
    accent = hsv_to_rgb(h2, rng.uniform(*saturation), rng.uniform(0.60, 0.85))
    accent = base + contrast * (accent - base)
    w = _pattern(kind, size, rng)[..., None]
    return (1.0 - w) * base + w * accent


def polygon_vertices(
    class_index: int,
    center: tuple[float, float],
    radius: float,
    rotation: float,
) -> np.ndarray:
    """Vertices (n, 2) in (x, y) pixel coordinates for a class's polygon family."""
    if not 0 <= class_index < len(SHAPE_KINDS):
        raise ConfigurationError(f"no shape family for class {class_index}")
    _, points, inner_ratio = SHAPE_KINDS[class_index]
    if inner_ratio is None:
        angles = rotation + 2.0 * np.pi * np.arange(points) / points
        radii = np.full(points, radius)
    else:
        angles = rotation + np.pi * np.arange(2 * points) / points
        radii = np.where(np.arange(2 * points) % 2 == 0, radius, radius * inner_ratio)
    x = center[0] + radii * np.cos(angles)
    y = center[1] + radii * np.sin(angles)
    return np.stack([x, y], axis=1)


def rasterize_polygon(vertices: np.ndarray, size: int) -> np.ndarray:
    """Hard (non-antialiased) even-odd rasterization over pixel centers."""
    px = np.arange(size) + 0.5
    cx = np.broadcast_to(px[None, :], (size, size))
    cy = np.broadcast_to(px[:, None], (size, size))
    x1 = vertices[:, 0]
    y1 = vertices[:, 1]
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)
    inside = np.zeros((size, size), dtype=bool)
    for ex1, ey1, ex2, ey2 in zip(x1, y1, x2, y2):
        if ey1 == ey2:
            continue
        crosses = (ey1 <= cy) != (ey2 <= cy)
        x_at = ex1 + (cy - ey1) * (ex2 - ex1) / (ey2 - ey1)
        inside ^= crosses & (cx < x_at)
    return inside
