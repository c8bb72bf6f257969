"""Procedural moving-shape videos, still images, and customization concepts.

Everything is rendered from a small analytic scene description: anti-aliased
signed-distance shapes with optional texture fills, composited over flat or
gradient backgrounds.  A clip's ``meta`` dict is the full scene description,
so any generated clip can be regenerated bit-exactly from its manifest entry.

Condition tokens are discrete: ``token = shape_class * N_STYLES + style`` for
the nine base combinations, with tokens 9..18 reserved for the shipped
customization concepts (five objects, five styles).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .rng import PrngStream

BASE_SHAPES = ("circle", "square", "triangle")
N_BASE_STYLES = 3
N_BASE_TOKENS = len(BASE_SHAPES) * N_BASE_STYLES
RARE_TOKEN_START = N_BASE_TOKENS

SHAPE_FILLS = {
    "circle": (0.90, 0.20, 0.20),
    "square": (0.20, 0.85, 0.25),
    "triangle": (0.25, 0.35, 0.90),
}

# style id -> (axis or None for flat, color_a, color_b)
BASE_STYLE_BG = {
    0: (None, (0.92, 0.92, 0.88), (0.92, 0.92, 0.88)),   # flat paper
    1: (0, (0.10, 0.12, 0.30), (0.85, 0.55, 0.35)),      # vertical dusk gradient
    2: (1, (0.15, 0.45, 0.20), (0.75, 0.90, 0.55)),      # horizontal meadow gradient
}


def base_token(shape_idx: int, style_idx: int) -> int:
    return int(shape_idx) * N_BASE_STYLES + int(style_idx)


# -- analytic rendering -------------------------------------------------------


def _grid(h: int, w: int):
    yy, xx = np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")
    return xx, yy


def _convex_sdf(xx, yy, vertices):
    n = len(vertices)
    ccx = sum(v[0] for v in vertices) / n
    ccy = sum(v[1] for v in vertices) / n
    sdf = np.full(xx.shape, -np.inf)
    for i in range(n):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % n]
        ex, ey = x1 - x0, y1 - y0
        length = np.hypot(ex, ey)
        nx, ny = ey / length, -ex / length
        if nx * (ccx - x0) + ny * (ccy - y0) > 0:  # orient outward (centroid is interior)
            nx, ny = -nx, -ny
        sdf = np.maximum(sdf, nx * (xx - x0) + ny * (yy - y0))
    return sdf


def _regular_polygon(cx, cy, radius, n, phase):
    angles = phase - 2.0 * np.pi * np.arange(n) / n  # clockwise in image coords
    return [(cx + radius * np.cos(a), cy + radius * np.sin(a)) for a in angles]


def shape_sdf(shape: str, xx, yy, cx: float, cy: float, radius: float):
    dx, dy = xx - cx, yy - cy
    if shape == "circle":
        return np.hypot(dx, dy) - radius
    if shape == "square":
        return np.maximum(np.abs(dx), np.abs(dy)) - 0.85 * radius
    if shape == "diamond":
        return (np.abs(dx) + np.abs(dy)) - 1.15 * radius
    if shape == "triangle":
        return _convex_sdf(xx, yy, _regular_polygon(cx, cy, 1.1 * radius, 3, -np.pi / 2))
    if shape == "pentagon":
        return _convex_sdf(xx, yy, _regular_polygon(cx, cy, 1.05 * radius, 5, -np.pi / 2))
    if shape == "ring":
        return np.abs(np.hypot(dx, dy) - 0.72 * radius) - 0.34 * radius
    if shape == "cross":
        arm = 0.42 * radius
        r1 = np.maximum(np.abs(dx) - radius, np.abs(dy) - arm)
        r2 = np.maximum(np.abs(dx) - arm, np.abs(dy) - radius)
        return np.minimum(r1, r2)
    raise ContractError(f"unknown shape id {shape!r}")


def _texture_field(texture: str, xx, yy, cx, cy, color_a, color_b):
    a = np.asarray(color_a, dtype=np.float64)
    b = np.asarray(color_b, dtype=np.float64)
    if texture == "flat":
        return np.broadcast_to(a, xx.shape + (3,)).copy()
    if texture == "checker":
        mask = (np.floor(xx / 2.0) + np.floor(yy / 2.0)) % 2 == 0
    elif texture == "stripes":
        mask = np.floor((xx + yy) / 2.0) % 2 == 0
    elif texture == "dots":
        mx = (xx - cx) % 4.0 - 2.0
        my = (yy - cy) % 4.0 - 2.0
        mask = np.hypot(mx, my) >= 1.3
    elif texture == "rings":
        mask = np.floor(np.hypot(xx - cx, yy - cy) / 1.6) % 2 == 0
    else:
        raise ContractError(f"unknown texture id {texture!r}")
    return np.where(mask[..., None], a, b)


def _background(h: int, w: int, axis, color_a, color_b):
    a = np.asarray(color_a, dtype=np.float64)
    b = np.asarray(color_b, dtype=np.float64)
    if axis is None:
        return np.broadcast_to(a, (h, w, 3)).copy()
    ramp = np.linspace(0.0, 1.0, h if axis == 0 else w)
    ramp = ramp[:, None, None] if axis == 0 else ramp[None, :, None]
    return (1.0 - ramp) * a + ramp * b


def render_scene(h: int, w: int, bg, items) -> np.ndarray:
    """Composite anti-aliased textured shapes over a background.

    `bg` is (axis, color_a, color_b); `items` is a list of dicts with keys
    shape, texture, cx, cy, radius, fill_a, fill_b.  Returns [H, W, 3] float32
    in [0, 1].
    """
    xx, yy = _grid(h, w)
    img = _background(h, w, *bg)
    for it in items:
        sdf = shape_sdf(it["shape"], xx, yy, it["cx"], it["cy"], it["radius"])
        cov = np.clip(0.5 - sdf, 0.0, 1.0)  # 1px anti-aliasing band
        fill = _texture_field(it.get("texture", "flat"), xx, yy, it["cx"], it["cy"],
                              it["fill_a"], it.get("fill_b", it["fill_a"]))
        img = img * (1.0 - cov[..., None]) + fill * cov[..., None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


# -- clips and concepts -------------------------------------------------------


@dataclass
class VideoClip:
    pixels: np.ndarray  # [F, H, W, C] float32 in [0, 1]
    cond: int
    meta: dict = field(default_factory=dict)

    @property
    def frames(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class ConceptSpec:
    """A customization target: distinctive geometry, texture, and palette.

    `kind` separates object concepts from style concepts; both render and
    score the same way."""

    name: str
    shape: str
    texture: str
    fill_a: tuple
    fill_b: tuple
    bg_axis: object  # None or 0/1
    bg_a: tuple
    bg_b: tuple
    rare_token: int
    kind: str = "object"

    def render(self, h: int = 16, w: int = 16, cx: float | None = None,
               cy: float | None = None, radius: float | None = None) -> np.ndarray:
        cx = w / 2.0 if cx is None else cx
        cy = h / 2.0 if cy is None else cy
        radius = 0.30 * min(h, w) if radius is None else radius
        item = {"shape": self.shape, "texture": self.texture, "cx": cx, "cy": cy,
                "radius": radius, "fill_a": self.fill_a, "fill_b": self.fill_b}
        return render_scene(h, w, (self.bg_axis, self.bg_a, self.bg_b), [item])


CONCEPTS: dict[str, ConceptSpec] = {}
for _i, _spec in enumerate([
    # objects: palettes deliberately disjoint from the base red/green/blue fills
    ("checker_disc", "circle", "checker", (0.95, 0.15, 0.85), (0.98, 0.92, 0.15),
     None, (0.06, 0.07, 0.18), (0.06, 0.07, 0.18), "object"),
    ("amber_ring", "ring", "flat", (1.00, 0.65, 0.10), (1.00, 0.65, 0.10),
     None, (0.16, 0.05, 0.26), (0.16, 0.05, 0.26), "object"),
    ("striped_box", "square", "stripes", (0.95, 0.45, 0.10), (0.95, 0.95, 0.95),
     None, (0.05, 0.33, 0.38), (0.05, 0.33, 0.38), "object"),
    ("dotted_tri", "triangle", "dots", (0.20, 0.90, 0.95), (0.10, 0.15, 0.50),
     None, (0.13, 0.12, 0.14), (0.13, 0.12, 0.14), "object"),
    ("ivory_cross", "cross", "flat", (0.96, 0.94, 0.88), (0.96, 0.94, 0.88),
     None, (0.55, 0.05, 0.12), (0.55, 0.05, 0.12), "object"),
    # styles: background/texture treatments over a reference geometry
    ("noir", "diamond", "flat", (0.85, 0.85, 0.85), (0.85, 0.85, 0.85),
     0, (0.02, 0.02, 0.03), (0.22, 0.22, 0.25), "style"),
    ("neon", "pentagon", "flat", (0.30, 1.00, 0.35), (0.30, 1.00, 0.35),
     None, (0.05, 0.01, 0.10), (0.05, 0.01, 0.10), "style"),
    ("sunset", "circle", "rings", (0.98, 0.55, 0.15), (0.95, 0.25, 0.45),
     0, (0.30, 0.05, 0.10), (0.90, 0.60, 0.25), "style"),
    ("ice", "square", "checker", (0.70, 0.85, 0.98), (0.96, 0.98, 1.00),
     1, (0.20, 0.35, 0.55), (0.55, 0.70, 0.85), "style"),
    ("sand", "triangle", "stripes", (0.85, 0.70, 0.45), (0.55, 0.40, 0.25),
     0, (0.90, 0.80, 0.60), (0.70, 0.55, 0.35), "style"),
]):
    CONCEPTS[_spec[0]] = ConceptSpec(
        name=_spec[0], shape=_spec[1], texture=_spec[2], fill_a=_spec[3], fill_b=_spec[4],
        bg_axis=_spec[5], bg_a=_spec[6], bg_b=_spec[7], rare_token=RARE_TOKEN_START + _i,
        kind=_spec[8],
    )


def base_class_spec(shape_idx: int, style_idx: int) -> ConceptSpec:
    """Reference spec for a base (shape, style) class, used to score how well
    prior-class samples retain their class after customization."""
    shape = BASE_SHAPES[shape_idx]
    axis, bg_a, bg_b = BASE_STYLE_BG[style_idx]
    fill = SHAPE_FILLS[shape]
    return ConceptSpec(
        name=f"base_{shape}_{style_idx}", shape=shape, texture="flat",
        fill_a=fill, fill_b=fill, bg_axis=axis, bg_a=bg_a, bg_b=bg_b,
        rare_token=base_token(shape_idx, style_idx), kind="base",
    )


# -- generation ---------------------------------------------------------------


def _bounce(p0: float, v: float, t: float, lo: float, hi: float) -> float:
    span = hi - lo
    if span <= 0:
        return float(np.clip(p0, lo, hi))
    u = (p0 - lo + v * t) % (2.0 * span)
    return lo + (u if u <= span else 2.0 * span - u)


def clip_from_meta(meta: dict) -> VideoClip:
    """Re-render a generated clip from its scene description (bit-exact)."""
    kind = meta.get("kind")
    if kind == "moving_shapes":
        f, h, w = meta["f"], meta["h"], meta["w"]
        axis, bg_a, bg_b = BASE_STYLE_BG[meta["style"]]
        frames = []
        for t in range(f):
            items = []
            for sh in meta["shapes"]:
                r = sh["radius"]
                items.append({
                    "shape": sh["shape"], "texture": "flat",
                    "cx": _bounce(sh["cx"], sh["vx"], t, r + 0.5, w - r - 0.5),
                    "cy": _bounce(sh["cy"], sh["vy"], t, r + 0.5, h - r - 0.5),
                    "radius": r, "fill_a": sh["fill"],
                })
            frames.append(render_scene(h, w, (axis, bg_a, bg_b), items))
        return VideoClip(np.stack(frames), int(meta["cond"]), meta)
    if kind == "concept_still":
        spec = CONCEPTS[meta["concept"]]
        frame = spec.render(meta["h"], meta["w"], cx=meta["cx"], cy=meta["cy"])
        return VideoClip(frame[None], spec.rare_token, meta)
    raise ContractError(f"cannot regenerate clip of kind {kind!r}")


def gen_natural_videos(n: int, rng: PrngStream, f: int = 8, h: int = 16, w: int = 16) -> list[VideoClip]:
    """Moving-shape clips: 1-2 shapes translating at constant velocity and
    bouncing off the borders.  The condition token encodes (first shape
    class, background style)."""
    if n < 1:
        raise ContractError(f"need at least one clip, got n={n}")
    clips = []
    for _ in range(n):
        style = int(rng.integers(0, N_BASE_STYLES))
        n_shapes = int(rng.integers(1, 3))
        shapes = []
        for _s in range(n_shapes):
            shape_idx = int(rng.integers(0, len(BASE_SHAPES)))
            radius = float(rng.uniform(2.4, 4.4))
            cx = float(rng.uniform(radius + 0.5, w - radius - 0.5))
            cy = float(rng.uniform(radius + 0.5, h - radius - 0.5))
            speed = float(rng.uniform(0.6, 2.2))
            angle = float(rng.uniform(0.0, 2.0 * np.pi))
            shapes.append({
                "shape": BASE_SHAPES[shape_idx], "fill": SHAPE_FILLS[BASE_SHAPES[shape_idx]],
                "radius": radius, "cx": cx, "cy": cy,
                "vx": speed * np.cos(angle), "vy": speed * np.sin(angle),
                "class": shape_idx,
            })
        meta = {"kind": "moving_shapes", "f": f, "h": h, "w": w, "style": style,
                "shapes": shapes, "cond": base_token(shapes[0]["class"], style)}
        clips.append(clip_from_meta(meta))
    return clips


def gen_still_images(n: int, rng: PrngStream, h: int = 16, w: int = 16):
    """Single-frame scenes for image-model training; returns (images, conds)."""
    clips = gen_natural_videos(n, rng, f=1, h=h, w=w)
    images = np.stack([c.pixels[0] for c in clips])
    conds = np.array([c.cond for c in clips], dtype=np.int64)
    return images, conds


def concept_images(spec: ConceptSpec, n: int, rng: PrngStream, h: int = 16, w: int = 16) -> list[VideoClip]:
    """Customization dataset: the concept at random positions over its own
    background, as single-frame clips tagged with the rare token."""
    radius = 0.30 * min(h, w)
    out = []
    for _ in range(n):
        cx = float(rng.uniform(radius + 1.0, w - radius - 1.0))
        cy = float(rng.uniform(radius + 1.0, h - radius - 1.0))
        meta = {"kind": "concept_still", "concept": spec.name, "h": h, "w": w, "cx": cx, "cy": cy}
        out.append(clip_from_meta(meta))
    return out


def freeze_video(frame: np.ndarray, f: int, cond: int = 0) -> VideoClip:
    """Duplicate one [H, W, C] frame into an F-frame clip."""
    if f < 1:
        raise ContractError(f"frame count must be >= 1, got {f}")
    frame = np.asarray(frame, dtype=np.float32)
    if frame.ndim != 3:
        raise ContractError(f"freeze_video expects one [H, W, C] frame, got shape {frame.shape}")
    pixels = np.repeat(frame[None], f, axis=0)
    return VideoClip(pixels, int(cond), {"kind": "frozen", "f": f})


# -- manifests ----------------------------------------------------------------


def save_manifest(clips: list[VideoClip], path):
    with open(path, "w") as fh:
        for clip in clips:
            fh.write(json.dumps(clip.meta) + "\n")


def load_manifest(path) -> list[VideoClip]:
    clips = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                clips.append(clip_from_meta(json.loads(line)))
    return clips
