"""Training-time augmentation: HSV colour shift, noise rectangle, horizontal
flip and 2D bounding-box jitter.

Every random operation takes an explicit ``numpy.random.Generator``.
``SeedPolicy`` derives one independent stream per (record, epoch, operation)
so results never depend on processing order or worker count.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

from .box3d import Viewpoint2D
from .errors import DegenerateInput
from .geom import Rect

OPS = ("flip", "color", "drop", "jitter")


@dataclass(frozen=True)
class AugmentConfig:
    p_color: float = 0.5
    p_drop: float = 0.5
    p_flip: float = 0.5
    h_range: float = 18.0
    sv_range: float = 0.15
    drop_frac: tuple[float, float] = (0.1, 0.4)
    jitter_frac: float = 0.1

    def __post_init__(self):
        for name in ("p_color", "p_drop", "p_flip"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise DegenerateInput(f"{name} must be in [0, 1], got {p}")
        if self.h_range < 0 or self.sv_range < 0 or self.jitter_frac < 0:
            raise DegenerateInput("augmentation ranges must be non-negative")
        lo, hi = self.drop_frac
        if not 0.0 <= lo <= hi <= 1.0:
            raise DegenerateInput(f"drop_frac must satisfy 0 <= min <= max <= 1, got {self.drop_frac}")
        object.__setattr__(self, "drop_frac", (float(lo), float(hi)))

    @classmethod
    def from_dict(cls, obj: dict) -> "AugmentConfig":
        known = {k: v for k, v in obj.items() if k in cls.__dataclass_fields__}
        if "drop_frac" in known:
            known["drop_frac"] = tuple(known["drop_frac"])
        return cls(**known)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["drop_frac"] = list(self.drop_frac)
        return out


@dataclass(frozen=True)
class SeedPolicy:
    global_seed: int = 0

    def stream(self, record_id: str, epoch: int = 0, op: str = "") -> np.random.Generator:
        """Deterministic generator for one record/epoch/operation.

        The record id is hashed with SHA-256 because Python's ``hash`` is
        salted per process.
        """
        digest = hashlib.sha256(f"{record_id}\x00{op}".encode()).digest()
        words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
        seq = np.random.SeedSequence([self.global_seed & (2**64 - 1), epoch, *words])
        return np.random.default_rng(seq)


@dataclass(frozen=True)
class ColorShift:
    dh: float  # degrees
    ds: float
    dv: float


def shift_hsv(img: np.ndarray, shift: ColorShift) -> np.ndarray:
    """Add one (dh, ds, dv) to every pixel; hue wraps, S and V clamp to [0, 1]."""
    arr = np.asarray(img)
    is_int = np.issubdtype(arr.dtype, np.integer)
    rgb = arr[..., :3].astype(float) / 255.0 if is_int else arr[..., :3].astype(float)
    hsv = rgb_to_hsv(np.clip(rgb, 0.0, 1.0))
    hsv[..., 0] = np.mod(hsv[..., 0] + shift.dh / 360.0, 1.0)
    hsv[..., 1] = np.clip(hsv[..., 1] + shift.ds, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] + shift.dv, 0.0, 1.0)
    out = hsv_to_rgb(hsv)
    if is_int:
        out = np.clip(np.rint(out * 255.0), 0, 255).astype(arr.dtype)
    else:
        out = out.astype(arr.dtype)
    if arr.shape[-1] > 3:
        out = np.concatenate([out, arr[..., 3:]], axis=-1)
    return out


def draw_color_shift(rng: np.random.Generator, cfg: AugmentConfig) -> ColorShift:
    dh = rng.uniform(-cfg.h_range, cfg.h_range)
    ds = rng.uniform(-cfg.sv_range, cfg.sv_range)
    dv = rng.uniform(-cfg.sv_range, cfg.sv_range)
    return ColorShift(float(dh), float(ds), float(dv))


def color_jitter(img: np.ndarray, rng: np.random.Generator, cfg: AugmentConfig = AugmentConfig()):
    """Random HSV shift shared by all pixels. Returns ``(image, shift)``."""
    if np.asarray(img).ndim != 3 or np.asarray(img).shape[-1] < 3:
        raise DegenerateInput("color_jitter needs a 3-channel image")
    shift = draw_color_shift(rng, cfg)
    return shift_hsv(img, shift), shift


def image_drop(img: np.ndarray, rng: np.random.Generator, cfg: AugmentConfig = AugmentConfig()):
    """Replace a random rectangle with uniform 0..255 noise.

    Returns ``(image, rect)`` where ``rect`` is ``(row0, col0, height, width)``.
    """
    arr = np.asarray(img)
    h, w = arr.shape[:2]
    if h < 8 or w < 8:
        raise DegenerateInput("image_drop needs at least an 8x8 image")
    lo, hi = cfg.drop_frac
    rh = int(round(rng.uniform(lo, hi) * h))
    rw = int(round(rng.uniform(lo, hi) * w))
    row0 = int(rng.integers(0, h - rh + 1))
    col0 = int(rng.integers(0, w - rw + 1))
    out = arr.copy()
    if rh > 0 and rw > 0:
        noise_shape = (rh, rw) + arr.shape[2:]
        noise = rng.integers(0, 256, size=noise_shape)
        if not np.issubdtype(arr.dtype, np.integer):
            noise = noise / 255.0
        out[row0 : row0 + rh, col0 : col0 + rw] = noise.astype(arr.dtype)
    return out, (row0, col0, rh, rw)


def hflip(img: np.ndarray, view: Optional[Viewpoint2D] = None):
    """Mirror the image left-right and negate the x part of the view vectors."""
    out = np.ascontiguousarray(np.asarray(img)[:, ::-1])
    if view is None:
        return out, None
    flipped = Viewpoint2D(
        (-view.v_f[0], view.v_f[1]),
        (-view.v_s[0], view.v_s[1]),
        (-view.v_r[0], view.v_r[1]),
        view.d,
    )
    return out, flipped


def bbox_jitter(bbox2d: Rect, rng: np.random.Generator, bounds: Rect, jitter_frac: float = 0.1) -> Rect:
    """Shift the box by up to ``jitter_frac`` of its size, keeping it in bounds."""
    dx = rng.uniform(-jitter_frac, jitter_frac) * bbox2d.width
    dy = rng.uniform(-jitter_frac, jitter_frac) * bbox2d.height
    out = bbox2d.translated(dx, dy)
    # clip by shifting back; size is preserved
    sx = max(bounds.x0 - out.x0, 0.0) - max(out.x1 - bounds.x1, 0.0)
    sy = max(bounds.y0 - out.y0, 0.0) - max(out.y1 - bounds.y1, 0.0)
    return out.translated(sx, sy)


@dataclass
class AugmentResult:
    image: np.ndarray
    view: Optional[Viewpoint2D] = None
    bbox: Optional[Rect] = None
    applied: dict = field(default_factory=dict)


def augment_sample(
    img: np.ndarray,
    record_id: str,
    policy: SeedPolicy,
    cfg: AugmentConfig = AugmentConfig(),
    epoch: int = 0,
    train: bool = True,
    view: Optional[Viewpoint2D] = None,
    bbox: Optional[Rect] = None,
    bounds: Optional[Rect] = None,
) -> AugmentResult:
    """Apply flip -> color -> drop (and bbox jitter when a bbox is given).

    In evaluation mode the inputs come back untouched.
    """
    if not train:
        return AugmentResult(np.asarray(img), view, bbox, {})
    streams = {op: policy.stream(record_id, epoch, op) for op in OPS}
    out = np.asarray(img)
    applied: dict = {}
    if streams["flip"].random() < cfg.p_flip:
        out, view = hflip(out, view)
        applied["flip"] = True
    if streams["color"].random() < cfg.p_color:
        out, shift = color_jitter(out, streams["color"], cfg)
        applied["color"] = [shift.dh, shift.ds, shift.dv]
    if streams["drop"].random() < cfg.p_drop:
        out, rect = image_drop(out, streams["drop"], cfg)
        applied["drop"] = list(rect)
    if bbox is not None and bounds is not None:
        bbox = bbox_jitter(bbox, streams["jitter"], bounds, cfg.jitter_frac)
        applied["jitter"] = bbox.as_list()
    return AugmentResult(out, view, bbox, applied)

