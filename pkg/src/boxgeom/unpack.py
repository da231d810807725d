"""Viewpoint normalization: unpack the three visible box faces into one image.

Output layout (rows top to bottom)::

    +--------+----------+
    |  zero  |   roof   |  h_R rows
    +--------+----------+
    | front  |   side   |  h_S rows
    +--------+----------+
       w_F       w_S

The front/side boundary column carries the physical edge b1b5 and the
roof/side boundary row carries b1b2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .box3d import Box3D
from .errors import DegenerateFace, DegenerateInput, DegenerateQuad
from .geom import cast_like, homography_from_quads, sample_bilinear

DEFAULT_TARGET = 256
MIN_BLOCK = 8
OUTSIDE_TOLERANCE = 10.0


@dataclass(frozen=True)
class UnpackLayout:
    w_F: int
    w_S: int
    h_R: int
    h_S: int

    def __post_init__(self):
        for name in ("w_F", "w_S", "h_R", "h_S"):
            if getattr(self, name) < MIN_BLOCK:
                raise DegenerateInput(f"{name} must be at least {MIN_BLOCK} px")

    @property
    def W(self) -> int:
        return self.w_F + self.w_S

    @property
    def H(self) -> int:
        return self.h_R + self.h_S

    def blocks(self) -> dict[str, tuple[int, int, int, int]]:
        """(row0, col0, height, width) of each face block."""
        return {
            "front": (self.h_R, 0, self.h_S, self.w_F),
            "side": (self.h_R, self.w_F, self.h_S, self.w_S),
            "roof": (0, self.w_F, self.h_R, self.w_S),
        }

    def to_json(self) -> dict:
        return {"w_F": self.w_F, "w_S": self.w_S, "h_R": self.h_R, "h_S": self.h_S}


@dataclass(frozen=True, eq=False)
class UnpackedImage:
    pixels: np.ndarray
    layout: UnpackLayout


# block corners TL, TR, BR, BL take these box vertices
BLOCK_CORNERS = {
    "front": (0, 1, 5, 4),
    "side": (1, 2, 6, 5),
    "roof": (0, 3, 2, 1),
}


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def layout_from_box(box: Box3D, target: int = DEFAULT_TARGET) -> UnpackLayout:
    """Split a ``target x target`` canvas by the projected edge proportions.

    Column split: |b0b1| : |b1b2| (front width vs. side length).
    Row split: |b0b1| : |b1b5| (roof depth vs. side height).
    Both ratios are clamped to [0.25, 0.75].
    """
    if target < 32:
        raise DegenerateInput("target size must be at least 32 px")
    b = box.b
    width = float(np.linalg.norm(b[0] - b[1]))
    length = float(np.linalg.norm(b[2] - b[1]))
    height = float(np.linalg.norm(b[5] - b[1]))

    def ratio(a: float, c: float) -> float:
        r = a / (a + c) if a + c > 0 else 0.5
        return min(0.75, max(0.25, r))

    w_F = _round_half_up(ratio(width, length) * target)
    h_R = _round_half_up(ratio(width, height) * target)
    return UnpackLayout(w_F, target - w_F, h_R, target - h_R)


def _block_quad(row0: int, col0: int, h: int, w: int) -> np.ndarray:
    # pixel edges, not centres, so adjacent blocks share a boundary line
    x0, y0 = col0 - 0.5, row0 - 0.5
    x1, y1 = col0 + w - 0.5, row0 + h - 0.5
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def unpack(img: np.ndarray, box: Box3D, layout: UnpackLayout) -> UnpackedImage:
    """Warp the front, side and roof quads into their blocks of the layout."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    img = img[..., :3]
    h, w = img.shape[:2]
    b = box.b
    if (
        b[:, 0].min() < -OUTSIDE_TOLERANCE
        or b[:, 1].min() < -OUTSIDE_TOLERANCE
        or b[:, 0].max() > w - 1 + OUTSIDE_TOLERANCE
        or b[:, 1].max() > h - 1 + OUTSIDE_TOLERANCE
    ):
        raise DegenerateInput("box vertices lie more than 10 px outside the image")

    out = np.zeros((layout.H, layout.W, 3), dtype=float)
    for name, (row0, col0, bh, bw) in layout.blocks().items():
        src = b[list(BLOCK_CORNERS[name])]
        dst = _block_quad(row0, col0, bh, bw)
        try:
            # block -> image, so block pixel centres map straight to samples
            hm = homography_from_quads(dst, src)
        except DegenerateQuad as exc:
            raise DegenerateFace(f"{name} face is degenerate") from exc
        vs, us = np.mgrid[row0 : row0 + bh, col0 : col0 + bw].astype(float)
        pts = hm.apply(np.column_stack([us.ravel(), vs.ravel()]))
        vals = sample_bilinear(img, pts[:, 0], pts[:, 1])
        out[row0 : row0 + bh, col0 : col0 + bw] = vals.reshape(bh, bw, 3)
    out[: layout.h_R, : layout.w_F] = 0.0
    return UnpackedImage(cast_like(out, img.dtype), layout)
