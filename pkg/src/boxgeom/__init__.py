"""Projected 3D bounding boxes of vehicles: geometry, viewpoint
normalization, augmentation, box estimation, dataset handling and
evaluation."""

__version__ = "0.1.0"

from .box3d import Box3D, CameraCalib, DirectionTriplet, Viewpoint2D, construct_box, view_vectors
from .geom import Homography, Rect, homography_from_quads, warp_perspective
from .rast import rasterize
from .unpack import layout_from_box, unpack

__all__ = [
    "Box3D",
    "CameraCalib",
    "DirectionTriplet",
    "Homography",
    "Rect",
    "Viewpoint2D",
    "construct_box",
    "homography_from_quads",
    "layout_from_box",
    "rasterize",
    "unpack",
    "view_vectors",
    "warp_perspective",
]
