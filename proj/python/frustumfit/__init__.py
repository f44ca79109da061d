"""3D vehicle box fitting from 2D detections and LiDAR point clouds."""

from _frustumfit import *  # noqa: F401,F403
from _frustumfit import __doc__  # noqa: F401
