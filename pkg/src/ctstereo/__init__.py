"""Perspective photometric stereo under the Cook-Torrance reflectance model.

Per-pixel normal solves (BFGS, Levenberg-Marquardt, Dog Leg), highlight
seeding, Poisson depth integration and an alternating refinement loop that
recovers normals, albedo, depth and roughness.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    CameraIntrinsics,
    CTStereoError,
    LightSet,
    LightSpec,
    MaterialParams,
)
from .metrics import maen, msed  # noqa: F401
from .renderer import Scene, analytic_surfaces, render_dataset  # noqa: F401
from .ron import RonConfig, RonState, run_ron  # noqa: F401
