"""Shape reconstruction for single-shot dynamic tomography.

A binary image sequence is represented by a spatiotemporal level set whose
low-frequency DCT coefficients are fitted to one parallel-beam projection
per frame.
"""

from .baselines import BaselineConfig, binned_reconstruct, boxl2_reconstruct, css_reconstruct, static_tv_reconstruct
from .dss import ExtensionConfig, ReconConfig, dss_attenuation, dss_reconstruct
from .errors import ConfigError, DynShapeError, GeometryError, NumericalError
from .metrics import report
from .phantoms import NonRigidSpec, RigidBallSpec, add_awgn, nonrigid_bell, rigid_balls
from .projector import AngleSchedule, DetectorArray, ImageGrid, Sinogram, adjoint_sequence, forward_sequence

__version__ = "0.1.0"

__all__ = [
    "AngleSchedule",
    "BaselineConfig",
    "ConfigError",
    "DetectorArray",
    "DynShapeError",
    "ExtensionConfig",
    "GeometryError",
    "ImageGrid",
    "NonRigidSpec",
    "NumericalError",
    "ReconConfig",
    "RigidBallSpec",
    "Sinogram",
    "add_awgn",
    "adjoint_sequence",
    "binned_reconstruct",
    "boxl2_reconstruct",
    "css_reconstruct",
    "dss_attenuation",
    "dss_reconstruct",
    "forward_sequence",
    "nonrigid_bell",
    "report",
    "rigid_balls",
    "static_tv_reconstruct",
]
