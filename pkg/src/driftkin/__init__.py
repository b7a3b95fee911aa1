"""driftkin: drift-kinetic operators, guiding-center dynamics, and their
brute-force verification oracles."""

from . import (distributions, drift_kinematics, fast_motion, field_model,
               gyro_ops, moments, parallel_elliptic, transport,
               velocity_frame)

__version__ = "0.1.0"

__all__ = [
    "distributions", "drift_kinematics", "fast_motion", "field_model",
    "gyro_ops", "moments", "parallel_elliptic", "transport",
    "velocity_frame",
]
