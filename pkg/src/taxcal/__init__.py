"""In-situ calibration toolkit for a magnetic tactile fingertip.

The package covers probe localization, dual-rate data alignment, degree-3
polynomial least-squares calibration, runtime force inference, and a rig
simulator that produces the data the rest of the pipeline consumes.
"""

__version__ = "0.1.0"
