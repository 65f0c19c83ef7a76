"""Heart rate from egocentric eye-tracking video fused with head-motion IMU data."""

__version__ = "0.1.0"
