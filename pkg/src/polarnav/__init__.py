"""Polarized-skylight / satellite / inertial integrated navigation.

Core library (frames, sun ephemeris, polarimetry, synthetic sky, strapdown
mechanization, error-state fusion, scenario simulator) wrapped by a FastAPI
service (``polarnav.service.app``) with the ``polarnav`` CLI as a thin
client.
"""

__version__ = "0.1.0"
