"""Safe affine maneuvers for quadcopter swarms: planning, topology, simulation."""

__version__ = "0.1.0"
