"""Co-dispatch of hierarchical edge/fog/cloud data centers and radial power networks."""

__version__ = "0.1.0"
