"""Mixed HDV/ACC ring-road simulation and ACC cyberattack characterization."""

__version__ = "0.1.0"
