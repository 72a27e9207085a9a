"""Contact-implicit trajectory optimization for planar multibody systems."""

__version__ = "0.1.0"
