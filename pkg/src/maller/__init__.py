"""Local linear regression on manifolds via tangent-plane estimation."""

__version__ = "0.1.0"
