"""pathlift: damped parallel transport, minimal-norm lifts of vector fields to
curved path space, and Monte Carlo verification of the resulting
integration-by-parts formula on constant-curvature models."""

__version__ = "0.1.0"
