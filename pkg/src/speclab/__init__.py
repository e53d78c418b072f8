"""Numerical companion for sharp normalized Neumann and Steklov eigenvalue bounds.

Weighted Neumann spectra of the ball with radial weights, weighted Steklov
spectra of the disk, the equator-map trial constructions and sharp-constant
reports.
"""

__version__ = "0.1.0"

from .errors import SpeclabError  # noqa: E402
