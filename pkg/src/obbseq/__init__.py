"""Oriented-bounding-box time series toolkit.

Fits minimum-volume oriented bounding boxes to per-component point-cloud
sequences, trains composite recurrent autoencoders on the resulting corner
trajectories, and separates deformation modes in the learned hidden
representation.
"""

__version__ = "0.1.0"
