"""Meshfree RBF-FD discretization and stabilized time integration of
advection-diffusion-reaction PDEs on surfaces given only nodes and normals."""

__version__ = "0.1.0"
