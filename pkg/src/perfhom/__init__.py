"""Homogenization laboratory for periodically perforated Poisson and Stokes problems."""
