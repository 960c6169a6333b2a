"""Generalized curvature of Hamiltonian systems."""
