"""Decentralized Metropolis-adjusted Hamiltonian sampling with gradient tracking."""

__version__ = "0.1.0"
