"""Exact Hamiltonian models of lumped circuits by symplectic constrained reduction."""

from .fj_reduction import HamiltonianModel, ObstructionKind, ObstructionReport, run_reduction
from .netlist import CircuitGraph, load_netlist, parse_netlist

__all__ = [
    "CircuitGraph",
    "HamiltonianModel",
    "ObstructionKind",
    "ObstructionReport",
    "load_netlist",
    "parse_netlist",
    "run_reduction",
]
