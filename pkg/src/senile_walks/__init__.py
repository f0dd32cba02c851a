"""Simulation and statistical verification of senile persistent and senile
reinforced random walks on the integer lattice."""
