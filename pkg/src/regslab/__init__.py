"""Randomized Gauss-Seidel, extended Gauss-Seidel and Kaczmarz solvers with
exact one-step oracles and singular-direction diagnostics."""
