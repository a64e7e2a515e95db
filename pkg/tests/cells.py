"""Desk-scale Monte Carlo cells shared by the simulation and acceptance tests."""

from fsim.simulation import DgpConfig

XIS = (0.1, 0.5, 0.9)


def desk_cell(xi: float = 0.1, errors: str = "iid") -> DgpConfig:
    """Smooth curves, n=60 train / 40 test, B=20 replications."""
    return DgpConfig(n=60, curve_kind="smooth", xi=xi, error_structure=errors, n_test=40, B=20, seed=2024)
