"""Grid helpers and the sequential diffusion oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiffusionRate:
    """Fraction ``num / 2**shift`` of a cell's value sent to each neighbour.

    ``4 * num <= 2**shift`` keeps concentrations non-negative.
    """
    num: int = 1
    shift: int = 3

    def __post_init__(self):
        if self.num < 1 or self.shift < 0 or 4 * self.num > (1 << self.shift):
            raise ValueError("rate must satisfy 0 < 4 * num / 2**shift <= 1")

    def flux(self, v):
        return (v * self.num) >> self.shift


def pad_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.int64)
    if grid.ndim != 2:
        raise ValueError("grid must be 2-D (rows, columns)")
    return np.pad(grid, 1)


def crop_grid(padded: np.ndarray) -> np.ndarray:
    return np.asarray(padded)[1:-1, 1:-1]


def diffusion_step(grid: np.ndarray, rate: DiffusionRate = DiffusionRate()) -> np.ndarray:
    """One no-flux step: every cell sends ``flux(v)`` to each in-grid neighbour.

    Flux towards the zero border is dropped together with the matching
    outflow, so the total is conserved exactly.
    """
    g = np.asarray(grid, dtype=np.int64)
    h, w = g.shape
    q = rate.flux(g)
    deg = np.zeros_like(g)
    inflow = np.zeros_like(g)
    if w > 1:
        inflow[:, 1:] += q[:, :-1]
        inflow[:, :-1] += q[:, 1:]
        deg[:, 1:] += 1
        deg[:, :-1] += 1
    if h > 1:
        inflow[1:, :] += q[:-1, :]
        inflow[:-1, :] += q[1:, :]
        deg[1:, :] += 1
        deg[:-1, :] += 1
    return g - deg * q + inflow


def diffusion_reference(grid: np.ndarray, steps: int, rate: DiffusionRate = DiffusionRate()) -> np.ndarray:
    g = np.asarray(grid, dtype=np.int64).copy()
    for _ in range(steps):
        g = diffusion_step(g, rate)
    return g
