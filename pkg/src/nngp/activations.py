"""Pointwise nonlinearities usable in kernel construction.

An activation must be finite on the quadrature grid and have finite value at
zero (the zero-variance Gaussian expectation is phi(0)^2). The ``odd`` flag
enables exact antisymmetric handling of correlations below the lowest grid
point: for odd phi, E[phi(u)phi(v)] at correlation -c equals minus the value
at +c.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Activation:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    odd: bool

    @property
    def value_at_zero(self) -> float:
        return float(self.fn(np.float64(0.0)))

    def derivative_at_zero(self, h: float = 1e-6) -> float:
        """Central finite difference of phi at 0 (no derivative tables)."""
        return float(self.fn(np.float64(h)) - self.fn(np.float64(-h))) / (2.0 * h)


def _relu(u):
    return np.maximum(u, 0.0)


RELU = Activation("relu", _relu, odd=False)
TANH = Activation("tanh", np.tanh, odd=True)

ACTIVATIONS = {a.name: a for a in (RELU, TANH)}


def get_activation(phi) -> Activation:
    """Resolve an activation from its tag, passing instances through."""
    if isinstance(phi, Activation):
        return phi
    try:
        return ACTIVATIONS[phi]
    except KeyError:
        known = ", ".join(sorted(ACTIVATIONS))
        raise ValueError(f"unknown nonlinearity {phi!r}; known tags: {known}") from None
