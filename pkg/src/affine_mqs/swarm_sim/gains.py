"""Stability of the per-agent characteristic quartic s⁴ + k1 s³ + k2 s² + k3 s + k4."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

ROOT_TOL = 1e-9


def routh_hurwitz(k1: float, k2: float, k3: float, k4: float) -> bool:
    """Routh test for a monic quartic: all roots strictly in the left half-plane."""
    return bool(k1 > 0 and k3 > 0 and k4 > 0 and k1 * k2 * k3 > k3 * k3 + k1 * k1 * k4)


def quartic_roots(k: ArrayLike) -> NDArray[np.complex128]:
    k = np.asarray(k, dtype=float)
    return np.roots(np.concatenate([[1.0], k]))


@dataclass
class GainReport:
    stable: bool
    routh: list
    roots: list
    max_real: list
    agree: bool

    def to_dict(self) -> dict:
        return {
            "stable": self.stable,
            "routh": self.routh,
            "max_real": self.max_real,
            "roots": [[[float(z.real), float(z.imag)] for z in r] for r in self.roots],
            "agree": self.agree,
        }


def check_gain_stability(gains: ArrayLike) -> GainReport:
    """Check (k1, k2, k3, k4) for one agent or an (N, 4) stack.

    With diagonal gain matrices the characteristic determinant factors
    into one quartic per agent. Each quartic is checked by Routh-Hurwitz
    and by explicit roots; ``agree`` reports whether the two verdicts match.
    """
    K = np.atleast_2d(np.asarray(gains, dtype=float))
    routh, roots, mr, agree = [], [], [], True
    for k in K:
        r = routh_hurwitz(*k)
        z = quartic_roots(k)
        m = float(np.max(z.real))
        routh.append(r)
        roots.append(z)
        mr.append(m)
        # explicit roots can sit a hair either side of the axis at the boundary
        if abs(m) > ROOT_TOL * max(1.0, float(np.max(np.abs(k)))):
            agree &= r == (m < 0)
    return GainReport(bool(all(routh)), routh, roots, mr, bool(agree))
