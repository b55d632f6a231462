"""CODATA physical constants used throughout the package (SI units)."""

from dataclasses import dataclass

import scipy.constants as sc


@dataclass(frozen=True)
class PhysicalConstants:
    e: float = sc.e
    hbar: float = sc.hbar
    h: float = sc.h
    k_B: float = sc.k
    epsilon_0: float = sc.epsilon_0


CONSTANTS = PhysicalConstants()
