"""Physical constants used throughout the package (SI units)."""

from scipy.constants import (
    atomic_mass as ATOMIC_MASS_KG,
    e as ELEMENTARY_CHARGE,
    epsilon_0 as EPSILON_0,
    hbar as HBAR,
)

__all__ = ["ATOMIC_MASS_KG", "ELEMENTARY_CHARGE", "EPSILON_0", "HBAR"]
