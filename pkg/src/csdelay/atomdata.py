"""Cesium D1 structure: hyperfine levels, relative line strengths, vapor density."""

from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import factorial, log10, sqrt

from scipy.constants import atomic_mass, c, k as k_B

# Standard 133Cs data (D. A. Steck, "Cesium D Line Data", rev. 2.2.1).
CS_MASS = 132.905451961 * atomic_mass
CS_NUCLEAR_SPIN = Fraction(7, 2)
CS_D1_WAVELENGTH = 894.335e-9
CS_D1_GAMMA_NAT = 4.575e6  # Hz, FWHM of 6P1/2
CS_GROUND_SPLITTING = 9.192631770e9
CS_P12_SPLITTING = 1.16768e9

# Vapor-pressure validity window (K) of the correlation below.
T_MIN = 250.0
T_MAX = 500.0
CS_MELTING_POINT = 301.65


# ---------------------------------------------------------------------------
# angular momentum algebra

def _half_integer(x):
    twice = round(2 * float(x))
    if abs(2 * float(x) - twice) > 1e-9 or twice < 0:
        raise ValueError(f"expected a non-negative half-integer, got {x!r}")
    return Fraction(twice, 2)


def _fact(x):
    return factorial(int(x))


def _triangle_ok(a, b, c):
    return (a + b + c).denominator == 1 and abs(a - b) <= c <= a + b


def _delta_sq(a, b, c):
    return Fraction(_fact(a + b - c) * _fact(a - b + c) * _fact(-a + b + c), _fact(a + b + c + 1))


def wigner6j_squared(j1, j2, j3, j4, j5, j6):
    """Exact value of {j1 j2 j3; j4 j5 j6}**2 and its sign, as (Fraction, sign)."""
    a, b, cc, d, e, f = (_half_integer(j) for j in (j1, j2, j3, j4, j5, j6))
    triads = ((a, b, cc), (a, e, f), (d, b, f), (d, e, cc))
    if not all(_triangle_ok(*t) for t in triads):
        return Fraction(0), 0
    prefactor = Fraction(1)
    for t in triads:
        prefactor *= _delta_sq(*t)

    sums = [a + b + cc, a + e + f, d + b + f, d + e + cc]
    pairs = [a + b + d + e, a + cc + d + f, b + cc + e + f]
    total = 0
    for t in range(int(max(sums)), int(min(pairs)) + 1):
        num = (-1) ** t * factorial(t + 1)
        den = 1
        for s in sums:
            den *= _fact(t - s)
        for p in pairs:
            den *= _fact(p - t)
        total += Fraction(num, den)
    sign = (total > 0) - (total < 0)
    return prefactor * total * total, sign


def wigner6j(j1, j2, j3, j4, j5, j6):
    """Wigner 6-j symbol via the Racah sum.

    All factorial ratios are kept as exact rationals; the single square root
    is taken at the end. Arguments must be non-negative half-integers, and
    the result is 0 whenever a triangle condition fails.
    """
    sq, sign = wigner6j_squared(j1, j2, j3, j4, j5, j6)
    return sign * sqrt(sq)


def line_strength_fractions(nuclear_spin, j_ground, j_excited, f_ground, f_excited_levels):
    """Exact relative strengths S(F -> F') for one ground level, summing to 1."""
    raw = {}
    for fe in f_excited_levels:
        sq, _ = wigner6j_squared(j_ground, j_excited, 1, fe, f_ground, nuclear_spin)
        raw[fe] = (2 * _half_integer(fe) + 1) * (2 * _half_integer(j_ground) + 1) * sq
    norm = sum(raw.values())
    return {fe: s / norm for fe, s in raw.items()}


# ---------------------------------------------------------------------------
# data types

@dataclass(frozen=True)
class HyperfineTransition:
    f_ground: int
    f_excited: int
    detuning: float  # Hz, relative to the frame reference nu0
    strength: float

    def __post_init__(self):
        if not 0.0 < self.strength < 1.0:
            raise ValueError("transition strength must lie in (0, 1)")


@dataclass(frozen=True)
class AtomModel:
    nu_line: float
    gamma_nat: float
    mass: float
    delta_ground: float
    delta_excited: float
    transitions: tuple = field(default=())
    nuclear_spin: Fraction = CS_NUCLEAR_SPIN
    j_ground: Fraction = Fraction(1, 2)
    j_excited: Fraction = Fraction(1, 2)

    def ground_fraction(self, f_ground):
        """Thermal share of atoms in ground level F: (2F+1)/((2I+1)(2J+1))."""
        return (2 * f_ground + 1) / float((2 * self.nuclear_spin + 1) * (2 * self.j_ground + 1))

    def transition(self, f_ground, f_excited):
        for tr in self.transitions:
            if tr.f_ground == f_ground and tr.f_excited == f_excited:
                return tr
        raise KeyError((f_ground, f_excited))


def line_strengths(model):
    """Relative strengths keyed by (F, F'), normalized per ground F.

    S(F->F') is proportional to (2F'+1)(2J+1){J J' 1; F' F I}^2.
    """
    if model.j_ground != Fraction(1, 2) or model.j_excited != Fraction(1, 2):
        raise ValueError("only the D1 line (J = J' = 1/2) is supported")
    i = model.nuclear_spin
    out = {}
    for fg in (i - Fraction(1, 2), i + Fraction(1, 2)):
        levels = (i - Fraction(1, 2), i + Fraction(1, 2))
        for fe, s in line_strength_fractions(i, model.j_ground, model.j_excited, fg, levels).items():
            out[(int(fg), int(fe))] = float(s)
    return out


def cesium_d1():
    """The Cs D1 line with detunings measured from the F=4 midpoint."""
    skeleton = AtomModel(
        nu_line=c / CS_D1_WAVELENGTH,
        gamma_nat=CS_D1_GAMMA_NAT,
        mass=CS_MASS,
        delta_ground=CS_GROUND_SPLITTING,
        delta_excited=CS_P12_SPLITTING,
    )
    strengths = line_strengths(skeleton)
    half = CS_P12_SPLITTING / 2
    # F=3 lies below F=4, so its transitions sit delta_ground higher in frequency.
    offsets = {
        (4, 3): -half,
        (4, 4): +half,
        (3, 3): CS_GROUND_SPLITTING - half,
        (3, 4): CS_GROUND_SPLITTING + half,
    }
    transitions = tuple(
        HyperfineTransition(fg, fe, offsets[(fg, fe)], strengths[(fg, fe)])
        for fg, fe in ((4, 3), (4, 4), (3, 3), (3, 4))
    )
    return replace(skeleton, transitions=transitions)


# ---------------------------------------------------------------------------
# vapor density

def _log10_p_atm_liquid(T):
    return 8.232 - 4062.0 / T - 1.3359 * log10(T)


def _log10_p_atm_solid(T):
    return 4.711 - 3999.0 / T


# The two published branches differ by 0.05 % at the melting point; the solid
# branch is shifted by that amount so the density is continuous.
_SOLID_SHIFT = _log10_p_atm_liquid(CS_MELTING_POINT) - _log10_p_atm_solid(CS_MELTING_POINT)


def _check_range(T):
    if not T_MIN < T < T_MAX:
        raise ValueError(f"temperature {T} K outside vapor-pressure window ({T_MIN}, {T_MAX}) K")


def vapor_pressure(T):
    """Saturated Cs vapor pressure in Pa.

    Alcock, Itkin & Horrigan, Can. Metall. Q. 23, 309 (1984): solid below
    301.65 K, liquid above. Same correlation as used by ElecSus.
    """
    _check_range(T)
    if T < CS_MELTING_POINT:
        log_p = _log10_p_atm_solid(T) + _SOLID_SHIFT
    else:
        log_p = _log10_p_atm_liquid(T)
    return 101325.0 * 10.0**log_p


def number_density(T):
    """Atomic number density (1/m^3) of saturated Cs vapor at T kelvin."""
    return vapor_pressure(T) / (k_B * T)


def temperature_for_density(n, tol=1e-3, upper=None):
    """Invert ``number_density`` by bisection to within ``tol`` kelvin."""
    lo, hi = T_MIN + 1e-9, (T_MAX - 1e-9) if upper is None else upper
    if not number_density(lo) <= n <= number_density(hi):
        raise ValueError(f"density {n:.3e} /m^3 outside the correlation window")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if number_density(mid) < n:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class VaporCell:
    length: float
    temperature: float
    density_override: float = None
    population_factor: float = 1.0

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("cell length must be positive")
        if self.temperature <= 0:
            raise ValueError("cell temperature must be positive")
        if self.population_factor < 0:
            raise ValueError("population factor must be non-negative")
        if self.density_override is not None and self.density_override < 0:
            raise ValueError("density override must be non-negative")

    @property
    def density(self):
        if self.density_override is not None:
            return self.density_override
        return number_density(self.temperature)
