"""Two-body orbital mechanics and the co-elliptic rendezvous cost model.

Everything here is a pure function of its inputs. Angles cross the module
boundary in degrees and are converted to radians internally.

No perturbations are modelled: orbits are Keplerian and propagate by mean
motion only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

MU_EARTH = 398600.4418  # km^3/s^2
R_EARTH = 6378.137  # km
MAX_ECC = 0.01

DEFAULT_COELLIPTIC_OFFSET = 10.0  # km below the target orbit
DEFAULT_APPROACH_FRACTION = 0.75  # share of the phase gap closed while coasting
DEFAULT_CLOSING_DV = 0.003  # km/s, 1 km gate -> safety-ellipse entry
DEFAULT_CLOSING_PERIODS = 0.1
SAFETY_ELLIPSE_SMA = 1.0  # km

RENDEZVOUS_LEGS = (
    "plane-change",
    "hohmann-1",
    "phasing-coast",
    "hohmann-2",
    "closing-burn",
    "safety-ellipse",
)

_TWO_PI = 2.0 * math.pi


class NoDriftError(ValueError):
    """Raised when two orbits share a mean motion but a phase gap must close."""


def _wrap_deg(angle: float) -> float:
    wrapped = angle % 360.0
    # -1e-17 % 360.0 == 360.0 in IEEE arithmetic
    return 0.0 if wrapped >= 360.0 else wrapped


@dataclass(frozen=True)
class OrbitalElements:
    """Keplerian state of one body.

    Attributes:
        sma: semi-major axis (km, from Earth centre).
        ecc: eccentricity, kept below 0.01 for every mission body.
        inc: inclination (deg).
        raan: right ascension of the ascending node (deg).
        argp: argument of perigee (deg).
        anomaly: true anomaly at ``epoch`` (deg).
        epoch: reference time (s since mission start).
    """

    sma: float
    ecc: float
    inc: float
    raan: float
    argp: float
    anomaly: float
    epoch: float = 0.0

    def __post_init__(self):
        if not self.sma > R_EARTH:
            raise ValueError(f"sma must exceed the Earth radius {R_EARTH} km, got {self.sma}")
        if not 0.0 <= self.ecc < MAX_ECC:
            raise ValueError(f"ecc must lie in [0, {MAX_ECC}), got {self.ecc}")
        if not 0.0 <= self.inc <= 180.0:
            raise ValueError(f"inc must lie in [0, 180] deg, got {self.inc}")
        for name in ("raan", "argp", "anomaly"):
            object.__setattr__(self, name, _wrap_deg(getattr(self, name)))

    @property
    def altitude(self) -> float:
        return self.sma - R_EARTH


@dataclass(frozen=True)
class TransferPlan:
    """Itemized impulsive transfer: ``legs`` holds (label, dv km/s, duration s)."""

    legs: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        for label, dv, duration in self.legs:
            if dv < 0 or duration < 0:
                raise ValueError(f"leg {label!r} has negative dv or duration")

    @property
    def total_dv(self) -> float:
        return math.fsum(leg[1] for leg in self.legs)

    @property
    def total_time(self) -> float:
        return math.fsum(leg[2] for leg in self.legs)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(leg[0] for leg in self.legs)

    def leg(self, label: str) -> tuple[str, float, float]:
        for item in self.legs:
            if item[0] == label:
                return item
        raise KeyError(label)

    def extended(self, label: str, dv: float, duration: float) -> "TransferPlan":
        return TransferPlan(self.legs + ((label, dv, duration),))


def _check_radius(r: float, name: str = "radius") -> None:
    if not r > R_EARTH:
        raise ValueError(f"{name} must exceed the Earth radius {R_EARTH} km, got {r}")


def mean_motion(sma: float) -> float:
    """Mean motion in rad/s."""
    if sma <= 0:
        raise ValueError(f"sma must be positive, got {sma}")
    return math.sqrt(MU_EARTH / sma**3)


def period_from_sma(sma: float) -> float:
    if sma <= 0:
        raise ValueError(f"sma must be positive, got {sma}")
    return _TWO_PI * math.sqrt(sma**3 / MU_EARTH)


def orbital_period(elements: OrbitalElements) -> float:
    """Orbital period in seconds, 2*pi*sqrt(a^3/mu)."""
    return period_from_sma(elements.sma)


def circular_velocity(r: float) -> float:
    return math.sqrt(MU_EARTH / r)


def hohmann_transfer(r1: float, r2: float) -> tuple[float, float, float]:
    """Two-impulse Hohmann transfer between circular orbits of radius r1 and r2.

    Returns:
        (dv1, dv2, duration): burn magnitudes in km/s and the coast time in s,
        which is half the transfer-ellipse period. Identical radii give zeros.
    """
    _check_radius(r1, "r1")
    _check_radius(r2, "r2")
    if r1 == r2:
        return 0.0, 0.0, 0.0
    a_t = 0.5 * (r1 + r2)
    v1 = math.sqrt(MU_EARTH / r1)
    v2 = math.sqrt(MU_EARTH / r2)
    # vis-viva speed ratios minus one, rewritten as x / (sqrt(1 + x) + 1) so that
    # nearly equal radii do not cancel; r2 - r1 itself is exact in floating point
    x = (r2 - r1) / (r1 + r2)
    dv1 = v1 * abs(x) / (math.sqrt(1.0 + x) + 1.0)
    dv2 = v2 * abs(x) / (math.sqrt(1.0 - x) + 1.0)
    duration = math.pi * math.sqrt(a_t**3 / MU_EARTH)
    return dv1, dv2, duration


def plane_change_dv(v: float, delta_angle: float) -> float:
    """Single-impulse plane change cost, 2*v*sin(delta/2), angle in degrees."""
    if v < 0:
        raise ValueError(f"velocity must be non-negative, got {v}")
    if not 0.0 <= delta_angle <= 180.0:
        raise ValueError(f"delta_angle must lie in [0, 180] deg, got {delta_angle}")
    return 2.0 * v * math.sin(math.radians(delta_angle) / 2.0)


def phasing_wait(chaser_sma: float, offset_sma: float, phase_gap: float) -> float:
    """Coast time for the relative drift between two circular orbits to close ``phase_gap`` deg."""
    if phase_gap == 0:
        return 0.0
    drift = abs(mean_motion(chaser_sma) - mean_motion(offset_sma))
    if drift == 0.0:
        raise NoDriftError("no drift: identical orbits cannot close a nonzero phase gap")
    return math.radians(phase_gap) / drift


def safety_ellipse_injection(target_sma: float) -> tuple[float, float]:
    """Cost of injecting into the 1 km terminal safety ellipse.

    Priced as dv = 2*n*a_se with the target's mean motion n; the duration is
    one target orbital period.
    """
    _check_radius(target_sma, "target_sma")
    return 2.0 * mean_motion(target_sma) * SAFETY_ELLIPSE_SMA, period_from_sma(target_sma)


def _mean_to_true(mean_anom: float, ecc: float) -> float:
    if ecc == 0.0:
        return mean_anom
    ecc_anom = mean_anom
    for _ in range(20):
        step = (ecc_anom - ecc * math.sin(ecc_anom) - mean_anom) / (1.0 - ecc * math.cos(ecc_anom))
        ecc_anom -= step
        if abs(step) < 1e-14:
            break
    half = ecc_anom / 2.0
    return 2.0 * math.atan2(math.sqrt(1.0 + ecc) * math.sin(half), math.sqrt(1.0 - ecc) * math.cos(half))


def _true_to_mean(true_anom: float, ecc: float) -> float:
    if ecc == 0.0:
        return true_anom
    half = true_anom / 2.0
    ecc_anom = 2.0 * math.atan2(math.sqrt(1.0 - ecc) * math.sin(half), math.sqrt(1.0 + ecc) * math.cos(half))
    return ecc_anom - ecc * math.sin(ecc_anom)


def true_anomaly_at(elements: OrbitalElements, t: float) -> float:
    """True anomaly (deg) of an unperturbed orbit at mission time ``t``."""
    dt = t - elements.epoch
    if dt == 0.0:
        return elements.anomaly
    nu0 = math.radians(elements.anomaly)
    m = _true_to_mean(nu0, elements.ecc) + mean_motion(elements.sma) * dt
    return _wrap_deg(math.degrees(_mean_to_true(math.fmod(m, _TWO_PI), elements.ecc)))


def propagate(elements: OrbitalElements, t: float) -> OrbitalElements:
    """Two-body propagation to mission time ``t``; only the anomaly changes."""
    return OrbitalElements(
        elements.sma, elements.ecc, elements.inc, elements.raan, elements.argp,
        true_anomaly_at(elements, t), t,
    )


def argument_of_latitude(elements: OrbitalElements, t: float) -> float:
    return _wrap_deg(elements.argp + true_anomaly_at(elements, t))


def plane_angle(a: OrbitalElements, b: OrbitalElements) -> float:
    """Angle (deg) between the orbit normals of ``a`` and ``b``."""
    def normal(e):
        i, raan = math.radians(e.inc), math.radians(e.raan)
        return (math.sin(i) * math.sin(raan), -math.sin(i) * math.cos(raan), math.cos(i))

    (x1, y1, z1), (x2, y2, z2) = normal(a), normal(b)
    cross = math.hypot(y1 * z2 - z1 * y2, z1 * x2 - x1 * z2, x1 * y2 - y1 * x2)
    # atan2 stays accurate for nearly coplanar orbits, where acos of the dot product does not
    return math.degrees(math.atan2(cross, x1 * x2 + y1 * y2 + z1 * z2))


def phase_gap(chaser: OrbitalElements, target: OrbitalElements, t: float) -> float:
    """Along-track angle (deg, in [0, 360)) by which the target leads the chaser at time ``t``."""
    return _wrap_deg(argument_of_latitude(target, t) - argument_of_latitude(chaser, t))


def coelliptic_rendezvous_plan(
    chaser: OrbitalElements,
    target: OrbitalElements,
    t: float | None = None,
    *,
    offset: float = DEFAULT_COELLIPTIC_OFFSET,
    approach_fraction: float = DEFAULT_APPROACH_FRACTION,
    closing_dv: float = DEFAULT_CLOSING_DV,
    closing_periods: float = DEFAULT_CLOSING_PERIODS,
) -> TransferPlan:
    """Price a co-elliptic Hohmann rendezvous from ``chaser`` to ``target``.

    The sequence is: plane change at the higher orbit's circular speed, a
    Hohmann transfer into an orbit ``offset`` km below the target, a coast
    until the along-track gap has shrunk to ``1 - approach_fraction`` of its
    value at insertion, a Hohmann raise onto the target orbit, a fixed
    closing burn to the 1 km gate, and the safety-ellipse injection.

    ``t`` is the mission time at departure; phases of both bodies are
    propagated to it. It defaults to the later of the two epochs.

    A chaser already co-located with the target (same orbit, zero phase gap)
    pays only the closing burn and the safety ellipse.
    """
    if t is None:
        t = max(chaser.epoch, target.epoch)
    if not 0.0 <= approach_fraction <= 1.0:
        raise ValueError(f"approach_fraction must lie in [0, 1], got {approach_fraction}")
    r_c, r_t = chaser.sma, target.sma
    angle = plane_angle(chaser, target)
    gap0 = phase_gap(chaser, target, t)
    plane_dv = plane_change_dv(circular_velocity(max(r_c, r_t)), angle)

    co_located = r_c == r_t and angle < 1e-9 and min(gap0, 360.0 - gap0) < 1e-9
    if co_located:
        h1 = h2 = (0.0, 0.0, 0.0)
        coast = 0.0
    else:
        r_off = r_t - offset
        h1 = hohmann_transfer(r_c, r_off)
        if h1[2] > 0.0:
            # chaser sweeps 180 deg on the transfer ellipse while the target moves on
            gap_insert = _wrap_deg(gap0 + math.degrees(mean_motion(r_t) * h1[2]) - 180.0)
        else:
            gap_insert = gap0
        coast = phasing_wait(r_off, r_t, approach_fraction * gap_insert) if offset else 0.0
        h2 = hohmann_transfer(r_off, r_t)

    se_dv, se_time = safety_ellipse_injection(r_t)
    legs = (
        ("plane-change", plane_dv, 0.0),
        ("hohmann-1", h1[0] + h1[1], h1[2]),
        ("phasing-coast", 0.0, coast),
        ("hohmann-2", h2[0] + h2[1], h2[2]),
        ("closing-burn", closing_dv, closing_periods * period_from_sma(r_t)),
        ("safety-ellipse", se_dv, se_time),
    )
    return TransferPlan(legs)
