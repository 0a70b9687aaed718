"""Physical parameters, derived protocol quantities and regime checks.

Units: angular frequencies in rad/ns, times in ns, rates in 1/ns. Inputs
quoted as frequency/2pi in GHz go through :func:`ghz`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
_CONSISTENCY_RTOL = 1e-12


def ghz(value: float) -> float:
    """Convert frequency/2pi in GHz to angular frequency in rad/ns."""
    return TWO_PI * value


def to_ghz(omega: float) -> float:
    return omega / TWO_PI


def to_mhz(omega: float) -> float:
    return 1e3 * omega / TWO_PI


@dataclass(frozen=True)
class DissipationRates:
    """Decay and dephasing rates in 1/ns.

    Per-qutrit tuples are ordered (qutrit 1, qutrit 2, coupler A).
    """

    kappa: tuple[float, float] = (0.0, 0.0)
    gamma: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gamma21: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gamma20: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gamma_phi1: tuple[float, float, float] = (0.0, 0.0, 0.0)
    gamma_phi2: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for f in fields(self):
            values = tuple(float(v) for v in getattr(self, f.name))
            expected = 2 if f.name == "kappa" else 3
            if len(values) != expected:
                raise ValueError(f"{f.name} needs {expected} entries, got {len(values)}")
            if any(v < 0 or not math.isfinite(v) for v in values):
                raise ValueError(f"{f.name} rates must be finite and >= 0: {values}")
            object.__setattr__(self, f.name, values)

    @classmethod
    def from_lifetimes_us(cls, *, t1_us: float, t21_us: float, t20_us: float,
                          tphi1_us: float, tphi2_us: float,
                          kappa1_inv_us: float, kappa2_inv_us: float) -> DissipationRates:
        """Identical qutrits; each argument is an inverse rate in microseconds.

        ``math.inf`` switches the corresponding channel off.
        """
        def rate(lifetime_us):
            if lifetime_us <= 0:
                raise ValueError(f"lifetimes must be positive, got {lifetime_us}")
            return 0.0 if math.isinf(lifetime_us) else 1.0 / (1e3 * lifetime_us)

        return cls(
            kappa=(rate(kappa1_inv_us), rate(kappa2_inv_us)),
            gamma=(rate(t1_us),) * 3,
            gamma21=(rate(t21_us),) * 3,
            gamma20=(rate(t20_us),) * 3,
            gamma_phi1=(rate(tphi1_us),) * 3,
            gamma_phi2=(rate(tphi2_us),) * 3,
        )

    @classmethod
    def phase_qutrit_defaults(cls) -> DissipationRates:
        """T1 = 10 us, |2> decay 7.5 us (to |1>) and 30 us (to |0>), dephasing
        2.5 us on both excited levels, cavity lifetimes 5 us."""
        return cls.from_lifetimes_us(t1_us=10.0, t21_us=7.5, t20_us=30.0,
                                     tphi1_us=2.5, tphi2_us=2.5,
                                     kappa1_inv_us=5.0, kappa2_inv_us=5.0)

    @property
    def lossless(self) -> bool:
        return all(v == 0.0 for f in fields(self) for v in getattr(self, f.name))


@dataclass(frozen=True)
class SystemParams:
    """Every constant of the two-cavity, three-qutrit device.

    Detunings are signed: ``delta1 = omega10_1 - omegac1`` etc. The
    construction rejects records whose detunings, transition and cavity
    frequencies disagree, so a valid instance is always self-consistent.
    """

    g1: float
    g2: float
    gA1: float
    gA2: float
    delta1: float
    delta2: float
    deltaA1: float
    deltaA2: float
    omega10_1: float
    omega10_2: float
    omega10_A: float
    omega21_1: float
    omega21_2: float
    omega21_A: float
    omegac1: float
    omegac2: float
    gt1: float
    gt2: float
    gtA1: float
    gtA2: float
    deltat1: float
    deltat2: float
    deltatA1: float
    deltatA2: float
    g12: float
    Delta: float
    rates: DissipationRates = field(default_factory=DissipationRates)

    def __post_init__(self):
        scale = max(abs(self.omega10_1), abs(self.omega10_2), abs(self.omega10_A),
                    abs(self.omegac1), abs(self.omegac2), 1.0)
        tol = _CONSISTENCY_RTOL * scale

        def check(name, value, expected):
            if abs(value - expected) > tol:
                raise ValueError(f"{name} = {value!r} inconsistent with frequencies "
                                 f"(expected {expected!r})")

        check("delta1", self.delta1, self.omega10_1 - self.omegac1)
        check("delta2", self.delta2, self.omega10_2 - self.omegac2)
        check("deltaA1", self.deltaA1, self.omega10_A - self.omegac1)
        check("deltaA2", self.deltaA2, self.omega10_A - self.omegac2)
        check("deltat1", self.deltat1, self.omega21_1 - self.omegac1)
        check("deltat2", self.deltat2, self.omega21_2 - self.omegac2)
        check("deltatA1", self.deltatA1, self.omega21_A - self.omegac1)
        check("deltatA2", self.deltatA2, self.omega21_A - self.omegac2)
        check("Delta", self.Delta, self.omegac2 - self.omegac1)
        check("Delta", self.Delta, self.deltaA1 - self.deltaA2)
        if not isinstance(self.rates, DissipationRates):
            raise TypeError("rates must be a DissipationRates record")

    @property
    def b(self) -> float:
        """Normalised detuning |delta1| / g1."""
        return abs(self.delta1) / self.g1 if self.g1 else math.inf

    @property
    def g_max(self) -> float:
        return max(abs(self.gA1), abs(self.gA2))

    @property
    def g12_fraction(self) -> float:
        return self.g12 / self.g_max if self.g_max else 0.0

    def with_rates(self, rates: DissipationRates) -> SystemParams:
        return replace(self, rates=rates)

    def with_g12(self, g12: float) -> SystemParams:
        return replace(self, g12=g12)

    def detuning_mismatch(self) -> float:
        """max |delta_j - delta_Aj| relative to |delta_j|."""
        return max(abs(self.delta1 - self.deltaA1) / abs(self.delta1),
                   abs(self.delta2 - self.deltaA2) / abs(self.delta2))


def derive_params(b: float, delta1_GHz: float, delta2_GHz: float, omega10_GHz: float,
                  anharmonicity_fraction: float = 0.05, g12_fraction: float = 0.0,
                  rates: DissipationRates | None = None) -> SystemParams:
    """Build a parameter set satisfying the matching conditions.

    Sets delta_Aj = delta_j, picks g1 = |delta1|/b, and fixes the remaining
    couplings by g1^2/delta1 = g2^2/delta2 and g_Aj = g_j/sqrt(2). All three
    qutrits share ``omega10_GHz``; their |1>-|2> transitions sit at
    ``(1 - anharmonicity_fraction) * omega10`` with couplings sqrt(2) larger
    than the |0>-|1> ones. ``g12 = g12_fraction * max(gA1, gA2)``.
    """
    if not b > 0:
        raise ValueError(f"b must be positive, got {b}")
    if delta1_GHz == 0 or delta2_GHz == 0:
        raise ValueError("detunings must be nonzero")
    if (delta1_GHz > 0) != (delta2_GHz > 0):
        raise ValueError("delta1 and delta2 must share a sign (g2 = g1*sqrt(delta2/delta1))")
    if g12_fraction < 0:
        raise ValueError(f"g12_fraction must be >= 0, got {g12_fraction}")
    if not 0 <= anharmonicity_fraction < 1:
        raise ValueError(f"anharmonicity_fraction must be in [0, 1), got {anharmonicity_fraction}")

    delta1, delta2, omega10 = ghz(delta1_GHz), ghz(delta2_GHz), ghz(omega10_GHz)
    g1 = abs(delta1) / b
    # positive root: the sign of g2 only flips the phase convention of qutrit 2
    g2 = g1 * math.sqrt(delta2 / delta1)
    gA1, gA2 = g1 / math.sqrt(2.0), g2 / math.sqrt(2.0)
    for name, d, g in (("delta1", delta1, g1), ("delta2", delta2, g2)):
        if abs(d) < 3.0 * g:
            raise ValueError(f"|{name}| < 3 g: b = {b} is outside the dispersive regime")

    omega21 = (1.0 - anharmonicity_fraction) * omega10
    omegac1, omegac2 = omega10 - delta1, omega10 - delta2
    return SystemParams(
        g1=g1, g2=g2, gA1=gA1, gA2=gA2,
        delta1=delta1, delta2=delta2, deltaA1=delta1, deltaA2=delta2,
        omega10_1=omega10, omega10_2=omega10, omega10_A=omega10,
        omega21_1=omega21, omega21_2=omega21, omega21_A=omega21,
        omegac1=omegac1, omegac2=omegac2,
        gt1=math.sqrt(2.0) * g1, gt2=math.sqrt(2.0) * g2,
        gtA1=math.sqrt(2.0) * gA1, gtA2=math.sqrt(2.0) * gA2,
        deltat1=omega21 - omegac1, deltat2=omega21 - omegac2,
        deltatA1=omega21 - omegac1, deltatA2=omega21 - omegac2,
        g12=g12_fraction * max(gA1, gA2),
        Delta=omegac2 - omegac1,
        rates=rates if rates is not None else DissipationRates(),
    )


@dataclass(frozen=True)
class ProtocolSchedule:
    lambda1: float
    lambda2: float
    Lambda: float
    Nfactor: float
    phi1: float
    phi2: float
    phiA: float
    t1: float
    t2: float


def schedule(params: SystemParams) -> ProtocolSchedule:
    """Effective swap couplings, dispersive shifts and the two operation times."""
    p = params
    lambda1 = 0.5 * p.g1 * p.gA1 * (1.0 / p.delta1 + 1.0 / p.deltaA1)
    lambda2 = 0.5 * p.g2 * p.gA2 * (1.0 / p.delta2 + 1.0 / p.deltaA2)
    Lambda = math.hypot(lambda1, lambda2)
    if Lambda == 0.0:
        raise ValueError("both effective couplings vanish; no swap dynamics")
    return ProtocolSchedule(
        lambda1=lambda1,
        lambda2=lambda2,
        Lambda=Lambda,
        Nfactor=lambda2 ** 2 / Lambda ** 2,
        phi1=p.g1 ** 2 / p.delta1,
        phi2=p.g2 ** 2 / p.delta2,
        phiA=p.gA1 ** 2 / p.deltaA1 + p.gA2 ** 2 / p.deltaA2,
        t1=math.pi / (2.0 * Lambda),
        t2=math.pi / Lambda,
    )


@dataclass(frozen=True)
class RegimeCheck:
    name: str
    value: float
    threshold: float
    passed: bool
    description: str


@dataclass(frozen=True)
class RegimeReport:
    checks: tuple[RegimeCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> RegimeCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def format(self) -> str:
        lines = []
        for c in self.checks:
            op = "<=" if c.name == "shift_match_residual" else ">="
            flag = "PASS" if c.passed else "FAIL"
            lines.append(f"{flag}  {c.name:<20} {c.value:>12.6g}  ({op} {c.threshold:g})  "
                         f"{c.description}")
        return "\n".join(lines)


def _ratio(num: float, den: float) -> float:
    return math.inf if den == 0 else abs(num) / abs(den)


def validate_regime(params: SystemParams, threshold: float = 5.0) -> RegimeReport:
    """Dispersive ratios, coupler-cavity separation and the shift matching residual.

    Failing checks are logged as warnings; nothing is raised, so deliberately
    exploring the breakdown of the dispersive picture stays possible.
    """
    if not threshold > 1:
        raise ValueError(f"threshold must exceed 1, got {threshold}")
    p = params
    checks = []

    def add(name, value, description):
        checks.append(RegimeCheck(name, value, threshold, value >= threshold, description))

    add("delta1/g1", _ratio(p.delta1, p.g1), "qutrit 1 dispersive")
    add("delta2/g2", _ratio(p.delta2, p.g2), "qutrit 2 dispersive")
    add("deltaA1/gA1", _ratio(p.deltaA1, p.gA1), "coupler-cavity 1 dispersive")
    add("deltaA2/gA2", _ratio(p.deltaA2, p.gA2), "coupler-cavity 2 dispersive")
    coupler_exchange = 0.5 * p.gA1 * p.gA2 * (1.0 / p.deltaA1 + 1.0 / p.deltaA2)
    add("cavity_split", _ratio(p.deltaA2 - p.deltaA1, coupler_exchange),
        "cavity-cavity exchange via coupler suppressed")

    shift1 = p.g1 ** 2 / p.delta1
    shiftA = p.gA1 ** 2 / p.deltaA1 + p.gA2 ** 2 / p.deltaA2
    residual = _ratio(shift1 - shiftA, shift1) if shift1 else math.inf
    checks.append(RegimeCheck("shift_match_residual", residual, 1e-10, residual <= 1e-10,
                              "qutrit and coupler Stark shifts matched"))

    report = RegimeReport(tuple(checks))
    for c in report.checks:
        if not c.passed:
            logger.warning("regime check %s failed: %.6g (threshold %g)",
                           c.name, c.value, c.threshold)
    return report


def cavity_mode_lifetime(Q: float, nu_c: float, nbar: float = 1.0) -> float:
    """Lifetime (s) of one cavity mode: (Q / 2 pi nu) / nbar."""
    for name, v in (("Q", Q), ("nu_c", nu_c), ("nbar", nbar)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return (Q / (TWO_PI * nu_c)) / nbar


def cavity_lifetime(Q1: float, Q2: float, nuc1: float, nuc2: float,
                    nbar1: float = 1.0, nbar2: float = 1.0) -> float:
    """Combined lifetime (s) of the two modes: half the shorter one."""
    return 0.5 * min(cavity_mode_lifetime(Q1, nuc1, nbar1),
                     cavity_mode_lifetime(Q2, nuc2, nbar2))


def quality_factor(kappa: float, omega_c: float) -> float:
    """Loaded Q from angular frequency and photon decay rate (same time unit)."""
    if not kappa > 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    return omega_c / kappa


def estimate_crosstalk(C1: float, C2: float, Cq: float,
                       gA1: float, gA2: float) -> tuple[float, float]:
    """Capacitive cavity-cavity coupling estimates (gA1 C2/C_sum, gA2 C1/C_sum)."""
    for name, c in (("C1", C1), ("C2", C2), ("Cq", Cq)):
        if not c > 0:
            raise ValueError(f"capacitance {name} must be positive, got {c}")
    c_sum = C1 + C2 + Cq
    return gA1 * C2 / c_sum, gA2 * C1 / c_sum
