"""N-body kinematics for charged particles in a uniform electric field.

Masses, charges and the field strength define every derived quantity used
downstream: pair reduced masses and relative charges, the chained (Jacobi)
reduced masses, and the admissibility of a high-velocity configuration in
which one distinguished pair moves with relative speed v while all other
particles separate at speeds of order v**2.

The field points along -e1 and only enters pair dynamics through the
relative charge q_jk = (q_k m_j - q_j m_k)/(m_j + m_k): pairs with q_jk = 0
behave as if there were no field.  Classification is therefore an exact
zero test; all quantities are computed in rational arithmetic whenever the
inputs are ints or Fractions, and in floating point (with a documented
1e-12 zero tolerance) otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

__all__ = [
    "KinematicsError",
    "ParticleSystem",
    "PairFrame",
    "JacobiChain",
    "VelocityConfig",
    "reduced_mass",
    "relative_charge",
    "jacobi_chain",
    "classify_pairs",
    "pair_frames",
    "build_velocity_config",
    "kinematics_report_rows",
]

#: absolute tolerance of the floating-point zero test for relative charges
Q_ZERO_TOL = 1e-12


class KinematicsError(ValueError):
    """Violated kinematic constraint (masses, field, velocity thresholds)."""


def _is_rational(*values) -> bool:
    return all(isinstance(v, (int, Rational)) and not isinstance(v, bool) for v in values)


def _exactify(x):
    """Promote ints to Fraction so mixed arithmetic stays exact."""
    return Fraction(x) if _is_rational(x) else x


def reduced_mass(m_j, m_k):
    """Reduced mass m_j m_k / (m_j + m_k) of a pair.

    Exact (Fraction) when both masses are rational.
    """
    if m_j <= 0 or m_k <= 0:
        raise KinematicsError(f"masses must be positive, got ({m_j}, {m_k})")
    if _is_rational(m_j, m_k):
        m_j, m_k = Fraction(m_j), Fraction(m_k)
    return m_j * m_k / (m_j + m_k)


def relative_charge(m_j, q_j, m_k, q_k):
    """Relative charge (q_k m_j - q_j m_k)/(m_j + m_k) of a pair.

    Vanishes exactly when the charge-to-mass ratios coincide; antisymmetric
    under exchange of the two particles.
    """
    if m_j <= 0 or m_k <= 0:
        raise KinematicsError(f"masses must be positive, got ({m_j}, {m_k})")
    if _is_rational(m_j, q_j, m_k, q_k):
        m_j, q_j, m_k, q_k = map(Fraction, (m_j, q_j, m_k, q_k))
    return (q_k * m_j - q_j * m_k) / (m_j + m_k)


def _charge_is_zero(q) -> bool:
    if isinstance(q, Rational):
        return q == 0
    return abs(q) <= Q_ZERO_TOL


@dataclass(frozen=True)
class ParticleSystem:
    """Masses, charges and field strength of an N-body system.

    The field direction is fixed to -e1; only its magnitude ``field`` enters.
    ``n`` is the spatial dimension (simulated dynamics use n = 2, kinematics
    is dimension-agnostic except for vector-valued velocity data).
    """

    masses: tuple
    charges: tuple
    field: float
    n: int = 2

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(self.masses))
        object.__setattr__(self, "charges", tuple(self.charges))
        if len(self.masses) < 2:
            raise KinematicsError("need at least two particles")
        if len(self.charges) != len(self.masses):
            raise KinematicsError("masses and charges must have equal length")
        if any(m <= 0 for m in self.masses):
            raise KinematicsError("all masses must be positive")
        if not self.field > 0:
            raise KinematicsError("field strength must be positive")
        if self.n < 2:
            raise KinematicsError("spatial dimension must be >= 2")

    @property
    def N(self) -> int:
        return len(self.masses)

    def pairs(self):
        """All index pairs (j, k), 1-based, j < k."""
        N = self.N
        return [(j, k) for j in range(1, N + 1) for k in range(j + 1, N + 1)]

    def reduced_mass(self, j: int, k: int):
        return reduced_mass(self.masses[j - 1], self.masses[k - 1])

    def relative_charge(self, j: int, k: int):
        return relative_charge(
            self.masses[j - 1], self.charges[j - 1],
            self.masses[k - 1], self.charges[k - 1],
        )


@dataclass(frozen=True)
class PairFrame:
    """Derived quantities of one pair: reduced mass, relative charge, and the
    momentum-support radius factor eta_jk of its packet class."""

    pair: tuple
    mu: object
    q_rel: object
    eta: object
    charged: bool


def pair_frames(system: ParticleSystem, eta) -> list[PairFrame]:
    """PairFrame for every pair.

    eta_12 = eta, eta_1j = 2(1 + eta mu12/m1), eta_2j = 2(1 + eta mu12/m2)
    for j >= 3, and eta_jk = 4 for j, k >= 3.
    """
    eta = _exactify(eta)
    m = [_exactify(x) for x in system.masses]
    mu12 = reduced_mass(system.masses[0], system.masses[1])
    frames = []
    for (j, k) in system.pairs():
        if (j, k) == (1, 2):
            eta_jk = eta
        elif j == 1:
            eta_jk = 2 * (1 + eta * mu12 / m[0])
        elif j == 2:
            eta_jk = 2 * (1 + eta * mu12 / m[1])
        else:
            eta_jk = _exactify(4) if _is_rational(eta) else 4.0
        q = system.relative_charge(j, k)
        frames.append(PairFrame(
            pair=(j, k),
            mu=system.reduced_mass(j, k),
            q_rel=q,
            eta=eta_jk,
            charged=not _charge_is_zero(q),
        ))
    return frames


@dataclass(frozen=True)
class JacobiChain:
    """Chained reduced masses and relative charges of the Jacobi coordinates
    based on the pair (1,2): entry j couples particle j+1 to the first j."""

    nu: tuple
    q_rel: tuple
    partial_masses: tuple
    partial_charges: tuple


def jacobi_chain(system: ParticleSystem) -> JacobiChain:
    """nu_j^{-1} = m_{j+1}^{-1} + (sum_{k<=j} m_k)^{-1} and
    q_j^R = (q_{j+1} M_j - m_{j+1} Q_j)/(m_{j+1} + M_j), j = 1..N-1."""
    exact = _is_rational(*system.masses, *system.charges)
    m = [Fraction(x) if exact else float(x) for x in system.masses]
    q = [Fraction(x) if exact else float(x) for x in system.charges]
    nu, q_rel, Ms, Qs = [], [], [], []
    M = m[0]
    Q = q[0]
    for j in range(1, system.N):
        Ms.append(M)
        Qs.append(Q)
        nu.append(1 / (1 / m[j] + 1 / M))
        q_rel.append((q[j] * M - m[j] * Q) / (m[j] + M))
        M = M + m[j]
        Q = Q + q[j]
    return JacobiChain(tuple(nu), tuple(q_rel), tuple(Ms), tuple(Qs))


def classify_pairs(system: ParticleSystem) -> dict:
    """Partition pairs into the zero and nonzero relative-charge classes.

    The class decides which potential taxonomy applies to the pair
    (field-free very-short/long split versus the Stark very-short/short/long
    split).  Exact for rational inputs; otherwise |q_jk| <= 1e-12 counts as
    zero.
    """
    zero, nonzero = [], []
    for (j, k) in system.pairs():
        q = system.relative_charge(j, k)
        (zero if _charge_is_zero(q) else nonzero).append((j, k))
    return {"zero": zero, "nonzero": nonzero}


def _vec(x) -> tuple:
    t = tuple(_exactify(c) for c in x)
    if len(t) < 2:
        raise KinematicsError("vectors must have dimension >= 2")
    return t


def _norm2(x):
    return sum(c * c for c in x)


@dataclass(frozen=True)
class VelocityConfig:
    """A validated high-velocity configuration.

    The distinguished pair (1,2) has relative velocity v*vhat; particle
    j >= 3 moves with v_j = v^2 d_j; v_1 = -v mu12/m1 vhat and
    v_2 = v mu12/m2 vhat.  ``violations`` lists human-readable constraint
    failures; a config with violations is rejected by the builder unless
    collect_only is requested.
    """

    v: object
    vhat: tuple
    d: dict                      # particle index (>=3) -> vector
    delta: object                # bound on |vhat_jk . Ehat| for charged pairs
    velocities: dict             # particle index -> velocity vector
    rel_velocities: dict         # pair -> v_jk vector
    delta_jk: dict               # pair -> delta_jk per charged/uncharged
    violations: tuple = field(default_factory=tuple)

    def speed(self, j: int, k: int):
        return math.sqrt(float(_norm2(self.rel_velocities[(j, k)])))


def build_velocity_config(system: ParticleSystem, v, vhat, d=None, delta=0.0,
                          collect_only: bool = False) -> VelocityConfig:
    """Build and validate the high-velocity configuration.

    Parameters
    ----------
    v : positive relative speed of the pair (1,2)
    vhat : unit vector (checked to 1e-12 in float, exactly for rationals)
    d : mapping {j: vector} for j = 3..N, nonzero and pairwise distinct
    delta : required bound in [0,1) on |vhat_jk . Ehat| for charged pairs
    collect_only : return the config with its violation list instead of
        raising on the first failure

    Raises
    ------
    KinematicsError
        listing every violated threshold, unless collect_only.
    """
    d = dict(d or {})
    violations = []
    if not v > 0:
        violations.append(f"pair speed v must be positive, got {v}")
    vhat_t = _vec(vhat)
    n2 = _norm2(vhat_t)
    if isinstance(n2, Fraction):
        if n2 != 1:
            violations.append(f"|vhat| = sqrt({n2}) != 1")
    elif abs(float(n2) - 1.0) > 1e-12:
        violations.append(f"|vhat|^2 = {float(n2)} differs from 1 beyond 1e-12")
    if not (0 <= delta < 1):
        violations.append(f"delta must lie in [0,1), got {delta}")

    N = system.N
    for j in range(3, N + 1):
        if j not in d:
            violations.append(f"missing displacement d_{j}")
    d = {j: _vec(x) for j, x in d.items() if 3 <= j <= N}
    for j, x in d.items():
        if all(c == 0 for c in x):
            violations.append(f"d_{j} must be nonzero")
    keys = sorted(d)
    for a in range(len(keys)):
        for b in range(a + 1, len(keys)):
            if all(da == db for da, db in zip(d[keys[a]], d[keys[b]])):
                violations.append(
                    f"d_{keys[a]} - d_{keys[b]} != 0 violated (equal displacements)")

    v = _exactify(v)
    mu12 = reduced_mass(system.masses[0], system.masses[1])
    m1, m2 = _exactify(system.masses[0]), _exactify(system.masses[1])
    dim = len(vhat_t)

    velocities = {
        1: tuple(-v * mu12 / m1 * c for c in vhat_t),
        2: tuple(v * mu12 / m2 * c for c in vhat_t),
    }
    for j, x in d.items():
        if len(x) != dim:
            violations.append(f"d_{j} has dimension {len(x)} != {dim}")
            x = tuple(list(x) + [0] * (dim - len(x)))[:dim]
        velocities[j] = tuple(v * v * c for c in x)

    # speed thresholds of Eq.-(1.14) type: v_{1j}, v_{2j} nonzero
    for j in sorted(d):
        dj = math.sqrt(float(_norm2(d[j])))
        if dj > 0:
            for (idx, m) in ((1, m1), (2, m2)):
                thr = float(mu12 / (m * _exactify(dj))) if _is_rational(mu12, m) else float(mu12) / (float(m) * dj)
                if not float(v) > thr:
                    violations.append(
                        f"pair ({idx},{j}): requires v > mu12/(m{idx} d_{j}) = {thr}, got v = {float(v)}")

    rel = {}
    delta_jk = {}
    frames = {f.pair: f for f in pair_frames(system, 1)}
    for (j, k) in system.pairs():
        if j in velocities and k in velocities:
            rel[(j, k)] = tuple(b - a for a, b in zip(velocities[j], velocities[k]))
    for (j, k), vjk in rel.items():
        charged = frames[(j, k)].charged
        delta_jk[(j, k)] = delta if charged else 0
        s2 = float(_norm2(vjk))
        if s2 == 0.0:
            violations.append(f"relative velocity v_{j}{k} vanishes")
            continue
        if charged:
            # field unit vector is -e1, so |vhat_jk . Ehat| = |first component|/|v_jk|
            cosang = abs(float(vjk[0])) / math.sqrt(s2)
            if cosang > float(delta) + 1e-15:
                violations.append(
                    f"charged pair ({j},{k}): |vhat_jk . Ehat| = {cosang:.6g} exceeds delta = {delta}")

    cfg = VelocityConfig(v=v, vhat=vhat_t, d=d, delta=delta, velocities=velocities,
                         rel_velocities=rel, delta_jk=delta_jk, violations=tuple(violations))
    if violations and not collect_only:
        raise KinematicsError("; ".join(violations))
    return cfg


def kinematics_report_rows(system: ParticleSystem, eta) -> list[dict]:
    """Rows of the kinematics report CSV: one per pair."""
    rows = []
    for f in pair_frames(system, eta):
        rows.append({
            "j": f.pair[0],
            "k": f.pair[1],
            "mu_jk": float(f.mu),
            "q_jk": float(f.q_rel),
            "eta_jk": float(f.eta),
            "class": "nonzero" if f.charged else "zero",
        })
    return rows
