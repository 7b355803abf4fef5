"""Pair potentials: analytic families, range classification, decay checks.

Every term is a radial profile about a center, smooth to the order the
long-range bounds require, with closed-form gradient and Hessian.  Terms
carry a range class tag:

- ``vs0`` / ``vsE``: very short range (field-free / in-field pair),
- ``sE``: short range under the field, value decay (1+r)^-gamma with
  1/2 < alpha <= gamma <= 1 for the gradient exponent 1+alpha,
- ``l0``: field-free long range, gradient decay (1+r)^-gamma1, 3/2 < gamma1 <= 2,
- ``lE``: in-field long range, |D^beta V| <= C (1+r)^-(gamma_D + mu |beta|).

The in-field long-range class with mu < 1 cannot be realized by a plain
power (whose gradient always loses a full power); ``power_tail`` therefore
supports a slow oscillatory modulation cos(omega (1+r^2)^((1-mu)/2)) whose
gradient decays exactly one mu-power faster than the value.

Decay validation samples geometric shells, direction-averaged, and reports
the smallest admissible constant per bound instead of asserting one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "PotentialError",
    "DecayParams",
    "PotentialTerm",
    "PairPotential",
    "gaussian_term",
    "bump_term",
    "power_tail_term",
    "mollified_coulomb_term",
    "split_terms",
    "validate_decay",
    "weighted_vs_norm",
]

CLASS_TAGS = ("vs0", "l0", "vsE", "sE", "lE")
VS_TAGS = ("vs0", "vsE")
LONG_TAGS = ("l0", "lE")
FAMILIES = ("gaussian", "bump", "power_tail", "mollified_coulomb")


class PotentialError(ValueError):
    """Inadmissible potential parameters or class assignment."""


@dataclass(frozen=True)
class DecayParams:
    """Decay exponents of the range classes.

    gamma1: long-range gradient exponent for zero-charge pairs, 3/2 < gamma1 <= 2
    eps0:   auxiliary exponent, 0 < eps0 < gamma1 - 3/2
    gamma:  short-range value exponent, alpha <= gamma <= 1
    alpha:  short-range gradient exponent, 1/2 < alpha <= gamma
    gamma_d: in-field long-range value exponent, 0 < gamma_d <= 1/2
    mu:     in-field long-range derivative increment, 1 - gamma_d < mu <= 1
    rho:    weighted very-short-range exponent, 0 <= rho <= 1
    """

    gamma1: float = 2.0
    eps0: float = 0.25
    gamma: float = 1.0
    alpha: float = 1.0
    gamma_d: float = 0.5
    mu: float = 1.0
    rho: float = 1.0

    def validate(self) -> None:
        if not (1.5 < self.gamma1 <= 2.0):
            raise PotentialError(f"need 3/2 < gamma1 <= 2, got {self.gamma1}")
        if not (0 < self.eps0 < self.gamma1 - 1.5):
            raise PotentialError(f"need 0 < eps0 < gamma1 - 3/2, got {self.eps0}")
        if not (0.5 < self.alpha <= self.gamma <= 1.0):
            raise PotentialError(
                f"need 1/2 < alpha <= gamma <= 1, got alpha={self.alpha}, gamma={self.gamma}")
        if not (0 < self.gamma_d <= 0.5):
            raise PotentialError(f"need 0 < gamma_d <= 1/2, got {self.gamma_d}")
        if not (1 - self.gamma_d < self.mu <= 1.0):
            raise PotentialError(f"need 1 - gamma_d < mu <= 1, got {self.mu}")
        if not (0 <= self.rho <= 1):
            raise PotentialError(f"need 0 <= rho <= 1, got {self.rho}")


@dataclass(frozen=True)
class PotentialTerm:
    """One radial potential term.

    The profile is a scalar function f of u = |x - center|^2, with
    derivatives f', f'' supplied analytically, so that

        V = f(u),  grad_i V = 2 x_i f'(u),
        hess_ij V = 2 delta_ij f'(u) + 4 x_i x_j f''(u).
    """

    name: str
    family: str
    class_tag: str
    amplitude: float
    params: dict
    center: tuple = (0.0, 0.0)
    monotone: bool = True     # |f| nonincreasing in u (enables sup_{|x|>=R}|V| = |f(R^2)|)

    def __post_init__(self):
        if self.class_tag not in CLASS_TAGS:
            raise PotentialError(f"unknown class tag {self.class_tag!r}")
        if self.family not in FAMILIES:
            raise PotentialError(f"unknown family {self.family!r}")

    # profile ------------------------------------------------------------

    def _fuv(self, u, order: int):
        """Profile and derivatives w.r.t. u = r^2, vectorized."""
        A = self.amplitude
        p = self.params
        u = np.asarray(u, dtype=float)
        if self.family == "gaussian":
            w2 = p["width"] ** 2
            f = A * np.exp(-u / (2 * w2))
            if order == 0:
                return (f,)
            f1 = -f / (2 * w2)
            if order == 1:
                return f, f1
            return f, f1, f / (4 * w2 * w2)
        if self.family == "mollified_coulomb":
            a2 = p["moll"] ** 2
            s = u + a2
            f = A / np.sqrt(s)
            if order == 0:
                return (f,)
            f1 = -0.5 * A * s ** -1.5
            if order == 1:
                return f, f1
            return f, f1, 0.75 * A * s ** -2.5
        if self.family == "bump":
            R2 = p["radius"] ** 2
            t = np.clip(u / R2, 0.0, 1.0 - 1e-12)
            inside = u < R2
            with np.errstate(over="ignore", under="ignore"):
                f = np.where(inside, A * np.exp(1.0 - 1.0 / (1.0 - t)), 0.0)
            if order == 0:
                return (f,)
            h = -1.0 / (R2 * (1.0 - t) ** 2)
            f1 = np.where(inside, f * h, 0.0)
            if order == 1:
                return f, f1
            hp = -2.0 / (R2 * R2 * (1.0 - t) ** 3)
            f2 = np.where(inside, f1 * h + f * hp, 0.0)
            return f, f1, f2
        # power_tail, optionally modulated
        beta = p["exponent"]
        opu = 1.0 + u
        base = opu ** (-beta / 2.0)
        b1 = -(beta / 2.0) * opu ** (-beta / 2.0 - 1.0)
        b2 = (beta / 2.0) * (beta / 2.0 + 1.0) * opu ** (-beta / 2.0 - 2.0)
        mu_osc = p.get("osc_mu")
        if mu_osc is None or p.get("osc_amp", 0.0) == 0.0 or mu_osc >= 1.0:
            f = A * base
            if order == 0:
                return (f,)
            if order == 1:
                return f, A * b1
            return f, A * b1, A * b2
        b = p["osc_amp"]
        om = p["osc_freq"]
        kap = (1.0 - mu_osc) / 2.0
        s = opu ** kap
        s1 = kap * opu ** (kap - 1.0)
        s2 = kap * (kap - 1.0) * opu ** (kap - 2.0)
        c, sn = np.cos(om * s), np.sin(om * s)
        M = 1.0 + b * c
        M1 = -b * om * sn * s1
        M2 = -b * om * om * c * s1 * s1 - b * om * sn * s2
        f = A * base * M
        if order == 0:
            return (f,)
        f1 = A * (b1 * M + base * M1)
        if order == 1:
            return f, f1
        f2 = A * (b2 * M + 2 * b1 * M1 + base * M2)
        return f, f1, f2

    # grid / point evaluation ---------------------------------------------

    def _centered(self, X, Y):
        return np.asarray(X, dtype=float) - self.center[0], np.asarray(Y, dtype=float) - self.center[1]

    def value(self, X, Y):
        dx, dy = self._centered(X, Y)
        return self._fuv(dx * dx + dy * dy, 0)[0]

    def gradient(self, X, Y):
        dx, dy = self._centered(X, Y)
        _, f1 = self._fuv(dx * dx + dy * dy, 1)
        return 2 * dx * f1, 2 * dy * f1

    def hessian(self, X, Y):
        """(Vxx, Vxy, Vyy)."""
        dx, dy = self._centered(X, Y)
        _, f1, f2 = self._fuv(dx * dx + dy * dy, 2)
        return (2 * f1 + 4 * dx * dx * f2, 4 * dx * dy * f2, 2 * f1 + 4 * dy * dy * f2)

    def profile(self, u, order: int = 0):
        """Radial profile (and derivatives) as functions of u = r^2."""
        return self._fuv(u, order)

    def reach(self, tol: float = 1e-14) -> float:
        """Radius beyond which |V| < tol * amplitude, +inf for power tails."""
        A = abs(self.amplitude)
        if A == 0:
            return 0.0
        p = self.params
        if self.family == "gaussian":
            return p["width"] * math.sqrt(max(2.0 * math.log(1.0 / tol), 1.0))
        if self.family == "bump":
            return p["radius"]
        return math.inf

    def scale_radius(self, frac: float = 1e-3, r_cap: float = 1e4) -> float:
        """Finite radius where the profile envelope drops to frac of its peak."""
        r = self.reach(frac)
        if math.isfinite(r):
            return min(r, r_cap)
        peak = abs(self.profile(np.array(0.0), 0)[0]) + 1e-300
        r = 1.0
        while r < r_cap:
            if abs(self.profile(np.array(r * r), 0)[0]) < frac * peak:
                return r
            r *= 2.0
        return r_cap

    def shifted(self, offset) -> "PotentialTerm":
        return replace(self, center=(self.center[0] + offset[0], self.center[1] + offset[1]))


def gaussian_term(class_tag, amplitude, width, center=(0.0, 0.0), name="gaussian"):
    return PotentialTerm(name=name, family="gaussian", class_tag=class_tag,
                         amplitude=amplitude, params={"width": float(width)},
                         center=tuple(center))


def bump_term(class_tag, amplitude, radius, center=(0.0, 0.0), name="bump"):
    return PotentialTerm(name=name, family="bump", class_tag=class_tag,
                         amplitude=amplitude, params={"radius": float(radius)},
                         center=tuple(center))


def power_tail_term(class_tag, amplitude, exponent, center=(0.0, 0.0),
                    osc_mu=None, osc_amp=0.5, osc_freq=120.0, name="power_tail"):
    """(1+r^2)^(-exponent/2), optionally modulated for the lE class.

    With osc_mu = mu < 1 the gradient decays like r^-(exponent+mu) instead
    of r^-(exponent+1).
    """
    params = {"exponent": float(exponent)}
    monotone = True
    if osc_mu is not None and osc_mu < 1.0 and osc_amp != 0.0:
        params.update(osc_mu=float(osc_mu), osc_amp=float(osc_amp),
                      osc_freq=float(osc_freq))
        monotone = False
    return PotentialTerm(name=name, family="power_tail", class_tag=class_tag,
                         amplitude=amplitude, params=params, center=tuple(center),
                         monotone=monotone)


def mollified_coulomb_term(class_tag, amplitude, moll, center=(0.0, 0.0),
                           name="mollified_coulomb"):
    """A / sqrt(r^2 + moll^2): the Coulomb shape with the singularity smoothed."""
    return PotentialTerm(name=name, family="mollified_coulomb", class_tag=class_tag,
                         amplitude=amplitude, params={"moll": float(moll)},
                         center=tuple(center))


@dataclass(frozen=True)
class PairPotential:
    """Sum of classified terms for one pair, with charge-consistency checks."""

    pair: tuple
    charged: bool
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        for t in self.terms:
            if self.charged and t.class_tag in ("vs0", "l0"):
                raise PotentialError(
                    f"term {t.name!r}: class {t.class_tag} applies only to zero-relative-charge pairs")
            if not self.charged and t.class_tag in ("vsE", "sE", "lE"):
                raise PotentialError(
                    f"term {t.name!r}: class {t.class_tag} applies only to charged pairs")

    def split(self):
        return split_terms(self.terms)

    def bucket(self, which: str) -> tuple:
        return self.split()[which]

    def value(self, X, Y, which: str = "total"):
        terms = self.terms if which == "total" else self.split()[which]
        out = np.zeros(np.broadcast(np.asarray(X), np.asarray(Y)).shape)
        for t in terms:
            out = out + t.value(X, Y)
        return out

    def gradient(self, X, Y, which: str = "total"):
        terms = self.terms if which == "total" else self.split()[which]
        shape = np.broadcast(np.asarray(X), np.asarray(Y)).shape
        gx = np.zeros(shape)
        gy = np.zeros(shape)
        for t in terms:
            tx, ty = t.gradient(X, Y)
            gx, gy = gx + tx, gy + ty
        return gx, gy

    def reach(self, tol: float = 1e-14) -> float:
        center_r = max((math.hypot(*t.center) for t in self.terms), default=0.0)
        return center_r + max((t.reach(tol) for t in self.terms), default=0.0)


def split_terms(terms: Iterable[PotentialTerm]) -> dict:
    """Very-short / short / long buckets; every term lands in exactly one."""
    out = {"vs": [], "s": [], "l": []}
    for t in terms:
        if t.class_tag in VS_TAGS:
            out["vs"].append(t)
        elif t.class_tag == "sE":
            out["s"].append(t)
        else:
            out["l"].append(t)
    return {k: tuple(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# decay validation
# ---------------------------------------------------------------------------

_BOUNDS = {
    # class tag -> list of (derivative order, exponent getter, label)
    "sE": [(0, lambda p: p.gamma, "|V| <= C (1+R)^-gamma"),
           (1, lambda p: 1 + p.alpha, "|DV| <= C (1+R)^-(1+alpha)")],
    "lE": [(0, lambda p: p.gamma_d, "|V| <= C (1+R)^-gamma_d"),
           (1, lambda p: p.gamma_d + p.mu, "|DV| <= C (1+R)^-(gamma_d+mu)"),
           (2, lambda p: p.gamma_d + 2 * p.mu, "|D2V| <= C (1+R)^-(gamma_d+2mu)")],
    "l0": [(1, lambda p: p.gamma1, "|DV| <= C (1+R)^-gamma1")],
}


def _shell_max(term: PotentialTerm, order: int, R: float,
               n_dirs: int = 16, n_radii: int = 48) -> float:
    """max |D^order V| over the annulus [R, 2R), sampled in direction and radius.

    The radial window makes the statistic an envelope, robust for
    oscillatory tails.
    """
    theta = (np.arange(n_dirs) + 0.5) * (2 * np.pi / n_dirs)
    r = R * np.exp(np.linspace(0.0, math.log(2.0), n_radii, endpoint=False))
    X = np.outer(r, np.cos(theta)) + term.center[0]
    Y = np.outer(r, np.sin(theta)) + term.center[1]
    if order == 0:
        return float(np.max(np.abs(term.value(X, Y))))
    if order == 1:
        gx, gy = term.gradient(X, Y)
        return float(np.max(np.hypot(gx, gy)))
    hxx, hxy, hyy = term.hessian(X, Y)
    return float(np.max(np.maximum(np.abs(hxx), np.maximum(np.abs(hxy), np.abs(hyy)))))


def validate_decay(term: PotentialTerm, params: DecayParams,
                   radii: Sequence[float]) -> dict:
    """Check the decay bounds of the term's declared class on sampled shells.

    Returns a report with, per bound: per-shell required constants
    C(R) = |D^b V|_shell (1+R)^exponent, the smallest admissible C (their
    max), the fitted local exponent of |D^b V| between consecutive shells,
    and an ``admissible`` flag (False when C(R) grows with R, i.e. the
    fitted slope of log C exceeds 0.05).

    Very-short-range classes have no pointwise bound; their check is the
    weighted-integrability proxy (finite weighted_vs_norm at params.rho).
    """
    params.validate()
    radii = sorted(float(R) for R in radii)
    if not radii or radii[0] <= 0:
        raise PotentialError("radii must be positive and nonempty")
    report = {"term": term.name, "class": term.class_tag, "bounds": []}
    if term.class_tag in VS_TAGS:
        res = weighted_vs_norm(term, params.rho, radii[-1])
        report["bounds"].append({
            "label": f"integral (1+R)^rho sup|V| finite, rho={params.rho}",
            "value": res["value"],
            "admissible": res["finite"],
            "tail_slope": res["tail_slope"],
        })
        report["admissible"] = res["finite"]
        return report
    for order, expo_of, label in _BOUNDS[term.class_tag]:
        expo = expo_of(params)
        mags = np.array([_shell_max(term, order, R) for R in radii])
        ones = 1.0 + np.array(radii)
        Cs = mags * ones ** expo
        good = mags > 0
        if good.sum() >= 2:
            slope_C = np.polyfit(np.log(ones[good]), np.log(Cs[good]), 1)[0]
            local_expo = np.polyfit(np.log(ones[good]), np.log(mags[good]), 1)[0]
        else:
            slope_C, local_expo = -math.inf, -math.inf
        report["bounds"].append({
            "label": label,
            "order": order,
            "exponent": expo,
            "shells": [{"R": R, "magnitude": m, "C_required": c}
                       for R, m, c in zip(radii, mags, Cs)],
            "C_min_admissible": float(Cs.max(initial=0.0)),
            "fitted_exponent": float(local_expo),
            "C_slope": float(slope_C),
            "admissible": bool(slope_C <= 0.05),
        })
    if term.class_tag == "l0":
        # value must merely tend to zero at infinity
        v0 = _shell_max(term, 0, radii[0])
        v1 = _shell_max(term, 0, radii[-1])
        report["bounds"].append({
            "label": "|V| -> 0 at infinity",
            "admissible": bool(v1 < v0 or v0 == 0.0),
        })
    report["admissible"] = all(b["admissible"] for b in report["bounds"])
    return report


def weighted_vs_norm(term: PotentialTerm, rho: float, r_max: float,
                     n: int = 4000) -> dict:
    """Proxy integral  int_0^Rmax (1+R)^rho sup_{|x|>=R} |V| dR.

    For the monotone radial families the shell sup is |f(R^2)|.  The tail
    slope of the integrand over the last decade decides convergence: a slope
    >= -1 means the full-line integral diverges and the value is flagged.
    """
    if term.class_tag not in VS_TAGS:
        raise PotentialError(
            f"weighted_vs_norm applies to very-short-range terms, got class {term.class_tag}")
    if not (0 <= rho <= 1):
        raise PotentialError(f"need 0 <= rho <= 1, got {rho}")
    if not term.monotone:
        raise PotentialError("shell sup needs a monotone radial profile")
    R = np.linspace(0.0, r_max, n)
    integrand = (1.0 + R) ** rho * np.abs(term.profile(R * R, 0)[0])
    value = float(np.trapezoid(integrand, R))
    tail = (R > r_max / 10) & (integrand > 0)
    if tail.sum() >= 2:
        slope = float(np.polyfit(np.log(1 + R[tail]), np.log(integrand[tail]), 1)[0])
    else:
        slope = -math.inf
    return {"value": value, "tail_slope": slope, "finite": bool(slope < -1.0)}
