"""Predicted convergence exponents and empirical slope fitting.

The reconstruction error as the boost speed grows is a power of v whose
exponent follows a case analysis over the scene: which pairs are charged,
which carry long-range tails, and the decay exponents
(gamma1, alpha/gamma, gamma_d, mu) together with the weighted
very-short-range exponent rho.  Three derived constants drive the table:

  theta_jk: long-range neighbor penalty (2 - gamma1, epsilon, or 0
            depending on whether a zero-charge long-range pair touches
            the pair and gamma1 < 2 or = 2),
  sigma_jk: sigma~/(2 - sigma~) with sigma~ below
            2 - max{(1+theta)/(gamma_d+mu), 2/(gamma_d+2mu), 1}
            for charged pairs with long range, else 1,
  gamma2:   gamma1, gamma_d + mu, or 2 by the long-range content of the
            distinguished pair.

Open suprema are realized as bound-minus-margin (default 0.01), reported
explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = ["RateError", "PairDescriptor", "SceneDescription", "RateModel",
           "predict_exponent", "predict_wave_operator_exponent", "fit_rate"]

MARGIN = 0.01


class RateError(ValueError):
    """Violated rate hypothesis (reported with the failing inequality)."""


@dataclass(frozen=True)
class PairDescriptor:
    """Range content and decay exponents of one pair."""

    pair: tuple
    charged: bool
    has_vs: bool = False
    has_s: bool = False
    has_l: bool = False
    gamma1: float = 2.0       # zero-charge long-range gradient exponent
    alpha: float = 1.0        # short-range gradient exponent
    gamma: float = 1.0        # short-range value exponent
    gamma_d: float = 0.5      # charged long-range value exponent
    mu: float = 1.0           # charged long-range derivative increment
    rho: float = 1.0          # weighted very-short-range exponent


@dataclass(frozen=True)
class SceneDescription:
    pairs: tuple                      # PairDescriptor, distinguished pair first
    margin: float = MARGIN

    @property
    def distinguished(self) -> PairDescriptor:
        return self.pairs[0]

    def total_charge_weight(self) -> bool:
        """True when some pair is charged (sum |q_jk| > 0)."""
        return any(p.charged for p in self.pairs)


@dataclass(frozen=True)
class RateModel:
    """Resolved constants and the predicted exponent for one scene."""

    theta: dict
    sigma: dict
    sigma_tilde: dict
    gamma2: float
    alpha_eff: float
    rho_used: float
    exponent: float
    case: str
    sharp: bool                   # big-O case (measurable slope) vs little-o
    margin: float
    notes: tuple = ()


def _touches(p: PairDescriptor, q: PairDescriptor) -> bool:
    """Neighbor predicate for the theta conditions: shares an index, or the
    degenerate j' + j = 3 clause."""
    (j, k), (j2, k2) = p.pair, q.pair
    return j2 == j or j2 == k or k2 == j or k2 == k or j2 + j == 3


def _theta_for(p: PairDescriptor, scene: SceneDescription):
    neighbors = [q for q in scene.pairs
                 if (not q.charged) and q.has_l and _touches(p, q)]
    if not neighbors:
        return 0.0, "zeta_c"
    gamma1 = min(q.gamma1 for q in neighbors)
    if gamma1 < 2.0:
        return 2.0 - gamma1, "zeta_a"
    return scene.margin, "zeta_b"    # "any epsilon > 0", carried explicitly


def _sigma_for(p: PairDescriptor, scene: SceneDescription):
    if not (p.charged and p.has_l):
        return 1.0, 1.0, None
    theta, _ = _theta_for(p, scene)
    cap = 2.0 - max((1.0 + theta) / (p.gamma_d + p.mu),
                    2.0 / (p.gamma_d + 2 * p.mu), 1.0)
    if cap <= 0:
        raise RateError(
            f"pair {p.pair}: sigma~ bound 2 - max{{(1+theta)/(gamma_d+mu), "
            f"2/(gamma_d+2mu), 1}} = {cap:.4f} <= 0 (theta = {theta:.4f})")
    st = cap - scene.margin
    if st <= 0:
        raise RateError(f"pair {p.pair}: margin {scene.margin} exceeds the "
                        f"open bound {cap:.4f} on sigma~")
    return st / (2.0 - st), st, cap


def predict_wave_operator_exponent(scene: SceneDescription) -> dict:
    """Short-range wave-operator error rate: O(v^-alpha) for alpha < 1,
    O(v^-(1-eps)) at alpha = 1 with charge, O(v^-1) without charge."""
    p = scene.distinguished
    if not scene.total_charge_weight():
        return {"exponent": 1.0, "case": "neutral", "sharp": True}
    if p.alpha < 1.0:
        return {"exponent": p.alpha, "case": "alpha<1", "sharp": True}
    return {"exponent": 1.0 - scene.margin, "case": "alpha=1", "sharp": False}


def predict_exponent(scene: SceneDescription) -> RateModel:
    """Predicted reconstruction-error exponent with its case label.

    Checks the structural hypotheses first: every sigma_jk must exceed 1/2
    (equivalently theta_jk < 4(gamma_d+mu)/3 - 1 for charged long-range
    pairs), and mixed charge classes with long range require
    gamma1 > 3 - 4(gamma_d + mu)/3.
    """
    notes = []
    p12 = scene.distinguished
    theta = {}
    sigma = {}
    sigma_t = {}
    for p in scene.pairs:
        theta[p.pair], label = _theta_for(p, scene)
        s, st, cap = _sigma_for(p, scene)
        sigma[p.pair], sigma_t[p.pair] = s, st
        if p.charged and p.has_l:
            need = 4.0 * (p.gamma_d + p.mu) / 3.0 - 1.0
            if theta[p.pair] >= need:
                raise RateError(
                    f"pair {p.pair}: sigma > 1/2 needs theta < 4(gamma_d+mu)/3 - 1 "
                    f"= {need:.4f}, got theta = {theta[p.pair]:.4f}")
            if s <= 0.5:
                notes.append(f"pair {p.pair}: sigma = {s:.4f} <= 1/2 after margin")
    charged_pairs = [p for p in scene.pairs if p.charged]
    neutral_l = [p for p in scene.pairs if not p.charged and p.has_l]
    if charged_pairs and neutral_l:
        gmin = min(p.gamma1 for p in neutral_l)
        bound = 3.0 - 4.0 * (p12.gamma_d + p12.mu) / 3.0
        if not gmin > bound:
            raise RateError(
                f"mixed charge classes with long range require gamma1 > "
                f"3 - 4(gamma_d+mu)/3 = {bound:.4f}, got gamma1 = {gmin:.4f}")

    # alpha = 1 without loss of generality when no pair is charged
    alpha_eff = p12.alpha if scene.total_charge_weight() else 1.0
    m = min([alpha_eff] + [sigma[p.pair] for p in scene.pairs])
    if p12.has_l:
        gamma2 = p12.gamma1 if not p12.charged else p12.gamma_d + p12.mu
    else:
        gamma2 = 2.0
    cap_rho = 2.0 * m - 1.0
    rho = min(p12.rho, cap_rho) if p12.has_vs else min(1.0, cap_rho)
    if rho < 0:
        notes.append(f"rho capped below zero by 2 min(alpha, sigma) - 1 = {cap_rho:.4f}")
        rho = 0.0

    total_neutral = not scene.total_charge_weight()
    if rho >= 1.0 and total_neutral and not p12.has_l:
        case, expo, sharp = "O(v^-1): rho = 1, neutral, no long range", 1.0, True
    elif rho >= 1.0 and total_neutral and p12.has_l:
        expo = p12.gamma1 - 1.0 - scene.margin
        case, sharp = "o(v^-rho_l), rho_l < gamma1 - 1 (rho = 1, neutral)", False
    elif gamma2 - 1.0 <= rho <= cap_rho < 1.0:
        expo = gamma2 - 1.0 - scene.margin
        case, sharp = "o(v^-rho_l), rho_l < gamma2 - 1", False
    elif rho < min(gamma2, 2 * alpha_eff,
                   *(2 * sigma[p.pair] for p in scene.pairs)) - 1.0:
        case, expo, sharp = "o(v^-rho)", rho, False
    elif abs(rho - cap_rho) < 1e-12 and rho < gamma2 - 1.0:
        case, expo, sharp = "O(v^-rho), rho = 2 min(alpha, sigma) - 1", rho, True
    else:
        case, expo, sharp = "o(v^-rho) (boundary)", rho, False
    return RateModel(theta=theta, sigma=sigma, sigma_tilde=sigma_t, gamma2=gamma2,
                     alpha_eff=alpha_eff, rho_used=rho, exponent=expo, case=case,
                     sharp=sharp, margin=scene.margin, notes=tuple(notes))


def fit_rate(v_list: Sequence[float], errors: Sequence[float]) -> tuple:
    """Least-squares slope of log error against log v.

    Returns (rho_hat, halfwidth) with rho_hat > 0 for decaying errors and
    the halfwidth twice the slope standard error from the residual
    variance.
    """
    v = np.asarray(v_list, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(v) < 4:
        raise RateError("need at least 4 points to fit a rate")
    if np.any(e <= 0):
        raise RateError("errors must be positive")
    x = np.log(v)
    yv = np.log(e)
    coeffs, res = np.polyfit(x, yv, 1, cov=False), None
    slope, _ = coeffs
    pred = np.polyval(coeffs, x)
    dof = max(len(v) - 2, 1)
    s2 = float(np.sum((yv - pred) ** 2)) / dof
    sxx = float(np.sum((x - x.mean()) ** 2))
    half = 2.0 * math.sqrt(s2 / sxx)
    return -slope, half
