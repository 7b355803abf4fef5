"""Exact kinematics: reduced masses, relative charges, Jacobi chains,
high-velocity configuration thresholds."""

from fractions import Fraction

import pytest

from starklab.kinematics import (
    KinematicsError,
    ParticleSystem,
    build_velocity_config,
    classify_pairs,
    jacobi_chain,
    kinematics_report_rows,
    pair_frames,
    reduced_mass,
    relative_charge,
)


def test_reduced_mass_values():
    assert reduced_mass(1, 1) == Fraction(1, 2)
    assert reduced_mass(2, 2) == Fraction(1, 1)
    assert reduced_mass(1, 3) == Fraction(3, 4)


def test_reduced_mass_symmetric_exact():
    for mj, mk in [(1, 2), (3, 5), (Fraction(1, 3), Fraction(7, 2))]:
        assert reduced_mass(mj, mk) == reduced_mass(mk, mj)


def test_reduced_mass_rejects_nonpositive():
    with pytest.raises(KinematicsError):
        reduced_mass(0, 1)
    with pytest.raises(KinematicsError):
        reduced_mass(1, -2)


def test_relative_charge_values():
    assert relative_charge(1, 1, 1, 1) == 0
    assert relative_charge(1, 0, 2, 1) == Fraction(1, 3)
    assert relative_charge(2, 1, 1, 0) == Fraction(-1, 3)


def test_relative_charge_antisymmetric():
    cases = [(1, 2, 3, 4), (2, -1, 5, 0), (Fraction(1, 2), 1, Fraction(3, 2), -2)]
    for mj, qj, mk, qk in cases:
        assert relative_charge(mj, qj, mk, qk) == -relative_charge(mk, qk, mj, qj)


def test_relative_charge_zero_iff_equal_ratios():
    # q_j/m_j == q_k/m_k kills the relative acceleration, exactly
    assert relative_charge(2, 3, 4, 6) == 0
    assert relative_charge(2, 3, 4, 6 + Fraction(1, 10**9)) != 0


def test_jacobi_chain_three_equal_masses():
    sys3 = ParticleSystem(masses=(1, 1, 1), charges=(0, 0, 0), field=1)
    ch = jacobi_chain(sys3)
    assert ch.nu == (Fraction(1, 2), Fraction(2, 3))
    assert ch.q_rel == (0, 0)


def test_jacobi_chain_two_body_matches_pair():
    sys2 = ParticleSystem(masses=(1, 1), charges=(1, -1), field=1)
    ch = jacobi_chain(sys2)
    assert ch.nu == (reduced_mass(1, 1),)
    assert ch.q_rel == (relative_charge(1, 1, 1, -1),)
    assert ch.q_rel[0] == -1


@pytest.mark.parametrize("c", [Fraction(1, 3), 2, -1])
def test_jacobi_chain_proportional_charges_vanish(c):
    masses = (1, 2, 3, Fraction(5, 2))
    charges = tuple(c * m for m in masses)
    ch = jacobi_chain(ParticleSystem(masses=masses, charges=charges, field=1))
    assert all(q == 0 for q in ch.q_rel)


def test_classify_pairs():
    sysA = ParticleSystem(masses=(1, 1), charges=(1, 1), field=1)
    assert classify_pairs(sysA) == {"zero": [(1, 2)], "nonzero": []}
    sysB = ParticleSystem(masses=(1, 1), charges=(0, 1), field=1)
    assert classify_pairs(sysB) == {"zero": [], "nonzero": [(1, 2)]}
    sysC = ParticleSystem(masses=(1, 2, 3), charges=(1, 2, 3), field=1)
    assert classify_pairs(sysC)["zero"] == [(1, 2), (1, 3), (2, 3)]


def test_classify_float_tolerance():
    sysD = ParticleSystem(masses=(1.0, 1.0), charges=(0.5, 0.5 + 1e-14), field=1.0)
    assert classify_pairs(sysD)["zero"] == [(1, 2)]


def test_eta_factors():
    sys3 = ParticleSystem(masses=(1, 1, 1), charges=(0, 0, 0), field=1)
    frames = {f.pair: f for f in pair_frames(sys3, eta=2)}
    assert frames[(1, 2)].eta == 2
    # eta_1j = 2(1 + eta*mu12/m1) with mu12 = 1/2
    assert frames[(1, 3)].eta == 2 * (1 + Fraction(2, 2) * Fraction(1, 2) * 2) == 4
    assert frames[(2, 3)].eta == 4


def test_velocity_config_two_body_perpendicular():
    sys2 = ParticleSystem(masses=(1, 1), charges=(0, 2), field=1)
    cfg = build_velocity_config(sys2, v=10, vhat=(0, 1), delta=Fraction(1, 2))
    assert cfg.rel_velocities[(1, 2)] == (0, 10)
    assert cfg.violations == ()


def test_velocity_config_thresholds_three_body():
    sys3 = ParticleSystem(masses=(1, 1, 1), charges=(0, 0, 0), field=1)
    cfg = build_velocity_config(sys3, v=10, vhat=(0, 1), d={3: (1, 0)})
    # v_{1,3} = v^2 (d_3 + mu12 vhat/(m1 v)); threshold mu12/(m1 d_3) = 0.5
    v13 = cfg.rel_velocities[(1, 3)]
    assert v13 == (100, Fraction(1, 2) * 10)
    with pytest.raises(KinematicsError, match="requires v >"):
        build_velocity_config(sys3, v=Fraction(1, 4), vhat=(0, 1), d={3: (1, 0)})


def test_velocity_config_rejects_equal_displacements():
    sys4 = ParticleSystem(masses=(1, 1, 1, 1), charges=(0, 0, 0, 0), field=1)
    with pytest.raises(KinematicsError, match="equal displacements"):
        build_velocity_config(sys4, v=10, vhat=(0, 1), d={3: (1, 0), 4: (1, 0)})


def test_velocity_config_charged_parallel_rejected():
    sys2 = ParticleSystem(masses=(1, 1), charges=(0, 2), field=1)
    with pytest.raises(KinematicsError, match="exceeds delta"):
        build_velocity_config(sys2, v=5, vhat=(1, 0), delta=Fraction(9, 10))


def test_velocity_config_scaling_exact():
    # scaling all d_j by a rational lambda scales v_jk (j,k >= 3) exactly
    sys4 = ParticleSystem(masses=(1, 1, 2, 3), charges=(0, 0, 0, 0), field=1)
    lam = Fraction(7, 3)
    d1 = {3: (1, 0), 4: (0, Fraction(3, 2))}
    d2 = {j: tuple(lam * c for c in x) for j, x in d1.items()}
    c1 = build_velocity_config(sys4, v=20, vhat=(0, 1), d=d1)
    c2 = build_velocity_config(sys4, v=20, vhat=(0, 1), d=d2)
    assert c2.rel_velocities[(3, 4)] == tuple(
        lam * c for c in c1.rel_velocities[(3, 4)])


def test_collect_only_reports_all_violations():
    sys3 = ParticleSystem(masses=(1, 1, 1), charges=(0, 0, 0), field=1)
    cfg = build_velocity_config(sys3, v=-1, vhat=(0, 2), d={}, delta=2,
                                collect_only=True)
    text = "; ".join(cfg.violations)
    assert "positive" in text and "delta" in text and "missing displacement" in text


def test_report_rows():
    sys3 = ParticleSystem(masses=(1, 2, 3), charges=(0, 1, 0), field=2)
    rows = kinematics_report_rows(sys3, eta=1)
    assert len(rows) == 3
    assert rows[0]["class"] == "nonzero"
    assert rows[0]["mu_jk"] == pytest.approx(2 / 3)
