"""Modifiers and the scattering sandwich: phase-grid quadrature, Graf
integrals, zero-potential identities, linearity, modifier necessity, and the
correction-element identities."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from starklab.grid import Grid2D, PacketSpec, make_packet
from starklab.potentials import PairPotential, gaussian_term, power_tail_term
from starklab.propagator import EvolutionPlan, StarkParams
from starklab.scattering import (
    DollardModifier,
    SandwichOperator,
    ScatterSetup,
    apply_sd,
    commutator_element,
    commutator_elements_batch,
    graf_integral,
    sd_correction_element,
)

GRID = Grid2D(nx=128, ny=128, lx=36.0, ly=36.0)
PAR = StarkParams(mu=0.5, qrel=1.0, E=1.0)
PLAN = EvolutionPlan(kappa=1.0, dtype=np.complex128)


def packet(width=1.3, **kw):
    return make_packet(GRID, PacketSpec(width=width, **kw))


def vs_potential(amp=0.5, width=1.0, charged=True):
    tag = "vsE" if charged else "vs0"
    return PairPotential(pair=(1, 2), charged=charged,
                         terms=(gaussian_term(tag, amp, width),))


def setup_for(pot, v=8.0, vhat=(0.0, 1.0), charged=True, **kw):
    par = PAR if charged else StarkParams(mu=0.5, qrel=1e-300, E=1.0)
    return ScatterSetup(grid=GRID, params=par, potential=pot, v=v,
                        vhat=vhat, plan=PLAN, **kw)


# -- Dollard phase grids ------------------------------------------------------


def test_dollard_theta_zero_without_long_terms():
    mod = DollardModifier(GRID, PAR, long_terms=())
    assert mod.theta(3.0) == 0.0
    assert mod.theta(0.0) == 0.0


def test_dollard_theta_matches_reference_quadrature():
    # zero-charge pair, pure power tail: compare against 1-D quadrature
    par0 = StarkParams(mu=0.5, qrel=1e-300, E=1.0)
    term = power_tail_term("l0", amplitude=0.7, exponent=0.6)
    mod = DollardModifier(GRID, par0, long_terms=(term,), pshift=(0.0, 4.0))
    rng = np.random.default_rng(5)
    for t in (0.7, 2.0, -1.3):
        theta = mod.theta(t)
        px, py = GRID.momentum_axes()
        for _ in range(4):
            i = int(rng.integers(0, GRID.nx))
            j = int(rng.integers(0, GRID.ny))
            kx = px[i] / par0.mu
            ky = (py[j] + 4.0) / par0.mu

            def f(s):
                r2 = (s * kx) ** 2 + (s * ky) ** 2
                return 0.7 * (1 + r2) ** -0.3

            ref, _ = quad(f, 0.0, t, epsabs=1e-13, epsrel=1e-13, limit=300)
            assert abs(theta[i, j] - ref) <= 1e-9


def test_dollard_theta_charged_tail_converges():
    # family exponent 0.8 > 1/2: along the t^2-accelerated trajectory the
    # integrand decays like s^(-1.6), so the phase grid is Cauchy in t
    term = power_tail_term("lE", amplitude=0.5, exponent=0.8)
    mod = DollardModifier(GRID, PAR, long_terms=(term,), pshift=(0.0, 2.0))
    d1 = np.max(np.abs(mod.theta(8.0) - mod.theta(4.0)))
    d2 = np.max(np.abs(mod.theta(16.0) - mod.theta(8.0)))
    # closed-form comparison integral: A (qE/2mu)^-0.8 int_T^2T s^-1.6 ds
    # (worst lattice direction partially cancels the drift, hence the slack)
    a = PAR.qrel * PAR.E / (2 * PAR.mu)
    comp1 = 0.5 * a ** -0.8 * quad(lambda s: s ** -1.6, 4.0, 8.0)[0]
    assert d2 < d1
    assert d1 <= 8.0 * comp1
    # increments shrink like T^(1-1.6) between doublings
    assert 0.35 <= d2 / d1 <= 0.95


def test_dollard_theta_incremental_consistency():
    term = power_tail_term("lE", amplitude=0.5, exponent=0.8)
    mod = DollardModifier(GRID, PAR, long_terms=(term,), pshift=(1.0, 2.0))
    t_direct = DollardModifier(GRID, PAR, long_terms=(term,), pshift=(1.0, 2.0)).theta(6.0)
    mod.theta(3.0)  # seed the cache so theta(6) extends incrementally
    assert np.max(np.abs(mod.theta(6.0) - t_direct)) <= 1e-9


# -- Graf integrals -----------------------------------------------------------


def test_graf_trivial_cases():
    assert graf_integral(-2.0, 2.0, []) == 1.0 + 0.0j
    term = power_tail_term("sE", 1.0, 0.75)
    entries = [(term, 0.5, 1.0, 1.0, (0.0, 4.0))]
    assert graf_integral(1.5, 1.5, entries) == 1.0 + 0.0j
    val = graf_integral(-3.0, 3.0, entries)
    assert abs(abs(val) - 1.0) <= 1e-12


def test_graf_full_line_rate():
    # the modifier phase (which the exponential wraps at unit amplitude)
    # decays like v^-(2 gamma - 1) along the drifting trajectory
    from starklab.scattering import graf_phase
    term = power_tail_term("sE", 1.0, 0.75)
    vs = np.array([4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0])
    phases = []
    for v in vs:
        entries = [(term, 0.5, 1.0, 0.02, (0.0, v))]
        phases.append(abs(graf_phase(-math.inf, math.inf, entries)))
        I = graf_integral(-math.inf, math.inf, entries)
        assert abs(abs(I) - 1.0) <= 1e-12
    slope = np.polyfit(np.log(vs), np.log(phases), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


# -- sandwich -----------------------------------------------------------------


def test_apply_sd_zero_potential_identity():
    pot = PairPotential(pair=(1, 2), charged=True, terms=())
    psi = packet()
    run = apply_sd(psi, T=2.0, setup=setup_for(pot, v=12.0))
    assert np.max(np.abs(run.out[0] - psi.data)) * math.sqrt(GRID.cell) <= 1e-8
    assert run.cauchy <= 1e-10


def test_commutator_zero_potential():
    pot = PairPotential(pair=(1, 2), charged=True, terms=())
    phi = packet()
    val, run = commutator_element(phi, phi, v=12.0, vhat=(0.0, 1.0), y=(1.0, 0.0),
                                  l=1, setup=setup_for(pot), T=2.0)
    assert abs(val) <= 1e-7


def test_apply_sd_unitary_and_linear():
    pot = vs_potential()
    setup = setup_for(pot, v=8.0)
    op = SandwichOperator(setup)
    a = packet(width=1.3)
    b = packet(width=1.6, x0=(0.5, -0.5))
    al, be = 0.7 - 0.2j, 0.3 + 0.5j
    combo = al * a + be * b
    run = op.apply(np.stack([a.data, b.data, combo.data]), T=2.0, validate="none")
    assert np.allclose(run.out_norms[:2], run.in_norms[:2], atol=1e-8)
    lin = al * run.out[0] + be * run.out[1]
    diff = np.sqrt(np.sum(np.abs(lin - run.out[2]) ** 2) * GRID.cell)
    assert diff <= 1e-8


def test_plain_equals_dollard_for_short_range():
    # with only vs/sE terms the modifier is trivial: U_D == 1
    pot = PairPotential(pair=(1, 2), charged=True, terms=(
        gaussian_term("vsE", 0.4, 1.0),
        power_tail_term("sE", 0.2, 0.75),
    ))
    psi = packet()
    run_d = apply_sd(psi, T=2.0, setup=setup_for(pot, use_dollard=True), validate="none")
    run_p = apply_sd(psi, T=2.0, setup=setup_for(pot, use_dollard=False), validate="none")
    diff = np.sqrt(np.sum(np.abs(run_d.out - run_p.out) ** 2) * GRID.cell)
    assert diff <= 1e-6


def test_commutator_parity_zero_charge():
    # radial V, zero charge, y and vhat orthogonal to e_l: exact parity
    # forces the element to vanish
    pot = vs_potential(charged=False)
    phi = packet()
    val, _ = commutator_element(phi, phi, v=16.0, vhat=(0.0, 1.0), y=(0.0, 0.5),
                                l=1, setup=setup_for(pot, charged=False), T=1.5)
    assert abs(val) <= 1e-10


def test_commutator_parity_charged_real_suppressed():
    # with charge, the field drift breaks x1-parity only at subleading
    # order: imaginary part dominant, real part small
    pot = vs_potential()
    phi = packet()
    val, _ = commutator_element(phi, phi, v=16.0, vhat=(0.0, 1.0), y=(0.0, 0.5),
                                l=1, setup=setup_for(pot), T=1.5)
    assert abs(val.real) <= 1e-3
    assert abs(val.real) <= 0.1 * abs(val.imag)


def test_dollard_necessity_long_range_zero_charge():
    # gradient exponent 1.6 long-range tail on a zero-charge pair: the plain
    # sandwich Cauchy differences stall, the modified ones collapse.  The
    # box must hold the anti-dispersed intermediates at 2T, hence the wide
    # packet on a 48-box.
    grid = Grid2D(nx=128, ny=128, lx=48.0, ly=48.0)
    par0 = StarkParams(mu=0.5, qrel=1e-300, E=1.0)
    pot = PairPotential(pair=(1, 2), charged=False, terms=(
        power_tail_term("l0", 0.5, 0.6),))
    psi = make_packet(grid, PacketSpec(width=2.2))

    def cauchy(use_dollard, T):
        setup = ScatterSetup(grid=grid, params=par0, potential=pot, v=96.0,
                             vhat=(0.0, 1.0), plan=PLAN, use_dollard=use_dollard,
                             use_graf_compensation=False)
        run = apply_sd(psi, T=T, setup=setup, validate="all")
        return run.cauchy

    plain = [cauchy(False, T) for T in (1.0, 2.0)]
    dollard = [cauchy(True, T) for T in (1.0, 2.0)]
    assert min(plain) > 1e-2
    assert dollard[1] <= dollard[0] * 1.05
    assert max(dollard) < min(plain) / 50


# -- correction element -------------------------------------------------------


def lE_setup():
    pot = PairPotential(pair=(1, 2), charged=True, terms=(
        gaussian_term("vsE", 0.3, 1.0),
        power_tail_term("lE", 0.4, 0.8),
    ))
    return ScatterSetup(grid=GRID, params=PAR, potential=pot, v=4.0,
                        vhat=(0.6, 0.8), plan=PLAN)


def test_sd_correction_zero_without_tails():
    pot = vs_potential()
    op = SandwichOperator(setup_for(pot))
    res = sd_correction_element(op, packet(), packet(), [(0.0, 0.0)], T_quad=4.0)
    assert res["values"][0] == 0.0


def test_sd_correction_t0_integrand_identity():
    op = SandwichOperator(lE_setup())
    phi = packet()
    res = sd_correction_element(op, phi, phi, [(0.0, 0.0)], T_quad=6.0)
    val0 = res["integrand"](np.array([0.0]))[0, 0]
    X, Y = GRID.meshgrid()
    pot = op.setup.potential
    zero = np.float64(0.0)
    direct = np.sum(
        (pot.value(X, Y, "s") - pot.value(zero, zero, "s")
         + pot.value(X, Y, "l") - pot.value(zero, zero, "l"))
        * phi.data * phi.data.conj()) * GRID.cell
    assert abs(val0 - direct) <= 1e-12


def test_dollard_sign_duhamel_consistency():
    # the interaction-picture drift sign makes the large-t integrand decay;
    # the opposite sign folds the subtraction trajectory back through the
    # potential and stalls
    phi = packet()
    op = SandwichOperator(lE_setup())
    ts = np.array([4.0, 6.0, 9.0])
    good = np.abs(sd_correction_element(op, phi, phi, [(0.0, 0.0)], T_quad=6.0,
                                        drift_sign=+1)["integrand"](ts)[0])
    bad = np.abs(sd_correction_element(op, phi, phi, [(0.0, 0.0)], T_quad=6.0,
                                       drift_sign=-1)["integrand"](ts)[0])
    assert np.all(bad > 50 * good)
    assert good[-1] < good[0] / 10


def test_sd_correction_tail_decay_exponent():
    # sE-only scene: the undifferenced envelope along the accelerated
    # trajectory decays like t^(-2 gamma); the measured integrand must be
    # integrable and at least that steep
    pot = PairPotential(pair=(1, 2), charged=True, terms=(
        power_tail_term("sE", 0.3, 0.75),))
    op = SandwichOperator(setup_for(pot, v=6.0))
    phi = packet()
    res = sd_correction_element(op, phi, phi, [(0.0, 0.0)], T_quad=8.0)
    ts = np.array([6.0, 9.0, 13.5, 20.0])
    mags = np.abs(res["integrand"](ts)[0])
    slope = np.polyfit(np.log(ts), np.log(mags), 1)[0]
    assert slope <= -2 * 0.75 + 0.3
