"""Grid operations: packets, exact translations and boosts, inner products,
spectral momentum, Weyl commutation phase, raw dumps."""

import numpy as np
import pytest

from starklab.grid import (
    Field2D,
    GeometryError,
    Grid2D,
    PacketSpec,
    ResolutionError,
    boost,
    edge_mass,
    inner,
    load_field,
    make_packet,
    momentum_op,
    save_field,
    translate,
)

GRID = Grid2D(nx=128, ny=128, lx=32.0, ly=32.0)


def packet(**kw):
    return make_packet(GRID, PacketSpec(**kw))


def test_packet_norm_and_center():
    psi = packet(width=1.0, x0=(0.5, -1.0), p0=(1.0, 0.0))
    assert abs(psi.norm() - 1.0) <= 1e-12
    cx, cy = psi.expectation_x()
    assert abs(cx - 0.5) < GRID.dx / 10
    assert abs(cy + 1.0) < GRID.dy / 10
    px, py = psi.expectation_p()
    assert abs(px - 1.0) < 1e-6 and abs(py) < 1e-6


def test_bump_packet_compact_momentum_support():
    psi = packet(envelope="bump", width=1.0, psupport=3.0, x0=(1.0, 0.0), p0=(2.0, -1.0))
    spec = np.abs(psi.fft()) ** 2
    PX, PY = GRID.momentum_meshgrid()
    outside = (PX - 2.0) ** 2 + (PY + 1.0) ** 2 > 3.0 ** 2 * (1 + 1e-12)
    # compact by construction: zero outside up to FFT round-trip roundoff
    # (squared magnitudes at the machine-epsilon^2 floor)
    assert spec[outside].max() <= 1e-28
    assert abs(psi.norm() - 1.0) <= 1e-12


def test_make_packet_resolution_errors():
    with pytest.raises(ResolutionError):
        make_packet(GRID, PacketSpec(width=0.5))  # < 4 dx
    with pytest.raises(ResolutionError):
        make_packet(GRID, PacketSpec(width=1.0, p0=(0.95 * GRID.p_nyquist, 0.0)))


def test_translate_identity_and_group():
    psi = packet(width=1.5)
    zero = translate(psi, (0.0, 0.0))
    assert np.max(np.abs(zero.data - psi.data)) < 1e-14
    fro = translate(translate(psi, (2.0, -1.0)), (-2.0, 1.0))
    assert np.max(np.abs(fro.data - psi.data)) <= 1e-13


def test_translate_moves_center():
    psi = packet(width=1.0)
    moved = translate(psi, (3.0, 2.0))
    cx, cy = moved.expectation_x()
    assert abs(cx - 3.0) < 1e-8 and abs(cy - 2.0) < 1e-8


def test_translate_wraparound_guard():
    psi = packet(width=1.0)
    with pytest.raises(GeometryError):
        translate(psi, (15.0, 0.0))


def test_boost_identity_density_and_momentum():
    psi = packet(width=1.0)
    same = boost(psi, 1.0, (0.0, 0.0))
    assert np.max(np.abs(same.data - psi.data)) == 0.0
    kicked = boost(psi, 0.5, (2.0, -4.0))
    assert np.max(np.abs(np.abs(kicked.data) ** 2 - np.abs(psi.data) ** 2)) <= 1e-14
    px, py = kicked.expectation_p()
    assert abs(px - 1.0) < 1e-8 and abs(py + 2.0) < 1e-8


def test_boost_nyquist_guard():
    psi = packet(width=1.0)
    with pytest.raises(ResolutionError):
        boost(psi, 1.0, (GRID.p_nyquist, 0.0))


def test_inner_and_momentum_op():
    psi = packet(width=1.2, p0=(0.5, 0.0))
    assert inner(psi, psi) == pytest.approx(1.0, abs=1e-12)
    val = inner(momentum_op(psi, 1), psi)
    assert abs(val.imag) <= 1e-10  # self-adjoint on the periodic grid
    assert val.real == pytest.approx(0.5, abs=1e-6)


def test_momentum_op_plane_wave_eigenvalue():
    PX, PY = GRID.momentum_meshgrid()
    k = (5, 9)
    X, Y = GRID.meshgrid()
    wave = Field2D(GRID, np.exp(1j * (PX[k[0], 0] * X + PY[0, k[1]] * Y))).normalized()
    out = momentum_op(wave, 1)
    assert np.allclose(out.data, PX[k[0], 0] * wave.data, atol=1e-10)
    out2 = momentum_op(wave, 2)
    assert np.allclose(out2.data, PY[0, k[1]] * wave.data, atol=1e-10)


def test_fft_roundtrip_and_unitarity():
    rng = np.random.default_rng(3)
    raw = rng.normal(size=(128, 128)) + 1j * rng.normal(size=(128, 128))
    psi = Field2D(GRID, raw)
    back = Field2D.from_fft(GRID, psi.fft())
    assert np.max(np.abs(back.data - psi.data)) / np.max(np.abs(psi.data)) <= 1e-13
    spec_norm = np.sqrt((np.abs(psi.fft()) ** 2).sum() * GRID.cell)
    assert spec_norm == pytest.approx(psi.norm(), rel=1e-12)


def test_weyl_phase_translate_boost():
    # translate(y) boost(mv) = e^{-i m v . y} boost(mv) translate(y)
    psi = packet(width=1.0)
    m, v, y = 0.7, (1.0, -0.5), (2.0, 1.0)
    a = translate(boost(psi, m, v, check_nyquist=False), y)
    b = boost(translate(psi, y), m, v, check_nyquist=False)
    phase = np.exp(-1j * m * (v[0] * y[0] + v[1] * y[1]))
    assert np.max(np.abs(a.data - phase * b.data)) <= 1e-12


def test_operations_preserve_norm():
    psi = packet(width=1.0, p0=(1.0, 2.0))
    for out in (translate(psi, (1.0, -2.0)), boost(psi, 1.0, (1.0, 1.0))):
        assert abs(out.norm() - 1.0) <= 1e-12


def test_edge_mass_localized():
    psi = packet(width=1.0)
    assert edge_mass(psi, 4.0) < 1e-10


def test_dump_roundtrip(tmp_path):
    psi = packet(width=1.0, x0=(1.0, 2.0), p0=(0.5, -0.5))
    path = str(tmp_path / "field.raw")
    save_field(psi, path)
    back = load_field(path)
    assert back.grid == psi.grid
    assert np.array_equal(back.data, psi.data)
