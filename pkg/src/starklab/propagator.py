"""Free and interacting propagation of a charged pair in a uniform field.

The relative Hamiltonian is H0 = p^2/(2 mu) - q E x1 (field along -e1 acting
through the relative charge q), plus a pair potential V(x).  Free evolution
is exact through the factorization

    e^{-it H0} = e^{i q E x1 t} e^{-i t^3 q^2 E^2 /(6 mu)}
                 e^{-i p1 q E t^2/(2 mu)} e^{-i t p^2/(2 mu)},

whose Ehrenfest trajectory is x(t) = x0 + p0 t/mu + e1 q E t^2/(2 mu).

Interacting scattering-length runs use the comoving gauge: with the
classical path x_cl(t) = v t + e1 (qE/2mu) t^2 and the gauge unitary

    G(t) phi = e^{i gamma(t)} e^{i mu xdot_cl(t).(x - x_cl(t))} phi(x - x_cl(t)),
    gamma(t) = integral of (mu |xdot_cl|^2/2 + q E x_cl(t).e1),

the lab solution is psi(t) = G(t) phi(t) where phi solves

    i d/dt phi = [p^2/(2 mu) + V(x + x_cl(t))] phi.

The boost and the field drift are removed from the state and moved into the
potential argument: the packet stays at the origin while the potential
sweeps past, so a moderate periodic box suffices for any v.  Two exact
identities make the scattering sandwich a pure lattice computation,

    e^{-it H0} B_{mu v} = G(t) e^{-it p^2/(2 mu)},      B_k = e^{i k.x},

i.e. the comoving representation of a freely evolved boosted packet is the
bare dispersed packet, with no leftover phase.

Strang stepping is symmetric (half kinetic, potential phase at the step
midpoint, half kinetic), unitary by construction, second order in dt, with
a schedule that refines while the potential sweeps through the box and
takes exact free flights (or long strides) in the far zone.  Optionally the
c-number V(x_cl(t)) is subtracted from each potential phase and its
discrete sum returned, an exact rearrangement that conditions the far zone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .grid import Field2D, GeometryError, Grid2D, edge_mass

__all__ = [
    "StarkParams",
    "EvolutionPlan",
    "GaugePath",
    "free_evolve_exact",
    "evolve_lab_splitstep",
    "ComovingEngine",
    "comoving_step",
    "evolve",
]

_FFT_CHUNK = 4  # batched transforms are fastest in small slabs (cache-bound)


def _fft2(data):
    if data.ndim == 2:
        return sfft.fft2(data, norm="ortho")
    out = np.empty_like(data)
    for i in range(0, data.shape[0], _FFT_CHUNK):
        out[i:i + _FFT_CHUNK] = sfft.fft2(data[i:i + _FFT_CHUNK], norm="ortho")
    return out


def _ifft2(data):
    if data.ndim == 2:
        return sfft.ifft2(data, norm="ortho")
    out = np.empty_like(data)
    for i in range(0, data.shape[0], _FFT_CHUNK):
        out[i:i + _FFT_CHUNK] = sfft.ifft2(data[i:i + _FFT_CHUNK], norm="ortho")
    return out


@dataclass(frozen=True)
class StarkParams:
    """Reduced mass, relative charge and field strength of the simulated pair."""

    mu: float
    qrel: float
    E: float

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("reduced mass must be positive")
        if self.E <= 0:
            raise ValueError("field strength must be positive")

    @property
    def drift(self) -> float:
        """Coefficient a in x_cl(t) = v t + e1 a t^2."""
        return self.qrel * self.E / (2 * self.mu)


@dataclass(frozen=True)
class GaugePath:
    """Classical path data of the comoving gauge for boost velocity v."""

    params: StarkParams
    v: tuple

    def x_cl(self, t: float) -> tuple:
        a = self.params.drift
        return (self.v[0] * t + a * t * t, self.v[1] * t)

    def xdot_cl(self, t: float) -> tuple:
        a = self.params.drift
        return (self.v[0] + 2 * a * t, self.v[1])

    def gamma(self, t: float) -> float:
        mu = self.params.mu
        a = self.params.drift
        v2 = self.v[0] ** 2 + self.v[1] ** 2
        return mu * v2 * t / 2 + 2 * mu * a * self.v[0] * t * t \
            + (4.0 / 3.0) * mu * a * a * t ** 3

    def to_lab(self, phi: Field2D, t: float) -> Field2D:
        """Materialize the lab-frame state psi(t) = G(t) phi(t).

        Only valid when the boosted, drifted packet still fits the grid;
        used by short validation runs, never by scattering pipelines.
        """
        from .grid import boost, translate
        xc = self.x_cl(t)
        xd = self.xdot_cl(t)
        mu = self.params.mu
        out = translate(phi, xc, check_margin=False)
        out = boost(out, mu, xd, check_nyquist=False)
        phase = np.exp(1j * (self.gamma(t) - mu * (xd[0] * xc[0] + xd[1] * xc[1])))
        return Field2D(out.grid, out.data * phase)


@dataclass(frozen=True)
class EvolutionPlan:
    """Stepping policy.

    kappa: sweep resolution, cells the potential argument moves per step.
    dt_cap: hard upper bound on any step.
    eps_scalar: cap on |V| dt per step in the far zone (uncompensated part).
    eps_op: cap on the operator part (grad V * box radius * dt) per step.
    dtype: complex dtype of the run (complex128 for tight tolerances,
        complex64 for the large batched pipelines).
    scalar_compensation: subtract the c-number V(x_cl(t)) from each phase
        and return its discrete sum.
    margin_width / margin_tol: anti-wraparound monitor.
    """

    kappa: float = 2.0
    dt_cap: float = 0.25
    dt_floor: float = 1e-5
    dt_scale: float = 1.0     # uniform refinement of the whole schedule
    eps_scalar: float = 0.02
    eps_op: float = 2e-4
    dtype: type = np.complex128
    scalar_compensation: bool = True
    margin_width: float = 0.0
    margin_tol: float = 1e-10
    monitor_every: int = 200
    gauge: str = "comoving"


# ---------------------------------------------------------------------------
# exact free Stark evolution
# ---------------------------------------------------------------------------

def free_evolve_exact(psi: Field2D, t: float, params: StarkParams,
                      check_margin: bool = True) -> Field2D:
    """Exact e^{-it H0} via the kinetic / momentum-shift / scalar / position
    phase factorization.  Unitary; identity at t = 0."""
    if t == 0:
        return psi.copy()
    g = psi.grid
    mu, q, E = params.mu, params.qrel, params.E
    PX, PY = g.momentum_meshgrid()
    spectral = np.exp(-1j * (t * (PX ** 2 + PY ** 2) / (2 * mu)
                             + PX * q * E * t * t / (2 * mu)))
    out = _ifft2(spectral.astype(psi.data.dtype, copy=False) * _fft2(psi.data))
    X, _ = g.meshgrid()
    scalar = np.exp(-1j * t ** 3 * q * q * E * E / (6 * mu))
    position = np.exp(1j * q * E * X * t) * scalar
    out = out * position.astype(psi.data.dtype, copy=False)
    result = Field2D(g, out)
    if check_margin:
        m = edge_mass(result, 4 * max(g.dx, g.dy))
        if m > 1e-8:
            raise GeometryError(
                f"free Stark drift left boundary mass {m:.3e}; state off the grid")
    return result


def evolve_lab_splitstep(psi: Field2D, t: float, dt: float, params: StarkParams,
                         potential: Optional[Callable] = None) -> Field2D:
    """Lab-frame Strang split-step for H = p^2/(2mu) - qE x1 + V(x).

    Validation-grade: the drift stays on the grid only for short runs.
    The time interval is divided into ceil(t/dt) equal steps.
    """
    if t == 0:
        return psi.copy()
    g = psi.grid
    n = max(1, int(math.ceil(abs(t) / dt)))
    h = t / n
    mu, q, E = params.mu, params.qrel, params.E
    PX, PY = g.momentum_meshgrid()
    X, Y = g.meshgrid()
    kin_half = np.exp(-1j * h * (PX ** 2 + PY ** 2) / (4 * mu)).astype(psi.data.dtype)
    vgrid = -q * E * X
    if potential is not None:
        vgrid = vgrid + potential(X, Y)
    pot = np.exp(-1j * h * vgrid).astype(psi.data.dtype)
    kin_full = kin_half * kin_half
    data = _ifft2(kin_half * _fft2(psi.data))
    for k in range(n):
        data *= pot
        data = _ifft2((kin_half if k == n - 1 else kin_full) * _fft2(data))
    return Field2D(g, data)


# ---------------------------------------------------------------------------
# comoving engine
# ---------------------------------------------------------------------------

@dataclass
class _Segment:
    kind: str                  # "strang" | "free"
    t0: float
    t1: float
    mids: Optional[np.ndarray] = None
    dts: Optional[np.ndarray] = None


class ComovingEngine:
    """Strang stepping of i d/dt phi = [p^2/(2mu) + V(x + x_cl(t))] phi.

    Batched: evolves a (B, nx, ny) stack through the shared sweep.  The
    returned scalar_phase is the discrete sum dt * V(x_cl(t_mid)) over all
    Strang steps (zero when compensation is off), so that

        U_exact = e^{-i scalar_phase} * U_compensated      (exact identity).
    """

    def __init__(self, grid: Grid2D, params: StarkParams, v_vec,
                 potential_value: Optional[Callable],
                 plan: EvolutionPlan,
                 potential_reach: float = math.inf,
                 gradient_envelope: Optional[Callable] = None):
        self.grid = grid
        self.params = params
        self.v = tuple(float(c) for c in v_vec)
        self.pot = potential_value            # (X, Y) -> V array, None for free
        self.plan = plan
        self.reach = potential_reach
        self.grad_env = gradient_envelope     # r -> upper bound on |grad V|(r)
        self.path = GaugePath(params, self.v)
        self._pcache: dict = {}
        px, py = grid.momentum_axes()
        self._P2 = (px[:, None] ** 2 + py[None, :] ** 2)
        self._X, self._Y = grid.meshgrid()
        # radius of the region the state can occupy (half box minus margin)
        self._rbox = 0.5 * math.hypot(grid.lx, grid.ly)
        # potential-phase cap dt <= 0.05/Vmax inside the interaction zone
        if potential_value is not None:
            probe = np.linspace(-self._rbox, self._rbox, 65)
            PXp, PYp = np.meshgrid(probe, probe, indexing="ij")
            self._vmax = float(np.max(np.abs(potential_value(PXp, PYp))))
        else:
            self._vmax = 0.0

    # -- scheduling --------------------------------------------------------

    def _speed(self, t: float) -> float:
        xd = self.path.xdot_cl(t)
        return math.hypot(*xd)

    def _dist(self, t: float) -> float:
        """Distance from the sweep position to the box, 0 while inside."""
        xc = self.path.x_cl(t)
        return max(0.0, math.hypot(*xc) - self._rbox)

    def _dt_at(self, t: float) -> float:
        plan = self.plan
        dx = min(self.grid.dx, self.grid.dy)
        dt = plan.kappa * dx / max(self._speed(t), 1e-12)
        if self._vmax > 0:
            dt = min(dt, 0.05 / self._vmax)
        d = self._dist(t)
        if d > 0.0 and self.pot is not None:
            # far zone: the potential is smooth and small on the box; the
            # step is limited by the scalar phase (if uncompensated) and by
            # the envelope of the operator part
            if self.grad_env is not None:
                genv = self.grad_env(d)
                if genv > 0:
                    dt = max(dt, plan.eps_op / (genv * self._rbox))
            if not plan.scalar_compensation:
                vloc = abs(self._pot_center(t))
                if vloc > 0:
                    dt = min(max(dt, plan.kappa * dx / max(self._speed(t), 1e-12)),
                             plan.eps_scalar / vloc)
        return float(min(max(dt, plan.dt_floor), plan.dt_cap)) * plan.dt_scale

    def _pot_center(self, t: float) -> float:
        xc = self.path.x_cl(t)
        return float(self.pot(np.array(xc[0]), np.array(xc[1]))) if self.pot else 0.0

    def schedule(self, t0: float, t1: float) -> list:
        """Segment list covering [t0, t1] (t1 > t0)."""
        if self.pot is None:
            return [_Segment("free", t0, t1)]
        segs: list[_Segment] = []
        t = t0
        mids: list[float] = []
        dts: list[float] = []
        state_reach = self._rbox + self.reach
        while t < t1 - 1e-12:
            xc = self.path.x_cl(t)
            far = math.hypot(*xc) > state_reach
            if far and math.isfinite(self.reach):
                # scan for re-entry with the coarse stride, probing stride
                # midpoints as well so a crossing cannot be stepped over
                te = t
                while te < t1 - 1e-12:
                    te2 = min(te + self.plan.dt_cap, t1)
                    tm = 0.5 * (te + te2)
                    if (math.hypot(*self.path.x_cl(te2)) <= state_reach
                            or math.hypot(*self.path.x_cl(tm)) <= state_reach):
                        break
                    te = te2
                if te > t + 1e-12:
                    if mids:
                        segs.append(_Segment("strang", mids_t0, t,
                                             np.array(mids), np.array(dts)))
                        mids, dts = [], []
                    segs.append(_Segment("free", t, min(te, t1)))
                    t = min(te, t1)
                    continue
                # already at the boundary: fall through to a Strang step
            if not mids:
                mids_t0 = t
            dt = min(self._dt_at(t), t1 - t)
            mids.append(t + dt / 2)
            dts.append(dt)
            t += dt
        if mids:
            segs.append(_Segment("strang", mids_t0, t1, np.array(mids), np.array(dts)))
        return segs

    # -- stepping ----------------------------------------------------------

    def _kinetic_phase(self, a: float, dtype) -> np.ndarray:
        key = (round(a, 15), np.dtype(dtype).name)
        if key not in self._pcache:
            if len(self._pcache) > 64:
                self._pcache.clear()
            self._pcache[key] = np.exp(-1j * a * self._P2).astype(dtype)
        return self._pcache[key]

    def _potential_phase(self, t_mid: float, dt: float, dtype):
        xc = self.path.x_cl(t_mid)
        V = self.pot(self._X + xc[0], self._Y + xc[1])
        vc = 0.0
        if self.plan.scalar_compensation:
            vc = float(self.pot(np.array(xc[0]), np.array(xc[1])))
            V = V - vc
        return np.exp(-1j * dt * V).astype(dtype), vc * dt

    def run(self, data: np.ndarray, t0: float, t1: float,
            monitor: bool = True) -> tuple:
        """Evolve the stack from t0 to t1.  Returns (data, scalar_phase)."""
        if t1 == t0:
            return data.copy(), 0.0
        if t1 < t0:
            raise ValueError("comoving engine runs forward; swap endpoints")
        plan = self.plan
        dtype = np.dtype(plan.dtype)
        data = data.astype(dtype, copy=True)
        mu = self.params.mu
        scalar_phase = 0.0
        nstep = 0
        for seg in self.schedule(t0, t1):
            if seg.kind == "free":
                a = (seg.t1 - seg.t0) / (2 * mu)
                data = _ifft2(self._kinetic_phase(a, dtype) * _fft2(data))
                continue
            dts = seg.dts
            mids = seg.mids
            # symmetric composition with merged interior kinetic factors
            data = _ifft2(self._kinetic_phase(dts[0] / (4 * mu), dtype) * _fft2(data))
            for k in range(len(dts)):
                phase, dphi = self._potential_phase(mids[k], dts[k], dtype)
                scalar_phase += dphi
                data *= phase
                if k + 1 < len(dts):
                    a = (dts[k] + dts[k + 1]) / (4 * mu)
                else:
                    a = dts[k] / (4 * mu)
                data = _ifft2(self._kinetic_phase(a, dtype) * _fft2(data))
                nstep += 1
                if monitor and plan.margin_width > 0 and nstep % plan.monitor_every == 0:
                    self._check_margin(data)
        if monitor and plan.margin_width > 0:
            self._check_margin(data)
        return data, scalar_phase

    def _check_margin(self, data: np.ndarray) -> None:
        dens = np.abs(data) ** 2 if data.ndim == 2 else np.sum(np.abs(data) ** 2, axis=0)
        probe = Field2D(self.grid, dens.astype(np.complex128))
        m = edge_mass(probe, self.plan.margin_width)
        if m > self.plan.margin_tol:
            raise GeometryError(
                f"comoving run: boundary mass {m:.3e} exceeds {self.plan.margin_tol}")


def comoving_step(psi: Field2D, t: float, dt: float, potential_value,
                  params: StarkParams, v_vec,
                  plan: Optional[EvolutionPlan] = None) -> Field2D:
    """One Strang step of the comoving equation from t to t + dt."""
    plan = plan or EvolutionPlan(scalar_compensation=False, dtype=psi.data.dtype)
    eng = ComovingEngine(psi.grid, params, v_vec, potential_value, plan)
    mu = params.mu
    dtype = np.dtype(plan.dtype)
    data = psi.data.astype(dtype, copy=True)
    data = _ifft2(eng._kinetic_phase(dt / (4 * mu), dtype) * _fft2(data))
    if potential_value is not None:
        phase, _ = eng._potential_phase(t + dt / 2, dt, dtype)
        data *= phase
    data = _ifft2(eng._kinetic_phase(dt / (4 * mu), dtype) * _fft2(data))
    return Field2D(psi.grid, data)


def evolve(psi: Field2D, t0: float, t1: float, plan: EvolutionPlan,
           params: StarkParams, potential_value=None, v_vec=(0.0, 0.0),
           potential_reach: float = math.inf) -> Field2D:
    """Plan-dispatched evolution from t0 to t1.

    gauge "lab_free_exact": exact free Stark propagator (V must be absent).
    gauge "comoving": Strang stepping of the gauge-transformed equation.
    """
    if t1 == t0:
        return psi.copy()
    if plan.gauge == "lab_free_exact":
        if potential_value is not None:
            raise ValueError("lab_free_exact gauge is for V = 0 only")
        return free_evolve_exact(psi, t1 - t0, params)
    if plan.gauge != "comoving":
        raise ValueError(f"unknown gauge {plan.gauge!r}")
    if potential_value is None:
        # the gauge removes everything but the kinetic term
        a = (t1 - t0) / (2 * params.mu)
        px, py = psi.grid.momentum_axes()
        P2 = px[:, None] ** 2 + py[None, :] ** 2
        dtype = np.dtype(plan.dtype)
        spec = np.exp(-1j * a * P2).astype(dtype) * _fft2(psi.data.astype(dtype))
        return Field2D(psi.grid, _ifft2(spec))
    if t1 < t0:
        raise NotImplementedError("backward interacting evolution is not needed")
    eng = ComovingEngine(psi.grid, params, v_vec, potential_value, plan,
                         potential_reach=potential_reach)
    data, phase = eng.run(psi.data, t0, t1)
    return Field2D(psi.grid, data * np.exp(-1j * phase))
