"""
Retarded Green functions of phi_tt = phi_xx + m^2 phi and real-space propagation.

    G~(x, t) = 1/2 theta(t - |x|) I_0(m s),          s = sqrt(t^2 - x^2)
    G(x, t)  = d_t G~ = 1/2 [delta(x - t) + delta(x + t)] + 1/2 theta(t - |x|) (m t / s) I_1(m s)

so that phi(x, t) = int dx' [G(x - x', t) phi_0(x') + G~(x - x', t) pi_0(x')].
The delta part of G is applied analytically; the interior is integrated with
the trapezoidal rule on panels that end on the light cone, plus the leading
Euler-Maclaurin end correction.  Both kernels vanish identically outside the
light cone.
"""
import logging
import math
from dataclasses import dataclass
from typing import Union

import torch
from torch.nn import functional as F

from tachyon_lab.errors import ConfigError, DomainMarginError, WraparoundError
from tachyon_lab.lattice import (
    REAL,
    FieldState,
    LatticeSpec,
    classify_modes,
    evolve_field,
    spectral_derivative,
    spectral_transform,
    synthesize,
)
from tachyon_lab.special import bessel_i
from tachyon_lab.wavepackets import WavepacketSpec, group_velocity

log = logging.getLogger(__name__)

#: causality regions stay this many smoothing lengths clear of the cut
SMOOTHING_MARGIN = 5.0

Number = Union[float, torch.Tensor]


@dataclass(frozen=True, eq=False)
class GreenKernel:
    """Samples of G~ and of the interior part of G on the lattice positions."""

    mass: float
    time: float
    gtilde_samples: torch.Tensor
    g_bulk_samples: torch.Tensor
    lightcone_weight: float


def _cone(x: torch.Tensor, t: float):
    inside = x.abs() <= t
    s = torch.sqrt(torch.clamp(t ** 2 - x ** 2, min=0.0))
    return inside, s


def gtilde(x: Number, t: float, mass: float) -> Number:
    """G~(x, t) = 1/2 theta(t - |x|) I_0(m sqrt(t^2 - x^2))."""
    if t < 0:
        raise ConfigError(f"retarded kernels need t >= 0, got {t}")
    scalar = not isinstance(x, torch.Tensor)
    x = torch.as_tensor(x, dtype=REAL)
    inside, s = _cone(x, t)
    values = torch.where(inside, 0.5 * bessel_i(0, mass * s), torch.zeros_like(x))
    return values.item() if scalar else values


def g_kernel(x: Number, t: float, mass: float) -> Number:
    """Interior part 1/2 theta(t - |x|) (m t / s) I_1(m s) of G = d_t G~."""
    if t < 0:
        raise ConfigError(f"retarded kernels need t >= 0, got {t}")
    scalar = not isinstance(x, torch.Tensor)
    x = torch.as_tensor(x, dtype=REAL)
    inside, s = _cone(x, t)
    z = mass * s
    tiny = z < 1e-6
    safe_s = torch.where(tiny, torch.ones_like(s), s)
    # I_1(z)/s -> m/2 (1 + z^2/8) as z -> 0
    ratio = torch.where(tiny, 0.5 * mass * (1 + z ** 2 / 8), bessel_i(1, z) / safe_s)
    values = torch.where(inside, 0.5 * mass * t * ratio, torch.zeros_like(x))
    return values.item() if scalar else values


def green_kernel(lattice: LatticeSpec, t: float, mass: float) -> GreenKernel:
    return GreenKernel(
        float(mass),
        float(t),
        gtilde(lattice.positions, t, mass),
        g_kernel(lattice.positions, t, mass),
        0.5,
    )


def _shifted(values: torch.Tensor, lattice: LatticeSpec, shift: float) -> torch.Tensor:
    """values(x_j + shift) by a spectral shift.

    Exact for band-limited data; callers guarantee that nothing wraps around.
    """
    phase = torch.exp(1j * lattice.mode_wavevectors * shift)
    return synthesize(phase * spectral_transform(values, lattice), lattice).real


def _convolve(kernel: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
    # periodic, like the lattice; the kernel is even so correlation equals convolution
    half = (kernel.numel() - 1) // 2
    padded = F.pad(values.view(1, 1, -1), (half, half), mode="circular")
    return F.conv1d(padded, kernel.view(1, 1, -1)).view(-1)


def _cone_step(
    phi0: torch.Tensor, pi0: torch.Tensor, t: float, mass: float, lattice: LatticeSpec, on_grid: bool
) -> torch.Tensor:
    """int dx' [G(x - x', t) phi0(x') + G~(x - x', t) pi0(x')] for one step.

    With ``on_grid`` t is a multiple of the spacing and the panels are the
    lattice cells; otherwise a single panel spans the light cone.  The
    trapezoidal sum gets the leading Euler-Maclaurin end correction, which
    only needs the kernels and their slopes on the light cone:
    G_bulk = m^2 t / 4, G~ = 1/2, dG_bulk/dy = -+ m^4 t^2 / 16, dG~/dy = -+ m^2 t / 4.
    """
    dx = lattice.spacing
    if on_grid:
        reach = int(round(t / dx))
        step = dx
        offsets = dx * torch.arange(-(reach - 1), reach, dtype=REAL)
        interior = _convolve(dx * g_kernel(offsets, t, mass), phi0) + _convolve(dx * gtilde(offsets, t, mass), pi0)
    else:
        step = 2 * t
        interior = torch.zeros_like(phi0)

    dphi0 = spectral_derivative(phi0, lattice)
    dpi0 = spectral_derivative(pi0, lattice)
    phi_a, phi_b = _shifted(phi0, lattice, -t), _shifted(phi0, lattice, t)
    pi_a, pi_b = _shifted(pi0, lattice, -t), _shifted(pi0, lattice, t)
    dphi_a, dphi_b = _shifted(dphi0, lattice, -t), _shifted(dphi0, lattice, t)
    dpi_a, dpi_b = _shifted(dpi0, lattice, -t), _shifted(dpi0, lattice, t)

    g_edge = 0.25 * mass ** 2 * t
    ends = g_edge * (phi_a + phi_b) + 0.5 * (pi_a + pi_b)
    slope_jump = (
        -(mass ** 4) * t ** 2 / 16 * (phi_a + phi_b)
        + g_edge * (dphi_b - dphi_a)
        - g_edge * (pi_a + pi_b)
        + 0.5 * (dpi_b - dpi_a)
    )
    quadrature = interior + 0.5 * step * ends - step ** 2 / 12 * slope_jump
    return quadrature + 0.5 * (phi_a + phi_b)


def _step(state: FieldState, t: float, mass: float, lattice: LatticeSpec, on_grid: bool) -> FieldState:
    # pi solves the same equation with data (pi_0, phi_0'' + m^2 phi_0)
    acceleration = spectral_derivative(state.phi, lattice, order=2) + mass ** 2 * state.phi
    phi = _cone_step(state.phi, state.pi, t, mass, lattice, on_grid)
    pi = _cone_step(state.pi, acceleration, t, mass, lattice, on_grid)
    return FieldState(state.time + t, phi, pi)


def _check_wraparound(t: float, lattice: LatticeSpec) -> None:
    if 2 * t >= lattice.domain_length - lattice.spacing:
        raise WraparoundError(
            f"light cone of width {2 * t:.4g} wraps around the periodic lattice of length {lattice.domain_length:.4g}"
        )


def propagate_green(state0: FieldState, t: float, mass: float, lattice: LatticeSpec) -> FieldState:
    """Evolve ``state0`` by ``t`` through the closed-form kernels.

    The time is split into a whole number of lattice spacings, integrated on
    the lattice cells, and a remainder shorter than one spacing.  Sums run
    periodically, so the result refers to the same periodic lattice as the
    spectral evolution; :class:`WraparoundError` is raised once the light cone
    of a single site would cover the whole period.
    """
    if t < 0 or not math.isfinite(t):
        raise ConfigError(f"propagation time must be finite and non-negative, got {t}")
    if mass < 0:
        raise ConfigError(f"mass must be non-negative, got {mass}")
    lattice.check_length(state0.phi, "phi")
    if t == 0:
        return FieldState(state0.time, state0.phi.clone(), state0.pi.clone())
    _check_wraparound(t, lattice)
    if not (state0.phi.any() or state0.pi.any()):
        return FieldState.zeros(lattice, state0.time + t)

    dx = lattice.spacing
    cells = math.floor(t / dx + 1e-9)
    rest = t - cells * dx
    state = state0
    if cells:
        state = _step(state, cells * dx, mass, lattice, on_grid=True)
    if rest > 1e-9 * dx:
        state = _step(state, rest, mass, lattice, on_grid=False)
    log.debug("green propagation over t=%g: %d cells and a remainder of %.3g", t, cells, rest)
    return FieldState(state0.time + t, state.phi, state.pi)


def domain_margin(spec: WavepacketSpec, t_max: float, lattice: LatticeSpec, mass: float) -> float:
    """Room left on the periodic lattice once the packet and both light-cone
    fronts have travelled for ``t_max``; negative means wraparound risk."""
    travel = abs(spec.x0) + group_velocity(spec.k0, mass) * t_max + t_max + 8.0 / spec.delta_k
    return lattice.domain_length / 2 - travel


@dataclass(frozen=True)
class CausalityReport:
    """Regime (a) and (c) deviations of a truncated evolution at one time."""

    time: float
    peak: float
    regime_a_max: float
    regime_c_max: float
    margin: float

    @property
    def regime_a_relative(self) -> float:
        return self.regime_a_max / self.peak if self.peak else float("nan")

    @property
    def regime_c_relative(self) -> float:
        return self.regime_c_max / self.peak if self.peak else float("nan")


def causality_report(
    original0: FieldState,
    truncated0: FieldState,
    t: float,
    mass: float,
    lattice: LatticeSpec,
    cut: float,
    smoothing_length: float,
) -> CausalityReport:
    """Evolve both states spectrally and measure the two causal regions.

    Regime (a) is x < cut - t - margin where the truncated field must vanish;
    regime (c) is x > cut + t + margin where it must equal the original.  The
    margin is five smoothing lengths.  Relative values refer to the peak of the
    evolved truncated field.  Values are reported, never asserted.
    """
    disp = classify_modes(lattice, mass)
    original = evolve_field(original0, lattice, disp, t)
    truncated = evolve_field(truncated0, lattice, disp, t)
    margin = SMOOTHING_MARGIN * smoothing_length
    x = lattice.positions
    left = x < cut - t - margin
    right = x > cut + t + margin
    if not left.any() or not right.any():
        raise DomainMarginError(f"causal regions at t={t} with margin {margin} do not fit on the lattice")

    peak = truncated.phi.abs().max().item()
    regime_a = truncated.phi[left].abs().max().item()
    regime_c = (truncated.phi[right] - original.phi[right]).abs().max().item()
    log.debug("causality at t=%g: regime a %.3g, regime c %.3g, peak %.3g", t, regime_a, regime_c, peak)
    return CausalityReport(float(t), peak, regime_a, regime_c, margin)
