"""
Band-limited tachyonlike wavepackets: construction, smoothed truncation,
envelope and carrier diagnostics, and group/phase velocity measurement.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import torch

from tachyon_lab.errors import ConfigError, DegenerateStateError, FitError, NoCarrierError
from tachyon_lab.lattice import (
    COMPLEX,
    REAL,
    DispersionTable,
    FieldState,
    LatticeSpec,
    ModeState,
    classify_modes,
    evolve_field,
    from_modes,
    spectral_transform,
    synthesize,
)

log = logging.getLogger(__name__)

#: relative level below which a windowed signal counts as numerical noise
NOISE_FLOOR = 1e-12


def group_velocity(k0: float, mass: float) -> float:
    """v_g = k0 / sqrt(k0^2 - m^2), superluminal for every normal carrier."""
    if not k0 > mass:
        raise ConfigError(f"carrier k0={k0} must exceed the mass {mass}")
    return k0 / math.sqrt(k0 ** 2 - mass ** 2)


def phase_velocity(k0: float, mass: float) -> float:
    return 1.0 / group_velocity(k0, mass)


@dataclass(frozen=True)
class WavepacketSpec:
    """Gaussian spectral profile A exp(-(k-k0)^2 / (2 dk^2)) e^{-i k x0} on [k_min, k_max].

    Args:
        k0: carrier wavevector
        delta_k: spectral width
        x0: initial centre of the envelope
        amplitude: spectral amplitude A
        k_min: lower band edge (default k0 - 6 delta_k)
        k_max: upper band edge (default k0 + 6 delta_k)
    """

    k0: float
    delta_k: float
    x0: float
    amplitude: float = 1.0
    k_min: Optional[float] = None
    k_max: Optional[float] = None

    def __post_init__(self):
        if not self.delta_k > 0:
            raise ConfigError(f"delta_k must be positive, got {self.delta_k!r}")
        if self.k_min is None:
            object.__setattr__(self, "k_min", self.k0 - 6 * self.delta_k)
        if self.k_max is None:
            object.__setattr__(self, "k_max", self.k0 + 6 * self.delta_k)
        # 1e-12 slack keeps exact multiples such as k0 - 3 dk admissible
        slack = 1e-12 * max(1.0, abs(self.k0))
        if self.k0 - self.k_min < 3 * self.delta_k - slack or self.k_max - self.k0 < 3 * self.delta_k - slack:
            raise ConfigError(
                f"band [{self.k_min}, {self.k_max}] must extend at least 3 delta_k around k0={self.k0}"
            )

    @property
    def width(self) -> float:
        """Spatial width 1/delta_k of the envelope."""
        return 1.0 / self.delta_k

    def capped(self, lattice: LatticeSpec) -> "WavepacketSpec":
        """Copy with k_max pulled below the Nyquist wavevector if needed."""
        nyquist = math.pi / lattice.spacing
        if self.k_max < nyquist:
            return self
        k_max = nyquist - lattice.dk
        log.info("k_max=%g capped below the Nyquist wavevector to %g", self.k_max, k_max)
        return WavepacketSpec(self.k0, self.delta_k, self.x0, self.amplitude, self.k_min, k_max)

    def with_amplitude(self, amplitude: float) -> "WavepacketSpec":
        return WavepacketSpec(self.k0, self.delta_k, self.x0, amplitude, self.k_min, self.k_max)

    def with_center(self, x0: float) -> "WavepacketSpec":
        return WavepacketSpec(self.k0, self.delta_k, x0, self.amplitude, self.k_min, self.k_max)


@dataclass(frozen=True)
class TruncationSpec:
    """Smoothed step 1 / (1 + exp(-(x - cut_position) / smoothing_length))."""

    smoothing_length: float
    cut_position: float = 0.0

    def __post_init__(self):
        if not self.smoothing_length > 0:
            raise ConfigError(f"smoothing_length must be positive, got {self.smoothing_length!r}")

    def step(self, positions: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid((positions - self.cut_position) / self.smoothing_length)

    def check_scales(self, lattice: LatticeSpec, spec: WavepacketSpec) -> bool:
        """Warn unless the smoothing is shorter than every other length scale."""
        bound = min(1.0 / spec.k_max, 1.0 / (10 * spec.delta_k), 20 * lattice.spacing)
        if self.smoothing_length < bound:
            return True
        message = f"smoothing length {self.smoothing_length} is not below the smallest scale {bound:.4g}"
        log.warning(message)
        warnings.warn(message, RuntimeWarning)
        return False


def wavepacket_modes(lattice: LatticeSpec, spec: WavepacketSpec, mass: float) -> ModeState:
    """Spectral amplitudes of the right-moving packet, zero outside the band."""
    spec = spec.capped(lattice)
    if spec.k_min <= mass:
        raise ConfigError(f"band [{spec.k_min}, {spec.k_max}] touches the unstable band |k| <= {mass}")
    disp = classify_modes(lattice, mass)
    k = lattice.mode_wavevectors
    band = (k >= spec.k_min) & (k <= spec.k_max)
    if not disp.normal[band].all():
        raise ConfigError("wavepacket band must lie inside the normal modes")

    profile = spec.amplitude * torch.exp(-((k - spec.k0) ** 2) / (2 * spec.delta_k ** 2))
    g0 = torch.where(band, profile, torch.zeros_like(k)).to(COMPLEX) * torch.exp(-1j * k * spec.x0)

    partner = lattice.partner_index
    phi_k = math.sqrt(2 * math.pi) * g0
    phi_k = phi_k + phi_k[partner].conj()
    pi_k = -1j * disp.omega * math.sqrt(2 * math.pi) * g0
    pi_k = pi_k + pi_k[partner].conj()
    return ModeState(0.0, phi_k, pi_k)


def build_wavepacket(lattice: LatticeSpec, spec: WavepacketSpec, mass: float) -> FieldState:
    return from_modes(wavepacket_modes(lattice, spec, mass), lattice)


def truncate(state: FieldState, trunc: TruncationSpec, lattice: LatticeSpec) -> FieldState:
    """Multiply phi and pi by the smoothed step, keeping the forward tail."""
    lattice.check_length(state.phi, "phi")
    step = trunc.step(lattice.positions)
    return FieldState(state.time, step * state.phi, step * state.pi)


def mirror_packets(state: FieldState) -> Tuple[FieldState, FieldState, FieldState]:
    """The R, L, D triple: (phi, pi), (phi, -pi) and (-phi, pi)."""
    right = state
    left = FieldState(state.time, state.phi.clone(), -state.pi)
    down = FieldState(state.time, -state.phi, state.pi.clone())
    return right, left, down


def kept_fraction(original: FieldState, truncated: FieldState) -> float:
    """Share of sum phi^2 surviving the truncation."""
    total = (original.phi ** 2).sum().item()
    if total == 0:
        raise DegenerateStateError("kept fraction of a zero field is undefined")
    return (truncated.phi ** 2).sum().item() / total


def _analytic_weights(lattice: LatticeSpec) -> torch.Tensor:
    n = torch.arange(lattice.num_points) - lattice.num_points // 2
    weights = 2 * (n > 0).to(REAL)
    weights[n == 0] = 1.0
    weights[0] = 1.0  # Nyquist
    return weights


def analytic_signal(values: torch.Tensor, lattice: LatticeSpec, derivative: bool = False) -> torch.Tensor:
    """Complex signal whose real part is ``values``; optionally its x-derivative."""
    spectrum = _analytic_weights(lattice) * spectral_transform(values, lattice)
    if derivative:
        spectrum = 1j * lattice.mode_wavevectors * spectrum
    return synthesize(spectrum, lattice)


def envelope(state: FieldState, lattice: LatticeSpec) -> torch.Tensor:
    return analytic_signal(state.phi, lattice).abs()


def _window_mask(lattice: LatticeSpec, window: Sequence[float]) -> torch.Tensor:
    x_a, x_b = window
    if not x_a < x_b:
        raise ConfigError(f"window [{x_a}, {x_b}] is empty")
    mask = (lattice.positions >= x_a) & (lattice.positions <= x_b)
    if mask.sum() < 3:
        raise ConfigError(f"window [{x_a}, {x_b}] holds fewer than three lattice sites")
    return mask


def envelope_centroid(state: FieldState, lattice: LatticeSpec, window: Sequence[float]) -> float:
    """Centroid of envelope^2 restricted to ``window``."""
    mask = _window_mask(lattice, window)
    weight = envelope(state, lattice)[mask] ** 2
    peak = weight.max()
    if peak == 0:
        raise FitError(f"no envelope inside window {tuple(window)} at t={state.time}")
    if max(weight[0], weight[-1]) > 1e-3 * peak:
        raise FitError(f"wavepacket peak exits window {tuple(window)} at t={state.time}")
    x = lattice.positions[mask]
    return ((x * weight).sum() / weight.sum()).item()


def _linear_fit(t: torch.Tensor, y: torch.Tensor) -> Tuple[float, float, float]:
    design = torch.stack([t, torch.ones_like(t)], dim=1)
    solution = torch.linalg.lstsq(design, y.unsqueeze(1)).solution.squeeze(1)
    residual = y - design @ solution
    return solution[0].item(), solution[1].item(), residual.pow(2).mean().sqrt().item()


def track_group_velocity(
    states: Sequence[FieldState], lattice: LatticeSpec, window: Sequence[float]
) -> Tuple[float, float]:
    """Least-squares speed of the envelope centroid; returns (velocity, rms residual)."""
    if len(states) < 3:
        raise FitError(f"need at least 3 states to fit a velocity, got {len(states)}")
    times = torch.tensor([s.time for s in states], dtype=REAL)
    distinct = torch.unique(times).numel()
    if distinct < 3:
        raise FitError(f"need states at 3 distinct times to fit a velocity, got {distinct}")
    centres = torch.tensor([envelope_centroid(s, lattice, window) for s in states], dtype=REAL)
    slope, _, residual = _linear_fit(times, centres)
    log.debug("group velocity fit over %d states: %.8g (rms %.3g)", len(states), slope, residual)
    return slope, residual


def _bump(lattice: LatticeSpec, center: float, half_width: float) -> torch.Tensor:
    if not half_width > 0:
        raise ConfigError(f"half_width must be positive, got {half_width!r}")
    x = lattice.positions
    if center - half_width < x[0] or center + half_width > x[-1]:
        raise ConfigError(f"window {center} +/- {half_width} leaves the lattice")
    u = (x - center) / half_width
    inside = u.abs() < 1
    safe = torch.where(inside, u, torch.zeros_like(u))
    return torch.where(inside, torch.exp(1 - 1 / (1 - safe ** 2)), torch.zeros_like(u))


def _windowed_signal(
    state: FieldState, lattice: LatticeSpec, center: float, half_width: float
) -> Tuple[torch.Tensor, torch.Tensor]:
    taper = _bump(lattice, center, half_width)
    windowed = taper * state.phi
    floor = NOISE_FLOOR * state.phi.abs().max().item()
    if windowed.abs().max().item() <= floor:
        raise NoCarrierError(f"no carrier present around x={center} at t={state.time}")
    return analytic_signal(windowed, lattice), analytic_signal(windowed, lattice, derivative=True)


def local_wavevector(state: FieldState, lattice: LatticeSpec, center: float, half_width: float) -> float:
    """Median phase gradient of the locally windowed analytic signal.

    A smooth compact bump isolates the window, so fields outside it (for
    example an exponentially large bulk) do not leak into the estimate.
    """
    core = (lattice.positions - center).abs() <= half_width / 2
    if core.sum() < 3:
        raise ConfigError(f"half_width {half_width} covers fewer than three sites around x={center}")
    signal, slope = _windowed_signal(state, lattice, center, half_width)
    magnitude = signal.abs()
    core = core & (magnitude > 1e-3 * magnitude[core].max())
    gradient = (signal.conj() * slope).imag / magnitude ** 2
    return gradient[core].median().item()


def measure_phase_velocity(
    state: FieldState,
    lattice: LatticeSpec,
    disp: DispersionTable,
    x_ref: float,
    half_width: float,
    samples: int = 5,
    step: Optional[float] = None,
) -> Tuple[float, float]:
    """Crest speed at ``x_ref``: returns (v_phase, measured frequency).

    The carrier phase at ``x_ref`` is followed over a few short exact steps
    (about half a radian each) and fitted linearly in time; dividing the
    frequency by the local wavevector gives the crest speed.
    """
    k_local = local_wavevector(state, lattice, x_ref, half_width)
    if step is None:
        omega_guess = math.sqrt(max(k_local ** 2 - disp.mass ** 2, 1e-12))
        step = 0.5 / omega_guess
    index = int(torch.argmin((lattice.positions - x_ref).abs()))
    phases = []
    for j in range(samples):
        sampled = evolve_field(state, lattice, disp, j * step) if j else state
        signal, _ = _windowed_signal(sampled, lattice, x_ref, half_width)
        phases.append(torch.angle(signal[index]))
    phases = torch.stack(phases)
    steps = torch.diff(phases)
    unwrapped = torch.cat([phases[:1], phases[0] + torch.cumsum(torch.atan2(torch.sin(steps), torch.cos(steps)), 0)])
    times = step * torch.arange(samples, dtype=REAL)
    slope, _, _ = _linear_fit(times, unwrapped)
    frequency = -slope
    return frequency / k_local, frequency


def band_energy_split(modes: ModeState, disp: DispersionTable) -> Tuple[float, float]:
    """Normal and unstable shares of |phi_k|^2 + |pi_k|^2 / max(|omega_k|, m)^2.

    Critical modes count as unstable.
    """
    scale = torch.clamp(disp.abs_frequency(), min=disp.mass)
    weight = modes.phi_k.abs() ** 2 + modes.pi_k.abs() ** 2 / scale ** 2
    total = weight.sum().item()
    if total == 0:
        raise DegenerateStateError("band split of a zero state is undefined")
    unstable = weight[~disp.normal].sum().item() / total
    return 1.0 - unstable, unstable


def reconstruction_error(
    original: FieldState, truncated: FieldState, lattice: LatticeSpec, window: Sequence[float]
) -> float:
    """Relative L2 distance of the two fields over ``window``."""
    mask = _window_mask(lattice, window)
    reference = original.phi[mask].norm().item()
    if reference == 0:
        raise DegenerateStateError(f"reference field vanishes on window {tuple(window)}")
    return (truncated.phi[mask] - original.phi[mask]).norm().item() / reference
