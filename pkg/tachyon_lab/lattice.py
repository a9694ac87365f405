"""
Periodic 1-D lattice, discrete Fourier analysis and exact per-mode evolution
of the linearized field obeying  phi_tt = phi_xx + m^2 phi.

Transform convention (used everywhere in the package)::

    phi_k = dx / sqrt(2 pi) * sum_j phi(x_j) exp(-i k x_j)
    phi(x_j) = dk / sqrt(2 pi) * sum_n phi_k exp(+i k x_j)

so that sums over modes weighted by ``dk`` approximate the continuum k-integral
and ``sum_j dx |phi_j|^2 == sum_n dk |phi_k|^2`` (Parseval).  Modes are stored in
centred order, index ``i`` holding ``n = i - N/2``; the partner of index ``i``
under k -> -k is ``(N - i) % N`` and the Nyquist mode pairs with itself.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Tuple

import torch

from tachyon_lab.errors import ConfigError, InstabilityOverflowError, LatticeMismatchError

log = logging.getLogger(__name__)

REAL = torch.float64
COMPLEX = torch.complex128

#: amplitudes above this bound abort evolution, leaving room for squaring
OVERFLOW_BOUND = 1e200
MAX_POINTS = 1 << 24


class ModeClass(IntEnum):
    NORMAL = 0
    UNSTABLE = 1
    CRITICAL = 2


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Uniform periodic grid on [-L/2, L/2) together with its wavevector table.

    Args:
        num_points: number of lattice sites N
        domain_length: period L of the domain
    """

    num_points: int
    domain_length: float
    spacing: float = field(init=False)
    positions: torch.Tensor = field(init=False, repr=False)
    mode_wavevectors: torch.Tensor = field(init=False, repr=False)

    def __post_init__(self):
        n, length = self.num_points, self.domain_length
        if not isinstance(n, int) or n < 8 or n > MAX_POINTS:
            raise ConfigError(f"num_points must be an integer in [8, {MAX_POINTS}], got {n!r}")
        if not math.isfinite(length) or length <= 0:
            raise ConfigError(f"domain_length must be positive and finite, got {length!r}")
        if n % 2:
            raise ConfigError(f"num_points must be even, got {n}")
        if n & (n - 1):
            log.info("num_points=%d is not a power of two; FFTs will be slower", n)
        dx = length / n
        object.__setattr__(self, "spacing", dx)
        object.__setattr__(self, "positions", -length / 2 + dx * torch.arange(n, dtype=REAL))
        index = torch.arange(-n // 2, n // 2, dtype=REAL)
        object.__setattr__(self, "mode_wavevectors", (2 * math.pi / length) * index)

    @property
    def dk(self) -> float:
        return 2 * math.pi / self.domain_length

    @property
    def origin(self) -> float:
        return -self.domain_length / 2

    @property
    def partner_index(self) -> torch.Tensor:
        """Index of the -k partner for every mode (Nyquist maps to itself)."""
        n = self.num_points
        return (n - torch.arange(n)) % n

    def check_length(self, values: torch.Tensor, what: str = "array") -> None:
        if values.shape != (self.num_points,):
            raise LatticeMismatchError(
                f"{what} has shape {tuple(values.shape)}, lattice expects ({self.num_points},)"
            )


@dataclass(frozen=True, eq=False)
class DispersionTable:
    """Per-mode classification of omega_k^2 = k^2 - m^2.

    ``omega`` is filled for normal modes and ``kappa`` for unstable ones; both
    are zero elsewhere.  Critical modes sit within ``critical_tolerance`` of |k| = m.
    """

    mass: float
    wavevectors: torch.Tensor
    mode_class: torch.Tensor
    omega: torch.Tensor
    kappa: torch.Tensor
    critical_tolerance: float

    @property
    def normal(self) -> torch.Tensor:
        return self.mode_class == ModeClass.NORMAL

    @property
    def unstable(self) -> torch.Tensor:
        return self.mode_class == ModeClass.UNSTABLE

    @property
    def critical(self) -> torch.Tensor:
        return self.mode_class == ModeClass.CRITICAL

    def abs_frequency(self, critical_frequency: float = None) -> torch.Tensor:
        """|omega_k|: omega on normal modes, kappa on unstable ones and a
        regularized value (default m) on critical modes."""
        reg = self.mass if critical_frequency is None else critical_frequency
        freq = self.omega + self.kappa
        return torch.where(self.critical, torch.full_like(freq, reg), freq)


@dataclass(frozen=True, eq=False)
class FieldState:
    """Real-space field phi(x_j, t) and its conjugate momentum pi = d_t phi."""

    time: float
    phi: torch.Tensor
    pi: torch.Tensor

    def __post_init__(self):
        if self.phi.shape != self.pi.shape or self.phi.dim() != 1:
            raise LatticeMismatchError(
                f"phi {tuple(self.phi.shape)} and pi {tuple(self.pi.shape)} must be equal 1-D arrays"
            )
        if not (torch.isfinite(self.phi).all() and torch.isfinite(self.pi).all()):
            raise InstabilityOverflowError(f"field state at t={self.time} holds non-finite values")

    @classmethod
    def zeros(cls, lattice: LatticeSpec, time: float = 0.0) -> "FieldState":
        zero = torch.zeros(lattice.num_points, dtype=REAL)
        return cls(time, zero, zero.clone())


@dataclass(frozen=True, eq=False)
class ModeState:
    """Spectral representation (phi_k, pi_k) at a fixed time, centred order."""

    time: float
    phi_k: torch.Tensor
    pi_k: torch.Tensor

    def reality_defect(self, lattice: LatticeSpec) -> float:
        """Largest violation of phi_{-k} = conj(phi_k) over both arrays."""
        partner = lattice.partner_index
        defect = 0.0
        for values in (self.phi_k, self.pi_k):
            defect = max(defect, (values[partner] - values.conj()).abs().max().item())
        return defect


def build_lattice(num_points: int, domain_length: float) -> LatticeSpec:
    if isinstance(num_points, float) and num_points.is_integer():
        num_points = int(num_points)
    return LatticeSpec(num_points, float(domain_length))


def classify_modes(lattice: LatticeSpec, mass: float, eps_crit: float = None) -> DispersionTable:
    """Sort every lattice mode into the normal, unstable or critical band."""
    if not mass > 0 or not math.isfinite(mass):
        raise ConfigError(f"mass must be positive, got {mass!r}")
    if eps_crit is None:
        eps_crit = 1e-12 * mass ** 2
    if eps_crit < 0:
        raise ConfigError(f"critical tolerance must be non-negative, got {eps_crit!r}")

    k = lattice.mode_wavevectors
    gap = k ** 2 - mass ** 2
    mode_class = torch.full(k.shape, int(ModeClass.CRITICAL), dtype=torch.int64)
    mode_class[gap > eps_crit] = ModeClass.NORMAL
    mode_class[-gap > eps_crit] = ModeClass.UNSTABLE
    omega = torch.where(mode_class == ModeClass.NORMAL, gap.clamp(min=0).sqrt(), torch.zeros_like(k))
    kappa = torch.where(mode_class == ModeClass.UNSTABLE, (-gap).clamp(min=0).sqrt(), torch.zeros_like(k))
    log.debug(
        "classified %d modes: %d normal, %d unstable, %d critical",
        k.numel(),
        int((mode_class == ModeClass.NORMAL).sum()),
        int((mode_class == ModeClass.UNSTABLE).sum()),
        int((mode_class == ModeClass.CRITICAL).sum()),
    )
    return DispersionTable(float(mass), k, mode_class, omega, kappa, float(eps_crit))


def _forward(values: torch.Tensor, lattice: LatticeSpec) -> torch.Tensor:
    spectrum = torch.fft.fftshift(torch.fft.fft(values.to(COMPLEX)))
    phase = torch.exp(-1j * lattice.mode_wavevectors * lattice.origin)
    return (lattice.spacing / math.sqrt(2 * math.pi)) * phase * spectrum


def _inverse(values: torch.Tensor, lattice: LatticeSpec) -> torch.Tensor:
    phase = torch.exp(1j * lattice.mode_wavevectors * lattice.origin)
    scale = lattice.dk * lattice.num_points / math.sqrt(2 * math.pi)
    return scale * torch.fft.ifft(torch.fft.ifftshift(phase * values))


def spectral_transform(values: torch.Tensor, lattice: LatticeSpec) -> torch.Tensor:
    """Forward transform of a single array in the package convention."""
    lattice.check_length(values)
    return _forward(values, lattice)


def synthesize(spectrum: torch.Tensor, lattice: LatticeSpec) -> torch.Tensor:
    """Inverse transform returning the complex real-space signal."""
    lattice.check_length(spectrum, "spectrum")
    return _inverse(spectrum.to(COMPLEX), lattice)


def to_modes(state: FieldState, lattice: LatticeSpec) -> ModeState:
    lattice.check_length(state.phi, "phi")
    return ModeState(state.time, _forward(state.phi, lattice), _forward(state.pi, lattice))


def from_modes(modes: ModeState, lattice: LatticeSpec) -> FieldState:
    lattice.check_length(modes.phi_k, "phi_k")
    lattice.check_length(modes.pi_k, "pi_k")
    return FieldState(modes.time, _inverse(modes.phi_k, lattice).real, _inverse(modes.pi_k, lattice).real)


def spectral_derivative(values: torch.Tensor, lattice: LatticeSpec, order: int = 1) -> torch.Tensor:
    """d^order/dx^order by multiplication with (ik)^order; real input gives real output.

    For odd orders the Nyquist component is dropped (its derivative is not real).
    """
    lattice.check_length(values)
    factor = (1j * lattice.mode_wavevectors) ** order
    if order % 2:
        factor[0] = 0
    return _inverse(factor * _forward(values, lattice), lattice).real


def evolution_matrix(disp: DispersionTable, dt: float) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Entries (a, b, c, d) of the real 2x2 map (phi, pi) -> (a phi + b pi, c phi + d pi).

    Normal modes rotate, unstable modes follow the continuation omega -> i kappa
    and critical modes move freely.
    """
    if not math.isfinite(dt):
        raise ConfigError(f"time step must be finite, got {dt!r}")
    omega, kappa = disp.omega, disp.kappa
    ones = torch.ones_like(omega)

    safe_omega = torch.where(disp.normal, omega, ones)
    safe_kappa = torch.where(disp.unstable, kappa, ones)
    cos, sin = torch.cos(omega * dt), torch.sin(omega * dt)
    cosh, sinh = torch.cosh(kappa * dt), torch.sinh(kappa * dt)

    a = torch.where(disp.normal, cos, torch.where(disp.unstable, cosh, ones))
    b = torch.where(disp.normal, sin / safe_omega, torch.where(disp.unstable, sinh / safe_kappa, ones * dt))
    c = torch.where(disp.normal, -omega * sin, torch.where(disp.unstable, kappa * sinh, torch.zeros_like(omega)))
    return a, b, c, a.clone()


def evolution_determinant(disp: DispersionTable, dt: float) -> torch.Tensor:
    """det M_k(dt) evaluated without cancellation (exactly one in exact arithmetic)."""
    theta = disp.omega * dt
    growth = disp.kappa * dt
    normal = torch.cos(theta) ** 2 + torch.sin(theta) ** 2
    unstable = torch.exp(growth) * torch.exp(-growth)
    return torch.where(disp.normal, normal, torch.where(disp.unstable, unstable, torch.ones_like(theta)))


def _guard(values: torch.Tensor, disp: DispersionTable, dt: float, what: str) -> None:
    bad = ~torch.isfinite(values) | (values.abs() > OVERFLOW_BOUND)
    if bad.any():
        index = int(torch.nonzero(bad)[0])
        raise InstabilityOverflowError(
            f"instability overflow in {what} of mode {index} "
            f"(k={disp.wavevectors[index].item():.6g}, kappa*dt={disp.kappa[index].item() * dt:.6g})"
        )


def _scale(coefficient: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
    # empty modes stay empty even where cosh/sinh overflowed to inf
    return torch.where(values == 0, torch.zeros_like(values), coefficient * values)


def evolve_modes(modes: ModeState, disp: DispersionTable, dt: float) -> ModeState:
    """Exact evolution of every mode over ``dt`` (negative values run backwards)."""
    if modes.phi_k.shape != disp.wavevectors.shape:
        raise LatticeMismatchError("mode state and dispersion table have different sizes")
    a, b, c, d = evolution_matrix(disp, dt)
    phi_k = _scale(a, modes.phi_k) + _scale(b, modes.pi_k)
    pi_k = _scale(c, modes.phi_k) + _scale(d, modes.pi_k)
    _guard(phi_k, disp, dt, "phi_k")
    _guard(pi_k, disp, dt, "pi_k")
    return ModeState(modes.time + dt, phi_k, pi_k)


def evolve_field(state: FieldState, lattice: LatticeSpec, disp: DispersionTable, dt: float) -> FieldState:
    return from_modes(evolve_modes(to_modes(state, lattice), disp, dt), lattice)


def quadratic_energy(state: FieldState, lattice: LatticeSpec, mass: float) -> float:
    """Quadrature of H = 1/2 int dx (pi^2 + (d_x phi)^2 - m^2 phi^2).

    The sum runs over lattice sites in index order; it may be negative.  The
    Nyquist mode, whose first derivative is not real, adds its gradient energy
    ``dk k_N^2 |phi_N|^2`` from the mode sum.
    """
    lattice.check_length(state.phi, "phi")
    grad = spectral_derivative(state.phi, lattice)
    density = state.pi ** 2 + grad ** 2 - mass ** 2 * state.phi ** 2
    phi_nyquist = _forward(state.phi, lattice)[0].abs().item()
    nyquist = lattice.dk * lattice.mode_wavevectors[0].item() ** 2 * phi_nyquist ** 2
    return 0.5 * (lattice.spacing * density.sum().item() + nyquist)


def mode_energy(modes: ModeState, disp: DispersionTable) -> float:
    """Mode-sum form 1/2 sum dk (|pi_k|^2 + (k^2 - m^2) |phi_k|^2) of the same energy."""
    k = disp.wavevectors
    dk = (k[1] - k[0]).item()
    density = modes.pi_k.abs() ** 2 + (k ** 2 - disp.mass ** 2) * modes.phi_k.abs() ** 2
    return 0.5 * dk * density.sum().item()
