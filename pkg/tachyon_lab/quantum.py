"""
Gaussian states of the decoupled lattice modes.

Every conjugate pair (k, -k) is reduced to two real oscillators with
coordinates Q = sqrt(2 dk) (Re phi_k, Im phi_k); self-conjugate modes (k = 0 and
Nyquist) give one oscillator Q = sqrt(dk) phi_k.  ``covariance[i]`` holds the
centred second moments [[V_phiphi, V_phipi], [V_phipi, V_pipi]] of each of
those quadratures (hbar = 1), shared by a mode and its partner.  Means are kept
as complex spectra in the package transform convention.

A state remembers the frame it started from (origin time, means and
covariances).  Evolution is a symplectic map, so overlaps of two states that
share an origin are evaluated there exactly; the materialized covariances at
the current time are still available and agree with the origin frame whenever
they are well conditioned.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
import torch

from tachyon_lab.errors import CovarianceMismatchError, DegenerateStateError, LatticeMismatchError, SymmetryError
from tachyon_lab.lattice import (
    COMPLEX,
    REAL,
    DispersionTable,
    FieldState,
    LatticeSpec,
    ModeState,
    _guard,
    classify_modes,
    evolution_determinant,
    evolution_matrix,
    evolve_field,
    evolve_modes,
    spectral_transform,
    synthesize,
    to_modes,
)
from tachyon_lab.wavepackets import (
    TruncationSpec,
    WavepacketSpec,
    analytic_signal,
    build_wavepacket,
    group_velocity,
    mirror_packets,
    truncate,
)

log = logging.getLogger(__name__)

#: relative tolerance for deciding that two covariance sets are equal
COVARIANCE_RTOL = 1e-9
#: relative tolerance on the reality condition of a displacement
SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class ModeGaussian:
    """One mode of a :class:`GaussianFieldState` viewed on its own."""

    mean_phi: complex
    mean_pi: complex
    second_moments: torch.Tensor

    @property
    def uncertainty(self) -> float:
        v = self.second_moments
        return (v[0, 0] * v[1, 1] - v[0, 1] ** 2).item()


@dataclass(frozen=True, eq=False)
class GaussianFieldState:
    """Product of per-mode Gaussians, indexed like :class:`ModeState`."""

    time: float
    disp: DispersionTable
    mean_phi: torch.Tensor
    mean_pi: torch.Tensor
    covariance: torch.Tensor
    origin_time: float
    origin_mean_phi: torch.Tensor
    origin_mean_pi: torch.Tensor
    origin_covariance: torch.Tensor
    critical_frequency: float

    @property
    def num_modes(self) -> int:
        return self.mean_phi.numel()

    @property
    def dk(self) -> float:
        k = self.disp.wavevectors
        return (k[1] - k[0]).item()

    @property
    def elapsed(self) -> float:
        return self.time - self.origin_time

    def mode(self, index: int) -> ModeGaussian:
        return ModeGaussian(
            complex(self.mean_phi[index]), complex(self.mean_pi[index]), self.covariance[index].clone()
        )

    def means(self) -> ModeState:
        return ModeState(self.time, self.mean_phi, self.mean_pi)


def _vacuum_covariance(disp: DispersionTable, critical_frequency: float) -> torch.Tensor:
    freq = disp.abs_frequency(critical_frequency)
    cov = torch.zeros(freq.numel(), 2, 2, dtype=REAL)
    cov[:, 0, 0] = 0.5 / freq
    cov[:, 1, 1] = 0.5 * freq
    return cov


def vacuum_state(disp: DispersionTable, critical_frequency: Optional[float] = None) -> GaussianFieldState:
    """False vacuum: per mode the oscillator ground state at |omega_k|.

    Unstable modes get the slowest-growing Gaussian (frequency kappa) since no
    ground state exists for them; critical modes use ``critical_frequency``,
    the mass by default.
    """
    reg = disp.mass if critical_frequency is None else float(critical_frequency)
    if not reg > 0:
        raise DegenerateStateError(f"critical frequency must be positive, got {reg!r}")
    zeros = torch.zeros(disp.wavevectors.numel(), dtype=COMPLEX)
    cov = _vacuum_covariance(disp, reg)
    return GaussianFieldState(0.0, disp, zeros, zeros.clone(), cov, 0.0, zeros.clone(), zeros.clone(), cov.clone(), reg)


def _check_symmetric(values: torch.Tensor, what: str) -> None:
    n = values.numel()
    partner = (n - torch.arange(n)) % n
    defect = (values[partner] - values.conj()).abs().max().item()
    scale = values.abs().max().item()
    if defect > SYMMETRY_RTOL * scale + 1e-300:
        raise SymmetryError(f"{what} violates {what}(-k) = conj({what}(k)) by {defect:.3g}")


def coherent_displace(
    state: GaussianFieldState, g: torch.Tensor, p: Optional[torch.Tensor] = None
) -> GaussianFieldState:
    """Shift the field means by ``g`` (and the momentum means by ``p``).

    Covariances are untouched.  The shift is carried back to the origin frame
    through the inverse evolution so both frames describe the same state.
    """
    n = state.num_modes
    g = torch.as_tensor(g).to(COMPLEX)
    p = torch.zeros(n, dtype=COMPLEX) if p is None else torch.as_tensor(p).to(COMPLEX)
    if g.shape != (n,) or p.shape != (n,):
        raise LatticeMismatchError(f"displacements must have shape ({n},)")
    _check_symmetric(g, "g")
    _check_symmetric(p, "p")

    if state.elapsed == 0:
        g0, p0 = g, p
    else:
        back = evolve_modes(ModeState(state.time, g, p), state.disp, -state.elapsed)
        g0, p0 = back.phi_k, back.pi_k
    return replace(
        state,
        mean_phi=state.mean_phi + g,
        mean_pi=state.mean_pi + p,
        origin_mean_phi=state.origin_mean_phi + g0,
        origin_mean_pi=state.origin_mean_pi + p0,
    )


def displacement_from_field(state: FieldState, lattice: LatticeSpec):
    """Mean spectra (g, p) whose coherent state reproduces ``state`` on average."""
    modes = to_modes(state, lattice)
    return modes.phi_k, modes.pi_k


def _conjugate(cov: torch.Tensor, a, b, c, d) -> torch.Tensor:
    v_ff, v_fp, v_pp = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
    out = torch.empty_like(cov)
    out[:, 0, 0] = a * a * v_ff + 2 * a * b * v_fp + b * b * v_pp
    out[:, 0, 1] = out[:, 1, 0] = a * c * v_ff + (a * d + b * c) * v_fp + b * d * v_pp
    out[:, 1, 1] = c * c * v_ff + 2 * c * d * v_fp + d * d * v_pp
    return out


def _same_dispersion(a: DispersionTable, b: DispersionTable) -> bool:
    return a is b or (
        a.mass == b.mass and torch.equal(a.wavevectors, b.wavevectors) and torch.equal(a.mode_class, b.mode_class)
    )


def _rebase(state: GaussianFieldState) -> GaussianFieldState:
    """Move the origin frame to the current time."""
    return replace(
        state,
        origin_time=state.time,
        origin_mean_phi=state.mean_phi,
        origin_mean_pi=state.mean_pi,
        origin_covariance=state.covariance,
    )


def evolve_gaussian(state: GaussianFieldState, disp: DispersionTable, dt: float) -> GaussianFieldState:
    """Means follow the classical mode evolution; covariances become M V M^T.

    The origin frame is only valid for a single dispersion, so evolving under a
    different table first moves it to the current time.
    """
    if disp.wavevectors.numel() != state.num_modes:
        raise LatticeMismatchError("Gaussian state and dispersion table have different sizes")
    if not _same_dispersion(disp, state.disp):
        log.debug("dispersion changed at t=%g (mass %g -> %g), rebasing", state.time, state.disp.mass, disp.mass)
        state = _rebase(state)
    means = evolve_modes(state.means(), disp, dt)
    a, b, c, d = evolution_matrix(disp, dt)
    cov = _conjugate(state.covariance, a, b, c, d)
    _guard(cov.reshape(cov.shape[0], -1).abs().amax(dim=1), disp, dt, "covariance")
    return replace(state, time=state.time + dt, disp=disp, mean_phi=means.phi_k, mean_pi=means.pi_k, covariance=cov)


def _determinant(cov: torch.Tensor) -> torch.Tensor:
    return cov[:, 0, 0] * cov[:, 1, 1] - cov[:, 0, 1] ** 2


def uncertainty_products(state: GaussianFieldState) -> torch.Tensor:
    """det V per mode, as det V(origin) * det M(elapsed)^2 so that exponentially
    grown covariances do not cancel catastrophically."""
    return _determinant(state.origin_covariance) * evolution_determinant(state.disp, state.elapsed) ** 2


def _mode_exponents(
    d_phi: torch.Tensor, d_pi: torch.Tensor, cov: torch.Tensor, det: torch.Tensor, dk: float
) -> torch.Tensor:
    """Per-mode contribution 1/8 dk z^H V^{-1} z to -ln|<a|b>|, z = (d_phi, d_pi)."""
    cross = (d_phi.conj() * d_pi).real
    quad = cov[:, 1, 1] * d_phi.abs() ** 2 - 2 * cov[:, 0, 1] * cross + cov[:, 0, 0] * d_pi.abs() ** 2
    return 0.125 * dk * quad / det


class OverlapResult(NamedTuple):
    """|<vac|psi>| with its exponent and the band split of that exponent."""

    overlap: float
    exponent: float
    normal: float
    unstable: float
    critical: float


def _same_covariance(a: torch.Tensor, b: torch.Tensor) -> bool:
    """Entry-wise agreement relative to the largest entry of each mode's block."""
    if a.shape != b.shape:
        return False
    scale = torch.maximum(a.abs(), b.abs()).amax(dim=(1, 2), keepdim=True)
    return bool(((a - b).abs() <= COVARIANCE_RTOL * scale).all())


def overlap_vacuum(state: GaussianFieldState, disp: Optional[DispersionTable] = None) -> OverlapResult:
    """|<vac|psi>| = exp(-1/4 sum_k dk (|omega_k| |g_k|^2 + |p_k|^2 / |omega_k|)).

    The sum runs over all lattice modes; grouped into independent (k, -k) pairs
    it reads exp(-1/2 sum_pairs dk |omega| |g|^2).  ``psi`` must carry the vacuum
    covariances at its current time.
    """
    disp = state.disp if disp is None else disp
    vac = _vacuum_covariance(disp, state.critical_frequency)
    if not _same_covariance(state.covariance, vac):
        raise CovarianceMismatchError("overlap_vacuum needs a coherent state of the vacuum covariances")
    per_mode = _mode_exponents(state.mean_phi, state.mean_pi, vac, _determinant(vac), state.dk)
    parts = [per_mode[mask].sum().item() for mask in (disp.normal, disp.unstable, disp.critical)]
    exponent = per_mode.sum().item()
    return OverlapResult(math.exp(-exponent), exponent, *parts)


def _times_match(a: GaussianFieldState, b: GaussianFieldState) -> bool:
    return abs(a.time - b.time) <= 1e-12 * max(1.0, abs(a.time))


def pairwise_exponent(a: GaussianFieldState, b: GaussianFieldState) -> float:
    """-ln|<a|b>| for two coherent states sharing covariances and time.

    States with a common origin frame and dispersion are compared in that frame.
    """
    if a.num_modes != b.num_modes:
        raise LatticeMismatchError("Gaussian states live on different lattices")
    if not _times_match(a, b):
        raise CovarianceMismatchError(f"states at different times {a.time} and {b.time}")
    if not _same_covariance(a.covariance, b.covariance):
        raise CovarianceMismatchError("coherent overlap needs equal covariances")
    shared_origin = (
        a.origin_time == b.origin_time
        and _same_dispersion(a.disp, b.disp)
        and _same_covariance(a.origin_covariance, b.origin_covariance)
    )
    if shared_origin:
        cov = a.origin_covariance
        d_phi, d_pi = a.origin_mean_phi - b.origin_mean_phi, a.origin_mean_pi - b.origin_mean_pi
        det = _determinant(cov)
    else:
        cov = a.covariance
        d_phi, d_pi = a.mean_phi - b.mean_phi, a.mean_pi - b.mean_pi
        det = uncertainty_products(a)
    return _mode_exponents(d_phi, d_pi, cov, det, a.dk).sum().item()


def materialized_exponent(a: GaussianFieldState, b: GaussianFieldState) -> float:
    """Same as :func:`pairwise_exponent` but always in the current-time frame."""
    if not (_times_match(a, b) and _same_covariance(a.covariance, b.covariance)):
        raise CovarianceMismatchError("coherent overlap needs equal covariances and times")
    d_phi, d_pi = a.mean_phi - b.mean_phi, a.mean_pi - b.mean_pi
    return _mode_exponents(d_phi, d_pi, a.covariance, uncertainty_products(a), a.dk).sum().item()


def pairwise_overlap(a: GaussianFieldState, b: GaussianFieldState) -> float:
    return math.exp(-pairwise_exponent(a, b))


def _quadratures(state: GaussianFieldState, use_origin: bool = False):
    """Real quadrature mean vector (Q..., P...) and block-diagonal covariance."""
    n = state.num_modes
    dk = state.dk
    mean_phi = state.origin_mean_phi if use_origin else state.mean_phi
    mean_pi = state.origin_mean_pi if use_origin else state.mean_pi
    cov = state.origin_covariance if use_origin else state.covariance

    q, p, blocks = [], [], []
    for i in [0, n // 2] + list(range(n // 2 + 1, n)):
        if i in (0, n // 2):
            q.append(math.sqrt(dk) * mean_phi[i].real)
            p.append(math.sqrt(dk) * mean_pi[i].real)
            blocks.append(cov[i])
        else:
            scale = math.sqrt(2 * dk)
            q += [scale * mean_phi[i].real, scale * mean_phi[i].imag]
            p += [scale * mean_pi[i].real, scale * mean_pi[i].imag]
            blocks += [cov[i], cov[i]]
    size = len(q)
    sigma = torch.zeros(2 * size, 2 * size, dtype=REAL)
    for j, block in enumerate(blocks):
        sigma[j, j] = block[0, 0]
        sigma[j, size + j] = sigma[size + j, j] = block[0, 1]
        sigma[size + j, size + j] = block[1, 1]
    return torch.stack(q + p), sigma


def _gaussian_overlap_oracle(a: GaussianFieldState, b: GaussianFieldState, use_origin: bool = False) -> float:
    """-ln|<a|b>| from the general formula for two pure Gaussians,

        |<a|b>|^2 = exp(-1/2 D^T (S_a + S_b)^{-1} D) / sqrt(det(S_a + S_b)),

    assembled on the full real quadrature space.  Only meant for small lattices.
    """
    mean_a, sigma_a = _quadratures(a, use_origin)
    mean_b, sigma_b = _quadratures(b, use_origin)
    total = sigma_a + sigma_b
    delta = mean_a - mean_b
    _, logdet = torch.linalg.slogdet(total)
    quad = delta @ torch.linalg.solve(total, delta)
    return 0.25 * quad.item() + 0.25 * logdet.item()


class VarianceSplit(NamedTuple):
    total: float
    normal: float
    unstable: float


def ideal_band_smearing(lattice: LatticeSpec, mass: float) -> torch.Tensor:
    """f_hat = 1 on |k| <= m and 0 elsewhere."""
    return (lattice.mode_wavevectors.abs() <= mass).to(REAL)


def box_smearing(lattice: LatticeSpec, width: float) -> torch.Tensor:
    """Transform of the unit-area top hat of support ``width``, normalized to f_hat(0) = 1."""
    if not width > 0:
        raise DegenerateStateError(f"smearing width must be positive, got {width!r}")
    return torch.sinc(lattice.mode_wavevectors * width / (2 * math.pi))


def smeared_variance(state: GaussianFieldState, f_hat: torch.Tensor, t: Optional[float] = None) -> VarianceSplit:
    """Variance of the smeared field  1/(2 pi) sum_k dk |f_hat(k)|^2 V_phiphi,k(t).

    ``f_hat`` follows the f_hat(0) = 1 normalization of a unit-area smearing
    function; ``t`` defaults to the state's own time.
    """
    f_hat = torch.as_tensor(f_hat, dtype=REAL)
    if f_hat.shape != (state.num_modes,):
        raise LatticeMismatchError(f"f_hat must have shape ({state.num_modes},)")
    dt = 0.0 if t is None else t - state.time
    a, b, _, _ = evolution_matrix(state.disp, dt)
    cov = state.covariance
    v_ff = a * a * cov[:, 0, 0] + 2 * a * b * cov[:, 0, 1] + b * b * cov[:, 1, 1]
    _guard(v_ff, state.disp, dt, "smeared variance")
    weights = state.dk / (2 * math.pi) * f_hat ** 2 * v_ff
    normal = weights[state.disp.normal].sum().item()
    unstable = weights[state.disp.unstable].sum().item()
    return VarianceSplit(weights.sum().item(), normal, unstable)


def band_variance(mass: float, t: float, nodes: int = 256) -> float:
    """Continuum value of the ideally smeared unstable-band variance of the vacuum,

        1/(2 pi) int_{-m}^{m} dk cosh(2 kappa t) / (2 kappa) = I_0(2 m t) / 4,

    integrated by Gauss-Legendre after k = m sin(theta), which removes the edge
    singularity at |k| = m.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    theta = torch.as_tensor(0.5 * math.pi * x, dtype=REAL)
    weights = torch.as_tensor(0.5 * math.pi * w, dtype=REAL)
    integrand = 0.5 * torch.cosh(2 * mass * t * torch.cos(theta))
    return (weights * integrand).sum().item() / (2 * math.pi)


@dataclass(frozen=True)
class ObservabilityReport:
    """Signal and fluctuation of a reconstructed superluminal peak at ``t_obs``."""

    t_obs: float
    group_velocity: float
    spread_condition: float
    separation_condition: float
    peak_position: float
    peak_in_causal_region: bool
    signal: float
    truncated_signal: float
    fluctuation: float
    photon_exponent: float
    observable: bool

    @property
    def ratio(self) -> float:
        return self.signal / self.fluctuation

    @property
    def required_amplitude_factor(self) -> float:
        """Factor by which the amplitude must grow for signal == fluctuation."""
        return self.fluctuation / self.signal


def observability_report(
    spec: WavepacketSpec,
    trunc: TruncationSpec,
    mass: float,
    t_obs: float,
    lattice: LatticeSpec,
    smearing_width: Optional[float] = None,
    condition_threshold: float = 10.0,
    ratio_threshold: float = 3.0,
) -> ObservabilityReport:
    """Compare the smeared peak of the tail with the smeared vacuum noise.

    The signal is the smeared envelope of the untruncated packet at
    X0 + v_g t_obs, which is what the truncated field reconstructs when that
    point lies in the causally unaffected region.  ``truncated_signal`` reads the
    smeared evolved truncated field at the same point; outside that region it
    is dominated by the grown bulk.  Only a causal peak can be observable.  The
    fluctuation is the square root of the smeared vacuum variance at ``t_obs``,
    independent of the amplitude.
    """
    v_g = group_velocity(spec.k0, mass)
    spread = v_g * t_obs * spec.delta_k
    separation = (v_g - 1) * t_obs * spec.delta_k
    width = 1.0 / spec.k0 if smearing_width is None else smearing_width
    f_hat = box_smearing(lattice, width)
    disp = classify_modes(lattice, mass)
    peak = spec.x0 + v_g * t_obs
    index = int(torch.argmin((lattice.positions - peak).abs()))

    def smeared_envelope(state: FieldState) -> float:
        evolved = evolve_field(state, lattice, disp, t_obs)
        spectrum = spectral_transform(analytic_signal(evolved.phi, lattice), lattice)
        return synthesize(spectrum * f_hat, lattice).abs()[index].item()

    original = build_wavepacket(lattice, spec, mass)
    tail = truncate(original, trunc, lattice)
    signal = smeared_envelope(original)
    truncated_signal = smeared_envelope(tail)

    vacuum = vacuum_state(disp)
    fluctuation = math.sqrt(smeared_variance(vacuum, f_hat, t_obs).total)
    photons = overlap_vacuum(coherent_displace(vacuum, *displacement_from_field(tail, lattice))).normal

    causal = peak - 1.0 / spec.delta_k > trunc.cut_position + t_obs + 5 * trunc.smoothing_length
    observable = causal and spread >= condition_threshold and separation >= condition_threshold
    observable = observable and signal >= ratio_threshold * fluctuation
    log.info(
        "t_obs=%g: signal %.4g (truncated %.4g, causal %s), fluctuation %.4g, conditions %.3g / %.3g",
        t_obs, signal, truncated_signal, causal, fluctuation, spread, separation,
    )
    return ObservabilityReport(
        float(t_obs), v_g, spread, separation, peak, bool(causal), signal, truncated_signal, fluctuation, photons,
        bool(observable),
    )


@dataclass(frozen=True)
class RldReport:
    """Pairwise -ln overlaps of the truncated R, L and D states over time."""

    times: Sequence[float]
    rl: Sequence[float]
    rd: Sequence[float]
    ld: Sequence[float]
    cauchy_schwarz_lhs: float
    cauchy_schwarz_rhs: float

    @property
    def cauchy_schwarz_holds(self) -> bool:
        return self.cauchy_schwarz_lhs >= self.cauchy_schwarz_rhs * (1 - 1e-12)

    @property
    def max_drift(self) -> float:
        """Largest change of any overlap modulus away from its value at t = 0."""
        drift = 0.0
        for series in (self.rl, self.rd, self.ld):
            first = math.exp(-series[0])
            drift = max(drift, max(abs(math.exp(-value) - first) for value in series))
        return drift


def rld_experiment(
    spec: WavepacketSpec,
    trunc: TruncationSpec,
    mass: float,
    times: Sequence[float],
    lattice: LatticeSpec,
) -> RldReport:
    """Build the truncated R, L, D coherent states and follow their overlaps.

    The first entry of every series is t = 0; the remaining entries follow
    ``times``.  The Cauchy-Schwarz audit compares
    (-ln|<R|L>|)(-ln|<R|D>|) with (1/4 sum dk |d_phi| |d_pi|)^2, where d_phi and
    d_pi are the mean differences of the D and L pairs.
    """
    disp = classify_modes(lattice, mass)
    vacuum = vacuum_state(disp)
    tail = truncate(build_wavepacket(lattice, spec, mass), trunc, lattice)
    states = [coherent_displace(vacuum, *displacement_from_field(packet, lattice)) for packet in mirror_packets(tail)]

    series = {"rl": [], "rd": [], "ld": []}
    for t in [0.0] + [float(t) for t in times]:
        right, left, down = [evolve_gaussian(state, disp, t) if t else state for state in states]
        series["rl"].append(pairwise_exponent(right, left))
        series["rd"].append(pairwise_exponent(right, down))
        series["ld"].append(pairwise_exponent(left, down))

    right, left, down = states
    d_phi = (right.mean_phi - down.mean_phi).abs()
    d_pi = (right.mean_pi - left.mean_pi).abs()
    rhs = (0.25 * vacuum.dk * (d_phi * d_pi).sum().item()) ** 2
    lhs = series["rl"][0] * series["rd"][0]
    return RldReport([0.0] + [float(t) for t in times], series["rl"], series["rd"], series["ld"], lhs, rhs)
