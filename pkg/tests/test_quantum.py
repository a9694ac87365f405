import math

import pytest
import torch
from pytorch_lightning import seed_everything

from tachyon_lab.errors import CovarianceMismatchError, DegenerateStateError, LatticeMismatchError, SymmetryError
from tachyon_lab.lattice import (
    COMPLEX,
    REAL,
    FieldState,
    build_lattice,
    classify_modes,
    evolve_field,
    evolve_modes,
    from_modes,
    spectral_transform,
    synthesize,
    to_modes,
)
from tachyon_lab.quantum import (
    _determinant,
    _gaussian_overlap_oracle,
    band_variance,
    box_smearing,
    coherent_displace,
    displacement_from_field,
    evolve_gaussian,
    ideal_band_smearing,
    materialized_exponent,
    observability_report,
    overlap_vacuum,
    pairwise_exponent,
    pairwise_overlap,
    rld_experiment,
    smeared_variance,
    uncertainty_products,
    vacuum_state,
)
from tachyon_lab.special import bessel_i
from tachyon_lab.wavepackets import TruncationSpec, WavepacketSpec, build_wavepacket, truncate


def random_field(lattice):
    """Random real (phi, pi) without content above half the Nyquist wavevector."""
    n = torch.arange(lattice.num_points) - lattice.num_points // 2
    mask = (n.abs() < lattice.num_points // 4).to(REAL)
    values = []
    for _ in range(2):
        spectrum = mask * spectral_transform(torch.randn(lattice.num_points, dtype=REAL), lattice)
        values.append(synthesize(spectrum, lattice).real)
    return FieldState(0.0, *values)


def tail_packet(lattice, x0=-20.0, amplitude=1.0, delta_k=0.2, k_min=1.4):
    spec = WavepacketSpec(k0=2.0, delta_k=delta_k, x0=x0, amplitude=amplitude, k_min=k_min)
    return truncate(build_wavepacket(lattice, spec, 1.0), TruncationSpec(0.25), lattice)


def coherent(lattice, state, mass=1.0):
    return coherent_displace(vacuum_state(classify_modes(lattice, mass)), *displacement_from_field(state, lattice))


@pytest.mark.parametrize(
    'mass, frequency, v_phiphi, v_pipi', [(0.8, 0.8, 0.625, 0.4), (math.sqrt(5.0), None, 0.25, 1.0)]
)
def test_vacuum_second_moments(mass, frequency, v_phiphi, v_pipi):
    lattice = build_lattice(8, 2 * math.pi)
    disp = classify_modes(lattice, mass)
    vacuum = vacuum_state(disp)
    # index 4 is k = 0, index 7 is k = 3
    index = 4 if frequency else 7
    mode = vacuum.mode(index)
    assert mode.second_moments[0, 0].item() == pytest.approx(v_phiphi, rel=1e-14)
    assert mode.second_moments[1, 1].item() == pytest.approx(v_pipi, rel=1e-14)
    assert mode.second_moments[0, 1].item() == 0.0
    assert mode.uncertainty == pytest.approx(0.25, rel=1e-14)
    assert mode.mean_phi == 0


def test_vacuum_rejects_bad_regulator():
    disp = classify_modes(build_lattice(8, 2 * math.pi), 1.0)
    with pytest.raises(DegenerateStateError):
        vacuum_state(disp, critical_frequency=0.0)


def test_displacement_is_reversible_and_checked():
    seed_everything(1234)
    lattice = build_lattice(64, 40.0)
    vacuum = vacuum_state(classify_modes(lattice, 1.0))
    g, p = displacement_from_field(random_field(lattice), lattice)
    shifted = coherent_displace(vacuum, g, p)
    back = coherent_displace(shifted, -g, -p)
    assert torch.allclose(back.mean_phi, vacuum.mean_phi, atol=1e-14)
    assert torch.equal(shifted.covariance, vacuum.covariance)
    unchanged = coherent_displace(vacuum, torch.zeros(64, dtype=COMPLEX))
    assert unchanged.mean_phi.eq(0).all()

    with pytest.raises(SymmetryError):
        coherent_displace(vacuum, torch.randn(64, dtype=COMPLEX))
    with pytest.raises(LatticeMismatchError):
        coherent_displace(vacuum, torch.zeros(32, dtype=COMPLEX))


def test_means_follow_the_classical_field():
    lattice = build_lattice(512, 100.0)
    disp = classify_modes(lattice, 1.0)
    state = tail_packet(lattice)
    evolved = evolve_gaussian(coherent(lattice, state), disp, 3.0)
    classical = evolve_modes(to_modes(state, lattice), disp, 3.0)
    assert torch.equal(evolved.mean_phi, classical.phi_k)
    assert torch.equal(evolved.mean_pi, classical.pi_k)
    field = from_modes(evolved.means(), lattice)
    assert torch.allclose(field.phi, evolve_field(state, lattice, disp, 3.0).phi, atol=1e-12)


def test_covariance_evolution():
    lattice = build_lattice(64, 16 * math.pi)
    disp = classify_modes(lattice, 1.0)
    vacuum = vacuum_state(disp)
    later = evolve_gaussian(vacuum, disp, 7.0)
    kappa = disp.kappa[disp.unstable]
    expected = torch.cosh(2 * kappa * 7.0) / (2 * kappa)
    assert torch.allclose(later.covariance[disp.unstable, 0, 0], expected, rtol=1e-12, atol=0)
    assert later.time == 7.0 and later.elapsed == 7.0

    index = int(disp.normal.nonzero()[0])
    period = 2 * math.pi / disp.omega[index].item()
    cycled = evolve_gaussian(vacuum, disp, period)
    assert torch.allclose(cycled.covariance[index], vacuum.covariance[index], atol=1e-12)


def test_uncertainty_survives_strong_growth():
    lattice = build_lattice(256, 100.0)
    disp = classify_modes(lattice, 1.0)
    later = evolve_gaussian(vacuum_state(disp), disp, 50.0)
    assert uncertainty_products(later).min().item() >= 0.25 - 1e-10
    assert uncertainty_products(later).max().item() <= 0.25 + 1e-10


def test_overlap_of_one_mode_pair():
    lattice = build_lattice(64, 16 * math.pi)
    disp = classify_modes(lattice, 1.0)
    index = 32 + 20
    omega = disp.omega[index].item()
    g = torch.zeros(64, dtype=COMPLEX)
    g[index] = g[lattice.partner_index[index]] = 1 / math.sqrt(lattice.dk * omega)
    result = overlap_vacuum(coherent_displace(vacuum_state(disp), g))
    assert result.overlap == pytest.approx(math.exp(-0.5), rel=1e-12)
    assert result.normal == pytest.approx(0.5, rel=1e-12)
    assert result.unstable == 0.0 and result.critical == 0.0


def test_momentum_shift_of_a_single_mode():
    # dk = 1 and the k = 0 mode has |omega| = m = 1
    lattice = build_lattice(8, 2 * math.pi)
    vacuum = vacuum_state(classify_modes(lattice, 1.0))
    p = torch.zeros(8, dtype=COMPLEX)
    p[4] = 0.7
    shifted = coherent_displace(vacuum, torch.zeros(8, dtype=COMPLEX), p)
    assert pairwise_overlap(vacuum, shifted) == pytest.approx(math.exp(-0.7 ** 2 / 4), rel=1e-12)
    assert pairwise_overlap(shifted, shifted) == 1.0


def test_overlap_matches_general_gaussian_formula():
    seed_everything(1234)
    lattice = build_lattice(64, 40.0)
    disp = classify_modes(lattice, 1.0)
    vacuum = vacuum_state(disp)
    state = coherent_displace(vacuum, *displacement_from_field(random_field(lattice), lattice))
    exponent = overlap_vacuum(state).exponent
    assert _gaussian_overlap_oracle(vacuum, state) == pytest.approx(exponent, rel=1e-12)

    later_vacuum, later_state = evolve_gaussian(vacuum, disp, 3.0), evolve_gaussian(state, disp, 3.0)
    assert pairwise_exponent(later_vacuum, later_state) == pytest.approx(exponent, rel=1e-12)
    assert _gaussian_overlap_oracle(later_vacuum, later_state) == pytest.approx(exponent, rel=1e-9)


def test_exponent_scales_with_amplitude_squared():
    lattice = build_lattice(1024, 200.0)
    base = overlap_vacuum(coherent(lattice, tail_packet(lattice))).exponent
    doubled = overlap_vacuum(coherent(lattice, tail_packet(lattice, amplitude=2.0))).exponent
    assert doubled == pytest.approx(4 * base, rel=1e-12)


def test_overlap_needs_matching_covariances():
    lattice = build_lattice(64, 40.0)
    disp = classify_modes(lattice, 1.0)
    vacuum = vacuum_state(disp)
    later = evolve_gaussian(vacuum, disp, 2.0)
    with pytest.raises(CovarianceMismatchError):
        overlap_vacuum(later)
    with pytest.raises(CovarianceMismatchError):
        pairwise_exponent(vacuum, later)
    with pytest.raises(CovarianceMismatchError):
        materialized_exponent(vacuum, later)


def test_deep_tails_look_like_vacuum():
    lattice = build_lattice(2048, 400.0)
    exponents = [
        overlap_vacuum(coherent(lattice, tail_packet(lattice, x0, delta_k=0.1, k_min=None))).exponent
        for x0 in (-10.0, -20.0, -40.0, -80.0)
    ]
    assert all(later < earlier for earlier, later in zip(exponents, exponents[1:]))
    assert exponents[-1] < 1e-6


def test_right_and_left_movers_by_cut_depth():
    lattice = build_lattice(2048, 400.0)

    def rl_overlap(x0, amplitude):
        spec = WavepacketSpec(k0=2.0, delta_k=0.1, x0=x0, amplitude=amplitude)
        return math.exp(-rld_experiment(spec, TruncationSpec(0.25), 1.0, [], lattice).rl[0])

    assert rl_overlap(-100.0, 1.0) >= 0.99
    assert rl_overlap(-10.0, 5.0) <= 0.1


def test_rld_exponents_unitarity_and_cauchy_schwarz():
    lattice = build_lattice(1024, 400.0)
    disp = classify_modes(lattice, 1.0)
    spec = WavepacketSpec(k0=2.0, delta_k=0.2, x0=-20.0, k_min=1.4)
    trunc = TruncationSpec(0.25)
    report = rld_experiment(spec, trunc, 1.0, [10.0, 25.0, 50.0], lattice)
    assert report.times == [0.0, 10.0, 25.0, 50.0]
    assert report.max_drift <= 1e-10
    assert report.cauchy_schwarz_holds

    modes = to_modes(truncate(build_wavepacket(lattice, spec, 1.0), trunc, lattice), lattice)
    freq = disp.abs_frequency()
    rl = lattice.dk * (modes.pi_k.abs() ** 2 / freq).sum().item()
    rd = lattice.dk * (freq * modes.phi_k.abs() ** 2).sum().item()
    assert report.rl[0] == pytest.approx(rl, rel=1e-10)
    assert report.rd[0] == pytest.approx(rd, rel=1e-10)


def test_materialized_frame_agrees_while_conditioned():
    lattice = build_lattice(512, 100.0)
    disp = classify_modes(lattice, 1.0)
    vacuum = vacuum_state(disp)
    state = coherent(lattice, tail_packet(lattice))
    for t in (1.0, 5.0):
        a, b = evolve_gaussian(vacuum, disp, t), evolve_gaussian(state, disp, t)
        assert materialized_exponent(a, b) == pytest.approx(pairwise_exponent(a, b), rel=1e-6)


def test_smearing_functions():
    lattice = build_lattice(64, 40.0)
    box = box_smearing(lattice, 0.5)
    assert box[32].item() == 1.0
    assert box.abs().max().item() <= 1.0
    band = ideal_band_smearing(lattice, 1.0)
    assert torch.equal(band, (lattice.mode_wavevectors.abs() <= 1.0).to(REAL))
    with pytest.raises(DegenerateStateError):
        box_smearing(lattice, 0.0)


def test_smeared_unstable_variance_mode_sum():
    lattice = build_lattice(256, 100.0)
    disp = classify_modes(lattice, 1.0)
    vacuum = vacuum_state(disp)
    split = smeared_variance(vacuum, ideal_band_smearing(lattice, 1.0), 6.0)
    kappa = disp.kappa[disp.unstable]
    expected = lattice.dk / (2 * math.pi) * (torch.cosh(2 * kappa * 6.0) / (2 * kappa)).sum().item()
    assert split.unstable == pytest.approx(expected, rel=1e-12)
    assert split.normal == 0.0
    with pytest.raises(LatticeMismatchError):
        smeared_variance(vacuum, torch.ones(8, dtype=REAL))


def test_mode_sum_approaches_the_continuum():
    errors = []
    for num_points, length in ((256, 32 * math.pi), (1024, 128 * math.pi)):
        lattice = build_lattice(num_points, length)
        vacuum = vacuum_state(classify_modes(lattice, 1.0))
        mode_sum = smeared_variance(vacuum, ideal_band_smearing(lattice, 1.0)).unstable
        errors.append(abs(mode_sum - band_variance(1.0, 0.0)))
    assert errors[1] < errors[0]


def test_band_variance_follows_bessel_growth():
    assert band_variance(1.0, 0.0) == pytest.approx(0.25, rel=1e-12)
    base = band_variance(1.0, 0.0)
    for t in (0.5, 2.0, 5.0, 10.0):
        assert band_variance(1.0, t) / base == pytest.approx(bessel_i(0, 2 * t), rel=1e-6)
    t = 20.0
    asymptote = math.exp(2 * t) / math.sqrt(4 * math.pi * t)
    assert band_variance(1.0, t) / base / asymptote == pytest.approx(1.0, rel=0.01)


def test_observability_conditions_and_scaling():
    lattice = build_lattice(4096, 800.0)
    spec = WavepacketSpec(k0=2.0, delta_k=0.1, x0=-60.0)
    trunc = TruncationSpec(0.25)

    late = observability_report(spec, trunc, 1.0, 100.0, lattice)
    assert late.spread_condition == pytest.approx(11.547, abs=1e-3)
    assert late.separation_condition == pytest.approx(1.547, abs=1e-3)
    assert not late.observable

    faint = observability_report(spec, trunc, 1.0, 20.0, lattice)
    assert faint.ratio < 1e-3
    bright = observability_report(spec.with_amplitude(1e10), trunc, 1.0, 20.0, lattice)
    assert bright.ratio >= 3
    # the peak at x0 + v_g t = -36.9 lies behind the light cone of the cut
    assert not bright.peak_in_causal_region
    assert not bright.observable
    assert bright.signal == pytest.approx(1e10 * faint.signal, rel=1e-12)
    assert bright.fluctuation == faint.fluctuation
    assert bright.photon_exponent == pytest.approx(1e20 * faint.photon_exponent, rel=1e-12)

    normalized = []
    for t in (10.0, 20.0, 30.0):
        report = observability_report(spec, trunc, 1.0, t, lattice)
        normalized.append(report.required_amplitude_factor / (math.exp(t) / (2 * t) ** 0.25))
    assert all(0.5 <= value / normalized[0] <= 2 for value in normalized)


def test_observability_reads_the_truncated_field():
    lattice = build_lattice(4096, 800.0)
    trunc = TruncationSpec(0.25)
    inside = observability_report(WavepacketSpec(k0=2.0, delta_k=0.1, x0=-20.0), trunc, 1.0, 20.0, lattice)
    assert not inside.peak_in_causal_region
    assert inside.truncated_signal > 1e3 * inside.signal

    ahead = observability_report(WavepacketSpec(k0=2.0, delta_k=0.1, x0=20.0), trunc, 1.0, 20.0, lattice)
    assert ahead.peak_in_causal_region
    assert not ahead.observable


def test_evolved_covariance_keeps_the_uncertainty_floor():
    lattice = build_lattice(64, 40.0)
    disp = classify_modes(lattice, 1.0)
    later = evolve_gaussian(vacuum_state(disp), disp, 5.0)
    assert torch.allclose(_determinant(later.covariance), torch.full((64,), 0.25, dtype=REAL), rtol=0, atol=1e-6)


def test_overlap_rejects_states_evolved_under_different_masses():
    lattice = build_lattice(64, 40.0)
    light, heavy = classify_modes(lattice, 1.0), classify_modes(lattice, 2.0)
    vacuum = vacuum_state(light)
    p = torch.zeros(64, dtype=COMPLEX)
    p[32] = 0.5
    shifted = coherent_displace(vacuum, torch.zeros(64, dtype=COMPLEX), p)
    with pytest.raises(CovarianceMismatchError):
        pairwise_exponent(evolve_gaussian(vacuum, light, 5.0), evolve_gaussian(shifted, heavy, 5.0))

    exponent = pairwise_exponent(vacuum, shifted)
    a = evolve_gaussian(evolve_gaussian(vacuum, light, 2.0), heavy, 1.0)
    b = evolve_gaussian(evolve_gaussian(shifted, light, 2.0), heavy, 1.0)
    assert a.origin_time == 2.0 and a.disp is heavy
    assert pairwise_exponent(a, b) == pytest.approx(exponent, rel=1e-8)
    assert torch.allclose(uncertainty_products(a), _determinant(a.covariance), rtol=1e-6, atol=0)


def test_critical_regulator_shift_shrinks_with_dk():
    # k = m = 1 is a lattice mode for both lengths
    shifts = []
    for num_points, length in ((1024, 64 * math.pi), (2048, 128 * math.pi)):
        lattice = build_lattice(num_points, length)
        disp = classify_modes(lattice, 1.0)
        assert disp.critical.sum().item() == 2
        g, p = displacement_from_field(tail_packet(lattice), lattice)
        exponents = [
            overlap_vacuum(coherent_displace(vacuum_state(disp, reg), g, p)).exponent for reg in (1.0, 2.0, 0.5)
        ]
        shifts.append(max(abs(value - exponents[0]) for value in exponents[1:]) / exponents[0])
    assert 0 < shifts[1] < 0.75 * shifts[0]
    assert shifts[0] < 0.05
