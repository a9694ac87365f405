import math

import pytest
import torch
from pytorch_lightning import seed_everything

from tachyon_lab.errors import ConfigError, InstabilityOverflowError, LatticeMismatchError
from tachyon_lab.lattice import (
    COMPLEX,
    REAL,
    FieldState,
    ModeClass,
    ModeState,
    build_lattice,
    classify_modes,
    evolution_determinant,
    evolution_matrix,
    evolve_field,
    evolve_modes,
    from_modes,
    mode_energy,
    quadratic_energy,
    spectral_derivative,
    spectral_transform,
    synthesize,
    to_modes,
)


def band_limited_state(lattice, fraction=0.25):
    """Random real state without content above fraction * Nyquist."""
    n = torch.arange(lattice.num_points) - lattice.num_points // 2
    mask = (n.abs() < fraction * lattice.num_points).to(REAL)
    fields = []
    for _ in range(2):
        spectrum = mask * spectral_transform(torch.randn(lattice.num_points, dtype=REAL), lattice)
        fields.append(synthesize(spectrum, lattice).real)
    return FieldState(0.0, *fields)


@pytest.mark.parametrize('num_points, length', [(7, 10.0), (4, 10.0), (16, 0.0), (16, -1.0), (16, float('inf'))])
def test_build_lattice_rejects_bad_parameters(num_points, length):
    with pytest.raises(ConfigError):
        build_lattice(num_points, length)


def test_lattice_geometry():
    lattice = build_lattice(16.0, 8.0)
    assert lattice.num_points == 16
    assert lattice.spacing == 0.5
    assert lattice.positions[0].item() == -4.0
    assert lattice.dk == pytest.approx(2 * math.pi / 8)
    assert lattice.mode_wavevectors[8].item() == 0.0
    assert lattice.partner_index[0].item() == 0
    assert lattice.partner_index[9].item() == 7


def test_round_trip_and_parseval():
    seed_everything(1234)
    lattice = build_lattice(256, 40.0)
    state = FieldState(0.0, torch.randn(256, dtype=REAL), torch.randn(256, dtype=REAL))
    modes = to_modes(state, lattice)
    back = from_modes(modes, lattice)
    assert torch.allclose(back.phi, state.phi, atol=1e-12, rtol=0)
    assert torch.allclose(back.pi, state.pi, atol=1e-12, rtol=0)
    assert modes.reality_defect(lattice) < 1e-12

    real_space = lattice.spacing * (state.phi ** 2).sum()
    mode_space = lattice.dk * (modes.phi_k.abs() ** 2).sum()
    assert real_space.item() == pytest.approx(mode_space.item(), rel=1e-12)


def test_plane_wave_lands_on_its_mode():
    lattice = build_lattice(64, 20.0)
    k = lattice.mode_wavevectors[32 + 5].item()
    spectrum = spectral_transform(torch.cos(k * lattice.positions), lattice)
    expected = lattice.domain_length / (2 * math.sqrt(2 * math.pi))
    assert spectrum[37].abs().item() == pytest.approx(expected, rel=1e-12)
    assert spectrum[27].abs().item() == pytest.approx(expected, rel=1e-12)
    others = torch.ones(64, dtype=torch.bool)
    others[[27, 37]] = False
    assert spectrum[others].abs().max().item() < 1e-12


def test_spectral_derivative_of_sine():
    lattice = build_lattice(128, 2 * math.pi)
    x = lattice.positions
    assert torch.allclose(spectral_derivative(torch.sin(3 * x), lattice), 3 * torch.cos(3 * x), atol=1e-12)
    assert torch.allclose(spectral_derivative(torch.sin(3 * x), lattice, order=2), -9 * torch.sin(3 * x), atol=1e-10)


def test_classify_modes_bands():
    # dk = 1/8, so |k| = 1 falls exactly on a lattice mode
    lattice = build_lattice(64, 16 * math.pi)
    disp = classify_modes(lattice, 1.0)
    k = lattice.mode_wavevectors
    assert disp.critical.sum().item() == 2
    assert torch.all(disp.mode_class[k.abs() < 1 - 1e-9] == ModeClass.UNSTABLE)
    assert torch.all(disp.mode_class[k.abs() > 1 + 1e-9] == ModeClass.NORMAL)
    normal = disp.normal
    assert torch.allclose(disp.omega[normal], torch.sqrt(k[normal] ** 2 - 1))
    assert disp.abs_frequency()[disp.critical].eq(1.0).all()
    assert disp.abs_frequency(0.5)[disp.critical].eq(0.5).all()


def test_classify_modes_rejects_bad_mass():
    lattice = build_lattice(16, 10.0)
    with pytest.raises(ConfigError):
        classify_modes(lattice, 0.0)
    with pytest.raises(ConfigError):
        classify_modes(lattice, 1.0, eps_crit=-1.0)


def test_evolution_matrix_entries():
    lattice = build_lattice(64, 16 * math.pi)
    disp = classify_modes(lattice, 1.0)
    a, b, c, d = evolution_matrix(disp, 2.0)
    unstable = disp.unstable.nonzero()[0].item()
    kappa = disp.kappa[unstable].item()
    assert a[unstable].item() == pytest.approx(math.cosh(2 * kappa), rel=1e-14)
    assert b[unstable].item() == pytest.approx(math.sinh(2 * kappa) / kappa, rel=1e-14)
    assert c[unstable].item() == pytest.approx(kappa * math.sinh(2 * kappa), rel=1e-14)
    critical = disp.critical.nonzero()[0].item()
    assert (a[critical].item(), b[critical].item(), c[critical].item()) == (1.0, 2.0, 0.0)
    assert torch.allclose(evolution_determinant(disp, 50.0), torch.ones(64, dtype=REAL), atol=1e-14)


def test_evolution_group_property():
    seed_everything(1234)
    lattice = build_lattice(256, 60.0)
    disp = classify_modes(lattice, 1.0)
    modes = to_modes(band_limited_state(lattice), lattice)
    once = evolve_modes(modes, disp, 3.5)
    twice = evolve_modes(evolve_modes(modes, disp, 1.25), disp, 2.25)
    scale = once.phi_k.abs().max()
    assert ((once.phi_k - twice.phi_k).abs().max() / scale).item() < 1e-10
    assert ((once.pi_k - twice.pi_k).abs().max() / once.pi_k.abs().max()).item() < 1e-10
    back = evolve_modes(once, disp, -3.5)
    assert torch.allclose(back.phi_k, modes.phi_k, atol=1e-10 * modes.phi_k.abs().max().item())


def test_energy_is_conserved_and_matches_mode_sum():
    seed_everything(1234)
    lattice = build_lattice(256, 60.0)
    disp = classify_modes(lattice, 1.0)
    state = band_limited_state(lattice)
    energy = quadratic_energy(state, lattice, 1.0)
    assert energy == pytest.approx(mode_energy(to_modes(state, lattice), disp), rel=1e-12)
    later = evolve_field(state, lattice, disp, 4.0)
    assert quadratic_energy(later, lattice, 1.0) == pytest.approx(energy, rel=1e-10)


def test_energy_is_conserved_with_nyquist_content():
    seed_everything(1234)
    lattice = build_lattice(256, 60.0)
    disp = classify_modes(lattice, 1.0)
    state = FieldState(0.0, torch.randn(256, dtype=REAL), torch.randn(256, dtype=REAL))
    modes = to_modes(state, lattice)
    assert modes.phi_k[0].abs().item() > 0
    energy = quadratic_energy(state, lattice, 1.0)
    assert energy == pytest.approx(mode_energy(modes, disp), rel=1e-11)
    later = evolve_field(state, lattice, disp, 4.0)
    assert quadratic_energy(later, lattice, 1.0) == pytest.approx(energy, rel=1e-10)
    assert mode_energy(evolve_modes(modes, disp, 4.0), disp) == pytest.approx(energy, rel=1e-10)


def test_evolution_preserves_reality():
    seed_everything(1234)
    lattice = build_lattice(256, 60.0)
    disp = classify_modes(lattice, 1.0)
    state = FieldState(0.0, torch.randn(256, dtype=REAL), torch.randn(256, dtype=REAL))
    later = evolve_modes(to_modes(state, lattice), disp, 6.0)
    scale = max(later.phi_k.abs().max().item(), later.pi_k.abs().max().item())
    assert later.reality_defect(lattice) <= 1e-12 * scale


def test_single_mode_stays_single_past_cosh_overflow():
    lattice = build_lattice(64, 16 * math.pi)
    disp = classify_modes(lattice, 1.0)
    index = 32 + 20
    phi_k = torch.zeros(64, dtype=COMPLEX)
    phi_k[index] = phi_k[lattice.partner_index[index]] = 1.0
    modes = ModeState(0.0, phi_k, torch.zeros(64, dtype=COMPLEX))
    # kappa = 1 on the k = 0 mode, so cosh(kappa dt) is inf while that mode stays empty
    later = evolve_modes(modes, disp, 800.0)
    others = torch.ones(64, dtype=torch.bool)
    others[[index, 64 - index]] = False
    assert later.phi_k[others].eq(0).all() and later.pi_k[others].eq(0).all()
    omega = disp.omega[index].item()
    assert later.phi_k[index].real.item() == pytest.approx(math.cos(omega * 800.0), abs=1e-10)
    assert later.pi_k[index].real.item() == pytest.approx(-omega * math.sin(omega * 800.0), abs=1e-10)


def test_overflow_guard_names_the_mode():
    lattice = build_lattice(64, 100.0)
    disp = classify_modes(lattice, 1.0)
    state = FieldState(0.0, torch.ones(64, dtype=REAL), torch.zeros(64, dtype=REAL))
    with pytest.raises(InstabilityOverflowError, match='kappa'):
        evolve_field(state, lattice, disp, 500.0)


def test_shape_and_finiteness_checks():
    lattice = build_lattice(16, 10.0)
    with pytest.raises(LatticeMismatchError):
        to_modes(FieldState(0.0, torch.zeros(8, dtype=REAL), torch.zeros(8, dtype=REAL)), lattice)
    with pytest.raises(LatticeMismatchError):
        FieldState(0.0, torch.zeros(16, dtype=REAL), torch.zeros(8, dtype=REAL))
    with pytest.raises(InstabilityOverflowError):
        FieldState(0.0, torch.full((16,), float('nan'), dtype=REAL), torch.zeros(16, dtype=REAL))
