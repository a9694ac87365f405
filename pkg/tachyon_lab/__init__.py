"""Tachyonlike wavepackets of an unstable scalar field on a periodic lattice."""
__version__ = '0.1.0'

from tachyon_lab.errors import TachyonLabError  # noqa: E402
from tachyon_lab.lattice import (  # noqa: E402
    DispersionTable,
    FieldState,
    LatticeSpec,
    ModeClass,
    ModeState,
    build_lattice,
    classify_modes,
    evolve_modes,
    from_modes,
    quadratic_energy,
    to_modes,
)
from tachyon_lab.wavepackets import TruncationSpec, WavepacketSpec, build_wavepacket, truncate  # noqa: E402
