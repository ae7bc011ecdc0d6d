"""Shipped bench configurations.

Geometry follows the reference bench: a 70 x 70 cm grid with antennas along
the x-axis edge facing +y. Layout C1 pairs horn transmitters with
omnidirectional receivers; C2 uses horns throughout, spread wider. The first
transmit antenna carries f1 = 870 MHz and the second f2 = 830 MHz, which puts
the odd-order product 2*f1 - f2 at 910 MHz and the sum at 1700 MHz.

Attenuation coefficients of the tissue presets are calibration values chosen
so that detectability falls off within the bench (device past ~60 cm is
indistinguishable from noise); they are not measured material constants.
"""

from __future__ import annotations

from .backscatter import DiodeModel
from .errors import ScenarioError
from .model import (
    AntennaSpec,
    Box,
    DevicePlacement,
    MediumStack,
    Pattern,
    Position,
    Scenario,
    TissueSlab,
    cm_to_m,
)

F1_HZ = 870e6
F2_HZ = 830e6

# dBFS/Hz at the digitizer. Quiet enough that the sum harmonic from any
# preset clears the tone-extraction SNR floor out of the box; the weaker
# odd-order product stays noise-limited unless noise is disabled.
DEFAULT_NOISE_PSD_DB = -145.0
DEFAULT_TX_CHAIN_DB = 10.0
DEFAULT_RX_CHAIN_DB = 20.0

# Search volume covering the bench grid, in meters.
DEFAULT_SEARCH_BOX = Box((0.0, 0.0, 0.0), (0.70, 0.70, 0.20))

_HORN = Pattern(kind="horn", boresight=(0.0, 1.0, 0.0), beamwidth_deg=60.0)

MUSCLE_ER = 54.81
FAT_ER = 5.447


def material(name: str) -> TissueSlab:
    """Unbounded material templates; give them an extent before use."""
    if name == "air":
        return TissueSlab("air", 1.0, 0.0)
    if name == "muscle":
        return TissueSlab("muscle", MUSCLE_ER, 30.0, ref_freq_hz=900e6)
    if name == "fat":
        return TissueSlab("fat", FAT_ER, 8.0, ref_freq_hz=900e6)
    raise ScenarioError(f"unknown material {name!r}")


def tissue_box(kind: str, center_cm: tuple[float, float, float]) -> TissueSlab:
    """A tissue block centered at the given grid position.

    'chicken': 16 x 22 x 10 cm, moderate loss. 'pork': 8 x 12 x 1 cm,
    denser and lossier.
    """
    if kind == "chicken":
        size_cm = (16.0, 22.0, 10.0)
        atten = 25.0
    elif kind == "pork":
        size_cm = (8.0, 12.0, 1.0)
        atten = 40.0
    elif kind == "deep":
        # Long block spanning most of the grid depth, for falloff studies
        # where the device sinks progressively deeper into tissue.
        size_cm = (40.0, 70.0, 18.0)
        atten = 25.0
    else:
        raise ScenarioError(f"unknown tissue kind {kind!r}")
    # corner arithmetic happens in cm, where the values are exact decimals,
    # so presets match their own JSON round-trip bit for bit
    lo = tuple(cm_to_m(c - s / 2.0) for c, s in zip(center_cm, size_cm))
    hi = tuple(cm_to_m(c + s / 2.0) for c, s in zip(center_cm, size_cm))
    return TissueSlab(
        material=kind,
        rel_permittivity=MUSCLE_ER,
        atten_db_per_m=atten,
        ref_freq_hz=900e6,
        extent=Box(lo, hi),
    )


def _tx(antenna_id: str, pos_cm, gain_db: float = DEFAULT_TX_CHAIN_DB) -> AntennaSpec:
    return AntennaSpec(
        id=antenna_id,
        role="tx",
        position=Position.from_cm(*pos_cm),
        pattern=_HORN,
        chain_gain_db=gain_db,
    )


def _rx(antenna_id: str, pos_cm, pattern: Pattern, gain_db: float) -> AntennaSpec:
    return AntennaSpec(
        id=antenna_id,
        role="rx",
        position=Position.from_cm(*pos_cm),
        pattern=pattern,
        chain_gain_db=gain_db,
    )


def antenna_layout(name: str, rx_gain_db: float = DEFAULT_RX_CHAIN_DB) -> tuple[AntennaSpec, ...]:
    """Antenna sets by layout name. The first tx listed carries f1."""
    from .model import OMNI

    if name == "c1":
        return (
            _tx("tx1", (57.5, 0.0, 9.5)),
            _tx("tx2", (-1.5, 0.0, 9.5)),
            _rx("rx1", (18.0, 0.0, 8.0), OMNI, rx_gain_db),
            _rx("rx2", (36.0, 0.0, 8.0), OMNI, rx_gain_db),
        )
    if name == "c1_3rx":
        # rx3 sits above the rx1-rx2 line on purpose: with colinear receivers
        # the phase-difference objective is blind to rotations about that
        # line, and 3D recovery collapses to a circle of equivalent answers.
        return antenna_layout("c1", rx_gain_db) + (
            _rx("rx3", (54.0, 0.0, 14.0), OMNI, rx_gain_db),
        )
    if name == "c1b":
        return (
            _tx("tx1", (57.5, 0.0, 9.5)),
            _tx("tx2", (-1.5, 0.0, 9.5)),
            _rx("rx1", (15.0, 0.0, 8.0), OMNI, rx_gain_db),
            _rx("rx2", (33.0, 0.0, 8.0), OMNI, rx_gain_db),
        )
    if name == "c2":
        return (
            _tx("tx1", (70.0, 0.0, 9.5)),
            _tx("tx2", (-5.0, 0.0, 9.5)),
            _rx("rx1", (20.0, 0.0, 9.5), _HORN, rx_gain_db),
            _rx("rx2", (45.0, 0.0, 9.5), _HORN, rx_gain_db),
        )
    raise ScenarioError(f"unknown antenna layout {name!r}")


def _device(pos_cm) -> DevicePlacement:
    return DevicePlacement(position=Position.from_cm(*pos_cm), diode=DiodeModel())


_PRESETS = {
    # name: (layout, medium builder, device position cm)
    "air_c1": ("c1", None, (30.0, 18.0, 11.1)),
    "air_c1_3rx": ("c1_3rx", None, (30.0, 18.0, 11.1)),
    "air_c2": ("c2", None, (25.0, 18.0, 11.1)),
    "chicken_c1": ("c1", ("chicken", (30.0, 22.0, 11.0)), (30.0, 22.0, 11.0)),
    "deep_c1": ("c1", ("deep", (30.0, 40.0, 11.0)), (30.0, 10.0, 11.0)),
    "pork_c1b": ("c1b", ("pork", (25.0, 10.5, 6.0)), (25.0, 10.5, 6.0)),
    "pork_c2": ("c2", ("pork", (29.0, 15.5, 12.0)), (29.0, 15.5, 12.0)),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def scenario_preset(
    name: str,
    noise_psd_db: float | None = DEFAULT_NOISE_PSD_DB,
    rx_gain_db: float = DEFAULT_RX_CHAIN_DB,
    seed: int = 0,
) -> Scenario:
    """A ready-to-run scenario by preset name."""
    if name not in _PRESETS:
        raise ScenarioError(f"unknown preset {name!r}, have {', '.join(PRESET_NAMES)}")
    layout, tissue, device_cm = _PRESETS[name]
    medium = MediumStack()
    if tissue is not None:
        kind, center_cm = tissue
        medium = MediumStack(slabs=(tissue_box(kind, center_cm),))
    return Scenario(
        f1_hz=F1_HZ,
        f2_hz=F2_HZ,
        antennas=antenna_layout(layout, rx_gain_db),
        medium=medium,
        device=_device(device_cm),
        noise_psd_db=noise_psd_db,
        seed=seed,
        name=name,
    )
