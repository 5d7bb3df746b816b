"""ULA codebook, LoS/NLoS channel and per-beam received power.

The base station carries an M-element uniform linear array and sweeps an
analog codebook of Q beams. Each beam is a unit-norm conjugate steering
vector pointing at its steering angle and owns an angular sector of the
steering range. Sector boundaries sit halfway between adjacent steering
angles in spatial frequency (``sin`` of the azimuth), which is where the
array gains of two neighbouring matched beams cross, so the exhaustive
sweep picks exactly the beam whose sector holds the transmitter.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml


# Relative tolerance under which two beam powers count as tied.
TIE_RTOL = 1e-9


class CodebookError(ValueError):
    pass


@dataclass(frozen=True)
class ArrayConfig:
    num_elements: int = 16
    element_spacing: float = 0.5  # wavelengths
    num_subcarriers: int = 1

    def __post_init__(self):
        if self.num_elements < 2:
            raise ValueError(f"num_elements must be >= 2, got {self.num_elements}")
        if not self.element_spacing > 0:
            raise ValueError(f"element_spacing must be > 0, got {self.element_spacing}")
        if self.num_subcarriers < 1:
            raise ValueError(f"num_subcarriers must be >= 1, got {self.num_subcarriers}")


def steering_vector(azimuth: float, cfg: ArrayConfig) -> np.ndarray:
    """ULA response ``exp(j*2*pi*d*m*sin(azimuth))`` for m = 0..M-1 (azimuth in degrees)."""
    m = np.arange(cfg.num_elements)
    phase = 2.0 * np.pi * cfg.element_spacing * m * np.sin(np.deg2rad(azimuth))
    return np.exp(1j * phase)


@dataclass(frozen=True, eq=False)
class Beam:
    steering_angle: float
    sector: tuple[float, float]
    weights: np.ndarray


def _sector_bounds(angles: np.ndarray, steering_range: tuple[float, float]) -> list[float]:
    s = np.sin(np.deg2rad(angles))
    inner = np.rad2deg(np.arcsin((s[:-1] + s[1:]) / 2.0))
    return [float(steering_range[0]), *map(float, inner), float(steering_range[1])]


@dataclass(frozen=True, eq=False)
class BeamCodebook:
    steering_range: tuple[float, float]
    beams: tuple[Beam, ...]

    def __post_init__(self):
        lo, hi = self.steering_range
        if not hi > lo:
            raise CodebookError(f"degenerate steering range {self.steering_range}")
        if not self.beams:
            raise CodebookError("codebook needs at least one beam")
        prev_end = lo
        for q, beam in enumerate(self.beams):
            a, b = beam.sector
            if a != prev_end or b < a:
                raise CodebookError(f"beam {q}: sector {beam.sector} does not continue the tiling at {prev_end}")
            if not (a <= beam.steering_angle <= b):
                raise CodebookError(f"beam {q}: steering angle {beam.steering_angle} outside its sector")
            norm = np.linalg.norm(beam.weights)
            if not np.isclose(norm, 1.0, atol=1e-9):
                raise CodebookError(f"beam {q}: weight norm {norm} != 1")
            prev_end = b
        if prev_end != hi:
            raise CodebookError(f"sectors end at {prev_end}, range ends at {hi}")

    @classmethod
    def from_angles(cls, angles, steering_range, cfg: ArrayConfig, phases=None) -> BeamCodebook:
        """Codebook with the given steering angles (degrees, strictly increasing).

        Without ``phases`` each beam is the matched conjugate steering vector;
        with ``phases`` (one length-M row per beam, radians) the weights are
        ``exp(j*phase)/sqrt(M)``.
        """
        angles = np.asarray(angles, dtype=float)
        lo, hi = map(float, steering_range)
        if angles.ndim != 1 or len(angles) == 0:
            raise CodebookError("need a non-empty list of steering angles")
        if np.any(np.diff(angles) <= 0):
            raise CodebookError("steering angles must be strictly increasing")
        if angles[0] < lo or angles[-1] > hi:
            raise CodebookError("steering angles must lie inside the steering range")
        bounds = _sector_bounds(angles, (lo, hi))
        beams = []
        for q, phi in enumerate(angles):
            if phases is None:
                w = np.conj(steering_vector(phi, cfg))
            else:
                row = np.asarray(phases[q], dtype=float)
                if row.shape != (cfg.num_elements,):
                    raise CodebookError(f"beam {q}: expected {cfg.num_elements} phases, got {row.shape}")
                w = np.exp(1j * row)
            w = w / np.linalg.norm(w)
            beams.append(Beam(float(phi), (bounds[q], bounds[q + 1]), w))
        return cls((lo, hi), tuple(beams))

    @classmethod
    def uniform(cls, num_beams: int, steering_range, cfg: ArrayConfig) -> BeamCodebook:
        """Q beams steered at the centers of Q equal angular slices of the range."""
        if num_beams < 1:
            raise CodebookError("num_beams must be >= 1")
        lo, hi = map(float, steering_range)
        width = (hi - lo) / num_beams
        angles = lo + width * (np.arange(num_beams) + 0.5)
        return cls.from_angles(angles, (lo, hi), cfg)

    @property
    def size(self) -> int:
        return len(self.beams)

    def __len__(self) -> int:
        return len(self.beams)

    @property
    def steering_angles(self) -> np.ndarray:
        return np.array([b.steering_angle for b in self.beams])

    @property
    def sectors(self) -> list[tuple[float, float]]:
        return [b.sector for b in self.beams]

    @property
    def weight_matrix(self) -> np.ndarray:
        """Q x M matrix whose rows are the beamforming vectors."""
        return np.stack([b.weights for b in self.beams])

    def sector_of(self, azimuth: float) -> int:
        """Index of the sector holding ``azimuth``; a shared boundary goes to the lower beam."""
        lo, hi = self.steering_range
        if not lo <= azimuth <= hi:
            raise ValueError(f"azimuth {azimuth} outside steering range {self.steering_range}")
        ends = np.array([b.sector[1] for b in self.beams])
        return int(min(np.searchsorted(ends, azimuth, side="left"), self.size - 1))


def load_codebook(path, cfg: ArrayConfig) -> BeamCodebook:
    """Read a codebook from YAML.

    Accepted forms::

        steering_range: [-45, 45]
        uniform: 64

        steering_range: [-45, 45]
        beams:
          - angle: -30.0
            phases: [0.0, 1.2, ...]   # optional, radians, length M
    """
    data = yaml.safe_load(Path(path).read_text())
    return codebook_from_dict(data, cfg)


def codebook_from_dict(data: dict, cfg: ArrayConfig) -> BeamCodebook:
    if not isinstance(data, dict) or "steering_range" not in data:
        raise CodebookError("codebook needs a steering_range")
    unknown = set(data) - {"steering_range", "uniform", "beams"}
    if unknown:
        raise CodebookError(f"unknown codebook keys: {sorted(unknown)}")
    rng = tuple(float(v) for v in data["steering_range"])
    if ("uniform" in data) == ("beams" in data):
        raise CodebookError("give exactly one of 'uniform' or 'beams'")
    if "uniform" in data:
        return BeamCodebook.uniform(int(data["uniform"]), rng, cfg)
    entries = data["beams"]
    angles = [float(e["angle"]) for e in entries]
    if any("phases" in e for e in entries):
        if not all("phases" in e for e in entries):
            raise CodebookError("either every beam lists phases or none does")
        return BeamCodebook.from_angles(angles, rng, cfg, phases=[e["phases"] for e in entries])
    return BeamCodebook.from_angles(angles, rng, cfg)


@dataclass(frozen=True)
class ChannelState:
    tx_azimuth: float
    los_gain: complex = 1.0
    nlos_gain: complex = 0.0
    nlos_azimuth: float = 0.0
    beta_los: int = 1
    beta_nlos: int = 0
    noise_variance: float = 1.0
    tx_snr: float = 1.0

    def __post_init__(self):
        if self.beta_los not in (0, 1) or self.beta_nlos not in (0, 1):
            raise ValueError("path indicators must be 0 or 1")
        if self.beta_los + self.beta_nlos != 1:
            raise ValueError("exactly one of the LoS / NLoS indicators must be set")
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be > 0")
        if not self.tx_snr > 0:
            raise ValueError("tx_snr must be > 0")


def channel_vectors(state: ChannelState, cfg: ArrayConfig) -> np.ndarray:
    """K x M per-subcarrier channel; frequency-flat, so every row is identical."""
    h = state.beta_los * state.los_gain * steering_vector(state.tx_azimuth, cfg)
    h = h + state.beta_nlos * state.nlos_gain * steering_vector(state.nlos_azimuth, cfg)
    return np.tile(h, (cfg.num_subcarriers, 1))


def received_powers(state: ChannelState, codebook: BeamCodebook, cfg: ArrayConfig) -> np.ndarray:
    """Subcarrier-averaged beamformed power ``mean_k |h_k^T f_q|^2 * SNR`` for every beam."""
    h = channel_vectors(state, cfg)  # K x M
    gains = h @ codebook.weight_matrix.T  # K x Q
    return (np.abs(gains) ** 2).mean(axis=0) * state.tx_snr


def received_power(state: ChannelState, beam_index: int, codebook: BeamCodebook, cfg: ArrayConfig) -> float:
    if not 0 <= beam_index < codebook.size:
        raise IndexError(f"beam index {beam_index} outside [0, {codebook.size})")
    h = channel_vectors(state, cfg)
    g = h @ codebook.beams[beam_index].weights
    return float((np.abs(g) ** 2).mean() * state.tx_snr)


def argmax_lowest(values) -> int:
    """Argmax where values within ``TIE_RTOL`` of the maximum tie and the lowest index wins."""
    values = np.asarray(values, dtype=float)
    top = values.max()
    if top <= 0:
        return int(np.argmax(values >= top))
    return int(np.argmax(values >= top * (1.0 - TIE_RTOL)))


def ebs_oracle(state: ChannelState, codebook: BeamCodebook, cfg: ArrayConfig) -> int:
    """Exhaustive beam sweep: the beam with the highest received power."""
    return argmax_lowest(received_powers(state, codebook, cfg))


@dataclass
class PowerProfile:
    per_beam_power: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.per_beam_power = np.asarray(self.per_beam_power, dtype=float)
        if self.per_beam_power.ndim != 1:
            raise ValueError("power profile must be a vector")
        if np.any(self.per_beam_power < 0):
            raise ValueError("beam powers must be non-negative")

    def __len__(self) -> int:
        return len(self.per_beam_power)


def synth_power_profile(
    state: ChannelState,
    codebook: BeamCodebook,
    cfg: ArrayConfig,
    max_db: float | None = None,
    seed=None,
    frame_index: int = 0,
) -> PowerProfile:
    """Measured power profile: exact beam powers, optionally scaled per beam by a
    seeded factor drawn uniformly in [-max_db, +max_db] dB."""
    power = received_powers(state, codebook, cfg)
    if max_db is not None:
        if max_db < 0:
            raise ValueError(f"max_db must be >= 0, got {max_db}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        jitter_db = rng.uniform(-max_db, max_db, size=power.shape)
        power = power * 10.0 ** (jitter_db / 10.0)
    return PowerProfile(power, frame_index)


def blockage_indicator(state: ChannelState) -> int:
    """1 when the line-of-sight path is absent, else 0."""
    return 1 if state.beta_los == 0 else 0
