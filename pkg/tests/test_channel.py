import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from visbeam.channel import (
    ArrayConfig,
    BeamCodebook,
    ChannelState,
    CodebookError,
    argmax_lowest,
    blockage_indicator,
    codebook_from_dict,
    ebs_oracle,
    load_codebook,
    received_power,
    received_powers,
    steering_vector,
    synth_power_profile,
)


def test_steering_vector_phases(array_cfg):
    a = steering_vector(30.0, array_cfg)
    # d = 0.5, sin 30 = 0.5 -> phase step pi/2 per element
    assert np.allclose(a[:4], [1, 1j, -1, -1j])
    assert np.isclose(np.linalg.norm(a), np.sqrt(array_cfg.num_elements))


@pytest.mark.parametrize("q", [1, 16, 64, 128])
def test_uniform_codebook_tiles_the_range(q, array_cfg):
    cb = BeamCodebook.uniform(q, (-45, 45), array_cfg)
    assert cb.size == q
    assert cb.sectors[0][0] == -45 and cb.sectors[-1][1] == 45
    for (a, b), (c, _) in zip(cb.sectors, cb.sectors[1:]):
        assert b == c
    for beam in cb.beams:
        assert np.isclose(np.linalg.norm(beam.weights), 1.0)


def test_matched_beam_gain_equals_array_size(array_cfg):
    cb = BeamCodebook.uniform(8, (-45, 45), array_cfg)
    phi = cb.steering_angles[3]
    p = received_power(ChannelState(phi, tx_snr=2.0), 3, cb, array_cfg)
    # |a^H a|^2 / M = M, times SNR
    assert p == pytest.approx(2.0 * array_cfg.num_elements)


def test_received_power_rejects_bad_index(array_cfg):
    cb = BeamCodebook.uniform(4, (-45, 45), array_cfg)
    with pytest.raises(IndexError):
        received_power(ChannelState(0.0), 4, cb, array_cfg)


def test_oracle_picks_sector_beam_on_grid(array_cfg):
    cb = BeamCodebook.uniform(64, (-45, 45), array_cfg)
    for az in np.linspace(-45, 45, 1000):
        assert ebs_oracle(ChannelState(float(az)), cb, array_cfg) == cb.sector_of(float(az))


@given(st.floats(-45, 45), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_oracle_invariant_to_snr(az, snr_a, snr_b):
    cfg = ArrayConfig()
    cb = BeamCodebook.uniform(32, (-45, 45), cfg)
    a = ebs_oracle(ChannelState(az, tx_snr=snr_a), cb, cfg)
    b = ebs_oracle(ChannelState(az, tx_snr=snr_b), cb, cfg)
    assert a == b


def test_argmax_ties_go_to_lowest_index():
    assert argmax_lowest([1.0, 3.0, 3.0, 2.0]) == 1
    assert argmax_lowest([0.0, 0.0]) == 0
    assert argmax_lowest([2.0, 2.0 * (1 - 1e-12)]) == 0


def test_pure_nlos_peaks_toward_reflector(array_cfg):
    cb = BeamCodebook.uniform(64, (-45, 45), array_cfg)
    s = ChannelState(20.0, nlos_gain=0.1, nlos_azimuth=-30.0, beta_los=0, beta_nlos=1)
    assert ebs_oracle(s, cb, array_cfg) == cb.sector_of(-30.0)
    assert blockage_indicator(s) == 1
    assert blockage_indicator(ChannelState(0.0)) == 0


def test_channel_state_validation():
    with pytest.raises(ValueError):
        ChannelState(0.0, beta_los=1, beta_nlos=1)
    with pytest.raises(ValueError):
        ChannelState(0.0, noise_variance=0)
    with pytest.raises(ValueError):
        ChannelState(0.0, tx_snr=-1)


def test_noise_stays_within_db_bounds(array_cfg):
    cb = BeamCodebook.uniform(32, (-45, 45), array_cfg)
    s = ChannelState(10.0)
    clean = received_powers(s, cb, array_cfg)
    noisy = synth_power_profile(s, cb, array_cfg, max_db=3.0, seed=7).per_beam_power
    ratio_db = 10 * np.log10(noisy / clean)
    assert np.all(np.abs(ratio_db) <= 3.0 + 1e-9)
    again = synth_power_profile(s, cb, array_cfg, max_db=3.0, seed=7).per_beam_power
    assert np.array_equal(noisy, again)
    with pytest.raises(ValueError):
        synth_power_profile(s, cb, array_cfg, max_db=-1)


def test_codebook_from_yaml(tmp_path, array_cfg):
    path = tmp_path / "cb.yaml"
    path.write_text(yaml.safe_dump({"steering_range": [-45, 45], "beams": [{"angle": -20}, {"angle": 0}, {"angle": 25}]}))
    cb = load_codebook(path, array_cfg)
    assert cb.size == 3
    assert cb.sector_of(-45) == 0 and cb.sector_of(45) == 2
    # boundaries sit halfway between neighbours in sine space
    s = np.sin(np.deg2rad(cb.sectors[0][1]))
    assert s == pytest.approx((np.sin(np.deg2rad(-20)) + 0) / 2)


def test_codebook_with_phases(array_cfg):
    phases = [[0.0] * 16, [np.pi * m / 4 for m in range(16)]]
    cb = codebook_from_dict({"steering_range": [-10, 10], "beams": [{"angle": -5, "phases": phases[0]}, {"angle": 5, "phases": phases[1]}]}, array_cfg)
    assert np.allclose(np.abs(cb.beams[1].weights), 1 / 4)


@pytest.mark.parametrize(
    "data",
    [
        {"uniform": 4},
        {"steering_range": [-45, 45]},
        {"steering_range": [-45, 45], "uniform": 4, "beams": [{"angle": 0}]},
        {"steering_range": [-45, 45], "beams": [{"angle": 10}, {"angle": 0}]},
        {"steering_range": [-45, 45], "beams": [{"angle": 50}]},
        {"steering_range": [45, -45], "uniform": 2},
        {"steering_range": [-45, 45], "uniform": 4, "extra": 1},
    ],
)
def test_bad_codebooks_rejected(data, array_cfg):
    with pytest.raises(CodebookError):
        codebook_from_dict(data, array_cfg)
