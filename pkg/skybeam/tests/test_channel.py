# Third-party
import numpy as np
import pytest

# Package
from ..channel import (
    ChannelRealization,
    LinkGeometry,
    NoiseModel,
    los_channel,
    received_power_vector,
)
from ..codebook import ArrayGeometry, build_codebook
from ..oracle import downsample_power, optimal_beam


@pytest.fixture
def codebook():
    return build_codebook(ArrayGeometry(num_elements=16), num_beams=64)


def test_link_geometry():
    link = LinkGeometry([0, 0, 0], [3.0, 0, 4.0])
    assert link.distance == 5.0
    assert np.array_equal(link.offset, [3, 0, 4])

    with pytest.raises(ValueError, match="coincide"):
        LinkGeometry([1, 2, 3], [1, 2, 3])

    with pytest.raises(ValueError):
        LinkGeometry([0, 0], [1, 2, 3])


def test_channel_realization():
    with pytest.raises(ValueError):
        ChannelRealization(h=np.zeros(4))

    with pytest.raises(ValueError):
        ChannelRealization(h=np.ones(4), num_subcarriers=0)

    chan = ChannelRealization(h=np.ones(4), num_subcarriers=2)
    assert len(chan) == 4
    assert np.allclose(chan.scaled(2j).h, 2j)


def test_noise_model():
    assert NoiseModel(snr_db=np.inf).noiseless
    assert NoiseModel(enabled=False).noiseless
    assert not NoiseModel().noiseless
    assert np.isclose(NoiseModel(snr_db=20).snr, 100)

    with pytest.raises(ValueError):
        NoiseModel(snr_db=np.nan)


def test_los_channel_direction():
    array = ArrayGeometry(num_elements=16)
    rng = np.random.default_rng(0)

    link = LinkGeometry([0, 0, 0], [30.0, 10.0, 40.0])
    chan = los_channel(link, array, rng)
    assert np.isclose(chan.direction_sine, 30 / np.sqrt(30**2 + 10**2 + 40**2))
    assert np.isclose(np.linalg.norm(chan.h), 1 / link.distance)
    assert np.isclose(abs(chan.path_gain), 1 / link.distance)

    chan = los_channel(link, array, rng, reference_distance=2.0, num_subcarriers=4)
    assert np.isclose(np.linalg.norm(chan.h), 2 / link.distance)
    assert chan.num_subcarriers == 4


def test_noiseless_power_vector(codebook):
    """Noiseless powers follow the analytic array gain exactly."""
    rng = np.random.default_rng(1)
    link = LinkGeometry([0, 0, 0], [-12.0, 3.0, 25.0])
    chan = los_channel(link, codebook.geometry, rng)

    noise = NoiseModel(enabled=False)
    pv = received_power_vector(chan, codebook, noise)
    assert len(pv) == 64
    assert pv.codebook_id == codebook.identifier

    expected = noise.snr * codebook.array_response([chan.direction_sine])[0]
    expected = expected / link.distance**2
    assert np.allclose(pv.powers, expected)
    assert optimal_beam(pv).index == codebook.nearest_beam(chan.direction_sine)


def test_noiseless_argmax_matches_nearest_beam(codebook):
    rng = np.random.default_rng(2024)
    noise = NoiseModel(enabled=False)
    for _ in range(1000):
        up = rng.uniform(10, 100)
        east = up * np.tan(rng.uniform(-np.pi / 3, np.pi / 3))
        link = LinkGeometry([0, 0, 0], [east, rng.uniform(-20, 20), up])
        chan = los_channel(link, codebook.geometry, rng)

        pv = received_power_vector(chan, codebook, noise)
        assert optimal_beam(pv).index == codebook.nearest_beam(chan.direction_sine)


def test_noisy_power_vector_reproducible(codebook):
    link = LinkGeometry([0, 0, 0], [5.0, 0.0, 20.0])
    chan = los_channel(link, codebook.geometry, np.random.default_rng(2))
    noise = NoiseModel(snr_db=30, rng_seed=12)

    pv1 = received_power_vector(chan, codebook, noise)
    pv2 = received_power_vector(chan, codebook, noise)
    assert pv1 == pv2
    assert np.all(pv1.powers >= 0)

    pv3 = received_power_vector(chan, codebook, noise, np.random.default_rng(13))
    assert pv1 != pv3


def test_power_vector_length_mismatch(codebook):
    chan = ChannelRealization(h=np.ones(8))
    with pytest.raises(ValueError, match="does not match"):
        received_power_vector(chan, codebook, NoiseModel(enabled=False))


@pytest.mark.parametrize(("snr_db", "min_agreement"), [(80.0, 0.99), (150.0, 1.0)])
def test_label_agreement_high_snr(codebook, snr_db, min_agreement):
    """At high SNR the measured optimal beam agrees with the analytic one."""
    rng = np.random.default_rng(42)
    noise = NoiseModel(snr_db=snr_db, rng_seed=7)
    noise_rng = np.random.default_rng(7)

    n = 1000
    agree = 0
    for _ in range(n):
        # drones between 10 and 100 m up, inside the codebook field of view
        up = rng.uniform(10, 100)
        east = up * np.tan(rng.uniform(-np.pi / 3, np.pi / 3)) * 0.95
        link = LinkGeometry([0, 0, 0], [east, rng.uniform(-5, 5), up])
        chan = los_channel(link, codebook.geometry, rng)

        pv = received_power_vector(chan, codebook, noise, noise_rng)
        analytic = codebook.nearest_beam(chan.direction_sine)
        assert codebook.nearest_beam(chan.direction_sine, stride=2) == optimal_beam(
            downsample_power(received_power_vector(chan, codebook, NoiseModel(enabled=False)))
        ).index
        agree += optimal_beam(pv).index == analytic

    assert agree / n >= min_agreement
