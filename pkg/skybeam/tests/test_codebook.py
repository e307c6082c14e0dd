# Third-party
import numpy as np
import pytest

# Package
from ..codebook import (
    ArrayGeometry,
    BeamCodebook,
    BeamVector,
    beam_gain,
    build_codebook,
    steering_vector,
)


@pytest.fixture
def geometry():
    return ArrayGeometry(num_elements=16)


def test_geometry_validation():
    with pytest.raises(ValueError):
        ArrayGeometry(num_elements=0)

    with pytest.raises(ValueError):
        ArrayGeometry(num_elements=4, element_spacing=-0.5)

    with pytest.raises(ValueError, match="orthogonal"):
        ArrayGeometry(num_elements=4, boresight=[0, 0, 1], array_axis=[0, 1, 1])

    g = ArrayGeometry(num_elements=4, boresight=[0, 0, 2], array_axis=[3, 0, 0])
    assert np.allclose(g.boresight, [0, 0, 1])
    assert np.allclose(g.array_axis, [1, 0, 0])


def test_direction_sine(geometry):
    assert geometry.direction_sine([0, 0, 10.0]) == 0
    assert np.isclose(geometry.direction_sine([1.0, 0, 1.0]), np.sqrt(0.5))
    assert np.isclose(geometry.direction_sine([-1.0, 5.0, 1.0]), -1 / np.sqrt(27))

    s = geometry.direction_sine(np.array([[1, 0, 0], [-1, 0, 0.0]]))
    assert np.allclose(s, [1, -1])

    with pytest.raises(ValueError):
        geometry.direction_sine([0, 0, 0])


@pytest.mark.parametrize("sine", [-1.0, -0.3, 0.0, 0.5, 1.0])
def test_steering_vector(geometry, sine):
    beam = steering_vector(geometry, sine)
    assert len(beam) == geometry.num_elements
    assert np.isclose(np.linalg.norm(beam.weights), 1.0)
    assert np.allclose(np.abs(beam.weights), 1 / np.sqrt(geometry.num_elements))

    # the matched channel gets the full array gain
    assert np.isclose(beam_gain(beam, np.conj(beam.weights)), 1.0)


@pytest.mark.parametrize("sine", [1.0001, -2, np.nan])
def test_steering_vector_invalid(geometry, sine):
    with pytest.raises(ValueError, match="Invalid direction"):
        steering_vector(geometry, sine)


def test_beam_vector_modulus():
    with pytest.raises(ValueError, match="modulus"):
        BeamVector(weights=[1.0, 0.5], steering_sine=0.0)

    w = np.exp(1j * np.array([0.1, 0.2, 0.3, 0.4])) / 2
    beam = BeamVector(weights=w, steering_sine=0.1)
    assert beam == BeamVector(weights=w, steering_sine=0.1)

    with pytest.raises(ValueError):
        beam_gain(beam, np.ones(3))


@pytest.mark.parametrize(
    ("M", "Q", "fov"), [(16, 64, 0.866), (16, 32, 0.866), (8, 2, 1.0), (4, 5, 0.5)]
)
def test_build_codebook(M, Q, fov):
    cb = build_codebook(ArrayGeometry(num_elements=M), num_beams=Q, fov_sine_half_width=fov)

    assert len(cb) == Q
    assert cb.num_beams == Q
    assert cb.num_elements == M
    assert cb.weights.shape == (Q, M)
    assert np.allclose(np.linalg.norm(cb.weights, axis=1), 1.0)

    assert cb.steering_sines[0] == -fov
    assert cb.steering_sines[-1] == fov
    assert np.all(np.diff(cb.steering_sines) > 0)
    expected = -fov + np.arange(Q) * 2 * fov / (Q - 1)
    assert np.allclose(cb.steering_sines, expected)

    for q, beam in enumerate(cb):
        assert beam == cb[q]


def test_build_codebook_invalid(geometry):
    with pytest.raises(ValueError):
        build_codebook(geometry, num_beams=1)

    with pytest.raises(ValueError):
        build_codebook(geometry, num_beams=64, fov_sine_half_width=0)

    with pytest.raises(ValueError):
        build_codebook(geometry, num_beams=64, fov_sine_half_width=1.5)


def test_codebook_constructor_checks(geometry):
    cb = build_codebook(geometry, num_beams=8)

    with pytest.raises(ValueError, match="increasing"):
        BeamCodebook(cb.beams[::-1], geometry, 0.866)

    with pytest.raises(ValueError, match="span"):
        BeamCodebook(cb.beams, geometry, 0.9)

    with pytest.raises(ValueError, match="does not match"):
        BeamCodebook(cb.beams, ArrayGeometry(num_elements=8), 0.866)


def test_boresight_gain(geometry):
    """A drone straight above the array is best served by the middle beams."""
    cb = build_codebook(geometry, num_beams=64)
    gains = cb.array_response([0.0])[0]
    best = int(np.argmax(gains))
    assert best in (31, 32)
    assert np.isclose(gains[31], gains[32])


def test_array_response_peaks_at_steering_sine(geometry):
    cb = build_codebook(geometry, num_beams=64)
    response = cb.array_response(cb.steering_sines)
    assert response.shape == (64, 64)
    assert np.allclose(np.diag(response), 1.0)
    assert np.array_equal(np.argmax(response, axis=1), np.arange(64))


def test_nearest_beam(geometry):
    cb = build_codebook(geometry, num_beams=64)
    rng = np.random.default_rng(42)
    sines = rng.uniform(-0.866, 0.866, size=1000)

    best = np.argmax(cb.array_response(sines), axis=1)
    assert np.array_equal(cb.nearest_beam(sines), best)

    # the even-beam subset after downsampling a sweep by 2
    best_even = np.argmax(cb.array_response(sines)[:, ::2], axis=1)
    assert np.array_equal(cb.nearest_beam(sines, stride=2), best_even)
    assert cb.nearest_beam(0.866, stride=2) == 31

    # ties go to the lower index
    cb3 = build_codebook(geometry, num_beams=3, fov_sine_half_width=1.0)
    assert cb3.nearest_beam(0.5) == 1
    assert cb3.nearest_beam(-0.5) == 0

    with pytest.raises(ValueError):
        cb.nearest_beam(0.0, stride=3)


def test_off_grid_sine_within_one_step(geometry):
    cb = build_codebook(geometry, num_beams=64)
    rng = np.random.default_rng(7)
    sines = rng.uniform(-0.866, 0.866, size=1000)

    best = np.argmax(cb.array_response(sines), axis=1)
    step = np.diff(cb.steering_sines).max()
    assert np.all(np.abs(cb.steering_sines[best] - sines) <= step)


def test_beam_gain_global_phase(geometry):
    cb = build_codebook(geometry, num_beams=64)
    rng = np.random.default_rng(3)
    for _ in range(200):
        h = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        beam = cb.beams[rng.integers(64)]
        rotated = np.exp(1j * rng.uniform(0, 2 * np.pi)) * h
        assert np.isclose(beam_gain(beam, rotated), beam_gain(beam, h), rtol=0, atol=1e-9)


def test_codebook_write_read(tmpdir, geometry):
    cb = build_codebook(geometry, num_beams=32, fov_sine_half_width=0.7)
    filename = str(tmpdir / "codebook.txt")
    cb.write(filename)

    cb2 = BeamCodebook.read(filename)
    assert cb2.num_beams == cb.num_beams
    assert cb2.geometry == cb.geometry
    assert cb2.identifier == cb.identifier
    assert np.allclose(cb2.weights, cb.weights, rtol=0, atol=1e-15)
    assert np.array_equal(cb2.steering_sines, cb.steering_sines)

    with pytest.raises(OSError):
        cb.write(filename)
    cb.write(filename, overwrite=True)


def test_codebook_read_wrong_file(tmpdir):
    filename = str(tmpdir / "not-a-codebook.txt")
    with open(filename, "w") as f:
        f.write("# hello\n1 2 3\n")

    with pytest.raises(ValueError, match="not a skybeam codebook"):
        BeamCodebook.read(filename)
