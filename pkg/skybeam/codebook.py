# Standard library
import os
from dataclasses import dataclass, field
from functools import cached_property

# Third-party
import numpy as np

# Project
from .utils import atomic_path

__all__ = [
    "ArrayGeometry",
    "BeamCodebook",
    "BeamVector",
    "beam_gain",
    "build_codebook",
    "steering_vector",
]

_CODEBOOK_FORMAT = "skybeam-codebook"
_CODEBOOK_VERSION = 1


def _unit_vector(vec, name):
    vec = np.array(vec, dtype=float).reshape(-1)
    if vec.shape != (3,) or not np.all(np.isfinite(vec)):
        msg = f"{name} must be a finite 3-vector, got {vec!r}"
        raise ValueError(msg)

    norm = np.linalg.norm(vec)
    if norm == 0:
        msg = f"{name} must be nonzero"
        raise ValueError(msg)

    vec = vec / norm
    vec.flags.writeable = False
    return vec


@dataclass(frozen=True)
class ArrayGeometry:
    """
    Geometry of an M-element uniform linear array (ULA).

    Parameters
    ----------
    num_elements : int
        The number of antenna elements, M.
    element_spacing : float (optional)
        The element spacing in carrier wavelengths. Default: half-wavelength.
    boresight : array_like (optional)
        The direction perpendicular to the array face, in world coordinates.
        The default array faces the sky.
    array_axis : array_like (optional)
        The direction along which the elements are laid out. Must be
        orthogonal to ``boresight``.
    """

    num_elements: int
    element_spacing: float = 0.5
    boresight: np.ndarray = field(default=(0.0, 0.0, 1.0))
    array_axis: np.ndarray = field(default=(1.0, 0.0, 0.0))

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 1:
            msg = f"num_elements must be a positive integer, got {self.num_elements}"
            raise ValueError(msg)
        object.__setattr__(self, "num_elements", int(self.num_elements))

        if not self.element_spacing > 0:
            msg = f"element_spacing must be positive, got {self.element_spacing}"
            raise ValueError(msg)
        object.__setattr__(self, "element_spacing", float(self.element_spacing))

        boresight = _unit_vector(self.boresight, "boresight")
        array_axis = _unit_vector(self.array_axis, "array_axis")
        if abs(np.dot(boresight, array_axis)) > 1e-9:
            msg = "The array axis must be orthogonal to the boresight direction"
            raise ValueError(msg)

        object.__setattr__(self, "boresight", boresight)
        object.__setattr__(self, "array_axis", array_axis)

    def __eq__(self, other):
        if not isinstance(other, ArrayGeometry):
            return NotImplemented
        return (
            self.num_elements == other.num_elements
            and self.element_spacing == other.element_spacing
            and np.array_equal(self.boresight, other.boresight)
            and np.array_equal(self.array_axis, other.array_axis)
        )

    __hash__ = None

    def direction_sine(self, direction):
        """Sine of the angle between a direction and boresight, measured in
        the plane of the array axis.

        Parameters
        ----------
        direction : array_like
            One or more 3-vectors, shape ``(3,)`` or ``(N, 3)``. These do not
            need to be normalized.
        """
        direction = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(direction, axis=-1)
        if np.any(norm == 0):
            raise ValueError("Cannot compute the direction of a zero-length vector")
        s = (direction @ self.array_axis) / norm
        return np.clip(s, -1.0, 1.0)

    def phases(self, sine_angle):
        """Per-element phase (radians) of a plane wave arriving with the given
        direction sine."""
        m = np.arange(self.num_elements)
        return 2 * np.pi * self.element_spacing * m * sine_angle


@dataclass(frozen=True)
class BeamVector:
    """
    A unit-norm analog beamforming vector.

    Parameters
    ----------
    weights : array_like
        Complex weights, one per array element. Every entry has modulus
        :math:`1/\\sqrt{M}`.
    steering_sine : float
        The sine of the angle this beam points toward.
    """

    weights: np.ndarray
    steering_sine: float

    def __post_init__(self):
        weights = np.array(self.weights, dtype=complex).reshape(-1)
        if weights.size == 0:
            raise ValueError("A beam must have at least one weight")

        expected = 1 / np.sqrt(weights.size)
        if not np.allclose(np.abs(weights), expected, rtol=0, atol=1e-9):
            msg = (
                "Beam weights must all have modulus 1/sqrt(M) (analog phase "
                "shifters only)"
            )
            raise ValueError(msg)

        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "steering_sine", float(self.steering_sine))

    def __len__(self):
        return self.weights.size

    def __eq__(self, other):
        if not isinstance(other, BeamVector):
            return NotImplemented
        return self.steering_sine == other.steering_sine and np.array_equal(
            self.weights, other.weights
        )

    __hash__ = None


def steering_vector(geometry, sine_angle):
    """
    The ULA response toward a direction, normalized to a unit-norm beam.

    Element ``m`` (0-based) has phase ``2 pi * spacing * m * sine_angle`` and
    modulus ``1/sqrt(M)``.

    Parameters
    ----------
    geometry : `~skybeam.codebook.ArrayGeometry`
    sine_angle : float
        Sine of the steering angle, in [-1, 1].

    Returns
    -------
    beam : `~skybeam.codebook.BeamVector`
    """
    sine_angle = float(sine_angle)
    if not np.isfinite(sine_angle) or abs(sine_angle) > 1:
        msg = f"Invalid direction: sine of the angle must be in [-1, 1], got {sine_angle}"
        raise ValueError(msg)

    weights = np.exp(1j * geometry.phases(sine_angle)) / np.sqrt(
        geometry.num_elements
    )
    return BeamVector(weights=weights, steering_sine=sine_angle)


def beam_gain(beam, channel):
    """
    Array gain :math:`|h^T f|^2` of one beam for one channel vector.

    The product is the unconjugated transpose, so the matched channel for a
    beam ``f`` is ``conj(f)``.

    Parameters
    ----------
    beam : `~skybeam.codebook.BeamVector`
    channel : array_like
        Complex channel vector with one entry per array element.

    Returns
    -------
    gain : float
    """
    channel = np.asarray(channel, dtype=complex).reshape(-1)
    if channel.size != len(beam):
        msg = (
            f"Channel length ({channel.size}) does not match the number of "
            f"array elements ({len(beam)})"
        )
        raise ValueError(msg)
    return float(np.abs(channel @ beam.weights) ** 2)


class BeamCodebook:
    """
    An ordered set of beams uniformly spaced in direction sine.

    Use `~skybeam.codebook.build_codebook` to construct the standard grid, or
    `~skybeam.codebook.BeamCodebook.read` to load a codebook written with
    `~skybeam.codebook.BeamCodebook.write`.

    Parameters
    ----------
    beams : iterable of `~skybeam.codebook.BeamVector`
        At least two beams, sorted by strictly increasing steering sine.
    geometry : `~skybeam.codebook.ArrayGeometry`
    fov_sine_half_width : float
        Half-width of the field of view, in sine units. The outermost beams
        point at plus/minus this value.
    """

    def __init__(self, beams, geometry, fov_sine_half_width):
        beams = tuple(beams)
        if len(beams) < 2:
            msg = f"A codebook needs at least 2 beams, got {len(beams)}"
            raise ValueError(msg)

        for beam in beams:
            if len(beam) != geometry.num_elements:
                msg = (
                    f"Beam with {len(beam)} weights does not match an array with "
                    f"{geometry.num_elements} elements"
                )
                raise ValueError(msg)

        sines = np.array([b.steering_sine for b in beams])
        if np.any(np.diff(sines) <= 0):
            raise ValueError("Steering sines must be strictly increasing")

        fov = float(fov_sine_half_width)
        if not 0 < fov <= 1:
            msg = f"fov_sine_half_width must be in (0, 1], got {fov}"
            raise ValueError(msg)

        if not (
            np.isclose(sines[0], -fov, atol=1e-12)
            and np.isclose(sines[-1], fov, atol=1e-12)
        ):
            msg = f"Steering sines must span [-{fov}, {fov}]"
            raise ValueError(msg)

        self._beams = beams
        self.geometry = geometry
        self.fov_sine_half_width = fov

    # ------------------------------------------------------------------------
    # Computed or convenience properties

    @property
    def beams(self):
        return self._beams

    @property
    def num_beams(self):
        """The codebook size, Q."""
        return len(self._beams)

    @property
    def num_elements(self):
        """The number of array elements, M."""
        return self.geometry.num_elements

    @cached_property
    def weights(self):
        """All beam weights as a read-only ``(Q, M)`` complex array."""
        w = np.stack([b.weights for b in self._beams])
        w.flags.writeable = False
        return w

    @cached_property
    def steering_sines(self):
        s = np.array([b.steering_sine for b in self._beams])
        s.flags.writeable = False
        return s

    @property
    def identifier(self):
        """A short string identifying the codebook shape, used to tag power
        vectors."""
        return (
            f"ula{self.num_elements}-q{self.num_beams}-fov{self.fov_sine_half_width:g}"
        )

    # ------------------------------------------------------------------------
    # Gains and analytic beam selection

    def gains(self, channel):
        """
        Array gain of every beam for one or more channel vectors.

        Parameters
        ----------
        channel : array_like
            Shape ``(M,)`` or ``(N, M)``.

        Returns
        -------
        gains : `numpy.ndarray`
            Shape ``(Q,)`` or ``(N, Q)``.
        """
        channel = np.asarray(channel, dtype=complex)
        if channel.shape[-1] != self.num_elements:
            msg = (
                f"Channel length ({channel.shape[-1]}) does not match the number "
                f"of array elements ({self.num_elements})"
            )
            raise ValueError(msg)
        return np.abs(channel @ self.weights.T) ** 2

    def array_response(self, sines):
        """
        Gain of every beam for line-of-sight channels arriving from each of
        the input direction sines.

        Parameters
        ----------
        sines : array_like
            Direction sines in [-1, 1].

        Returns
        -------
        response : `numpy.ndarray`
            Shape ``(len(sines), Q)``.
        """
        sines = np.atleast_1d(np.asarray(sines, dtype=float))
        if np.any(np.abs(sines) > 1):
            raise ValueError("Direction sines must be in [-1, 1]")

        phases = self.geometry.phases(sines[:, None])
        channels = np.exp(-1j * phases) / np.sqrt(self.num_elements)
        return self.gains(channels)

    def nearest_beam(self, sine, stride=1):
        """
        Index of the beam whose steering sine is closest to ``sine``, with ties
        going to the lowest index.

        For any direction inside the field of view this is the beam with the
        largest line-of-sight gain.

        Parameters
        ----------
        sine : float, array_like
        stride : int (optional)
            Only consider every ``stride``-th beam starting from beam 0, and
            return the index within that subset. With ``stride=2`` this is the
            analytic label after `~skybeam.oracle.downsample_power`.
        """
        stride = int(stride)
        if stride < 1 or self.num_beams % stride != 0:
            msg = f"Invalid stride {stride} for a codebook of {self.num_beams} beams"
            raise ValueError(msg)

        sine = np.asarray(sine, dtype=float)
        dist = np.abs(sine[..., None] - self.steering_sines[::stride])
        return np.argmin(dist, axis=-1)

    # ------------------------------------------------------------------------
    # Text file I/O

    def write(self, filename, overwrite=False):
        """
        Write the codebook to a text matrix file.

        The first line is a header with the format name, version, and the
        array and codebook parameters. Each following row is one beam, with
        the real and imaginary parts of the weights interleaved.

        Parameters
        ----------
        filename : str
        overwrite : bool (optional)
        """
        if os.path.exists(filename) and not overwrite:
            msg = f"File {filename} already exists. Use overwrite=True to replace it."
            raise OSError(msg)

        g = self.geometry
        header = (
            f"{_CODEBOOK_FORMAT} v{_CODEBOOK_VERSION} "
            f"M={g.num_elements} Q={self.num_beams} "
            f"fov={self.fov_sine_half_width!r} spacing={g.element_spacing!r} "
            f"boresight={','.join(repr(float(x)) for x in g.boresight)} "
            f"axis={','.join(repr(float(x)) for x in g.array_axis)}"
        )

        data = np.empty((self.num_beams, 2 * self.num_elements))
        data[:, 0::2] = self.weights.real
        data[:, 1::2] = self.weights.imag

        with atomic_path(filename) as tmp:
            np.savetxt(tmp, data, fmt="%.17g", header=header)

    @classmethod
    def read(cls, filename):
        """
        Read a codebook written by `~skybeam.codebook.BeamCodebook.write`.

        The steering sines are reconstructed from the uniform grid defined by
        the header.
        """
        with open(filename, encoding="utf-8") as f:
            header = f.readline().lstrip("#").split()

        if len(header) < 2 or header[0] != _CODEBOOK_FORMAT:
            msg = f"{filename} is not a skybeam codebook file"
            raise ValueError(msg)

        pars = dict(item.split("=", 1) for item in header[2:])
        try:
            num_elements = int(pars["M"])
            num_beams = int(pars["Q"])
            fov = float(pars["fov"])
            geometry = ArrayGeometry(
                num_elements=num_elements,
                element_spacing=float(pars.get("spacing", 0.5)),
                boresight=[float(x) for x in pars.get("boresight", "0,0,1").split(",")],
                array_axis=[float(x) for x in pars.get("axis", "1,0,0").split(",")],
            )
        except KeyError as e:
            msg = f"Codebook header in {filename} is missing the {e} field"
            raise ValueError(msg) from e

        data = np.atleast_2d(np.loadtxt(filename, comments="#", dtype=float))
        if data.shape != (num_beams, 2 * num_elements):
            msg = (
                f"Codebook data in {filename} has shape {data.shape}, expected "
                f"({num_beams}, {2 * num_elements})"
            )
            raise ValueError(msg)

        weights = data[:, 0::2] + 1j * data[:, 1::2]
        sines = _grid_sines(num_beams, fov)
        beams = [BeamVector(w, s) for w, s in zip(weights, sines)]
        return cls(beams, geometry, fov)

    def __len__(self):
        return self.num_beams

    def __getitem__(self, index):
        return self._beams[index]

    def __iter__(self):
        return iter(self._beams)

    def __repr__(self):
        return (
            f"<BeamCodebook: {self.num_beams} beams, {self.num_elements} elements, "
            f"fov=+/-{self.fov_sine_half_width:g}>"
        )


def _grid_sines(num_beams, fov_sine_half_width):
    q = np.arange(num_beams)
    sines = -fov_sine_half_width + q * (2 * fov_sine_half_width) / (num_beams - 1)
    # pin the endpoints so they are exactly +/- fov
    sines[0] = -fov_sine_half_width
    sines[-1] = fov_sine_half_width
    return sines


def build_codebook(geometry, num_beams=64, fov_sine_half_width=0.866):
    """
    Build an oversampled beamforming codebook on a grid uniform in sine.

    Beam ``q`` (0-based) steers toward
    ``-fov + q * 2 * fov / (num_beams - 1)``.

    Parameters
    ----------
    geometry : `~skybeam.codebook.ArrayGeometry`
    num_beams : int (optional)
        The codebook size, Q. Must be at least 2.
    fov_sine_half_width : float (optional)
        Half-width of the field of view in sine units, in (0, 1]. The default
        0.866 corresponds to +/- 60 degrees.

    Returns
    -------
    codebook : `~skybeam.codebook.BeamCodebook`
    """
    if int(num_beams) != num_beams or num_beams < 2:
        msg = f"A codebook needs at least 2 beams, got {num_beams}"
        raise ValueError(msg)

    fov = float(fov_sine_half_width)
    if not 0 < fov <= 1:
        msg = f"fov_sine_half_width must be in (0, 1], got {fov}"
        raise ValueError(msg)

    sines = _grid_sines(int(num_beams), fov)
    beams = [steering_vector(geometry, s) for s in sines]
    return BeamCodebook(beams, geometry, fov)
