# Standard library
from dataclasses import dataclass

# Third-party
import numpy as np

# Project
from .codebook import steering_vector
from .oracle import PowerVector

__all__ = [
    "ChannelRealization",
    "LinkGeometry",
    "NoiseModel",
    "los_channel",
    "received_power_vector",
]


@dataclass(frozen=True)
class LinkGeometry:
    """
    Positions of the basestation array and the drone, in meters, in the local
    East-North-Up frame.

    Parameters
    ----------
    bs_position : array_like
    drone_position : array_like
    carrier_wavelength : float (optional)
        Informational only: element spacing is expressed in wavelengths. The
        default corresponds to a 60 GHz carrier.
    """

    bs_position: np.ndarray
    drone_position: np.ndarray
    carrier_wavelength: float = 0.005

    def __post_init__(self):
        for name in ["bs_position", "drone_position"]:
            vec = np.array(getattr(self, name), dtype=float).reshape(-1)
            if vec.shape != (3,) or not np.all(np.isfinite(vec)):
                msg = f"{name} must be a finite 3-vector"
                raise ValueError(msg)
            vec.flags.writeable = False
            object.__setattr__(self, name, vec)

        if np.array_equal(self.bs_position, self.drone_position):
            msg = "The basestation and drone positions must not coincide"
            raise ValueError(msg)

    @property
    def offset(self):
        """Vector from the basestation to the drone."""
        return self.drone_position - self.bs_position

    @property
    def distance(self):
        return float(np.linalg.norm(self.offset))


@dataclass(frozen=True)
class ChannelRealization:
    """
    A flat line-of-sight channel: the same vector ``h`` on every subcarrier.

    Parameters
    ----------
    h : array_like
        Complex channel vector with one entry per array element.
    num_subcarriers : int (optional)
        The number of OFDM subcarriers, K.
    path_gain : complex (optional)
        The complex path gain used to build ``h``.
    direction_sine : float (optional)
        The direction sine of the line-of-sight path, if known.
    """

    h: np.ndarray
    num_subcarriers: int = 1
    path_gain: complex = 1.0 + 0j
    direction_sine: float = np.nan

    def __post_init__(self):
        h = np.array(self.h, dtype=complex).reshape(-1)
        if h.size == 0 or not np.linalg.norm(h) > 0:
            raise ValueError("The channel vector must be nonzero")
        h.flags.writeable = False
        object.__setattr__(self, "h", h)

        if int(self.num_subcarriers) != self.num_subcarriers or self.num_subcarriers < 1:
            msg = f"num_subcarriers must be a positive integer, got {self.num_subcarriers}"
            raise ValueError(msg)
        object.__setattr__(self, "num_subcarriers", int(self.num_subcarriers))

    def __len__(self):
        return self.h.size

    def scaled(self, factor):
        """Return a copy with the channel multiplied by a complex factor."""
        return self.__class__(
            h=self.h * factor,
            num_subcarriers=self.num_subcarriers,
            path_gain=self.path_gain * factor,
            direction_sine=self.direction_sine,
        )


@dataclass(frozen=True)
class NoiseModel:
    """
    Receiver noise for the power measurements.

    Parameters
    ----------
    snr_db : float (optional)
        Transmit SNR, :math:`P / \\sigma^2`, in dB. The noise variance is fixed
        to 1 and the symbol power follows from this value.
    rng_seed : int (optional)
        Seed used when no random generator is passed in explicitly.
    enabled : bool (optional)
        Set to False (or set ``snr_db=inf``) for noiseless power vectors.
    """

    snr_db: float = 25.0
    rng_seed: int = None
    enabled: bool = True

    def __post_init__(self):
        snr_db = float(self.snr_db)
        if np.isnan(snr_db) or snr_db == -np.inf:
            msg = f"snr_db must be finite (or +inf to disable noise), got {snr_db}"
            raise ValueError(msg)
        object.__setattr__(self, "snr_db", snr_db)

    @property
    def noiseless(self):
        return not self.enabled or self.snr_db == np.inf

    @property
    def snr(self):
        """Linear transmit SNR. With ``snr_db=inf`` this is 1, so noiseless
        powers are the bare array gains scaled by the path loss."""
        if self.snr_db == np.inf:
            return 1.0
        return 10 ** (self.snr_db / 10)

    def get_rng(self, rng=None):
        if rng is None:
            return np.random.default_rng(self.rng_seed)
        return rng


def los_channel(geometry, array, rng, reference_distance=1.0, num_subcarriers=1):
    """
    Line-of-sight channel from the drone to the basestation array.

    The channel is ``g * conj(a(s))`` where ``a(s)`` is the unit-norm ULA
    steering vector for the direction sine ``s`` of the drone as seen from the
    array, ``|g| = reference_distance / distance``, and the phase of ``g`` is
    uniform in [0, 2 pi).

    Parameters
    ----------
    geometry : `~skybeam.channel.LinkGeometry`
    array : `~skybeam.codebook.ArrayGeometry`
    rng : `numpy.random.Generator`
        Source of the random path phase.
    reference_distance : float (optional)
        Distance in meters at which the path amplitude is 1.
    num_subcarriers : int (optional)

    Returns
    -------
    channel : `~skybeam.channel.ChannelRealization`
    """
    s = float(array.direction_sine(geometry.offset))
    amplitude = reference_distance / geometry.distance
    path_gain = amplitude * np.exp(1j * rng.uniform(0, 2 * np.pi))
    h = path_gain * np.conj(steering_vector(array, s).weights)
    return ChannelRealization(
        h=h,
        num_subcarriers=num_subcarriers,
        path_gain=complex(path_gain),
        direction_sine=s,
    )


def received_power_vector(chan, codebook, noise, rng=None):
    """
    Received power for every beam of the codebook, averaged over subcarriers.

    With noise, entry ``q`` is ``(1/K) sum_k |h^T f_q x + v_k|^2`` with
    ``|x|^2 = SNR`` and unit-variance complex Gaussian ``v_k``. Without noise,
    entry ``q`` is ``SNR * |h^T f_q|^2``.

    Parameters
    ----------
    chan : `~skybeam.channel.ChannelRealization`
    codebook : `~skybeam.codebook.BeamCodebook`
    noise : `~skybeam.channel.NoiseModel`
    rng : `numpy.random.Generator` (optional)
        Defaults to a generator seeded from ``noise.rng_seed``.

    Returns
    -------
    powers : `~skybeam.oracle.PowerVector`
    """
    if len(chan) != codebook.num_elements:
        msg = (
            f"Channel length ({len(chan)}) does not match the codebook array size "
            f"({codebook.num_elements})"
        )
        raise ValueError(msg)

    y = codebook.weights @ chan.h
    if noise.noiseless:
        powers = noise.snr * np.abs(y) ** 2

    else:
        rng = noise.get_rng(rng)
        shape = (chan.num_subcarriers, codebook.num_beams)
        v = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
        powers = np.mean(np.abs(np.sqrt(noise.snr) * y + v) ** 2, axis=0)

    return PowerVector(powers, codebook_id=codebook.identifier)
