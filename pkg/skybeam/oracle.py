"""Ground-truth beam selection from measured power vectors."""

# Standard library
from dataclasses import dataclass

# Third-party
import numpy as np

__all__ = [
    "BeamLabel",
    "PowerVector",
    "downsample_power",
    "optimal_beam",
    "rank_beams",
    "topk_beams",
]


@dataclass(frozen=True)
class PowerVector:
    """
    Received power for each beam of a codebook, from one beam sweep.

    Parameters
    ----------
    powers : array_like
        Nonnegative linear powers, one per beam.
    codebook_id : str (optional)
        Identifier of the codebook that produced the sweep.
    """

    powers: np.ndarray
    codebook_id: str = None

    def __post_init__(self):
        powers = np.array(self.powers, dtype=float).reshape(-1)
        if np.any(np.isnan(powers)):
            raise ValueError("Power vectors must not contain NaN values")
        if np.any(powers < 0):
            raise ValueError("Received powers must be nonnegative")
        powers.flags.writeable = False
        object.__setattr__(self, "powers", powers)

    def __len__(self):
        return self.powers.size

    def __eq__(self, other):
        if not isinstance(other, PowerVector):
            return NotImplemented
        return self.codebook_id == other.codebook_id and np.array_equal(
            self.powers, other.powers
        )

    @classmethod
    def one_hot(cls, index, size, codebook_id=None):
        """A power vector with all power in one beam, for data sets that only
        provide the optimal beam index."""
        index = int(index)
        if not 0 <= index < size:
            msg = f"Beam index {index} is out of range for {size} beams"
            raise ValueError(msg)
        powers = np.zeros(size)
        powers[index] = 1.0
        return cls(powers, codebook_id=codebook_id)


@dataclass(frozen=True, order=True)
class BeamLabel:
    """
    Index of a beam in a codebook of ``codebook_size`` beams.
    """

    index: int
    codebook_size: int

    def __post_init__(self):
        if int(self.index) != self.index or int(self.codebook_size) != self.codebook_size:
            raise TypeError("Beam index and codebook size must be integers")
        object.__setattr__(self, "index", int(self.index))
        object.__setattr__(self, "codebook_size", int(self.codebook_size))

        if not 0 <= self.index < self.codebook_size:
            msg = (
                f"Beam index {self.index} is out of range for a codebook of "
                f"{self.codebook_size} beams"
            )
            raise ValueError(msg)

    def __index__(self):
        return self.index

    def __int__(self):
        return self.index


def rank_beams(scores, k=None):
    """
    Indices of the ``k`` highest scores along the last axis, in non-increasing
    score order with ties going to the lowest index.

    Parameters
    ----------
    scores : array_like
        Shape ``(Q,)`` or ``(N, Q)``: powers or predicted probabilities.
    k : int (optional)
        Defaults to all ``Q`` beams.

    Returns
    -------
    idx : `numpy.ndarray`
        Integer array of shape ``(k,)`` or ``(N, k)``.
    """
    scores = np.asarray(scores, dtype=float)
    n_beams = scores.shape[-1]
    if k is None:
        k = n_beams

    if int(k) != k or not 1 <= k <= n_beams:
        msg = f"k must be an integer between 1 and {n_beams}, got {k}"
        raise ValueError(msg)

    # a stable sort of the negated scores keeps tied beams in index order
    return np.argsort(-scores, axis=-1, kind="stable")[..., : int(k)]


def optimal_beam(pv):
    """
    The beam with the largest received power (lowest index on ties).

    Parameters
    ----------
    pv : `~skybeam.oracle.PowerVector`

    Returns
    -------
    label : `~skybeam.oracle.BeamLabel`
    """
    if len(pv) == 0:
        raise ValueError("Cannot select a beam from an empty power vector")
    return BeamLabel(int(np.argmax(pv.powers)), len(pv))


def downsample_power(pv, factor=2):
    """
    Keep every ``factor``-th entry of a power vector, starting at index 0.

    With the default factor this turns a 64-beam sweep into a 32-beam sweep
    over the even-indexed beams.

    Parameters
    ----------
    pv : `~skybeam.oracle.PowerVector`
    factor : int (optional)

    Returns
    -------
    pv : `~skybeam.oracle.PowerVector`
    """
    factor = int(factor)
    if factor < 1:
        msg = f"Downsampling factor must be a positive integer, got {factor}"
        raise ValueError(msg)

    if len(pv) % factor != 0:
        msg = (
            f"Cannot downsample a power vector of length {len(pv)} by a factor "
            f"of {factor}"
        )
        raise ValueError(msg)

    codebook_id = pv.codebook_id
    if codebook_id is not None and factor > 1:
        codebook_id = f"{codebook_id}/ds{factor}"

    return PowerVector(pv.powers[::factor], codebook_id=codebook_id)


def topk_beams(pv, k):
    """
    The ``k`` beams with the largest received power, best first.

    Parameters
    ----------
    pv : `~skybeam.oracle.PowerVector`
    k : int
        Number of beams, between 1 and the length of the power vector.

    Returns
    -------
    labels : list of `~skybeam.oracle.BeamLabel`
    """
    q = len(pv)
    return [BeamLabel(int(i), q) for i in rank_beams(pv.powers, k)]
