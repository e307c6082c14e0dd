# Standard library
import enum
from dataclasses import dataclass, field

# Third-party
import numpy as np
from astropy.table import Table

# Project
from .exceptions import ConfigError, DataError
from .logging import logger
from .oracle import BeamLabel, optimal_beam

__all__ = [
    "Dataset",
    "FeatureSet",
    "LabeledExample",
    "Normalizer",
    "build_examples",
    "normalize",
    "split",
]

META_NAMES = ("height_m", "speed_mps", "distance_m")


class FeatureSet(enum.Enum):
    """The sensing inputs a beam predictor is trained on."""

    POSITION = "position"
    POSITION_HEIGHT = "position-height"
    POSITION_HEIGHT_DISTANCE = "position-height-distance"
    VISUAL = "visual"

    @classmethod
    def parse(cls, value):
        """Accept a `FeatureSet`, its value, or its name in any case."""
        if isinstance(value, cls):
            return value

        key = str(value).strip().lower().replace("_", "-")
        for fs in cls:
            if key == fs.value:
                return fs

        msg = (
            f"Unknown feature set '{value}'. Must be one of: "
            f"{', '.join(fs.value for fs in cls)}"
        )
        raise ConfigError(msg)

    @property
    def columns(self):
        """Names of the features, in order."""
        return _FEATURE_COLUMNS[self]

    @property
    def feature_dim(self):
        return len(self.columns)

    def extract(self, sample):
        """
        The raw feature vector of one `~skybeam.scenario.SensorSample`, or
        None if the sample has no value for one of the features.
        """
        if self is FeatureSet.VISUAL:
            if sample.visual_uv is None or sample.visual_size is None:
                return None
            return np.array([*sample.visual_uv, sample.visual_size])

        vals = [sample.gps[0], sample.gps[1]]
        if self in (FeatureSet.POSITION_HEIGHT, FeatureSet.POSITION_HEIGHT_DISTANCE):
            vals.append(sample.height_m)
        if self is FeatureSet.POSITION_HEIGHT_DISTANCE:
            vals.append(sample.distance_m)
        return np.array(vals, dtype=float)


_FEATURE_COLUMNS = {
    FeatureSet.POSITION: ("lat", "lon"),
    FeatureSet.POSITION_HEIGHT: ("lat", "lon", "height_m"),
    FeatureSet.POSITION_HEIGHT_DISTANCE: ("lat", "lon", "height_m", "distance_m"),
    FeatureSet.VISUAL: ("u", "v", "size"),
}


@dataclass(frozen=True)
class LabeledExample:
    """
    One sensing-data / optimal-beam pair.

    Parameters
    ----------
    features : array_like
        Feature vector. Normalized to [0, 1] when taken from a `Dataset`
        with a fitted normalizer.
    label : `~skybeam.oracle.BeamLabel`
    meta : dict (optional)
        Raw ``height_m``, ``speed_mps`` and ``distance_m`` values, used to
        stratify the evaluation.
    sample_id : int (optional)
        Position of the source sample in the generated or ingested data.
    time : float (optional)
    """

    features: np.ndarray
    label: BeamLabel
    meta: dict = field(default_factory=dict)
    sample_id: int = -1
    time: float = 0.0

    def __post_init__(self):
        features = np.array(self.features, dtype=float).reshape(-1)
        if not np.all(np.isfinite(features)):
            msg = f"Non-finite feature values in example {self.sample_id}"
            raise DataError(msg)
        features.flags.writeable = False
        object.__setattr__(self, "features", features)

        if not isinstance(self.label, BeamLabel):
            raise TypeError("label must be a BeamLabel instance")


class Normalizer:
    """
    Per-feature min-max scaling to the unit interval.

    Features that are constant over the fitting data map to 0.5.

    Parameters
    ----------
    minimum, maximum : array_like
    """

    def __init__(self, minimum, maximum):
        self.minimum = np.array(minimum, dtype=float).reshape(-1)
        self.maximum = np.array(maximum, dtype=float).reshape(-1)
        if self.minimum.shape != self.maximum.shape:
            raise ValueError("minimum and maximum must have the same shape")
        if np.any(self.minimum > self.maximum):
            raise ValueError("minimum must not exceed maximum")

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or len(X) == 0:
            raise DataError("Cannot fit a normalizer to an empty feature array")

        obj = cls(X.min(axis=0), X.max(axis=0))
        if np.any(obj.constant):
            logger.warning(
                f"Feature(s) {np.where(obj.constant)[0].tolist()} are constant over "
                "the training data; mapping them to 0.5"
            )
        return obj

    @property
    def constant(self):
        return self.minimum == self.maximum

    def transform(self, X):
        """Scale and clamp a ``(N, D)`` feature array to [0, 1]."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.minimum.size:
            msg = (
                f"Expected {self.minimum.size} features, got {X.shape[-1]}"
            )
            raise DataError(msg)

        span = np.where(self.constant, 1.0, self.maximum - self.minimum)
        Y = (X - self.minimum) / span
        Y = np.where(self.constant, 0.5, Y)
        return np.clip(Y, 0.0, 1.0)

    def to_dict(self):
        return {"minimum": self.minimum.tolist(), "maximum": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["minimum"], d["maximum"])

    def __eq__(self, other):
        if not isinstance(other, Normalizer):
            return NotImplemented
        return np.array_equal(self.minimum, other.minimum) and np.array_equal(
            self.maximum, other.maximum
        )

    def __repr__(self):
        return f"<Normalizer: {self.minimum.size} features>"


class Dataset:
    """
    A collection of labeled examples for one feature set and codebook size.

    Parameters
    ----------
    examples : iterable of `~skybeam.dataset.LabeledExample`
        Examples with raw (unnormalized) features.
    q : int
        Codebook size of the labels.
    feature_set : `~skybeam.dataset.FeatureSet`, str
    normalizer : `~skybeam.dataset.Normalizer` (optional)
    split_seed : int (optional)
    """

    def __init__(self, examples, q, feature_set, normalizer=None, split_seed=None):
        self.feature_set = FeatureSet.parse(feature_set)
        self.q = int(q)
        self.normalizer = normalizer
        self.split_seed = split_seed

        if isinstance(examples, Table):
            tbl = examples

        else:
            examples = list(examples)
            if len(examples) == 0:
                raise DataError("A dataset needs at least one example")

            tbl = Table()
            tbl["sample_id"] = np.array([ex.sample_id for ex in examples], dtype=np.int64)
            tbl["time"] = np.array([ex.time for ex in examples], dtype=float)
            tbl["features"] = np.stack([ex.features for ex in examples])
            tbl["label"] = np.array([ex.label.index for ex in examples], dtype=np.int64)
            for name in META_NAMES:
                tbl[name] = np.array(
                    [ex.meta.get(name, np.nan) for ex in examples], dtype=float
                )

            for ex in examples:
                if ex.label.codebook_size != self.q:
                    msg = (
                        f"Example {ex.sample_id} is labeled for {ex.label.codebook_size}"
                        f" beams, but the dataset uses q={self.q}"
                    )
                    raise DataError(msg)

        if len(tbl) == 0:
            raise DataError("A dataset needs at least one example")

        if tbl["features"].shape[1] != self.feature_set.feature_dim:
            msg = (
                f"Feature set {self.feature_set.value} has "
                f"{self.feature_set.feature_dim} features, got "
                f"{tbl['features'].shape[1]}"
            )
            raise DataError(msg)

        if len(np.unique(tbl["sample_id"])) != len(tbl):
            raise DataError("Sample ids must be unique within a dataset")

        self.tbl = tbl

    # ------------------------------------------------------------------------
    # Computed or convenience properties

    @property
    def sample_ids(self):
        return np.array(self.tbl["sample_id"])

    @property
    def raw_features(self):
        return np.array(self.tbl["features"])

    @property
    def features(self):
        """Normalized features (raw features if no normalizer is attached)."""
        if self.normalizer is None:
            return self.raw_features
        return self.normalizer.transform(self.raw_features)

    @property
    def labels(self):
        return np.array(self.tbl["label"])

    @property
    def times(self):
        return np.array(self.tbl["time"])

    @property
    def flags(self):
        flags = {}
        if self.normalizer is not None and np.any(self.normalizer.constant):
            flags["constant_features"] = [
                self.feature_set.columns[i] for i in np.where(self.normalizer.constant)[0]
            ]
        return flags

    def meta(self, name):
        """Raw values of one stratification column."""
        if name not in META_NAMES:
            msg = f"Unknown meta field '{name}'. Must be one of: {', '.join(META_NAMES)}"
            raise ValueError(msg)
        return np.array(self.tbl[name])

    @property
    def examples(self):
        X = self.features
        return [
            LabeledExample(
                features=X[i],
                label=BeamLabel(int(row["label"]), self.q),
                meta={name: float(row[name]) for name in META_NAMES},
                sample_id=int(row["sample_id"]),
                time=float(row["time"]),
            )
            for i, row in enumerate(self.tbl)
        ]

    def label_histogram(self):
        """Number of examples per beam index."""
        return np.bincount(self.labels, minlength=self.q)

    def select_ids(self, sample_ids):
        """The examples with the given sample ids, in the order given."""
        sample_ids = np.asarray(sample_ids, dtype=np.int64)
        lookup = {sid: i for i, sid in enumerate(self.sample_ids)}
        try:
            idx = np.array([lookup[sid] for sid in sample_ids], dtype=int)
        except KeyError as e:
            msg = f"Sample id {e.args[0]} is not in this dataset"
            raise DataError(msg) from e
        return self[idx]

    def with_normalizer(self, normalizer):
        return self.__class__(
            self.tbl, self.q, self.feature_set, normalizer=normalizer,
            split_seed=self.split_seed,
        )

    def __getitem__(self, slc):
        if isinstance(slc, (int, np.integer)):
            slc = [slc]
        return self.__class__(
            self.tbl[slc], self.q, self.feature_set, normalizer=self.normalizer,
            split_seed=self.split_seed,
        )

    def __len__(self):
        return len(self.tbl)

    def __repr__(self):
        return (
            f"<Dataset [{self.feature_set.value}]: {len(self)} examples, "
            f"q={self.q}>"
        )


def build_examples(samples, powers, fs, return_dropped=False):
    """
    Pair sensor samples with the optimal beam of their power vectors.

    Parameters
    ----------
    samples : list of `~skybeam.scenario.SensorSample`
    powers : list of `~skybeam.oracle.PowerVector`
        Already downsampled to the active codebook size.
    fs : `~skybeam.dataset.FeatureSet`, str
    return_dropped : bool (optional)
        Also return the number of samples dropped because a feature was
        missing (only possible for the visual feature set).

    Returns
    -------
    examples : list of `~skybeam.dataset.LabeledExample`
    n_dropped : int
        Only returned if ``return_dropped=True``.
    """
    fs = FeatureSet.parse(fs)
    samples = list(samples)
    powers = list(powers)
    if len(samples) != len(powers):
        msg = (
            f"Number of sensor samples ({len(samples)}) and power vectors "
            f"({len(powers)}) must match"
        )
        raise DataError(msg)

    sizes = {len(pv) for pv in powers}
    if len(sizes) > 1:
        msg = f"Power vectors have inconsistent lengths: {sorted(sizes)}"
        raise DataError(msg)

    examples = []
    n_dropped = 0
    for i, (sample, pv) in enumerate(zip(samples, powers)):
        x = fs.extract(sample)
        if x is None:
            n_dropped += 1
            continue

        examples.append(
            LabeledExample(
                features=x,
                label=optimal_beam(pv),
                meta={
                    "height_m": sample.height_m,
                    "speed_mps": sample.speed_mps,
                    "distance_m": sample.distance_m,
                },
                sample_id=i,
                time=sample.time,
            )
        )

    if n_dropped > 0:
        logger.warning(
            f"Dropped {n_dropped} of {len(samples)} samples without "
            f"{fs.value} features"
        )

    if return_dropped:
        return examples, n_dropped
    return examples


def normalize(ds, normalizer=None):
    """
    Attach a min-max normalizer to a dataset.

    Parameters
    ----------
    ds : `~skybeam.dataset.Dataset`
    normalizer : `~skybeam.dataset.Normalizer` (optional)
        Usually fitted on the training split. Fitted on ``ds`` if not given.

    Returns
    -------
    ds : `~skybeam.dataset.Dataset`
        A dataset whose ``features`` are in [0, 1].
    """
    if normalizer is None:
        normalizer = Normalizer.fit(ds.raw_features)
    return ds.with_normalizer(normalizer)


def split(ds, train_fraction=0.7, seed=0, mode="random"):
    """
    Partition a dataset into training and test sets.

    The first ``floor(train_fraction * U)`` examples of a seeded random
    permutation (or of the time order, for ``mode="temporal"``) form the
    training set. A normalizer fitted on the training set is attached to both
    outputs.

    Parameters
    ----------
    ds : `~skybeam.dataset.Dataset`
    train_fraction : float (optional)
    seed : int (optional)
    mode : str (optional)
        ``"random"`` or ``"temporal"``.

    Returns
    -------
    train, test : `~skybeam.dataset.Dataset`
    """
    if not 0 < train_fraction < 1:
        msg = f"train_fraction must be between 0 and 1, got {train_fraction}"
        raise ConfigError(msg)

    n = len(ds)
    if n < 10:
        msg = f"Need at least 10 examples to split a dataset, got {n}"
        raise DataError(msg)

    if mode == "random":
        rng = np.random.default_rng(seed)
        order = rng.permutation(n)
    elif mode == "temporal":
        order = np.argsort(ds.times, kind="stable")
    else:
        msg = f"Unknown split mode '{mode}'. Must be 'random' or 'temporal'"
        raise ConfigError(msg)

    n_train = int(np.floor(train_fraction * n + 1e-9))
    if n_train == 0 or n_train == n:
        msg = f"train_fraction={train_fraction} leaves an empty split of {n} examples"
        raise DataError(msg)

    train = ds[order[:n_train]]
    test = ds[order[n_train:]]
    train.split_seed = test.split_seed = seed

    normalizer = Normalizer.fit(train.raw_features)
    logger.debug(f"Split {n} examples into {len(train)} train / {len(test)} test")
    return normalize(train, normalizer), normalize(test, normalizer)
