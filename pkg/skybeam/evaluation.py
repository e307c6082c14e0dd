# Standard library
import os
from dataclasses import dataclass, field

# Third-party
import numpy as np
import yaml
from astropy.table import MaskedColumn, Table

# Project
from .dataset import Dataset, FeatureSet, split
from .exceptions import ConfigError, DataError
from .logging import logger
from .mlp import MlpArchitecture, MlpModel, forward, train
from .oracle import rank_beams
from .utils import atomic_path

__all__ = [
    "EvalReport",
    "compare_feature_sets",
    "evaluate",
    "learning_curve",
    "overhead_ratio",
    "stratified_accuracy",
    "topk_accuracy",
    "write_reports_csv",
]

REPORT_VERSION = 1
DEFAULT_KS = (1, 2, 3, 5)

# dimension name -> (meta field, bin names)
STRATA = {
    "height": ("height_m", ("low", "medium", "high")),
    "speed": ("speed_mps", ("slow", "medium", "fast")),
    "distance": ("distance_m", ("near", "medium", "far")),
}


def _as_index_lists(predictions):
    if isinstance(predictions, np.ndarray):
        return predictions.astype(int)
    return [[int(p) for p in row] for row in predictions]


def topk_accuracy(predictions, labels, k):
    """
    Fraction of samples whose label is among the first ``k`` predicted beams.

    Parameters
    ----------
    predictions : list of list, `numpy.ndarray`
        Ranked beam indices (or `~skybeam.oracle.BeamLabel`) per sample, best
        first.
    labels : iterable
        True beam index (or `~skybeam.oracle.BeamLabel`) per sample.
    k : int

    Returns
    -------
    acc : float
    """
    predictions = _as_index_lists(predictions)
    labels = [int(lbl) for lbl in labels]

    if len(predictions) == 0:
        raise DataError("Cannot compute an accuracy over zero samples")
    if len(predictions) != len(labels):
        msg = (
            f"Number of predictions ({len(predictions)}) and labels "
            f"({len(labels)}) must match"
        )
        raise DataError(msg)
    if int(k) != k or k < 1:
        msg = f"k must be a positive integer, got {k}"
        raise ValueError(msg)

    hits = 0
    for row, label in zip(predictions, labels):
        if len(row) < k:
            msg = f"Need at least {k} ranked beams per sample, got {len(row)}"
            raise ValueError(msg)
        hits += int(label in row[: int(k)])
    return float(hits / len(labels))


def overhead_ratio(k, q):
    """
    Beam-training overhead of sweeping the top ``k`` predicted beams, relative
    to sweeping all ``q`` beams.
    """
    if int(k) != k or int(q) != q or not 1 <= k <= q:
        msg = f"Need integers 1 <= k <= q, got k={k}, q={q}"
        raise ValueError(msg)
    return int(k) / int(q)


def _meta_values(examples, name):
    if isinstance(examples, Dataset):
        return examples.meta(name)

    vals = []
    for ex in examples:
        if name not in ex.meta:
            msg = f"Example {ex.sample_id} has no '{name}' value for stratification"
            raise DataError(msg)
        vals.append(ex.meta[name])
    return np.asarray(vals, dtype=float)


def _labels(examples):
    if isinstance(examples, Dataset):
        return examples.labels
    return np.array([ex.label.index for ex in examples], dtype=int)


def stratified_accuracy(examples, predictions, dimension, ks=DEFAULT_KS, return_fallback=False):
    """
    Top-k accuracy within tertile bins of a drone state variable.

    Bin edges are the 33.3 and 66.7 percentiles of the raw values over the
    given examples; values on an edge go to the lower bin. With fewer than
    three distinct values, a single ``"all"`` bin is returned.

    Parameters
    ----------
    examples : `~skybeam.dataset.Dataset`, list of `~skybeam.dataset.LabeledExample`
    predictions : list of list, `numpy.ndarray`
        Ranked beam indices per example.
    dimension : str
        ``"height"``, ``"speed"`` or ``"distance"``.
    ks : iterable of int (optional)
    return_fallback : bool (optional)
        Also return whether the single-bin fallback was used.

    Returns
    -------
    strata : dict
        Bin name to ``{"count": int, "edges": [lo, hi], "topk": {k: acc}}``.
        Empty bins have a count of zero and accuracies of None.
    fallback : bool
        Only returned if ``return_fallback=True``.
    """
    if dimension not in STRATA:
        msg = f"Unknown stratification dimension '{dimension}'. Must be one of: {list(STRATA)}"
        raise ValueError(msg)
    meta_name, bin_names = STRATA[dimension]

    vals = _meta_values(examples, meta_name)
    labels = _labels(examples)
    predictions = _as_index_lists(predictions)
    if len(vals) != len(predictions):
        msg = (
            f"Number of examples ({len(vals)}) and predictions "
            f"({len(predictions)}) must match"
        )
        raise DataError(msg)
    if len(vals) == 0:
        raise DataError("Cannot stratify zero examples")

    fallback = len(np.unique(vals)) < 3
    if fallback:
        logger.warning(
            f"Fewer than 3 distinct {meta_name} values; reporting a single "
            f"'{dimension}' bin"
        )
        bins = np.zeros(len(vals), dtype=int)
        bin_names = ("all",)
        edges = [(float(vals.min()), float(vals.max()))]

    else:
        cuts = np.percentile(vals, [100 / 3, 200 / 3])
        bins = np.searchsorted(cuts, vals, side="left")
        lims = [vals.min(), *cuts, vals.max()]
        edges = [(float(lims[i]), float(lims[i + 1])) for i in range(3)]

    strata = {}
    for i, name in enumerate(bin_names):
        mask = bins == i
        count = int(mask.sum())
        if count == 0:
            accs = {int(k): None for k in ks}
        else:
            sub_pred = [predictions[j] for j in np.where(mask)[0]]
            accs = {int(k): topk_accuracy(sub_pred, labels[mask], k) for k in ks}
        strata[name] = {"count": count, "edges": list(edges[i]), "topk": accs}

    if return_fallback:
        return strata, fallback
    return strata


@dataclass
class EvalReport:
    """
    Accuracy of one trained predictor on a test set.

    Parameters
    ----------
    topk : dict
        ``k`` to top-k accuracy.
    strata : dict
        Dimension name to the output of
        `~skybeam.evaluation.stratified_accuracy`.
    overhead : dict
        ``k`` to ``k / q``.
    n_test : int
    q : int
    feature_set : str (optional)
    config_hash : str (optional)
    master_seed : int (optional)
        Seed of the run that produced the predictor.
    flags : dict (optional)
        Recoverable degenerate cases, e.g. stratification fallbacks.
    """

    topk: dict
    strata: dict
    overhead: dict
    n_test: int
    q: int
    feature_set: str = None
    config_hash: str = None
    master_seed: int = None
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "version": REPORT_VERSION,
            "feature_set": self.feature_set,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "n_test": int(self.n_test),
            "q": int(self.q),
            "topk": {int(k): float(v) for k, v in self.topk.items()},
            "overhead": {int(k): float(v) for k, v in self.overhead.items()},
            "strata": self.strata,
            "flags": self.flags,
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("version")
        if version != REPORT_VERSION:
            msg = f"Unsupported report version {version} (expected {REPORT_VERSION})"
            raise DataError(msg)
        return cls(
            topk={int(k): v for k, v in d["topk"].items()},
            strata=d["strata"],
            overhead={int(k): v for k, v in d["overhead"].items()},
            n_test=d["n_test"],
            q=d["q"],
            feature_set=d.get("feature_set"),
            config_hash=d.get("config_hash"),
            master_seed=d.get("master_seed"),
            flags=d.get("flags") or {},
        )

    def write(self, filename, overwrite=False):
        """Write the report as YAML."""
        if os.path.exists(filename) and not overwrite:
            msg = f"File {filename} already exists. Use overwrite=True to replace it."
            raise OSError(msg)

        with atomic_path(filename) as tmp:
            with open(tmp, "w") as f:
                yaml.safe_dump(self.to_dict(), f, sort_keys=False)

    @classmethod
    def read(cls, filename):
        with open(filename) as f:
            return cls.from_dict(yaml.safe_load(f))

    def to_table(self):
        """One row per (k, stratum), with the overall accuracy under the
        ``"all"`` dimension."""
        rows = []
        for k, acc in self.topk.items():
            rows.append((self.feature_set or "", int(k), "all", "all", self.n_test, acc))

        for dim, strata in self.strata.items():
            for bin_name, info in strata.items():
                for k, acc in info["topk"].items():
                    rows.append((self.feature_set or "", int(k), dim, bin_name, info["count"], acc))

        tbl = Table()
        tbl["feature_set"] = [r[0] for r in rows]
        tbl["k"] = [r[1] for r in rows]
        tbl["dimension"] = [r[2] for r in rows]
        tbl["bin"] = [r[3] for r in rows]
        tbl["count"] = [r[4] for r in rows]
        acc = np.array([np.nan if r[5] is None else r[5] for r in rows])
        tbl["accuracy"] = MaskedColumn(acc, mask=np.isnan(acc))
        tbl["overhead"] = [self.overhead.get(r[1], np.nan) for r in rows]
        tbl["config_hash"] = [self.config_hash or ""] * len(rows)
        return tbl

    def __repr__(self):
        accs = ", ".join(f"top-{k}={v:.3f}" for k, v in self.topk.items())
        return f"<EvalReport [{self.feature_set}]: n={self.n_test}, {accs}>"


def write_reports_csv(reports, filename, meta=None, overwrite=False):
    """
    Write one or more reports as a flat CSV file.

    Parameters
    ----------
    reports : iterable of `~skybeam.evaluation.EvalReport`
    filename : str
    meta : dict (optional)
        Written as ``# key: value`` comment lines.
    overwrite : bool (optional)
    """
    from astropy.table import vstack

    if os.path.exists(filename) and not overwrite:
        msg = f"File {filename} already exists. Use overwrite=True to replace it."
        raise OSError(msg)

    tbl = vstack([r.to_table() for r in reports])
    if meta:
        tbl.meta["comments"] = [f"{k}: {v}" for k, v in meta.items()]

    with atomic_path(filename) as tmp:
        tbl.write(tmp, format="ascii.csv", overwrite=True)


def evaluate(
    model,
    test_set,
    ks=DEFAULT_KS,
    dimensions=("height", "speed"),
    config_hash=None,
    master_seed=None,
):
    """
    Evaluate a trained network on a normalized test set.

    Parameters
    ----------
    model : `~skybeam.mlp.MlpModel`
    test_set : `~skybeam.dataset.Dataset`
    ks : iterable of int (optional)
    dimensions : iterable of str (optional)
        Drone state variables to stratify the accuracy by.
    config_hash : str (optional)
    master_seed : int (optional)

    Returns
    -------
    report : `~skybeam.evaluation.EvalReport`
    """
    q = model.architecture.output_dim
    if q != test_set.q:
        msg = f"Model predicts {q} beams but the test set uses q={test_set.q}"
        raise DataError(msg)

    ks = sorted(int(k) for k in ks)
    for k in ks:
        overhead_ratio(k, q)

    ranked = rank_beams(forward(model, test_set.features), max(ks))
    labels = test_set.labels

    topk = {k: topk_accuracy(ranked, labels, k) for k in ks}

    strata = {}
    flags = {}
    for dim in dimensions:
        strata[dim], fallback = stratified_accuracy(
            test_set, ranked, dim, ks=ks, return_fallback=True
        )
        if fallback:
            flags[f"{dim}_single_bin"] = True
    flags.update(test_set.flags)

    return EvalReport(
        topk=topk,
        strata=strata,
        overhead={k: overhead_ratio(k, q) for k in ks},
        n_test=len(test_set),
        q=q,
        feature_set=test_set.feature_set.value,
        config_hash=config_hash,
        master_seed=master_seed,
        flags=flags,
    )


def _check_matching_splits(splits):
    ref_fs, (ref_train, ref_test) = next(iter(splits.items()))
    ref_train_ids = set(ref_train.sample_ids)
    ref_test_ids = set(ref_test.sample_ids)
    for fs, (train_set, test_set) in splits.items():
        if set(train_set.sample_ids) != ref_train_ids or set(test_set.sample_ids) != ref_test_ids:
            msg = (
                f"The {fs.value} split does not contain the same samples as the "
                f"{ref_fs.value} split; feature sets must be compared on identical "
                "splits"
            )
            raise DataError(msg)


def compare_feature_sets(
    datasets,
    train_cfg,
    hidden_dims=(512, 512),
    train_fraction=0.7,
    split_seed=0,
    split_mode="random",
    ks=DEFAULT_KS,
    config_hash=None,
    pool=None,
    master_seed=None,
):
    """
    Train and evaluate one network per feature set on the same samples.

    Parameters
    ----------
    datasets : dict
        `~skybeam.dataset.FeatureSet` to either a full
        `~skybeam.dataset.Dataset` (restricted to the samples shared by all
        feature sets and split with ``split_seed``) or a ``(train, test)``
        tuple of datasets that were already split.
    train_cfg : `~skybeam.mlp.TrainConfig`
        Used unchanged for every feature set; ``train_cfg.seed`` also seeds
        the network initialization.
    hidden_dims : tuple (optional)
    train_fraction, split_seed, split_mode : (optional)
        Passed to `~skybeam.dataset.split`.
    ks : iterable of int (optional)
    config_hash : str (optional)
    pool : `schwimmbad.BasePool` (optional)
        Run the feature sets in parallel. Default is a
        `schwimmbad.SerialPool`.
    master_seed : int (optional)
        Recorded on every report.

    Returns
    -------
    reports : dict
        Feature set value to `~skybeam.evaluation.EvalReport`, in the order of
        ``datasets``.
    """
    from .multiproc_helpers import compare_worker, run_worker
    from .utils import batch_tasks

    if len(datasets) == 0:
        raise DataError("No datasets to compare")
    datasets = {FeatureSet.parse(fs): ds for fs, ds in datasets.items()}

    qs = set()
    splits = {}
    if all(isinstance(ds, Dataset) for ds in datasets.values()):
        common = None
        for ds in datasets.values():
            ids = set(ds.sample_ids.tolist())
            common = ids if common is None else common & ids
        common = np.array(sorted(common), dtype=np.int64)
        if len(common) == 0:
            raise DataError("The feature sets share no samples")

        for fs, ds in datasets.items():
            if len(common) < len(ds):
                logger.info(
                    f"Restricting {fs.value} to the {len(common)} samples shared by "
                    "all feature sets"
                )
            splits[fs] = split(
                ds.select_ids(common),
                train_fraction=train_fraction,
                seed=split_seed,
                mode=split_mode,
            )
    else:
        for fs, ds in datasets.items():
            if isinstance(ds, Dataset):
                msg = "Pass either full datasets or (train, test) pairs for every feature set"
                raise DataError(msg)
            splits[fs] = tuple(ds)

    _check_matching_splits(splits)
    for train_set, test_set in splits.values():
        qs.update([train_set.q, test_set.q])
    if len(qs) != 1:
        msg = f"Feature sets use different codebook sizes: {sorted(qs)}"
        raise DataError(msg)

    if pool is None:
        import schwimmbad

        pool = schwimmbad.SerialPool()

    items = [(fs, train_set, test_set) for fs, (train_set, test_set) in splits.items()]
    tasks = batch_tasks(
        len(items),
        n_batches=len(items),
        arr=items,
        args=(tuple(hidden_dims), train_cfg, tuple(ks), config_hash),
    )

    reports = {}
    for batch in run_worker(compare_worker, pool, tasks):
        for fs_value, report in batch:
            report.master_seed = master_seed
            reports[fs_value] = report
            logger.info(f"{fs_value}: {report!r}")
    return reports


def learning_curve(
    train_set,
    test_set,
    sizes,
    train_cfg,
    hidden_dims=(512, 512),
    ks=DEFAULT_KS,
):
    """
    Test accuracy as a function of the number of training samples.

    Each size uses the first ``n`` examples of one seeded permutation of the
    training set, so smaller training sets are subsets of larger ones.

    Parameters
    ----------
    train_set, test_set : `~skybeam.dataset.Dataset`
        Normalized datasets, as returned by `~skybeam.dataset.split`.
    sizes : iterable of int
    train_cfg : `~skybeam.mlp.TrainConfig`
    hidden_dims : tuple (optional)
    ks : iterable of int (optional)

    Returns
    -------
    curve : `~astropy.table.Table`
        Columns ``n_train`` and ``top<k>`` for each ``k``.
    """
    sizes = sorted(int(n) for n in sizes)
    if not sizes or sizes[0] < 1 or sizes[-1] > len(train_set):
        msg = f"Training set sizes must be between 1 and {len(train_set)}, got {sizes}"
        raise ConfigError(msg)

    ks = sorted(int(k) for k in ks)
    rng = np.random.default_rng([train_cfg.seed, len(train_set)])
    order = rng.permutation(len(train_set))

    arch = MlpArchitecture(
        input_dim=train_set.feature_set.feature_dim,
        output_dim=train_set.q,
        hidden_dims=hidden_dims,
    )

    curve = Table(names=["n_train"] + [f"top{k}" for k in ks], dtype=[int] + [float] * len(ks))
    for n in sizes:
        model = MlpModel.initialize(arch, seed=train_cfg.seed)
        model, _ = train(model, train_set[order[:n]], train_cfg)
        report = evaluate(model, test_set, ks=ks, dimensions=())
        curve.add_row([n] + [report.topk[k] for k in ks])
        logger.info(f"Learning curve: n_train={n} top-1={report.topk[ks[0]]:.4f}")

    return curve
