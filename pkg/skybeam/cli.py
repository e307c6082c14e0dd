"""
The ``skybeam`` command: generate synthetic datasets, train and evaluate beam
predictors, compare feature sets, and convert external CSV files.
"""

# Standard library
import argparse
import logging
import os
import sys
from dataclasses import dataclass, field

# Third-party
import astropy.units as u
import numpy as np
import schwimmbad
import yaml

# Project
from . import config as cfg_helpers
from .dataset import Dataset, FeatureSet, build_examples, split
from .dataset_helpers import ingest_csv, read_column_mapping, write_csv
from .evaluation import compare_feature_sets, evaluate, learning_curve, write_reports_csv
from .exceptions import ConfigError, DataError, NumericError
from .logging import logger
from .mlp import Checkpoint, MlpModel, train
from .oracle import downsample_power
from .scenario import simulate
from .utils import atomic_path, config_hash, derive_seed

__all__ = ["RunConfig", "main", "run"]

COMMANDS = ("generate", "train", "evaluate", "compare", "ingest")

# exit status of a missing input file
MISSING_FILE_STATUS = 3


@dataclass
class RunConfig:
    """
    One invocation of the command-line tool.

    Parameters
    ----------
    command : str
        One of ``generate``, ``train``, ``evaluate``, ``compare``, ``ingest``.
    master_seed : int (optional)
    config_file : str (optional)
    overrides : list of str (optional)
        ``key=value`` configuration overrides.
    out : str (optional)
        Output directory.
    input : str (optional)
        Dataset CSV file (or external CSV file for ``ingest``).
    checkpoint : str (optional)
        Model checkpoint for ``evaluate``.
    mapping : str (optional)
        Column mapping YAML file for ``ingest``.
    """

    command: str
    master_seed: int = 0
    config_file: str = None
    overrides: list = field(default_factory=list)
    out: str = "."
    input: str = None
    checkpoint: str = None
    mapping: str = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            msg = f"Unknown command '{self.command}'. Must be one of: {', '.join(COMMANDS)}"
            raise ConfigError(msg)

        for name in ["config_file", "input", "checkpoint", "mapping"]:
            path = getattr(self, name)
            if path is not None and not os.path.exists(path):
                msg = f"Input file {path} does not exist"
                raise FileNotFoundError(msg)


def _pool(settings):
    return schwimmbad.choose_pool(processes=settings["compare.processes"])


def _artifact_meta(settings, rc):
    return {"config_hash": config_hash(settings), "master_seed": rc.master_seed}


def _out(rc, filename):
    return os.path.join(rc.out, filename)


def _beam_counts(settings):
    """Power columns a dataset may have: the full sweep or the active q."""
    return sorted({settings["codebook.num_beams"], settings["dataset.q"]})


def _powers_for_q(powers, q):
    n = len(powers[0])
    if n == q:
        return powers
    if n == 2 * q:
        return [downsample_power(pv, 2) for pv in powers]

    msg = f"Power vectors with {n} beams cannot be used for q={q}"
    raise DataError(msg)


def _build_dataset(samples, powers, feature_set, q):
    examples = build_examples(samples, _powers_for_q(powers, q), feature_set)
    if len(examples) == 0:
        msg = f"No samples have {FeatureSet.parse(feature_set).value} features"
        raise DataError(msg)
    return Dataset(examples, q=q, feature_set=feature_set)


def _generate(settings, rc):
    codebook = cfg_helpers.make_codebook(settings)
    waypoints = settings["scenario.waypoints"]
    if waypoints is not None:
        waypoints = np.array(waypoints, dtype=float) * u.m

    with _pool(settings) as pool:
        samples, powers = simulate(
            settings["scenario.num_samples"],
            codebook,
            cfg_helpers.make_noise(settings, rc.master_seed),
            camera=cfg_helpers.make_camera(settings),
            flight=cfg_helpers.flight_kwargs(settings),
            waypoints=waypoints,
            n_waypoints=settings["scenario.waypoints_per_flight"],
            margin=settings["scenario.frustum_margin"],
            seed=derive_seed(rc.master_seed, "scenario"),
            pool=pool,
            n_batches=settings["scenario.n_batches"],
            reference_distance=settings["channel.reference_distance"],
            num_subcarriers=settings["channel.num_subcarriers"],
        )
    return samples, powers


def _summary(samples, powers, settings, rc):
    heights = np.array([s.height_m for s in samples])
    speeds = np.array([s.speed_mps for s in samples])
    dists = np.array([s.distance_m for s in samples])
    q = settings["dataset.q"]
    labels = [int(np.argmax(pv.powers)) for pv in _powers_for_q(powers, q)]

    summary = {
        **_artifact_meta(settings, rc),
        "n_samples": len(samples),
        "n_visible": int(sum(s.has_visual for s in samples)),
        "codebook": powers[0].codebook_id,
    }
    for name, vals in [("height_m", heights), ("speed_mps", speeds), ("distance_m", dists)]:
        summary[name] = {"min": float(vals.min()), "max": float(vals.max())}
    summary[f"label_histogram_q{q}"] = np.bincount(labels, minlength=q).tolist()
    return summary


def _write_yaml(data, filename):
    with atomic_path(filename) as tmp:
        with open(tmp, "w") as f:
            yaml.safe_dump(data, f, sort_keys=False)


def _cmd_generate(settings, rc):
    samples, powers = _generate(settings, rc)
    meta = _artifact_meta(settings, rc)
    write_csv(_out(rc, "dataset.csv"), samples, powers, meta=meta, overwrite=True)
    _write_yaml(_summary(samples, powers, settings, rc), _out(rc, "summary.yml"))
    logger.info(f"Wrote {len(samples)} samples to {_out(rc, 'dataset.csv')}")


def _load_input(settings, rc):
    if rc.input is None:
        msg = f"The {rc.command} command needs an --input dataset CSV file"
        raise ConfigError(msg)
    return ingest_csv(
        rc.input, num_beams=_beam_counts(settings), label_beams=settings["dataset.q"]
    )


def _cmd_train(settings, rc):
    samples, powers = _load_input(settings, rc)
    fs = FeatureSet.parse(settings["dataset.feature_set"])
    q = settings["dataset.q"]
    ds = _build_dataset(samples, powers, fs, q)

    split_seed = derive_seed(rc.master_seed, "split")
    train_set, _ = split(
        ds,
        train_fraction=settings["dataset.train_fraction"],
        seed=split_seed,
        mode=settings["dataset.split"],
    )

    train_cfg = cfg_helpers.make_train_config(settings, rc.master_seed)
    arch = cfg_helpers.make_architecture(settings, input_dim=fs.feature_dim)
    model = MlpModel.initialize(arch, seed=train_cfg.seed)
    model, history = train(model, train_set, train_cfg)

    meta = {
        **_artifact_meta(settings, rc),
        "feature_set": fs.value,
        "q": q,
        "split": settings["dataset.split"],
        "train_fraction": settings["dataset.train_fraction"],
        "split_seed": split_seed,
    }
    Checkpoint(model, normalizer=train_set.normalizer, meta=meta).write(
        _out(rc, "model.h5"), overwrite=True
    )

    history.meta["comments"] = [f"{k}: {v}" for k, v in _artifact_meta(settings, rc).items()]
    with atomic_path(_out(rc, "history.csv")) as tmp:
        history.write(tmp, format="ascii.csv", overwrite=True)

    logger.info(f"Wrote {_out(rc, 'model.h5')} and {_out(rc, 'history.csv')}")


def _cmd_evaluate(settings, rc):
    if rc.checkpoint is None:
        raise ConfigError("The evaluate command needs a --checkpoint file")

    ckpt = Checkpoint.read(rc.checkpoint)
    for key in ["feature_set", "q", "split", "train_fraction", "split_seed"]:
        if key not in ckpt.meta:
            msg = f"Checkpoint {rc.checkpoint} has no '{key}' metadata"
            raise DataError(msg)

    samples, powers = _load_input(settings, rc)
    ds = _build_dataset(samples, powers, ckpt.meta["feature_set"], ckpt.meta["q"])
    _, test_set = split(
        ds,
        train_fraction=ckpt.meta["train_fraction"],
        seed=ckpt.meta["split_seed"],
        mode=ckpt.meta["split"],
    )
    if ckpt.normalizer is not None:
        test_set = test_set.with_normalizer(ckpt.normalizer)

    report = evaluate(
        ckpt.model,
        test_set,
        ks=settings["eval.ks"],
        config_hash=ckpt.meta.get("config_hash"),
        master_seed=ckpt.meta.get("master_seed"),
    )
    report.write(_out(rc, "report.yml"), overwrite=True)
    write_reports_csv(
        [report],
        _out(rc, "report.csv"),
        meta={"config_hash": report.config_hash, "master_seed": report.master_seed},
        overwrite=True,
    )
    logger.info(repr(report))


def _cmd_compare(settings, rc):
    if rc.input is not None:
        samples, powers = _load_input(settings, rc)
    else:
        samples, powers = _generate(settings, rc)

    q = settings["dataset.q"]
    datasets = {}
    for name in settings["compare.feature_sets"]:
        fs = FeatureSet.parse(name)
        datasets[fs] = _build_dataset(samples, powers, fs, q)

    hash_ = config_hash(settings)
    train_cfg = cfg_helpers.make_train_config(settings, rc.master_seed)
    split_kw = {
        "train_fraction": settings["dataset.train_fraction"],
        "split_seed": derive_seed(rc.master_seed, "split"),
        "split_mode": settings["dataset.split"],
    }

    with _pool(settings) as pool:
        reports = compare_feature_sets(
            datasets,
            train_cfg,
            hidden_dims=settings["train.hidden_dims"],
            ks=settings["eval.ks"],
            config_hash=hash_,
            pool=pool,
            master_seed=rc.master_seed,
            **split_kw,
        )

    meta = _artifact_meta(settings, rc)
    _write_yaml(
        {**meta, "reports": [r.to_dict() for r in reports.values()]},
        _out(rc, "compare.yml"),
    )
    write_reports_csv(reports.values(), _out(rc, "compare.csv"), meta=meta, overwrite=True)

    sizes = settings["eval.learning_curve_sizes"]
    if sizes:
        fs = FeatureSet.parse(settings["dataset.feature_set"])
        train_set, test_set = split(
            datasets[fs] if fs in datasets else _build_dataset(samples, powers, fs, q),
            train_fraction=split_kw["train_fraction"],
            seed=split_kw["split_seed"],
            mode=split_kw["split_mode"],
        )
        curve = learning_curve(
            train_set,
            test_set,
            sizes,
            train_cfg,
            hidden_dims=settings["train.hidden_dims"],
            ks=settings["eval.ks"],
        )
        curve.meta["comments"] = [f"{k}: {v}" for k, v in meta.items()]
        with atomic_path(_out(rc, "learning_curve.csv")) as tmp:
            curve.write(tmp, format="ascii.csv", overwrite=True)


def _cmd_ingest(settings, rc):
    if rc.input is None or rc.mapping is None:
        raise ConfigError("The ingest command needs --input and --mapping files")

    mapping = read_column_mapping(rc.mapping)
    samples, powers = ingest_csv(
        rc.input, mapping=mapping, num_beams=settings["codebook.num_beams"]
    )
    write_csv(
        _out(rc, "dataset.csv"),
        samples,
        powers,
        label_only="beam_label" in mapping,
        meta=_artifact_meta(settings, rc),
        overwrite=True,
    )
    logger.info(f"Converted {len(samples)} rows to {_out(rc, 'dataset.csv')}")


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
    "ingest": _cmd_ingest,
}


def run(rc):
    """
    Execute one command.

    Parameters
    ----------
    rc : `~skybeam.cli.RunConfig`

    Returns
    -------
    status : int
        0 on success, 2 for configuration errors, 3 for data errors
        (including missing input files), 4 for numerical failures.
    """
    try:
        if not isinstance(rc, RunConfig):
            rc = RunConfig(**rc)
        settings = cfg_helpers.load_settings(rc.config_file, rc.overrides)
        os.makedirs(rc.out, exist_ok=True)
        _COMMANDS[rc.command](settings, rc)

    except (ConfigError, DataError, NumericError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code

    except FileNotFoundError as e:
        logger.error(f"FileNotFoundError: {e}")
        return MISSING_FILE_STATUS

    return 0


def _make_parser():
    parser = argparse.ArgumentParser(
        prog="skybeam",
        description=__doc__.strip(),
        epilog="configuration keys (for --config files and --set):\n"
        + cfg_helpers.describe_keys(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", dest="config_file", default=None, help="YAML config file")
    parser.add_argument("--seed", type=int, default=0, help="Master random seed")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a configuration key (repeatable)",
    )
    parser.add_argument("--out", default=".", help="Output directory")
    parser.add_argument("--input", default=None, help="Input dataset CSV file")
    parser.add_argument("--checkpoint", default=None, help="Model checkpoint file")
    parser.add_argument("--mapping", default=None, help="Column mapping YAML for ingest")
    parser.add_argument("--split", choices=("random", "temporal"), default=None)
    parser.add_argument("--q", type=int, choices=(32, 64), default=None)
    parser.add_argument(
        "--feature-set", choices=[fs.value for fs in FeatureSet], default=None
    )
    parser.add_argument("--processes", type=int, default=None)

    vq = parser.add_mutually_exclusive_group()
    vq.add_argument("-v", "--verbose", action="store_true", default=False)
    vq.add_argument("--quiet", action="store_true", default=False)
    return parser


def main(argv=None):
    parser = _make_parser()
    args = parser.parse_args(argv)

    if args.verbose:
        logger.setLevel(logging.DEBUG)
    elif args.quiet:
        logger.setLevel(logging.WARNING)

    overrides = list(args.overrides)
    for flag, key in [
        ("split", "dataset.split"),
        ("q", "dataset.q"),
        ("feature_set", "dataset.feature_set"),
        ("processes", "compare.processes"),
    ]:
        val = getattr(args, flag)
        if val is not None:
            overrides.append(f"{key}={val}")

    try:
        rc = RunConfig(
            command=args.command,
            master_seed=args.seed,
            config_file=args.config_file,
            overrides=overrides,
            out=args.out,
            input=args.input,
            checkpoint=args.checkpoint,
            mapping=args.mapping,
        )
    except FileNotFoundError as e:
        logger.error(f"FileNotFoundError: {e}")
        return MISSING_FILE_STATUS

    return run(rc)


if __name__ == "__main__":
    sys.exit(main())
