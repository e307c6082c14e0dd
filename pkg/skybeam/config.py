"""
Registry of configuration keys and helpers to build pipeline objects from a
resolved configuration.

Settings are resolved from, in increasing order of precedence, the defaults
below, a YAML file, and ``key=value`` overrides. YAML files may use nested
mappings (``train: {epochs: 50}``) or dotted keys (``train.epochs: 50``).
"""

# Standard library
from collections import namedtuple

# Third-party
import astropy.units as u
import yaml

# Project
from .channel import NoiseModel
from .codebook import ArrayGeometry, build_codebook
from .exceptions import ConfigError
from .mlp import MlpArchitecture, TrainConfig
from .scenario import CameraModel, TrajectoryConfig
from .utils import derive_seed

__all__ = [
    "DEFAULTS",
    "describe_keys",
    "flight_kwargs",
    "load_settings",
    "make_architecture",
    "make_camera",
    "make_codebook",
    "make_noise",
    "make_train_config",
]

ConfigKey = namedtuple("ConfigKey", ["default", "type", "help"])

DEFAULTS = {
    # codebook
    "codebook.num_elements": ConfigKey(16, int, "Number of ULA elements, M"),
    "codebook.num_beams": ConfigKey(64, int, "Beams in the full sweep"),
    "codebook.fov_sine": ConfigKey(0.866, float, "Half-width of the codebook in sine space"),
    "codebook.element_spacing": ConfigKey(0.5, float, "Element spacing in wavelengths"),
    # channel
    "channel.snr_db": ConfigKey(70.0, float, "Transmit SNR in dB"),
    "channel.noise": ConfigKey(True, bool, "Add receiver noise to the power measurements"),
    "channel.num_subcarriers": ConfigKey(1, int, "Subcarriers averaged per power measurement"),
    "channel.reference_distance": ConfigKey(1.0, float, "Distance [m] of unit path amplitude"),
    # scenario
    "scenario.num_samples": ConfigKey(12004, int, "Number of generated samples"),
    "scenario.waypoints_per_flight": ConfigKey(4, int, "Random waypoints per flight"),
    "scenario.speed_min": ConfigKey(2.0, float, "Minimum segment speed [m/s]"),
    "scenario.speed_max": ConfigKey(15.0, float, "Maximum segment speed [m/s]"),
    "scenario.height_min": ConfigKey(10.0, float, "Minimum flight height [m]"),
    "scenario.height_max": ConfigKey(100.0, float, "Maximum flight height [m]"),
    "scenario.sample_rate": ConfigKey(1.0, float, "Sensor sample rate [Hz]"),
    "scenario.gps_noise_sigma": ConfigKey(2.5, float, "GPS error per horizontal axis [m]"),
    "scenario.height_noise_sigma": ConfigKey(0.0, float, "Height sensor error [m]"),
    "scenario.distance_noise_sigma": ConfigKey(0.0, float, "Distance sensor error [m]"),
    "scenario.hover_time": ConfigKey(10.0, float, "Hover duration at repeated waypoints [s]"),
    "scenario.frustum_margin": ConfigKey(
        0.95, float, "Fraction of the camera view used for random waypoints"
    ),
    "scenario.n_batches": ConfigKey(8, int, "Number of simulation batches (fixes the seeds)"),
    "scenario.anchor_lat": ConfigKey(33.427, float, "Latitude of the basestation [deg]"),
    "scenario.anchor_lon": ConfigKey(-111.939, float, "Longitude of the basestation [deg]"),
    "scenario.reference_size": ConfigKey(1.0, float, "Distance [m] of unit apparent drone size"),
    "scenario.waypoints": ConfigKey(
        None, list, "Fixed [east, north, up] waypoints [m] for every flight"
    ),
    # camera
    "camera.horizontal_fov": ConfigKey(120.0, float, "Horizontal field of view [deg]"),
    "camera.vertical_fov": ConfigKey(120.0, float, "Vertical field of view [deg]"),
    # dataset
    "dataset.q": ConfigKey(32, int, "Codebook size of the labels (32 or 64)"),
    "dataset.feature_set": ConfigKey("position", str, "Sensing inputs of the predictor"),
    "dataset.train_fraction": ConfigKey(0.7, float, "Fraction of samples used for training"),
    "dataset.split": ConfigKey("random", str, "Split mode, 'random' or 'temporal'"),
    # training
    "train.batch_size": ConfigKey(32, int, "Mini-batch size"),
    "train.initial_lr": ConfigKey(1e-2, float, "Initial learning rate"),
    "train.lr_decay_epochs": ConfigKey([20, 40, 80], list, "Epochs at which the rate decays"),
    "train.lr_factor": ConfigKey(0.1, float, "Learning rate decay factor"),
    "train.epochs": ConfigKey(100, int, "Number of training epochs"),
    "train.adam_beta1": ConfigKey(0.9, float, "Adam first moment decay"),
    "train.adam_beta2": ConfigKey(0.999, float, "Adam second moment decay"),
    "train.adam_eps": ConfigKey(1e-8, float, "Adam epsilon"),
    "train.hidden_dims": ConfigKey([512, 512], list, "Hidden layer widths"),
    # evaluation
    "eval.ks": ConfigKey([1, 2, 3, 5], list, "Reported top-k values"),
    "eval.learning_curve_sizes": ConfigKey(
        [], list, "Training set sizes for a learning curve (empty to skip)"
    ),
    # comparison
    "compare.processes": ConfigKey(1, int, "Worker processes for feature-set runs"),
    "compare.feature_sets": ConfigKey(
        ["position", "position-height", "position-height-distance", "visual"],
        list,
        "Feature sets to compare",
    ),
}


def describe_keys():
    """One line per configuration key, for command-line help."""
    width = max(len(k) for k in DEFAULTS)
    lines = []
    for key, ck in DEFAULTS.items():
        lines.append(f"  {key:<{width}}  {ck.help} (default: {ck.default!r})")
    return "\n".join(lines)


def _flatten(d, prefix=""):
    flat = {}
    for key, val in d.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict) and name not in DEFAULTS:
            flat.update(_flatten(val, prefix=f"{name}."))
        else:
            flat[name] = val
    return flat


def _coerce(key, value):
    if key not in DEFAULTS:
        msg = f"Unknown configuration key '{key}'. Run with --help to list all keys."
        raise ConfigError(msg)

    ck = DEFAULTS[key]
    if value is None:
        if ck.default is None:
            return None
        msg = f"Configuration key '{key}' must not be empty"
        raise ConfigError(msg)

    if isinstance(value, str) and ck.type is not str:
        text = value.strip()
        if ck.type is list and not text.startswith("["):
            text = f"[{text}]"
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as e:
            msg = f"Could not parse value {value!r} for '{key}'"
            raise ConfigError(msg) from e

    try:
        if ck.type is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value

        if ck.type is int:
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)

        if ck.type is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)

        if ck.type is list:
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return list(value)

        return str(value)

    except (TypeError, ValueError) as e:
        msg = f"Invalid value {value!r} for '{key}' (expected {ck.type.__name__})"
        raise ConfigError(msg) from e


def load_settings(config_file=None, overrides=()):
    """
    Resolve the full configuration.

    Parameters
    ----------
    config_file : str (optional)
        A YAML file with configuration keys.
    overrides : iterable of str (optional)
        ``key=value`` strings, applied last.

    Returns
    -------
    settings : dict
        Every key of `~skybeam.config.DEFAULTS` with its resolved value.
    """
    settings = {key: ck.default for key, ck in DEFAULTS.items()}

    if config_file is not None:
        with open(config_file) as f:
            try:
                content = yaml.safe_load(f)
            except yaml.YAMLError as e:
                msg = f"Could not parse configuration file {config_file}: {e}"
                raise ConfigError(msg) from e

        if content is None:
            content = {}
        if not isinstance(content, dict):
            msg = f"Configuration file {config_file} must contain a mapping"
            raise ConfigError(msg)

        for key, val in _flatten(content).items():
            settings[key] = _coerce(key, val)

    for item in overrides:
        if "=" not in item:
            msg = f"Overrides must look like key=value, got '{item}'"
            raise ConfigError(msg)
        key, val = item.split("=", 1)
        settings[key.strip()] = _coerce(key.strip(), val)

    _validate(settings)
    _check_builders(settings)
    return settings


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _validate(settings):
    if settings["dataset.q"] not in (settings["codebook.num_beams"], settings["codebook.num_beams"] // 2):
        msg = (
            f"dataset.q must be codebook.num_beams ({settings['codebook.num_beams']}) "
            f"or half of it, got {settings['dataset.q']}"
        )
        raise ConfigError(msg)

    if settings["dataset.split"] not in ("random", "temporal"):
        msg = f"dataset.split must be 'random' or 'temporal', got '{settings['dataset.split']}'"
        raise ConfigError(msg)

    if settings["compare.processes"] < 1:
        raise ConfigError("compare.processes must be at least 1")

    wps = settings["scenario.waypoints"]
    if wps is not None and (len(wps) < 2 or any(len(wp) != 3 for wp in wps)):
        raise ConfigError("scenario.waypoints must be a list of at least 2 [east, north, up] points")

    for key, minimum in [
        ("scenario.num_samples", 1),
        ("scenario.n_batches", 1),
        ("scenario.waypoints_per_flight", 2),
        ("channel.num_subcarriers", 1),
    ]:
        if settings[key] < minimum:
            msg = f"{key} must be at least {minimum}, got {settings[key]}"
            raise ConfigError(msg)

    if not settings["channel.reference_distance"] > 0:
        msg = f"channel.reference_distance must be positive, got {settings['channel.reference_distance']}"
        raise ConfigError(msg)

    if not 0 < settings["scenario.frustum_margin"] <= 1:
        msg = f"scenario.frustum_margin must be in (0, 1], got {settings['scenario.frustum_margin']}"
        raise ConfigError(msg)

    if not 0 < settings["dataset.train_fraction"] < 1:
        msg = f"dataset.train_fraction must be in (0, 1), got {settings['dataset.train_fraction']}"
        raise ConfigError(msg)

    q = settings["dataset.q"]
    ks = settings["eval.ks"]
    if not ks or any(not _is_int(k) or not 1 <= k <= q for k in ks):
        msg = f"eval.ks must be integers between 1 and dataset.q ({q}), got {ks}"
        raise ConfigError(msg)

    sizes = settings["eval.learning_curve_sizes"]
    if any(not _is_int(n) or n < 1 for n in sizes):
        msg = f"eval.learning_curve_sizes must be positive integers, got {sizes}"
        raise ConfigError(msg)


def _check_builders(settings):
    """Build every configured object once, so that invalid values fail here
    with the offending key instead of partway through a run."""
    make_codebook(settings)
    make_noise(settings, master_seed=0)
    make_camera(settings)
    make_train_config(settings, master_seed=0)
    make_architecture(settings, input_dim=1)

    wps = settings["scenario.waypoints"]
    if wps is None:
        wps = [
            [0.0, 0.0, settings["scenario.height_min"]],
            [0.0, 0.0, settings["scenario.height_max"]],
        ]
    try:
        TrajectoryConfig(wps * u.m, **flight_kwargs(settings))
    except (TypeError, ValueError) as e:
        msg = f"Invalid scenario settings: {e}"
        raise ConfigError(msg) from e


def make_codebook(settings):
    try:
        geometry = ArrayGeometry(
            num_elements=settings["codebook.num_elements"],
            element_spacing=settings["codebook.element_spacing"],
        )
        return build_codebook(
            geometry,
            num_beams=settings["codebook.num_beams"],
            fov_sine_half_width=settings["codebook.fov_sine"],
        )
    except (TypeError, ValueError) as e:
        msg = f"Invalid codebook settings: {e}"
        raise ConfigError(msg) from e


def make_noise(settings, master_seed):
    try:
        return NoiseModel(
            snr_db=settings["channel.snr_db"],
            rng_seed=derive_seed(master_seed, "channel"),
            enabled=settings["channel.noise"],
        )
    except (TypeError, ValueError) as e:
        msg = f"Invalid channel settings: {e}"
        raise ConfigError(msg) from e


def make_camera(settings):
    try:
        return CameraModel(
            horizontal_fov=settings["camera.horizontal_fov"] * u.deg,
            vertical_fov=settings["camera.vertical_fov"] * u.deg,
        )
    except (TypeError, ValueError) as e:
        msg = f"Invalid camera settings: {e}"
        raise ConfigError(msg) from e


def flight_kwargs(settings):
    """Keyword arguments for `~skybeam.scenario.TrajectoryConfig`."""
    return {
        "speed_range": [settings["scenario.speed_min"], settings["scenario.speed_max"]]
        * u.m
        / u.s,
        "height_range": [settings["scenario.height_min"], settings["scenario.height_max"]]
        * u.m,
        "sample_rate": settings["scenario.sample_rate"] * u.Hz,
        "gps_noise_sigma": settings["scenario.gps_noise_sigma"] * u.m,
        "height_noise_sigma": settings["scenario.height_noise_sigma"] * u.m,
        "distance_noise_sigma": settings["scenario.distance_noise_sigma"] * u.m,
        "hover_time": settings["scenario.hover_time"] * u.s,
        "anchor": (settings["scenario.anchor_lat"], settings["scenario.anchor_lon"]),
        "reference_size": settings["scenario.reference_size"] * u.m,
    }


def make_train_config(settings, master_seed):
    try:
        return TrainConfig(
            batch_size=settings["train.batch_size"],
            initial_lr=settings["train.initial_lr"],
            lr_decay_epochs=tuple(settings["train.lr_decay_epochs"]),
            lr_factor=settings["train.lr_factor"],
            epochs=settings["train.epochs"],
            adam_beta1=settings["train.adam_beta1"],
            adam_beta2=settings["train.adam_beta2"],
            adam_eps=settings["train.adam_eps"],
            seed=derive_seed(master_seed, "train"),
        )
    except (TypeError, ValueError) as e:
        msg = f"Invalid training settings: {e}"
        raise ConfigError(msg) from e


def make_architecture(settings, input_dim):
    try:
        return MlpArchitecture(
            input_dim=input_dim,
            output_dim=settings["dataset.q"],
            hidden_dims=tuple(settings["train.hidden_dims"]),
        )
    except (TypeError, ValueError) as e:
        msg = f"Invalid train.hidden_dims {settings['train.hidden_dims']}: {e}"
        raise ConfigError(msg) from e
