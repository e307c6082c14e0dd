# Standard library
from dataclasses import dataclass

# Third-party
import astropy.units as u
import numpy as np
from astropy.constants import R_earth

# Project
from .logging import logger

__all__ = [
    "CameraModel",
    "DroneState",
    "SensorSample",
    "TrajectoryConfig",
    "enu_to_geodetic",
    "generate_trajectory",
    "geodetic_to_enu",
    "random_waypoints",
    "sense",
    "simulate",
]

DEFAULT_ANCHOR = (33.427, -111.939)
_R_EARTH_M = R_earth.to_value(u.m)


def enu_to_geodetic(east, north, anchor=DEFAULT_ANCHOR):
    """
    Convert local East-North offsets (meters) to latitude and longitude
    (degrees) with an equirectangular small-area approximation.

    Parameters
    ----------
    east, north : float, array_like
        Offsets from the anchor point, in meters.
    anchor : tuple (optional)
        The (latitude, longitude) of the local frame origin, in degrees.

    Returns
    -------
    lat, lon : float, `numpy.ndarray`
    """
    lat0, lon0 = anchor
    lat = lat0 + np.degrees(np.asarray(north) / _R_EARTH_M)
    lon = lon0 + np.degrees(np.asarray(east) / (_R_EARTH_M * np.cos(np.radians(lat0))))
    return lat, lon


def geodetic_to_enu(lat, lon, anchor=DEFAULT_ANCHOR):
    """Inverse of `~skybeam.scenario.enu_to_geodetic`."""
    lat0, lon0 = anchor
    north = np.radians(np.asarray(lat) - lat0) * _R_EARTH_M
    east = np.radians(np.asarray(lon) - lon0) * _R_EARTH_M * np.cos(np.radians(lat0))
    return east, north


def _vector3(vec, name):
    vec = np.array(vec, dtype=float).reshape(-1)
    if vec.shape != (3,) or not np.all(np.isfinite(vec)):
        msg = f"{name} must be a finite 3-vector, got {vec!r}"
        raise ValueError(msg)
    vec.flags.writeable = False
    return vec


@dataclass(frozen=True)
class DroneState:
    """
    Ground-truth drone kinematics at one instant.

    Parameters
    ----------
    time : float
        Seconds since the start of the flight.
    position : array_like
        Meters in the East-North-Up frame anchored at the basestation.
    velocity : array_like
        Meters per second.
    """

    time: float
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        position = _vector3(self.position, "position")
        velocity = _vector3(self.velocity, "velocity")
        if position[2] < 0:
            msg = f"The drone must be above ground, got height {position[2]}"
            raise ValueError(msg)
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "velocity", velocity)
        object.__setattr__(self, "time", float(self.time))

    @property
    def speed(self):
        return float(np.linalg.norm(self.velocity))


@dataclass(frozen=True)
class SensorSample:
    """
    One noisy multi-sensor observation of the drone.

    Parameters
    ----------
    gps : array_like
        (latitude, longitude) in degrees.
    height_m : float
    distance_m : float
        Slant range from the basestation.
    speed_mps : float
    visual_uv : array_like or None
        Normalized pixel coordinates of the drone in the camera image, or
        None if the drone is outside the camera view.
    visual_size : float or None
        Apparent size of the drone, in (0, 1].
    time : float (optional)
    """

    gps: np.ndarray
    height_m: float
    distance_m: float
    speed_mps: float
    visual_uv: np.ndarray = None
    visual_size: float = None
    time: float = 0.0

    def __post_init__(self):
        gps = np.array(self.gps, dtype=float).reshape(-1)
        if gps.shape != (2,) or not np.all(np.isfinite(gps)):
            msg = f"gps must be a finite (lat, lon) pair, got {gps!r}"
            raise ValueError(msg)
        gps.flags.writeable = False
        object.__setattr__(self, "gps", gps)

        for name in ["height_m", "distance_m", "speed_mps", "time"]:
            object.__setattr__(self, name, float(getattr(self, name)))

        if self.height_m < 0:
            raise ValueError("height_m must be nonnegative")
        if not self.distance_m > 0:
            raise ValueError("distance_m must be positive")
        if self.speed_mps < 0:
            raise ValueError("speed_mps must be nonnegative")

        if self.visual_uv is not None:
            uv = np.array(self.visual_uv, dtype=float).reshape(-1)
            if uv.shape != (2,) or np.any(uv < 0) or np.any(uv > 1):
                msg = f"visual_uv must be a pair of values in [0, 1], got {uv!r}"
                raise ValueError(msg)
            uv.flags.writeable = False
            object.__setattr__(self, "visual_uv", uv)

        if self.visual_size is not None:
            size = float(self.visual_size)
            if not 0 < size <= 1:
                msg = f"visual_size must be in (0, 1], got {size}"
                raise ValueError(msg)
            object.__setattr__(self, "visual_size", size)

    @property
    def has_visual(self):
        return self.visual_uv is not None


class CameraModel:
    """
    A pinhole camera co-located with the basestation.

    Parameters
    ----------
    position : `~astropy.units.Quantity` [length] (optional)
        Camera position in the East-North-Up frame.
    optical_axis : array_like (optional)
        Viewing direction. The default camera faces the sky.
    horizontal_fov : `~astropy.units.Quantity` [angle] (optional)
    vertical_fov : `~astropy.units.Quantity` [angle] (optional)
    image_x_axis : array_like (optional)
        World direction that maps to increasing ``u`` in the image. It is
        projected to be orthogonal to the optical axis.
    """

    @u.quantity_input(position=u.m, horizontal_fov=u.deg, vertical_fov=u.deg)
    def __init__(
        self,
        position=[0.0, 0.0, 0.0] * u.m,
        optical_axis=(0.0, 0.0, 1.0),
        horizontal_fov=120 * u.deg,
        vertical_fov=120 * u.deg,
        image_x_axis=(1.0, 0.0, 0.0),
    ):
        self._position = _vector3(position.to_value(u.m), "position")

        axis = _vector3(optical_axis, "optical_axis")
        if np.linalg.norm(axis) == 0:
            raise ValueError("optical_axis must be nonzero")
        axis = axis / np.linalg.norm(axis)

        x_axis = np.array(image_x_axis, dtype=float)
        x_axis = x_axis - np.dot(x_axis, axis) * axis
        if np.linalg.norm(x_axis) < 1e-12:
            raise ValueError("image_x_axis must not be parallel to the optical axis")
        x_axis = x_axis / np.linalg.norm(x_axis)

        self._axis = axis
        self._x_axis = x_axis
        self._y_axis = np.cross(axis, x_axis)

        self._hfov = horizontal_fov.to_value(u.rad)
        self._vfov = vertical_fov.to_value(u.rad)
        for name, fov in [("horizontal_fov", self._hfov), ("vertical_fov", self._vfov)]:
            if not 0 < fov < np.pi:
                msg = f"{name} must be between 0 and 180 degrees"
                raise ValueError(msg)

        self._tan_h = np.tan(self._hfov / 2)
        self._tan_v = np.tan(self._vfov / 2)

    @property
    def position(self):
        return self._position * u.m

    @property
    def optical_axis(self):
        return self._axis.copy()

    @property
    def horizontal_fov(self):
        return (self._hfov * u.rad).to(u.deg)

    @property
    def vertical_fov(self):
        return (self._vfov * u.rad).to(u.deg)

    def image_plane_tangents(self, point):
        """Tangents of the angles off the optical axis along the image axes,
        or None if the point is not in front of the camera."""
        d = np.asarray(point, dtype=float) - self._position
        depth = d @ self._axis
        if depth <= 0:
            return None
        return d @ self._x_axis / depth, d @ self._y_axis / depth

    def project(self, point):
        """
        Normalized image coordinates of a world point.

        Parameters
        ----------
        point : array_like
            Position in meters.

        Returns
        -------
        uv : `numpy.ndarray` or None
            ``(u, v)`` in [0, 1], with (0.5, 0.5) on the optical axis, or None
            if the point is outside either field of view.
        """
        tangents = self.image_plane_tangents(point)
        if tangents is None:
            return None

        tx, ty = tangents
        if abs(tx) > self._tan_h or abs(ty) > self._tan_v:
            return None

        uv = np.array([0.5 + tx / (2 * self._tan_h), 0.5 + ty / (2 * self._tan_v)])
        return np.clip(uv, 0.0, 1.0)

    def __repr__(self):
        return (
            f"<CameraModel: fov {self.horizontal_fov.value:g}x"
            f"{self.vertical_fov.value:g} deg>"
        )


class TrajectoryConfig:
    """
    Flight and sensor settings for one simulated drone flight.

    Parameters
    ----------
    waypoints : `~astropy.units.Quantity` [length]
        Shape ``(N, 3)`` positions in the East-North-Up frame; at least two.
    speed_range : `~astropy.units.Quantity` [speed] (optional)
        The speed of each flight segment is drawn uniformly from this range.
    height_range : `~astropy.units.Quantity` [length] (optional)
        Waypoint heights are clipped to this range.
    sample_rate : `~astropy.units.Quantity` [frequency] (optional)
    gps_noise_sigma : `~astropy.units.Quantity` [length] (optional)
        Standard deviation of the zero-mean Gaussian GPS error per horizontal
        axis.
    rng_seed : int (optional)
    height_noise_sigma : `~astropy.units.Quantity` [length] (optional)
    distance_noise_sigma : `~astropy.units.Quantity` [length] (optional)
    hover_time : `~astropy.units.Quantity` [time] (optional)
        Duration of a hover at repeated waypoints.
    bs_position : `~astropy.units.Quantity` [length] (optional)
    anchor : tuple (optional)
        Latitude and longitude (degrees) of the frame origin.
    reference_size : `~astropy.units.Quantity` [length] (optional)
        Distance at which the apparent drone size is 1.
    """

    @u.quantity_input(
        waypoints=u.m,
        speed_range=u.m / u.s,
        height_range=u.m,
        sample_rate=u.Hz,
        gps_noise_sigma=u.m,
        height_noise_sigma=u.m,
        distance_noise_sigma=u.m,
        hover_time=u.s,
        bs_position=u.m,
        reference_size=u.m,
    )
    def __init__(
        self,
        waypoints,
        speed_range=[2.0, 15.0] * u.m / u.s,
        height_range=[10.0, 100.0] * u.m,
        sample_rate=1.0 * u.Hz,
        gps_noise_sigma=2.5 * u.m,
        rng_seed=None,
        height_noise_sigma=0 * u.m,
        distance_noise_sigma=0 * u.m,
        hover_time=10 * u.s,
        bs_position=[0.0, 0.0, 0.0] * u.m,
        anchor=DEFAULT_ANCHOR,
        reference_size=1.0 * u.m,
    ):
        waypoints = np.atleast_2d(waypoints.to_value(u.m))
        if waypoints.ndim != 2 or waypoints.shape[1] != 3:
            msg = f"Waypoints must have shape (N, 3), got {waypoints.shape}"
            raise ValueError(msg)
        if len(waypoints) < 2:
            raise ValueError("A trajectory needs at least 2 waypoints")
        if not np.all(np.isfinite(waypoints)):
            raise ValueError("Waypoints must be finite")
        self._waypoints = waypoints

        self._speed_range = self._validate_range(speed_range.to_value(u.m / u.s), "speed_range")
        if self._speed_range[0] <= 0:
            raise ValueError("The minimum speed must be positive")
        self._height_range = self._validate_range(height_range.to_value(u.m), "height_range")
        if self._height_range[0] < 0:
            raise ValueError("The minimum height must be nonnegative")

        self._sample_rate = float(sample_rate.to_value(u.Hz))
        if not self._sample_rate > 0:
            raise ValueError("sample_rate must be positive")

        self._gps_noise_sigma = float(gps_noise_sigma.to_value(u.m))
        self._height_noise_sigma = float(height_noise_sigma.to_value(u.m))
        self._distance_noise_sigma = float(distance_noise_sigma.to_value(u.m))
        for name in ["gps", "height", "distance"]:
            if getattr(self, f"_{name}_noise_sigma") < 0:
                msg = f"{name}_noise_sigma must be nonnegative"
                raise ValueError(msg)

        self._hover_time = float(hover_time.to_value(u.s))
        if not self._hover_time > 0:
            raise ValueError("hover_time must be positive")

        self._bs_position = _vector3(bs_position.to_value(u.m), "bs_position")
        self._reference_size = float(reference_size.to_value(u.m))
        if not self._reference_size > 0:
            raise ValueError("reference_size must be positive")

        self.anchor = (float(anchor[0]), float(anchor[1]))
        self.rng_seed = rng_seed

    @staticmethod
    def _validate_range(arr, name):
        arr = np.array(arr, dtype=float).reshape(-1)
        if arr.shape != (2,) or arr[0] > arr[1]:
            msg = f"{name} must be a [min, max] pair with min <= max"
            raise ValueError(msg)
        return arr

    # ------------------------------------------------------------------------
    # Computed or convenience properties

    @property
    def waypoints(self):
        return self._waypoints * u.m

    @property
    def speed_range(self):
        return self._speed_range * u.m / u.s

    @property
    def height_range(self):
        return self._height_range * u.m

    @property
    def sample_rate(self):
        return self._sample_rate * u.Hz

    @property
    def gps_noise_sigma(self):
        return self._gps_noise_sigma * u.m

    @property
    def bs_position(self):
        return self._bs_position * u.m

    def replace(self, **kwargs):
        """Return a copy of this configuration with some settings changed."""
        pars = {
            "waypoints": self.waypoints,
            "speed_range": self.speed_range,
            "height_range": self.height_range,
            "sample_rate": self.sample_rate,
            "gps_noise_sigma": self.gps_noise_sigma,
            "rng_seed": self.rng_seed,
            "height_noise_sigma": self._height_noise_sigma * u.m,
            "distance_noise_sigma": self._distance_noise_sigma * u.m,
            "hover_time": self._hover_time * u.s,
            "bs_position": self.bs_position,
            "anchor": self.anchor,
            "reference_size": self._reference_size * u.m,
        }
        pars.update(kwargs)
        return self.__class__(**pars)

    def __repr__(self):
        return f"<TrajectoryConfig: {len(self._waypoints)} waypoints>"


def generate_trajectory(cfg):
    """
    Fly a piecewise-linear path through the waypoints of a configuration.

    Each segment is flown at a constant speed drawn uniformly from
    ``cfg.speed_range``; repeated waypoints are a hover of ``hover_time``.
    States are sampled every ``1 / sample_rate`` seconds, from the first
    waypoint up to and including the end of the flight.

    Parameters
    ----------
    cfg : `~skybeam.scenario.TrajectoryConfig`

    Returns
    -------
    states : list of `~skybeam.scenario.DroneState`
    """
    rng = np.random.default_rng(cfg.rng_seed)

    waypoints = cfg._waypoints.copy()
    lo, hi = cfg._height_range
    clipped = (waypoints[:, 2] < lo) | (waypoints[:, 2] > hi)
    if np.any(clipped):
        logger.debug(f"Clipping {clipped.sum()} waypoint heights to [{lo}, {hi}] m")
    waypoints[:, 2] = np.clip(waypoints[:, 2], lo, hi)

    segments = np.diff(waypoints, axis=0)
    lengths = np.linalg.norm(segments, axis=1)
    speeds = rng.uniform(*cfg._speed_range, size=len(segments))

    moving = lengths > 0
    durations = np.full(len(segments), cfg._hover_time)
    durations[moving] = lengths[moving] / speeds[moving]
    velocities = np.zeros_like(segments)
    velocities[moving] = segments[moving] / durations[moving, None]

    knots = np.concatenate(([0.0], np.cumsum(durations)))
    n_states = int(np.floor(knots[-1] * cfg._sample_rate + 1e-9)) + 1
    times = np.arange(n_states) / cfg._sample_rate

    idx = np.clip(np.searchsorted(knots, times, side="right") - 1, 0, len(segments) - 1)
    frac = np.clip((times - knots[idx]) / durations[idx], 0.0, 1.0)
    positions = waypoints[idx] + frac[:, None] * segments[idx]

    return [
        DroneState(time=t, position=p, velocity=v)
        for t, p, v in zip(times, positions, velocities[idx])
    ]


def sense(state, camera, cfg, rng):
    """
    Observe a drone state with the basestation's sensors.

    GPS is the exact position converted to latitude/longitude plus Gaussian
    horizontal noise; height and slant distance are exact unless noise is
    configured; the visual features are the pinhole projection of the drone
    into the camera image and its apparent size.

    Parameters
    ----------
    state : `~skybeam.scenario.DroneState`
    camera : `~skybeam.scenario.CameraModel`
    cfg : `~skybeam.scenario.TrajectoryConfig`
    rng : `numpy.random.Generator`

    Returns
    -------
    sample : `~skybeam.scenario.SensorSample`
    """
    pos = state.position

    # every noise term is drawn, enabled or not
    gps_err = rng.normal(0.0, 1.0, size=2) * cfg._gps_noise_sigma
    height_err = rng.normal() * cfg._height_noise_sigma
    distance_err = rng.normal() * cfg._distance_noise_sigma

    lat, lon = enu_to_geodetic(pos[0] + gps_err[0], pos[1] + gps_err[1], cfg.anchor)

    height = max(pos[2] + height_err, 0.0)
    true_distance = float(np.linalg.norm(pos - cfg._bs_position))
    if true_distance == 0:
        raise ValueError("The drone is at the basestation position")
    distance = true_distance + distance_err
    if distance <= 0:
        distance = true_distance

    uv = camera.project(pos)
    size = None
    if uv is not None:
        size = min(cfg._reference_size / distance, 1.0)

    return SensorSample(
        gps=(float(lat), float(lon)),
        height_m=height,
        distance_m=distance,
        speed_mps=state.speed,
        visual_uv=uv,
        visual_size=size,
        time=state.time,
    )


def random_waypoints(n, camera, height_range, rng, margin=0.95):
    """
    Draw waypoints that are inside the camera's field of view.

    Depth along the optical axis is uniform in ``height_range`` and the image
    plane tangents are uniform within ``margin`` of the field of view. The
    view frustum is convex, so a straight flight between two such waypoints
    stays in view.

    Parameters
    ----------
    n : int
    camera : `~skybeam.scenario.CameraModel`
    height_range : `~astropy.units.Quantity` [length]
    rng : `numpy.random.Generator`
    margin : float (optional)

    Returns
    -------
    waypoints : `~astropy.units.Quantity` [length]
        Shape ``(n, 3)``.
    """
    lo, hi = u.Quantity(height_range).to_value(u.m)
    depth = rng.uniform(lo, hi, size=n)
    tx = rng.uniform(-1, 1, size=n) * margin * camera._tan_h
    ty = rng.uniform(-1, 1, size=n) * margin * camera._tan_v

    direction = (
        camera._axis[None]
        + tx[:, None] * camera._x_axis[None]
        + ty[:, None] * camera._y_axis[None]
    )
    return (camera._position[None] + depth[:, None] * direction) * u.m


def simulate(
    num_samples,
    codebook,
    noise,
    camera=None,
    flight=None,
    waypoints=None,
    n_waypoints=4,
    margin=0.95,
    seed=0,
    pool=None,
    n_batches=8,
    reference_distance=1.0,
    num_subcarriers=1,
):
    """
    Generate paired sensor samples and beam-sweep power vectors.

    Flights are generated one after another, flight ``i`` using seed
    ``seed + i``, until ``num_samples`` states are available. The states are
    then split into ``n_batches`` contiguous batches; batch ``j`` draws its
    channel phases and measurement noise from ``noise.rng_seed + j`` and its
    sensor noise from ``(seed, j)``, so the output does not depend on the
    processing pool.

    Parameters
    ----------
    num_samples : int
    codebook : `~skybeam.codebook.BeamCodebook`
    noise : `~skybeam.channel.NoiseModel`
    camera : `~skybeam.scenario.CameraModel` (optional)
    flight : dict (optional)
        Keyword arguments for `~skybeam.scenario.TrajectoryConfig`, other
        than ``waypoints`` and ``rng_seed``.
    waypoints : `~astropy.units.Quantity` [length] (optional)
        Fly every flight through these waypoints. By default, each flight
        gets ``n_waypoints`` random waypoints inside the camera view.
    n_waypoints : int (optional)
    margin : float (optional)
        Fraction of the field of view used for random waypoints.
    seed : int (optional)
    pool : `schwimmbad.BasePool` (optional)
        Default is a `schwimmbad.SerialPool`.
    n_batches : int (optional)
    reference_distance : float (optional)
    num_subcarriers : int (optional)

    Returns
    -------
    samples : list of `~skybeam.scenario.SensorSample`
    powers : list of `~skybeam.oracle.PowerVector`
    """
    from .multiproc_helpers import run_worker, simulate_worker
    from .utils import batch_tasks

    num_samples = int(num_samples)
    if num_samples < 1:
        raise ValueError("num_samples must be positive")

    if camera is None:
        camera = CameraModel()

    if flight is None:
        flight = {}
    flight = dict(flight)
    height_range = flight.get("height_range", [10.0, 100.0] * u.m)

    if noise.rng_seed is None:
        raise ValueError("The noise model needs an explicit rng_seed for simulation")

    configs = []
    states = []
    t_offset = 0.0
    i = 0
    while len(states) < num_samples:
        rng = np.random.default_rng([seed + i, 1])
        wps = waypoints
        if wps is None:
            wps = random_waypoints(
                n_waypoints, camera, height_range, rng, margin=margin
            )
        cfg = TrajectoryConfig(wps, rng_seed=seed + i, **flight)
        flight_states = generate_trajectory(cfg)

        configs.append(cfg)
        for s in flight_states:
            shifted = DroneState(s.time + t_offset, s.position, s.velocity)
            states.append((shifted, i))
        t_offset = states[-1][0].time + 1 / cfg._sample_rate
        i += 1

    states = states[:num_samples]
    logger.info(f"Simulating {num_samples} samples from {i} flights")

    if pool is None:
        import schwimmbad

        pool = schwimmbad.SerialPool()

    tasks = batch_tasks(
        num_samples,
        n_batches=n_batches,
        arr=states,
        args=(
            configs,
            camera,
            codebook,
            noise,
            seed,
            reference_distance,
            num_subcarriers,
        ),
    )
    results = run_worker(simulate_worker, pool, tasks)

    samples = []
    powers = []
    for batch_samples, batch_powers in results:
        samples.extend(batch_samples)
        powers.extend(batch_powers)

    return samples, powers
