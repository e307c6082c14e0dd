"""Reading and writing sensing/power datasets as CSV files."""

# Standard library
import os
import re

# Third-party
import numpy as np
import yaml
from astropy.io import ascii
from astropy.io.ascii import InconsistentTableError
from astropy.table import MaskedColumn, Table

# Project
from .exceptions import DataError
from .logging import logger
from .oracle import PowerVector, optimal_beam
from .scenario import SensorSample
from .utils import atomic_path

__all__ = [
    "SENSOR_COLUMNS",
    "ingest_csv",
    "read_column_mapping",
    "samples_to_table",
    "write_csv",
]

SENSOR_COLUMNS = (
    "time_s",
    "lat",
    "lon",
    "height_m",
    "distance_m",
    "speed_mps",
    "u",
    "v",
    "size",
)
REQUIRED_COLUMNS = ("lat", "lon", "height_m", "distance_m", "speed_mps")
VISUAL_COLUMNS = ("u", "v", "size")
_POWER_PATTERN = re.compile(r"^p(\d+)$")


class _StrictCsv(ascii.Csv):
    """CSV reader that refuses rows with a different number of cells than the
    header, instead of padding them."""

    def inconsistent_handler(self, str_vals, ncols):
        return str_vals


def samples_to_table(samples, powers, label_only=False, meta=None):
    """
    Tabulate sensor samples and power vectors in the dataset CSV schema.

    Parameters
    ----------
    samples : list of `~skybeam.scenario.SensorSample`
    powers : list of `~skybeam.oracle.PowerVector`
    label_only : bool (optional)
        Write a single ``beam_label`` column instead of the power columns.
    meta : dict (optional)
        Written as ``# key: value`` comment lines (e.g., the configuration
        hash and master seed).

    Returns
    -------
    tbl : `~astropy.table.Table`
    """
    if len(samples) != len(powers):
        msg = (
            f"Number of sensor samples ({len(samples)}) and power vectors "
            f"({len(powers)}) must match"
        )
        raise DataError(msg)
    if len(samples) == 0:
        raise DataError("Nothing to write: no samples")

    tbl = Table()
    tbl["time_s"] = [s.time for s in samples]
    tbl["lat"] = [s.gps[0] for s in samples]
    tbl["lon"] = [s.gps[1] for s in samples]
    tbl["height_m"] = [s.height_m for s in samples]
    tbl["distance_m"] = [s.distance_m for s in samples]
    tbl["speed_mps"] = [s.speed_mps for s in samples]

    has_visual = np.array([s.visual_uv is not None for s in samples])
    uvs = np.zeros((len(samples), 3))
    for i, s in enumerate(samples):
        if s.visual_uv is not None:
            uvs[i] = [*s.visual_uv, s.visual_size]
    for j, name in enumerate(VISUAL_COLUMNS):
        tbl[name] = MaskedColumn(uvs[:, j], mask=~has_visual)

    if label_only:
        tbl["beam_label"] = [optimal_beam(pv).index for pv in powers]

    else:
        sizes = {len(pv) for pv in powers}
        if len(sizes) != 1:
            msg = f"Power vectors have inconsistent lengths: {sorted(sizes)}"
            raise DataError(msg)
        P = np.stack([pv.powers for pv in powers])
        for j in range(P.shape[1]):
            tbl[f"p{j}"] = P[:, j]

    if meta:
        tbl.meta["comments"] = [f"{k}: {v}" for k, v in meta.items()]

    return tbl


def write_csv(filename, samples, powers, label_only=False, meta=None, overwrite=False):
    """
    Write sensor samples and power vectors to a dataset CSV file.

    The file is written to a temporary name and moved into place when
    complete. See `~skybeam.dataset_helpers.samples_to_table` for the
    parameters.
    """
    if os.path.exists(filename) and not overwrite:
        msg = f"File {filename} already exists. Use overwrite=True to replace it."
        raise OSError(msg)

    tbl = samples_to_table(samples, powers, label_only=label_only, meta=meta)
    with atomic_path(filename) as tmp:
        tbl.write(tmp, format="ascii.csv", overwrite=True)

    logger.debug(f"Wrote {len(tbl)} rows to {filename}")


def read_column_mapping(filename):
    """
    Read a YAML column mapping for external CSV files.

    The mapping has a ``columns`` dictionary from schema column names
    (``time_s``, ``lat``, ``lon``, ...) to external header names, and
    optionally ``power_prefix`` with ``power_index_base`` (power columns are
    named ``<prefix><index>``) or ``beam_label`` with ``label_index_base``.

    Returns
    -------
    mapping : dict
    """
    with open(filename) as f:
        mapping = yaml.safe_load(f)

    if not isinstance(mapping, dict) or not isinstance(mapping.get("columns", {}), dict):
        msg = f"Column mapping {filename} must be a mapping with a 'columns' section"
        raise DataError(msg)

    allowed = {"columns", "power_prefix", "power_index_base", "beam_label", "label_index_base"}
    unknown = set(mapping) - allowed
    if unknown:
        msg = f"Unknown keys in column mapping {filename}: {sorted(unknown)}"
        raise DataError(msg)

    unknown = set(mapping.get("columns", {})) - set(SENSOR_COLUMNS)
    if unknown:
        msg = (
            f"Column mapping {filename} maps unknown schema columns: "
            f"{sorted(unknown)}"
        )
        raise DataError(msg)

    return mapping


def _apply_mapping(tbl, mapping):
    out = Table(meta=tbl.meta)
    for name, ext_name in mapping.get("columns", {}).items():
        if ext_name not in tbl.colnames:
            msg = f"Mapped column '{ext_name}' (for '{name}') is not in the file"
            raise DataError(msg)
        out[name] = tbl[ext_name]

    if "beam_label" in mapping:
        ext_name = mapping["beam_label"]
        if ext_name not in tbl.colnames:
            msg = f"Mapped beam label column '{ext_name}' is not in the file"
            raise DataError(msg)
        out["beam_label"] = tbl[ext_name] - int(mapping.get("label_index_base", 0))

    elif "power_prefix" in mapping:
        prefix = mapping["power_prefix"]
        base = int(mapping.get("power_index_base", 0))
        pattern = re.compile(rf"^{re.escape(prefix)}(\d+)$")
        found = {}
        for colname in tbl.colnames:
            match = pattern.match(colname)
            if match:
                found[int(match.group(1)) - base] = colname
        for j in sorted(found):
            out[f"p{j}"] = tbl[found[j]]

    return out


def _power_columns(tbl):
    idx = {}
    for name in tbl.colnames:
        match = _POWER_PATTERN.match(name)
        if match:
            idx[int(match.group(1))] = name

    if idx and sorted(idx) != list(range(len(idx))):
        msg = f"Power columns must be p0...p{len(idx) - 1} without gaps"
        raise DataError(msg)

    return [idx[j] for j in range(len(idx))]


def _cell(tbl, name, i):
    """A float cell value, or None if blank, masked or NaN."""
    if name not in tbl.colnames:
        return None
    val = tbl[name][i]
    if np.ma.is_masked(val):
        return None
    try:
        val = float(val)
    except (TypeError, ValueError) as e:
        msg = f"Data row {i + 1}: column '{name}' has non-numeric value {val!r}"
        raise DataError(msg) from e
    if np.isnan(val):
        return None
    return val


def ingest_csv(filename, mapping=None, num_beams=None, label_beams=None):
    """
    Read sensor samples and power vectors from a dataset CSV file.

    The file has the header
    ``time_s,lat,lon,height_m,distance_m,speed_mps,u,v,size,p0,...``, or a
    single ``beam_label`` column in place of the power columns. Empty ``u``,
    ``v``, ``size`` cells mean the drone was not in the camera view. Rows with
    a blank or NaN power value are skipped.

    Parameters
    ----------
    filename : str
    mapping : dict, str (optional)
        A column mapping (or the path to a YAML mapping file) that translates
        the headers of an external file to this schema.
    num_beams : int or sequence of int (optional)
        Expected number of power columns, or the allowed numbers. The header
        is checked before any row is converted.
    label_beams : int (optional)
        For files with only a beam label, the size of the one-hot power
        vectors. Defaults to ``num_beams``, or 64.

    Returns
    -------
    samples : list of `~skybeam.scenario.SensorSample`
    powers : list of `~skybeam.oracle.PowerVector`
    """
    if not os.path.exists(filename):
        msg = f"Input file {filename} does not exist"
        raise FileNotFoundError(msg)

    try:
        tbl = _StrictCsv().read(filename)
    except InconsistentTableError as e:
        msg = f"Schema mismatch in {filename}: {e}"
        raise DataError(msg) from e

    if mapping is not None:
        if isinstance(mapping, str):
            mapping = read_column_mapping(mapping)
        tbl = _apply_mapping(tbl, mapping)

    missing = [name for name in REQUIRED_COLUMNS if name not in tbl.colnames]
    if missing:
        msg = f"{filename} is missing required columns: {', '.join(missing)}"
        raise DataError(msg)

    power_cols = _power_columns(tbl)
    label_only = not power_cols
    if label_only and "beam_label" not in tbl.colnames:
        msg = f"{filename} has neither power columns (p0, p1, ...) nor a beam_label column"
        raise DataError(msg)

    allowed = None if num_beams is None else sorted(int(n) for n in np.atleast_1d(num_beams))
    if allowed is not None and power_cols and len(power_cols) not in allowed:
        expected = " or ".join(str(n) for n in allowed)
        msg = f"{filename} has {len(power_cols)} power columns, expected {expected}"
        raise DataError(msg)
    if label_beams is None:
        label_beams = 64 if allowed is None else allowed[-1]

    samples = []
    powers = []
    n_skipped = 0
    for i in range(len(tbl)):
        if label_only:
            label = _cell(tbl, "beam_label", i)
            if label is None:
                n_skipped += 1
                continue
            if label != int(label) or not 0 <= label < label_beams:
                msg = (
                    f"Data row {i + 1}: beam label {label} is not a beam index "
                    f"for {label_beams} beams"
                )
                raise DataError(msg)
            pv = PowerVector.one_hot(int(label), label_beams)

        else:
            vals = [_cell(tbl, name, i) for name in power_cols]
            if any(v is None for v in vals):
                n_skipped += 1
                continue
            try:
                pv = PowerVector(vals)
            except ValueError as e:
                msg = f"Data row {i + 1}: {e}"
                raise DataError(msg) from e

        sensor = {}
        for name in REQUIRED_COLUMNS:
            sensor[name] = _cell(tbl, name, i)
            if sensor[name] is None:
                msg = f"Data row {i + 1}: required column '{name}' is empty"
                raise DataError(msg)

        visual = [_cell(tbl, name, i) for name in VISUAL_COLUMNS]
        time = _cell(tbl, "time_s", i)

        try:
            sample = SensorSample(
                gps=(sensor["lat"], sensor["lon"]),
                height_m=sensor["height_m"],
                distance_m=sensor["distance_m"],
                speed_mps=sensor["speed_mps"],
                visual_uv=None if None in visual else visual[:2],
                visual_size=None if None in visual else visual[2],
                time=float(i) if time is None else time,
            )
        except ValueError as e:
            msg = f"Data row {i + 1}: {e}"
            raise DataError(msg) from e

        samples.append(sample)
        powers.append(pv)

    if n_skipped > 0:
        logger.warning(f"Skipped {n_skipped} rows with missing power values in {filename}")

    if not samples:
        msg = f"No usable rows in {filename}"
        raise DataError(msg)

    logger.info(f"Read {len(samples)} samples from {filename}")
    return samples, powers
