"""Miscellaneous utilities"""

# Standard library
import contextlib
import hashlib
import os
import tempfile

# Third-party
import numpy as np
import yaml

__all__ = [
    "atomic_path",
    "batch_tasks",
    "config_hash",
    "derive_seed",
    "make_rng",
]


def batch_tasks(n_tasks, n_batches, arr=None, args=None, start_idx=0):
    """Split the tasks into some number of batches to send out to pool workers.

    Parameters
    ----------
    n_tasks : int
        The total number of tasks to divide.
    n_batches : int
        The number of batches to split the tasks into. This is a fixed number
        (not the pool size) wherever the per-batch random seeds have to be
        independent of the number of processes.
    arr : iterable (optional)
        Instead of returning indices that specify the batches, you can also
        directly split an array into batches.
    args : iterable (optional)
        Other arguments to add to each task.
    start_idx : int (optional)
        What index in the tasks to start from?

    Returns
    -------
    tasks : list
        Each task is a list ``[(i1, i2) or arr[i1:i2], batch_index, *args]``.
    """
    if args is None:
        args = []
    args = list(args)

    tasks = []
    if n_batches > 0 and n_tasks >= n_batches:
        base_batch_size = n_tasks // n_batches
        rmdr = n_tasks % n_batches

        i1 = start_idx
        for i in range(n_batches):
            i2 = i1 + base_batch_size
            if i < rmdr:
                i2 += 1

            if arr is None:
                tasks.append([(i1, i2), i, *args])
            else:
                tasks.append([arr[i1:i2], i, *args])

            i1 = i2

    elif arr is None:
        tasks.append([(start_idx, n_tasks + start_idx), 0, *args])

    else:
        tasks.append([arr[start_idx : n_tasks + start_idx], 0, *args])

    return tasks


def derive_seed(master_seed, component):
    """Derive an independent integer seed for a named component.

    The component name is hashed together with the master seed, so the same
    ``(master_seed, component)`` pair always yields the same seed and distinct
    components get unrelated streams.

    Parameters
    ----------
    master_seed : int
    component : str
        A stable name, e.g. ``"scenario"``, ``"channel"``, ``"split"``.

    Returns
    -------
    seed : int
        A non-negative 63-bit integer.
    """
    if isinstance(master_seed, (bool, np.bool_)) or not isinstance(
        master_seed, (int, np.integer)
    ):
        msg = f"The master seed must be an integer, not {master_seed!r}"
        raise TypeError(msg)

    digest = hashlib.sha256(f"{int(master_seed)}:{component}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def make_rng(master_seed, component):
    """A `numpy.random.Generator` seeded with `derive_seed`."""
    return np.random.default_rng(derive_seed(master_seed, component))


def config_hash(settings):
    """Short, stable identifier of a resolved configuration mapping.

    The mapping is dumped to YAML with sorted keys so the hash does not depend
    on insertion order.
    """
    text = yaml.safe_dump(_to_builtin(settings), sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _to_builtin(obj):
    if isinstance(obj, dict):
        return {str(k): _to_builtin(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_builtin(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_builtin(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary filename next to ``path`` and move it into place.

    The temporary file is renamed onto ``path`` only if the body of the
    ``with`` block completes, so readers never see a partially written file.
    """
    path = os.path.abspath(os.path.expanduser(path))
    dirname = os.path.dirname(path)
    os.makedirs(dirname, exist_ok=True)

    fd, tmp = tempfile.mkstemp(
        prefix=f".{os.path.basename(path)}.", suffix=".tmp", dir=dirname
    )
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
