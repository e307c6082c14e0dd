# Third-party
import numpy as np

# Project
from .channel import LinkGeometry, los_channel, received_power_vector
from .logging import logger
from .scenario import sense

__all__ = ["compare_worker", "run_worker", "simulate_worker"]


def run_worker(worker, pool, tasks):
    """Map a worker over tasks with a processing pool, keeping task order."""
    results = []
    for res in pool.map(worker, tasks):
        results.append(res)
    return results


def simulate_worker(task):
    """
    Sense a batch of drone states and simulate their beam sweeps. This is
    meant to be ``map``ped using a processing pool within
    `~skybeam.scenario.simulate` and is not supposed to be in the public API.

    Parameters
    ----------
    task : iterable
        The batch of ``(DroneState, flight index)`` pairs, the batch index, the
        flight configurations, the camera, the codebook, the noise model, the
        sensing seed, the path-loss reference distance, and the number of
        subcarriers.

    Returns
    -------
    samples : list of `~skybeam.scenario.SensorSample`
    powers : list of `~skybeam.oracle.PowerVector`
    """
    (
        states,
        batch_idx,
        configs,
        camera,
        codebook,
        noise,
        seed,
        reference_distance,
        num_subcarriers,
    ) = task

    sense_rng = np.random.default_rng([seed, batch_idx])
    channel_rng = np.random.default_rng(noise.rng_seed + batch_idx)

    samples = []
    powers = []
    for state, flight_idx in states:
        cfg = configs[flight_idx]
        samples.append(sense(state, camera, cfg, sense_rng))

        link = LinkGeometry(cfg._bs_position, state.position)
        chan = los_channel(
            link,
            codebook.geometry,
            channel_rng,
            reference_distance=reference_distance,
            num_subcarriers=num_subcarriers,
        )
        powers.append(received_power_vector(chan, codebook, noise, channel_rng))

    logger.debug(f"Simulated batch {batch_idx} with {len(states)} samples")
    return samples, powers


def compare_worker(task):
    """
    Train and evaluate one network per feature set in a batch. This is meant
    to be ``map``ped using a processing pool within
    `~skybeam.evaluation.compare_feature_sets`.

    Returns
    -------
    results : list
        ``(feature set value, EvalReport)`` pairs.
    """
    from .evaluation import evaluate
    from .mlp import MlpArchitecture, MlpModel, train

    items, batch_idx, hidden_dims, train_cfg, ks, config_hash = task

    results = []
    for fs, train_set, test_set in items:
        arch = MlpArchitecture(
            input_dim=fs.feature_dim, output_dim=train_set.q, hidden_dims=hidden_dims
        )
        model = MlpModel.initialize(arch, seed=train_cfg.seed)
        logger.info(f"Training the {fs.value} model on {len(train_set)} examples")
        model, _ = train(model, train_set, train_cfg)
        results.append((fs.value, evaluate(model, test_set, ks=ks, config_hash=config_hash)))

    return results
