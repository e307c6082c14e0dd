# Standard library
import os

# Third-party
import numpy as np
import pytest
import yaml
from astropy.table import Table
from astropy.utils.data import get_pkg_data_filename

# Package
from ..cli import RunConfig, main, run
from ..codebook import ArrayGeometry, build_codebook
from ..dataset_helpers import ingest_csv
from ..evaluation import EvalReport
from ..exceptions import ConfigError
from ..mlp import Checkpoint
from ..oracle import downsample_power, optimal_beam
from ..scenario import geodetic_to_enu

SMALL = [
    "--set", "scenario.num_samples=80",
    "--set", "scenario.n_batches=2",
    "--set", "train.epochs=2",
    "--set", "train.hidden_dims=16,16",
]


def test_run_config(tmpdir):
    with pytest.raises(ConfigError):
        RunConfig(command="fly")

    with pytest.raises(FileNotFoundError):
        RunConfig(command="train", input=str(tmpdir / "missing.csv"))


def test_generate_reproducible(tmpdir):
    out1 = str(tmpdir / "run1")
    out2 = str(tmpdir / "run2")
    assert main(["generate", "--seed", "7", "--out", out1, *SMALL]) == 0
    assert main(["generate", "--seed", "7", "--out", out2, *SMALL]) == 0

    with open(os.path.join(out1, "dataset.csv")) as f1, open(os.path.join(out2, "dataset.csv")) as f2:
        assert f1.read() == f2.read()

    with open(os.path.join(out1, "summary.yml")) as f:
        summary = yaml.safe_load(f)
    assert summary["n_samples"] == 80
    assert summary["master_seed"] == 7
    assert len(summary["config_hash"]) == 16
    assert sum(summary["label_histogram_q32"]) == 80

    out3 = str(tmpdir / "run3")
    assert main(["generate", "--seed", "8", "--out", out3, *SMALL]) == 0
    with open(os.path.join(out1, "dataset.csv")) as f1, open(os.path.join(out3, "dataset.csv")) as f3:
        assert f1.read() != f3.read()


def test_noiseless_labels(tmpdir):
    """Without noise, the label of each sample is the beam nearest to the
    drone's direction, recoverable from its exact position."""
    out = str(tmpdir)
    config = get_pkg_data_filename("data/noiseless.yml", package="skybeam")
    status = main(
        ["generate", "--config", config, "--out", out,
         "--set", "scenario.num_samples=150", "--set", "scenario.n_batches=3"]
    )
    assert status == 0

    samples, powers = ingest_csv(os.path.join(out, "dataset.csv"), num_beams=64)
    codebook = build_codebook(ArrayGeometry(num_elements=16), num_beams=64)
    for s, pv in zip(samples, powers):
        assert s.height_m == 50
        east, _ = geodetic_to_enu(*s.gps)
        sine = east / s.distance_m
        assert optimal_beam(pv).index == codebook.nearest_beam(sine)
        assert optimal_beam(downsample_power(pv)).index == codebook.nearest_beam(
            sine, stride=2
        )


def test_train_evaluate(tmpdir):
    out = str(tmpdir)
    assert main(["generate", "--out", out, *SMALL]) == 0
    dataset = os.path.join(out, "dataset.csv")

    status = main(["train", "--input", dataset, "--out", out, "--feature-set",
                   "position-height", *SMALL])
    assert status == 0

    ckpt = Checkpoint.read(os.path.join(out, "model.h5"))
    assert ckpt.meta["feature_set"] == "position-height"
    assert ckpt.meta["q"] == 32
    assert ckpt.model.architecture.dims == (3, 16, 16, 32)

    history = Table.read(os.path.join(out, "history.csv"), format="ascii.csv")
    assert len(history) == 2

    status = main(["evaluate", "--input", dataset, "--checkpoint",
                   os.path.join(out, "model.h5"), "--out", out, *SMALL])
    assert status == 0

    report = EvalReport.read(os.path.join(out, "report.yml"))
    assert report.n_test == 24
    assert report.q == 32
    assert report.config_hash == ckpt.meta["config_hash"]
    assert report.master_seed == 0
    with open(os.path.join(out, "report.yml")) as f:
        assert yaml.safe_load(f)["master_seed"] == 0
    assert set(report.topk) == {1, 2, 3, 5}
    assert os.path.exists(os.path.join(out, "report.csv"))


def test_compare(tmpdir):
    out = str(tmpdir)
    status = main(
        ["compare", "--out", out, *SMALL,
         "--set", "compare.feature_sets=position,visual",
         "--set", "eval.learning_curve_sizes=10,40"]
    )
    assert status == 0

    with open(os.path.join(out, "compare.yml")) as f:
        compare = yaml.safe_load(f)
    assert [r["feature_set"] for r in compare["reports"]] == ["position", "visual"]
    n_test = {r["n_test"] for r in compare["reports"]}
    assert len(n_test) == 1

    curve = Table.read(os.path.join(out, "learning_curve.csv"), format="ascii.csv")
    assert list(curve["n_train"]) == [10, 40]


def test_compare_deterministic(tmpdir):
    argv = ["compare", "--seed", "11", *SMALL,
            "--set", "compare.feature_sets=position,position-height-distance"]
    out1 = str(tmpdir / "run1")
    out2 = str(tmpdir / "run2")
    assert main([*argv, "--out", out1]) == 0
    assert main([*argv, "--out", out2]) == 0

    for name in ["compare.csv", "compare.yml"]:
        with open(os.path.join(out1, name), "rb") as f1, open(os.path.join(out2, name), "rb") as f2:
            assert f1.read() == f2.read()

    with open(os.path.join(out1, "compare.yml")) as f:
        compare = yaml.safe_load(f)
    assert compare["master_seed"] == 11
    assert all(r["master_seed"] == 11 for r in compare["reports"])

def test_ingest(tmpdir):
    external = str(tmpdir / "external.csv")
    with open(external, "w") as f:
        f.write(
            "abs_index,unit2_lat,unit2_lon,unit2_height,unit2_distance,unit2_speed,unit1_beam_index\n"
        )
        for i in range(12):
            f.write(f"{i},33.4270{i:02d},-111.9390{i:02d},{20 + i},{30 + i},1.5,{1 + 2 * i}\n")

    mapping = get_pkg_data_filename("data/example_mapping.yml", package="skybeam")
    out = str(tmpdir / "out")
    assert main(["ingest", "--input", external, "--mapping", mapping, "--out", out]) == 0

    converted = os.path.join(out, "dataset.csv")
    samples, powers = ingest_csv(converted, label_beams=64)
    assert len(samples) == 12
    assert [optimal_beam(pv).index for pv in powers] == [2 * i for i in range(12)]

    # the converted labels index the full 64-beam codebook
    status = main(["train", "--input", converted, "--out", out, "--q", "64",
                   "--set", "train.epochs=1", "--set", "train.hidden_dims=4"])
    assert status == 0


@pytest.mark.parametrize(
    ("argv", "status"),
    [
        (["generate", "--set", "train.epochz=3"], 2),
        (["generate", "--set", "dataset.q=48"], 2),
        (["train"], 2),
        (["evaluate", "--input", "dataset.csv"], 3),
        (["ingest", "--input", "missing.csv", "--mapping", "missing.yml"], 3),
    ],
)
def test_exit_status(tmpdir, argv, status):
    with tmpdir.as_cwd():
        assert main([*argv, "--out", str(tmpdir)]) == status


@pytest.mark.parametrize(
    "item",
    [
        "scenario.speed_min=20",
        "scenario.sample_rate=0",
        "scenario.num_samples=0",
        "channel.snr_db=nan",
        "train.hidden_dims=0",
        "eval.ks=1,40",
        "dataset.train_fraction=1.5",
    ],
)
def test_invalid_setting_exit_status(tmpdir, capsys, item):
    assert main(["generate", "--out", str(tmpdir), "--set", item]) == 2

    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    assert "ConfigError" in err[0]


def test_power_columns_checked_against_codebook(tmpdir):
    header = ",".join(["time_s", "lat", "lon", "height_m", "distance_m", "speed_mps",
                       "u", "v", "size"] + [f"p{j}" for j in range(63)])
    row = ",".join(["0", "33.4", "-111.9", "20", "30", "1", "", "", ""] + ["1.0"] * 63)
    bad = str(tmpdir / "bad.csv")
    with open(bad, "w") as f:
        f.write(f"{header}\n{row}\n")

    assert main(["train", "--input", bad, "--out", str(tmpdir)]) == 3


def test_exit_status_data_error(tmpdir):
    bad = str(tmpdir / "bad.csv")
    with open(bad, "w") as f:
        f.write("time_s,lat,lon,p0\n0,33.4,-111.9,1\n")
    assert run({"command": "train", "input": bad, "out": str(tmpdir)}) == 3


def test_exit_status_numeric_error(tmpdir):
    out = str(tmpdir)
    assert main(["generate", "--out", out, *SMALL]) == 0
    argv = ["train", "--input", os.path.join(out, "dataset.csv"), "--out", out, *SMALL,
            "--set", "train.initial_lr=1e300"]
    with np.errstate(all="ignore"):
        assert main(argv) == 4


@pytest.mark.slow
def test_generate_default_scale(tmpdir):
    out = str(tmpdir)
    assert main(["generate", "--out", out]) == 0

    samples, powers = ingest_csv(os.path.join(out, "dataset.csv"), num_beams=64)
    assert len(samples) == 12004

    from ..dataset import Dataset, build_examples, split

    pvs = [downsample_power(pv) for pv in powers]
    ds = Dataset(build_examples(samples, pvs, "position"), q=32, feature_set="position")
    train_set, test_set = split(ds, train_fraction=0.7, seed=0)
    assert len(train_set) == 8402
    assert len(test_set) == 3602


def _top1(out):
    with open(os.path.join(out, "compare.yml")) as f:
        compare = yaml.safe_load(f)
    return {r["feature_set"]: r["topk"][1] for r in compare["reports"]}, compare


@pytest.mark.slow
def test_noiseless_position_accuracy(tmpdir):
    """With exact sensors at a fixed height, the label is a function of the
    drone's position and the position network learns it."""
    out = str(tmpdir)
    config = get_pkg_data_filename("data/noiseless.yml", package="skybeam")
    status = main(["compare", "--config", config, "--out", out,
                   "--set", "compare.feature_sets=position"])
    assert status == 0

    top1, compare = _top1(out)
    assert compare["reports"][0]["n_test"] == 3602
    assert top1["position"] >= 0.95


@pytest.mark.slow
def test_feature_set_ordering(tmpdir):
    """Height and distance, or the camera view, resolve the elevation
    ambiguity of a noisy position fix."""
    out = str(tmpdir)
    status = main(["compare", "--out", out, "--set",
                   "compare.feature_sets=position,position-height-distance,visual"])
    assert status == 0

    top1, compare = _top1(out)
    assert len({r["n_test"] for r in compare["reports"]}) == 1
    assert top1["position-height-distance"] >= top1["position"] + 0.03
    assert top1["visual"] >= top1["position"] + 0.03
