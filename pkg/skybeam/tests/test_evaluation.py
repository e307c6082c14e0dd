# Third-party
import numpy as np
import pytest
from astropy.table import Table
from schwimmbad import SerialPool

# Package
from ..dataset import Dataset, FeatureSet, LabeledExample, build_examples, split
from ..evaluation import (
    EvalReport,
    compare_feature_sets,
    evaluate,
    learning_curve,
    overhead_ratio,
    stratified_accuracy,
    topk_accuracy,
    write_reports_csv,
)
from ..exceptions import DataError
from ..mlp import MlpArchitecture, MlpModel, TrainConfig, train
from ..oracle import BeamLabel
from .test_dataset import make_samples


def test_topk_accuracy():
    preds = [[0, 1, 2], [2, 0, 1], [1, 2, 0], [0, 2, 1]]
    labels = [0, 0, 0, 1]
    assert topk_accuracy(preds, labels, 1) == 0.25
    assert topk_accuracy(preds, labels, 2) == 0.5
    assert topk_accuracy(preds, labels, 3) == 1.0

    preds = [[BeamLabel(1, 4), BeamLabel(0, 4)]]
    assert topk_accuracy(preds, [BeamLabel(0, 4)], 2) == 1.0
    assert topk_accuracy(np.array([[3, 1]]), [1], 1) == 0.0

    with pytest.raises(DataError):
        topk_accuracy([], [], 1)

    with pytest.raises(DataError):
        topk_accuracy([[0]], [0, 1], 1)


def test_topk_accuracy_nondecreasing():
    rng = np.random.default_rng(21)
    for _ in range(50):
        q = int(rng.choice([4, 32, 64]))
        n = int(rng.integers(1, 40))
        preds = np.array([rng.permutation(q) for _ in range(n)])
        labels = rng.integers(0, q, size=n)

        accs = [topk_accuracy(preds, labels, k) for k in range(1, q + 1)]
        assert all(a <= b for a, b in zip(accs[:-1], accs[1:]))
        assert accs[-1] == 1.0

    with pytest.raises(ValueError):
        topk_accuracy([[0, 1]], [0], 3)


@pytest.mark.parametrize(
    ("k", "q", "ratio"), [(1, 32, 1 / 32), (3, 32, 3 / 32), (5, 64, 5 / 64), (32, 32, 1.0)]
)
def test_overhead_ratio(k, q, ratio):
    assert overhead_ratio(k, q) == ratio


def test_overhead_ratio_invalid():
    with pytest.raises(ValueError):
        overhead_ratio(0, 32)

    with pytest.raises(ValueError):
        overhead_ratio(33, 32)


def make_strata_examples(heights):
    return [
        LabeledExample(
            [0.0, 0.0],
            BeamLabel(i % 2, 4),
            meta={"height_m": h, "speed_mps": 1.0, "distance_m": 10.0},
            sample_id=i,
        )
        for i, h in enumerate(heights)
    ]


def test_stratified_accuracy():
    examples = make_strata_examples(np.arange(1.0, 10.0))
    # correct for every example of the lowest tertile only
    preds = [[ex.label.index if i < 3 else 3, 2] for i, ex in enumerate(examples)]

    strata = stratified_accuracy(examples, preds, "height", ks=(1, 2))
    assert list(strata) == ["low", "medium", "high"]
    assert [s["count"] for s in strata.values()] == [3, 3, 3]
    assert strata["low"]["topk"] == {1: 1.0, 2: 1.0}
    assert strata["medium"]["topk"] == {1: 0.0, 2: 0.0}
    assert strata["low"]["edges"][0] == 1.0
    assert strata["high"]["edges"][1] == 9.0


def test_stratified_accuracy_fallback():
    examples = make_strata_examples([10.0, 10.0, 20.0, 20.0])
    preds = [[0], [1], [0], [0]]

    strata, fallback = stratified_accuracy(
        examples, preds, "height", ks=(1,), return_fallback=True
    )
    assert fallback
    assert list(strata) == ["all"]
    assert strata["all"]["count"] == 4
    assert strata["all"]["topk"][1] == 0.75

    with pytest.raises(ValueError):
        stratified_accuracy(examples, preds, "weight")


def make_split(n=120, q=8, fs="position-height", seed=42):
    samples, powers = make_samples(n=n, q=q, seed=seed)
    ds = Dataset(build_examples(samples, powers, fs), q=q, feature_set=fs)
    return split(ds, train_fraction=0.7, seed=1)


@pytest.fixture
def trained():
    train_set, test_set = make_split()
    arch = MlpArchitecture(input_dim=3, output_dim=8, hidden_dims=(16,))
    cfg = TrainConfig(epochs=3, batch_size=16)
    model, _ = train(MlpModel.initialize(arch, seed=0), train_set, cfg)
    return model, test_set


def test_evaluate(trained):
    model, test_set = trained
    report = evaluate(model, test_set, ks=(1, 2, 3, 5, 8), config_hash="abc")

    assert report.n_test == 36
    assert report.q == 8
    assert report.feature_set == "position-height"
    assert report.config_hash == "abc"
    assert report.overhead == {1: 1 / 8, 2: 2 / 8, 3: 3 / 8, 5: 5 / 8, 8: 1.0}

    accs = [report.topk[k] for k in (1, 2, 3, 5, 8)]
    assert accs == sorted(accs)
    assert report.topk[8] == 1.0

    assert set(report.strata) == {"height", "speed"}
    for strata in report.strata.values():
        assert sum(s["count"] for s in strata.values()) == 36
        weighted = sum(s["count"] * s["topk"][1] for s in strata.values()) / 36
        assert np.isclose(weighted, report.topk[1])

    with pytest.raises(DataError):
        evaluate(model, make_split(q=16)[1])


def test_report_io(tmpdir, trained):
    model, test_set = trained
    report = evaluate(model, test_set, dimensions=("height", "speed", "distance"))

    filename = str(tmpdir / "report.yml")
    report.write(filename)
    report2 = EvalReport.read(filename)
    assert report2.topk == report.topk
    assert report2.strata == report.strata
    assert report2.n_test == report.n_test

    with pytest.raises(OSError):
        report.write(filename)

    tbl = report.to_table()
    assert tbl.colnames == [
        "feature_set", "k", "dimension", "bin", "count", "accuracy", "overhead",
        "config_hash",
    ]
    # overall rows plus 3 dimensions x 3 bins per k
    assert len(tbl) == 4 * (1 + 9)

    csv_file = str(tmpdir / "report.csv")
    write_reports_csv([report, report2], csv_file, meta={"master_seed": 42})
    tbl2 = Table.read(csv_file, format="ascii.csv")
    assert len(tbl2) == 2 * len(tbl)


def test_report_version():
    with pytest.raises(DataError, match="version"):
        EvalReport.from_dict({"version": 2, "topk": {}, "overhead": {}, "strata": {}})


def test_compare_feature_sets():
    samples, powers = make_samples(n=60, q=8, visual_every=6)
    datasets = {
        fs: Dataset(build_examples(samples, powers, fs), q=8, feature_set=fs)
        for fs in ["position", "position-height-distance", "visual"]
    }
    cfg = TrainConfig(epochs=2, batch_size=16)

    with SerialPool() as pool:
        reports = compare_feature_sets(
            datasets, cfg, hidden_dims=(8,), ks=(1, 3), config_hash="xyz", pool=pool
        )

    assert list(reports) == ["position", "position-height-distance", "visual"]
    # visual features are missing for every sixth sample, so all feature sets
    # are restricted to the other 50
    assert all(r.n_test == 15 for r in reports.values())
    assert all(r.config_hash == "xyz" for r in reports.values())
    assert reports["visual"].feature_set == "visual"


def test_compare_mismatched_splits():
    a = make_split(fs="position")
    b = make_split(fs="position-height")
    b_other = split(
        Dataset(
            build_examples(*make_samples(n=120, q=8), "position-height"),
            q=8,
            feature_set="position-height",
        ),
        seed=99,
    )
    cfg = TrainConfig(epochs=1)

    reports = compare_feature_sets(
        {FeatureSet.POSITION: a, FeatureSet.POSITION_HEIGHT: b}, cfg, hidden_dims=(4,)
    )
    assert len(reports) == 2

    with pytest.raises(DataError, match="identical"):
        compare_feature_sets(
            {FeatureSet.POSITION: a, FeatureSet.POSITION_HEIGHT: b_other},
            cfg,
            hidden_dims=(4,),
        )


def test_learning_curve(trained):
    _, test_set = trained
    train_set, _ = make_split()
    cfg = TrainConfig(epochs=2, batch_size=16)

    curve = learning_curve(train_set, test_set, [20, 84, 50], cfg, hidden_dims=(8,), ks=(1, 2))
    assert curve.colnames == ["n_train", "top1", "top2"]
    assert list(curve["n_train"]) == [20, 50, 84]
    assert np.all(curve["top2"] >= curve["top1"])

    with pytest.raises(ValueError):
        learning_curve(train_set, test_set, [1000], cfg)
