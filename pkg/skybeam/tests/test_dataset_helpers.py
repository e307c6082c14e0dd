# Third-party
import numpy as np
import pytest
import yaml

# Package
from ..dataset_helpers import (
    ingest_csv,
    read_column_mapping,
    samples_to_table,
    write_csv,
)
from ..exceptions import DataError
from ..oracle import PowerVector, optimal_beam
from .test_dataset import make_samples


def test_samples_to_table():
    samples, powers = make_samples(n=12, q=8, visual_every=4)
    tbl = samples_to_table(samples, powers, meta={"config_hash": "abc"})

    assert len(tbl) == 12
    assert tbl.colnames[:9] == ["time_s", "lat", "lon", "height_m", "distance_m",
                                "speed_mps", "u", "v", "size"]
    assert tbl.colnames[9:] == [f"p{j}" for j in range(8)]
    assert tbl["u"].mask.sum() == 3
    assert tbl.meta["comments"] == ["config_hash: abc"]

    tbl = samples_to_table(samples, powers, label_only=True)
    assert "p0" not in tbl.colnames
    assert list(tbl["beam_label"]) == [optimal_beam(pv).index for pv in powers]

    with pytest.raises(DataError):
        samples_to_table(samples, powers[:3])


def test_write_read_csv(tmpdir):
    samples, powers = make_samples(n=15, q=8, visual_every=5)
    filename = str(tmpdir / "dataset.csv")
    write_csv(filename, samples, powers, meta={"master_seed": 42})

    with open(filename) as f:
        text = f.read()
    assert text.startswith("# master_seed: 42")
    assert "time_s,lat,lon,height_m,distance_m,speed_mps,u,v,size,p0" in text

    samples2, powers2 = ingest_csv(filename, num_beams=8)
    assert len(samples2) == 15
    for s, s2 in zip(samples, samples2):
        assert np.allclose(s.gps, s2.gps, rtol=0, atol=1e-9)
        assert np.isclose(s.height_m, s2.height_m)
        assert s.has_visual == s2.has_visual
    for pv, pv2 in zip(powers, powers2):
        assert optimal_beam(pv) == optimal_beam(pv2)

    with pytest.raises(OSError):
        write_csv(filename, samples, powers)
    write_csv(filename, samples, powers, overwrite=True)

    with pytest.raises(DataError, match="expected 64"):
        ingest_csv(filename, num_beams=64)

    samples3, _ = ingest_csv(filename, num_beams=[4, 8])
    assert len(samples3) == 15
    with pytest.raises(DataError, match="expected 32 or 64"):
        ingest_csv(filename, num_beams=(64, 32))


def write_text(tmpdir, name, text):
    filename = str(tmpdir / name)
    with open(filename, "w") as f:
        f.write(text)
    return filename


HEADER = "time_s,lat,lon,height_m,distance_m,speed_mps,u,v,size,p0,p1,p2,p3\n"


def test_ingest_skips_missing_power(tmpdir):
    filename = write_text(
        tmpdir,
        "data.csv",
        HEADER
        + "0,33.4,-111.9,20,30,1,0.5,0.5,0.03,1,2,3,4\n"
        + "1,33.4,-111.9,20,30,1,,,,1,,3,4\n"
        + "2,33.4,-111.9,20,30,1,,,,4,2,3,1\n",
    )
    samples, powers = ingest_csv(filename)
    assert len(samples) == 2
    assert samples[0].has_visual
    assert not samples[1].has_visual
    assert [optimal_beam(pv).index for pv in powers] == [3, 0]


def test_ingest_schema_errors(tmpdir):
    with pytest.raises(FileNotFoundError):
        ingest_csv(str(tmpdir / "nope.csv"))

    filename = write_text(
        tmpdir, "short.csv", HEADER + "0,33.4,-111.9,20,30,1,,,,1,2,3\n"
    )
    with pytest.raises(DataError):
        ingest_csv(filename)

    filename = write_text(
        tmpdir, "missing.csv", "time_s,lat,lon,p0,p1\n0,33.4,-111.9,1,2\n"
    )
    with pytest.raises(DataError, match="height_m"):
        ingest_csv(filename)

    filename = write_text(
        tmpdir, "gap.csv", HEADER.replace("p2", "p5") + "0,33.4,-111.9,20,30,1,,,,1,2,3,4\n"
    )
    with pytest.raises(DataError, match="without gaps"):
        ingest_csv(filename)

    filename = write_text(
        tmpdir, "negative.csv", HEADER + "0,33.4,-111.9,20,30,1,,,,1,-2,3,4\n"
    )
    with pytest.raises(DataError, match="row 1"):
        ingest_csv(filename)

    filename = write_text(
        tmpdir,
        "nopower.csv",
        "time_s,lat,lon,height_m,distance_m,speed_mps\n0,33.4,-111.9,20,30,1\n",
    )
    with pytest.raises(DataError, match="neither"):
        ingest_csv(filename)


def test_ingest_label_only(tmpdir):
    filename = write_text(
        tmpdir,
        "labels.csv",
        "lat,lon,height_m,distance_m,speed_mps,beam_label\n"
        "33.4,-111.9,20,30,1,7\n"
        "33.4,-111.9,25,35,2,31\n",
    )
    samples, powers = ingest_csv(filename, label_beams=32)
    assert len(powers[0]) == 32
    assert [optimal_beam(pv).index for pv in powers] == [7, 31]
    assert [s.time for s in samples] == [0.0, 1.0]

    with pytest.raises(DataError, match="row 2"):
        ingest_csv(filename, label_beams=16)


def test_column_mapping(tmpdir):
    filename = write_text(
        tmpdir,
        "external.csv",
        "abs_index,unit2_lat,unit2_lon,unit2_height,unit2_distance,unit2_speed,unit1_beam_index\n"
        "1,33.42,-111.93,20,30,1,1\n"
        "2,33.43,-111.94,25,35,2,64\n",
    )
    mapping = {
        "columns": {
            "time_s": "abs_index",
            "lat": "unit2_lat",
            "lon": "unit2_lon",
            "height_m": "unit2_height",
            "distance_m": "unit2_distance",
            "speed_mps": "unit2_speed",
        },
        "beam_label": "unit1_beam_index",
        "label_index_base": 1,
    }
    mapping_file = str(tmpdir / "mapping.yml")
    with open(mapping_file, "w") as f:
        yaml.safe_dump(mapping, f)

    samples, powers = ingest_csv(filename, mapping=mapping_file, label_beams=64)
    assert [optimal_beam(pv).index for pv in powers] == [0, 63]
    assert samples[1].gps[0] == 33.43
    assert samples[1].time == 2

    bad = dict(mapping, columns=dict(mapping["columns"], lat="latitude"))
    with pytest.raises(DataError, match="latitude"):
        ingest_csv(filename, mapping=bad)


def test_column_mapping_power_prefix(tmpdir):
    filename = write_text(
        tmpdir,
        "external.csv",
        "lat,lon,h,d,v,pow_1,pow_2,pow_3\n33.4,-111.9,20,30,1,0.1,0.5,0.2\n",
    )
    mapping = {
        "columns": {"height_m": "h", "distance_m": "d", "speed_mps": "v",
                    "lat": "lat", "lon": "lon"},
        "power_prefix": "pow_",
        "power_index_base": 1,
    }
    _, powers = ingest_csv(filename, mapping=mapping)
    assert powers[0] == PowerVector([0.1, 0.5, 0.2])


def test_read_column_mapping_invalid(tmpdir):
    filename = str(tmpdir / "mapping.yml")
    with open(filename, "w") as f:
        yaml.safe_dump({"columns": {"altitude": "alt"}}, f)
    with pytest.raises(DataError, match="altitude"):
        read_column_mapping(filename)

    with open(filename, "w") as f:
        yaml.safe_dump({"columns": {}, "delimiter": ";"}, f)
    with pytest.raises(DataError, match="delimiter"):
        read_column_mapping(filename)
