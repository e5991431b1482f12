from __future__ import annotations

import json

import numpy as np
import pandas as pd
import pytest

from src.tilehmm.data_loader import parse_probability_track, parse_probe_table, parse_region_bed
from src.tilehmm.errors import ParseError
from src.tilehmm.model import Mode, ModelVariant, ProbeTrack
from src.tilehmm.regions import ProbabilityTrack, Region
from src.tilehmm.simulate import preset_config, sample_genome
from src.tilehmm.writers import (
    load_diagnostics,
    save_diagnostics,
    write_draw_trace,
    write_parameter_report,
    write_probability_track,
    write_probe_table,
    write_region_bed,
    write_truth,
)


def test_region_bed_row_format(tmp_path):
    region = Region("chr1", 100, 625, 0, 14, 2.8, 0.99)
    path = write_region_bed([region], tmp_path / "regions.bed")
    lines = path.read_text().splitlines()
    assert lines[0] == "#chrom\tstart\tend\trank\tscore\tpeak_probability\tn_probes"
    assert lines[1] == "chr1\t100\t625\t1\t2.8\t0.99\t15"
    df = parse_region_bed(path)
    assert df["rank"].tolist() == [1]


def test_probe_table_reads_back_exactly(tmp_path):
    track = ProbeTrack("chr1", [0, 35, 70], [[0.1 + 0.2, 1 / 3], [2.5, -1e-17], [3.0, 4.0]], [[0.7], [0.8], [0.9]])
    path = write_probe_table([track], tmp_path / "probes.tsv")
    assert path.read_text().splitlines()[0] == "chrom\tposition\tt1\tt2\tc1"
    (back,) = parse_probe_table(path)
    assert np.array_equal(back.treatment, track.treatment)
    assert np.array_equal(back.controls, track.controls)


def test_simulated_intensities_read_back_bit_for_bit(tmp_path):
    tracks = [d.track for d in sample_genome(preset_config("S1C1", n_probes=2000, seed=7), 2)]
    backs = parse_probe_table(write_probe_table(tracks, tmp_path / "probes.tsv"))
    for track, back in zip(tracks, backs):
        assert np.array_equal(back.positions, track.positions)
        assert np.array_equal(back.treatment, track.treatment)
        assert np.array_equal(back.controls, track.controls)


def test_probability_track_round_trip(tmp_path):
    track = ProbabilityTrack("chr2", [5, 40], [0.95, 0.1], [0.9, 0.0], [2.5, 0.3])
    (back,) = parse_probability_track(write_probability_track([track], tmp_path / "t.tsv"))
    np.testing.assert_allclose(back.p_joint, track.p_joint)
    assert back.chromosome_id == "chr2"


def test_truth_sidecars(tmp_path):
    datasets = sample_genome(preset_config("S1C1", n_probes=5000, seed=2), 2)
    bed, probes = write_truth(datasets, tmp_path)
    truth = parse_region_bed(bed)
    assert set(truth["chrom"]) <= {"chr1", "chr2"}
    df = pd.read_csv(probes, sep="\t")
    assert len(df) == 10000
    assert int(df["E"].sum()) == sum(int(d.true_E.sum()) for d in datasets)


def test_parameter_report_marks_pooled_effect_variances(tmp_path):
    params = preset_config("S1C1", n_probes=10).params
    path = write_parameter_report(
        {"ecm": (params, ModelVariant()), "mcmc": (params, ModelVariant(Mode.POOLED))}, tmp_path / "p.tsv"
    )
    df = pd.read_csv(path, sep="\t")
    assert list(df.columns[:3]) == ["fit", "p0", "p1"]
    assert df.loc[0, "eta2"] == pytest.approx(params.eta2)
    assert np.isnan(df.loc[1, "xi2"])
    assert df.loc[0, "expected_peak_length"] == pytest.approx(371.1, rel=1e-6)


def test_draw_trace_sweep_numbers(tmp_path):
    params = preset_config("S1", n_probes=10).params
    path = write_draw_trace([params] * 3, tmp_path / "draws.tsv", burn_in=500, thin=2)
    df = pd.read_csv(path, sep="\t")
    assert df["sweep"].tolist() == [500, 502, 504]


def test_diagnostics_json(tmp_path):
    path = save_diagnostics({"b": 1, "a": [1.5]}, tmp_path / "d.json")
    assert load_diagnostics(path) == {"a": [1.5], "b": 1}
    assert path.read_text().startswith('{\n  "a"')
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParseError):
        load_diagnostics(bad)
    bad.write_text(json.dumps([1, 2]))
    with pytest.raises(ParseError):
        load_diagnostics(bad)
