import json

import numpy as np
import pytest

from schedperf.dataset import (
    DatasetHeader,
    SampleRecord,
    best_runtime_by_pipeline,
    generate_dataset,
    group_by_pipeline,
    read_dataset,
    sha256_file,
    split_samples,
    write_dataset,
)
from schedperf.errors import DataFormatError
from schedperf.features import DEPENDENT_WIDTH, INVARIANT_WIDTH
from schedperf.graph import PipelineGraph


@pytest.fixture(scope="module")
def small_file(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("ds") / "ds.jsonl")
    summary = generate_dataset(path, num_pipelines=10, schedules_per_pipeline=5, seed=7)
    return path, summary


class TestGeneration:
    def test_sample_count_and_split_arithmetic(self, small_file):
        path, summary = small_file
        assert summary.num_samples == 50
        assert summary.num_train == 45
        assert summary.num_eval == 5

    def test_split_never_straddles_a_pipeline(self, small_file):
        path, _ = small_file
        _, records = read_dataset(path)
        by_pipe = group_by_pipeline(records)
        for recs in by_pipe.values():
            assert len({r.split_tag for r in recs}) == 1

    def test_regeneration_is_byte_identical(self, small_file, tmp_path):
        path, summary = small_file
        other = str(tmp_path / "again.jsonl")
        again = generate_dataset(other, num_pipelines=10, schedules_per_pipeline=5, seed=7)
        assert again.sha256 == summary.sha256
        assert open(other, "rb").read() == open(path, "rb").read()

    def test_different_seed_changes_bytes(self, small_file, tmp_path):
        path, summary = small_file
        other = str(tmp_path / "seeded.jsonl")
        assert generate_dataset(other, 10, 5, seed=8).sha256 != summary.sha256

    def test_invariant_features_shared_within_pipeline(self, small_file):
        path, _ = small_file
        _, records = read_dataset(path)
        for recs in group_by_pipeline(records).values():
            for other in recs[1:]:
                np.testing.assert_array_equal(recs[0].invariant, other.invariant)

    def test_measurement_count_matches_header(self, small_file):
        path, _ = small_file
        header, records = read_dataset(path)
        assert all(len(r.measurements) == header.n_measurements for r in records)


class TestRoundTrip:
    def test_read_back_equals_written(self, small_file, tmp_path):
        path, _ = small_file
        header, records = read_dataset(path)
        copy_path = str(tmp_path / "copy.jsonl")
        write_dataset(copy_path, header, records)
        assert sha256_file(copy_path) == sha256_file(path)
        header2, records2 = read_dataset(copy_path)
        assert header2 == header
        for a, b in zip(records, records2):
            assert a.schedule_id == b.schedule_id
            np.testing.assert_array_equal(a.invariant, b.invariant)
            np.testing.assert_array_equal(a.dependent, b.dependent)
            np.testing.assert_array_equal(a.measurements, b.measurements)

    def test_best_runtime_lookup(self, small_file):
        path, _ = small_file
        _, records = read_dataset(path)
        best = best_runtime_by_pipeline(records)
        for pid, recs in group_by_pipeline(records).items():
            assert best[pid] == min(r.mean_runtime for r in recs)
            assert all(best[pid] <= r.mean_runtime for r in recs)


class TestFormatErrors:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(DataFormatError):
            read_dataset(str(path))

    def test_missing_header(self, tmp_path):
        path = tmp_path / "nohdr.jsonl"
        path.write_text('{"kind":"sample"}\n')
        with pytest.raises(DataFormatError, match="header"):
            read_dataset(str(path))

    def test_unsupported_version(self, tmp_path, small_file):
        src, _ = small_file
        lines = open(src).read().splitlines()
        head = json.loads(lines[0])
        head["format_version"] = "99"
        path = tmp_path / "badver.jsonl"
        path.write_text("\n".join([json.dumps(head)] + lines[1:]) + "\n")
        with pytest.raises(DataFormatError, match="99"):
            read_dataset(str(path))

    def test_wrong_widths_rejected(self, tmp_path, small_file):
        src, _ = small_file
        lines = open(src).read().splitlines()
        head = json.loads(lines[0])
        head["feature_widths"] = [16, 8]
        path = tmp_path / "badw.jsonl"
        path.write_text("\n".join([json.dumps(head)] + lines[1:]) + "\n")
        with pytest.raises(DataFormatError, match="widths"):
            read_dataset(str(path))

    def test_bad_record_reports_line_number(self, tmp_path, small_file):
        src, _ = small_file
        lines = open(src).read().splitlines()
        broken = json.loads(lines[3])
        broken["measurements"] = [1.0, -1.0]
        lines[3] = json.dumps(broken)
        path = tmp_path / "badrec.jsonl"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataFormatError, match="record 4"):
            read_dataset(str(path))

    def test_record_validation(self):
        g = PipelineGraph(num_nodes=1, edges=())
        rec = SampleRecord(
            pipeline_id="p", schedule_id="s", graph=g,
            invariant=np.zeros((1, INVARIANT_WIDTH)),
            dependent=np.zeros((1, DEPENDENT_WIDTH)),
            measurements=np.array([]), split_tag="train",
        )
        with pytest.raises(DataFormatError):
            rec.validate()

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataFormatError, match="cannot read"):
            read_dataset(str(tmp_path / "absent.jsonl"))


class TestSplitHelpers:
    def test_split_samples_partitions(self, small_file):
        path, _ = small_file
        _, records = read_dataset(path)
        train = split_samples(records, "train")
        ev = split_samples(records, "eval")
        assert len(train) + len(ev) == len(records)
        assert {r.pipeline_id for r in train}.isdisjoint({r.pipeline_id for r in ev})
