import json

import numpy as np
import pytest

from warpkit.core import (
    LabeledDataset,
    LabeledSeries,
    crop_dataset,
    crop_series,
    load_dataset,
    read_series_csv,
    validate_series,
    write_series_csv,
)
from warpkit.exceptions import (
    DimensionMismatch,
    EmptyDataset,
    EmptySeries,
    ManifestParse,
    MissingFile,
    NonFinite,
    RaggedRows,
)


class TestValidateSeries:
    def test_minimal_valid(self):
        s = validate_series([[0.0]])
        assert s.n_frames == 1 and s.n_channels == 1

    def test_nan_reports_first_offending_index(self):
        with pytest.raises(NonFinite) as exc:
            validate_series([[1.0, 2.0], [3.0, np.nan]])
        assert exc.value.index == (1, 1)

    def test_inf_rejected(self):
        with pytest.raises(NonFinite):
            validate_series(np.array([[np.inf]]))

    def test_empty(self):
        with pytest.raises(EmptySeries):
            validate_series([])
        with pytest.raises(EmptySeries):
            validate_series(np.empty((0, 3)))
        with pytest.raises(EmptySeries):
            validate_series(np.empty((3, 0)))

    def test_ragged(self):
        with pytest.raises(RaggedRows):
            validate_series([[1.0, 2.0], [3.0]])

    def test_values_are_read_only(self):
        s = validate_series([[1.0, 2.0]])
        with pytest.raises(ValueError):
            s.values[0, 0] = 9.0

    def test_one_dimensional_input_becomes_single_channel(self):
        s = validate_series(np.arange(4.0))
        assert s.values.shape == (4, 1)


class TestCropSeries:
    def test_prefix(self, rng):
        s = validate_series(rng.normal(size=(10, 2)))
        c = crop_series(s, 6)
        assert c.n_frames == 6
        np.testing.assert_array_equal(c.values, s.values[:6])

    def test_longer_budget_is_identity(self, rng):
        s = validate_series(rng.normal(size=(4, 2)))
        c = crop_series(s, 16)
        np.testing.assert_array_equal(c.values, s.values)

    def test_exact_length(self, rng):
        s = validate_series(rng.normal(size=(4, 2)))
        np.testing.assert_array_equal(crop_series(s, 4).values, s.values)

    def test_input_unmodified(self, rng):
        s = validate_series(rng.normal(size=(8, 3)))
        before = s.values.copy()
        crop_series(s, 2)
        np.testing.assert_array_equal(s.values, before)

    def test_composition_rule(self, rng):
        s = validate_series(rng.normal(size=(9, 2)))
        for a in (1, 3, 9, 12):
            for b in (1, 4, 10):
                left = crop_series(crop_series(s, a), b)
                right = crop_series(s, min(a, b))
                np.testing.assert_array_equal(left.values, right.values)

    def test_bad_budget(self, rng):
        s = validate_series(rng.normal(size=(3, 1)))
        with pytest.raises(ValueError):
            crop_series(s, 0)


class TestLabeledTypes:
    def test_empty_label_rejected(self, rng):
        s = validate_series(rng.normal(size=(2, 1)))
        with pytest.raises(ValueError):
            LabeledSeries(s, "", "subj")
        with pytest.raises(ValueError):
            LabeledSeries(s, "lab", "")

    def test_dataset_collects_distinct_classes_and_subjects(self, rng):
        items = [
            LabeledSeries(validate_series(rng.normal(size=(3, 2))), lab, subj)
            for lab, subj in [("b", "s2"), ("a", "s1"), ("b", "s1")]
        ]
        ds = LabeledDataset(tuple(items))
        assert ds.classes == ("a", "b")
        assert ds.subjects == ("s1", "s2")

    def test_dimension_mismatch(self, rng):
        items = (
            LabeledSeries(validate_series(rng.normal(size=(3, 5))), "a", "s1"),
            LabeledSeries(validate_series(rng.normal(size=(3, 6))), "a", "s2"),
        )
        with pytest.raises(DimensionMismatch):
            LabeledDataset(items)

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            LabeledDataset(())

    def test_crop_dataset(self, rng):
        ds = LabeledDataset(tuple(
            LabeledSeries(validate_series(rng.normal(size=(t, 2))), "a", f"s{t}")
            for t in (4, 7)
        ))
        cropped = crop_dataset(ds, 5)
        assert [it.series.n_frames for it in cropped.items] == [4, 5]


def _write_manifest(tmp_path, entries, frame_rate=None):
    for name, arr in entries:
        write_series_csv(tmp_path / name, np.asarray(arr, dtype=float))
    manifest = [
        {"path": name, "label": lab, "subject": subj}
        for (name, _), (lab, subj) in zip(entries, [("a", "s1"), ("b", "s2"), ("a", "s3")])
    ][: len(entries)]
    doc = manifest if frame_rate is None else {"frame_rate": frame_rate, "items": manifest}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


class TestLoadDataset:
    def test_happy_path(self, tmp_path, rng):
        entries = [(f"s{k}.csv", rng.normal(size=(3, 2))) for k in range(3)]
        path = _write_manifest(tmp_path, entries)
        ds = load_dataset(path)
        assert len(ds) == 3
        assert ds.items[0].label == "a" and ds.items[1].subject == "s2"

    def test_frame_rate_object_form(self, tmp_path, rng):
        entries = [(f"s{k}.csv", rng.normal(size=(3, 2))) for k in range(2)]
        path = _write_manifest(tmp_path, entries, frame_rate=30.0)
        ds = load_dataset(path)
        assert ds.items[0].series.frame_rate == 30.0

    def test_missing_file_echoes_path(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text(json.dumps([{"path": "absent.csv", "label": "a", "subject": "s"}]))
        with pytest.raises(MissingFile) as exc:
            load_dataset(path)
        assert "absent.csv" in str(exc.value)

    def test_dimension_mismatch(self, tmp_path, rng):
        entries = [("s0.csv", rng.normal(size=(3, 5))), ("s1.csv", rng.normal(size=(3, 6)))]
        path = _write_manifest(tmp_path, entries)
        with pytest.raises(DimensionMismatch):
            load_dataset(path)

    def test_manifest_parse_error(self, tmp_path):
        path = tmp_path / "manifest.json"
        path.write_text("{not json")
        with pytest.raises(ManifestParse):
            load_dataset(path)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(MissingFile):
            load_dataset(tmp_path / "nope.json")

    def test_deterministic(self, tmp_path, rng):
        entries = [(f"s{k}.csv", rng.normal(size=(4, 2))) for k in range(3)]
        path = _write_manifest(tmp_path, entries)
        a = load_dataset(path)
        b = load_dataset(path)
        assert [it.label for it in a.items] == [it.label for it in b.items]
        for x, y in zip(a.items, b.items):
            np.testing.assert_array_equal(x.series.values, y.series.values)


class TestSeriesCsv:
    def test_roundtrip_exact(self, tmp_path, rng):
        arr = rng.normal(size=(5, 3))
        write_series_csv(tmp_path / "x.csv", arr)
        back = read_series_csv(tmp_path / "x.csv")
        np.testing.assert_array_equal(back, arr)

    def test_ragged_file(self, tmp_path):
        (tmp_path / "bad.csv").write_text("1,2\n3\n")
        with pytest.raises(RaggedRows):
            read_series_csv(tmp_path / "bad.csv")
