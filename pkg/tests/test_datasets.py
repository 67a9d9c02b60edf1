import pytest

from tinyfit import datasets
from tinyfit.errors import DatasetNotFound


class TestWisdm:
    def test_paper_inventory(self, wisdm_raw_root):
        recs = datasets.load_wisdm(wisdm_raw_root)
        assert len({r.subject_id for r in recs}) == 51
        assert len({r.class_label for r in recs}) == 18

    def test_six_channels_twenty_hz(self, wisdm_raw_root):
        recs = datasets.load_wisdm(wisdm_raw_root)
        assert all(r.rate_hz == 20.0 for r in recs)
        assert all(r.samples.shape[1] == 7 for r in recs)

    def test_deterministic(self, wisdm_raw_root):
        a = datasets.load_wisdm(wisdm_raw_root)
        b = datasets.load_wisdm(wisdm_raw_root)
        assert [(r.subject_id, r.class_label, len(r)) for r in a] == [
            (r.subject_id, r.class_label, len(r)) for r in b
        ]

    def test_malformed_rows_skipped(self, wisdm_raw_root, caplog):
        # the fixture plants unparseable rows; they must not become samples
        import logging

        with caplog.at_level(logging.INFO, logger="tinyfit.datasets"):
            datasets.load_wisdm(wisdm_raw_root)
        assert any("skipped" in rec.message for rec in caplog.records)

    def test_missing_dir(self, tmp_path):
        with pytest.raises(DatasetNotFound):
            datasets.load_wisdm(tmp_path / "nope")


class TestPamap2:
    def test_paper_inventory(self, pamap2_raw_root):
        recs = datasets.load_pamap2(pamap2_raw_root)
        assert len({r.subject_id for r in recs}) == 9
        assert len({r.class_label for r in recs}) == 12

    def test_transient_class_dropped(self, pamap2_raw_root):
        recs = datasets.load_pamap2(pamap2_raw_root)
        assert all(r.class_label in datasets.PAMAP2_ACTIVITIES.values() for r in recs)

    def test_native_rate(self, pamap2_raw_root):
        recs = datasets.load_pamap2(pamap2_raw_root)
        assert all(r.rate_hz == 100.0 for r in recs)

    def test_missing_dir(self, tmp_path):
        with pytest.raises(DatasetNotFound):
            datasets.load_pamap2(tmp_path / "nope")
