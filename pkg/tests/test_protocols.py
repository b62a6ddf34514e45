"""Protocol orchestration and the framework comparison."""

import pytest

from erpvis import (
    PipelineConfig,
    SynthConfig,
    TrainConfig,
    compare_frameworks,
    generate_synthetic_dataset,
    run_protocol,
    train_count_for_group,
)
from erpvis.errors import ConfigError, SplitError

from conftest import SMALL_CFG

FAST = PipelineConfig(
    averaging_n=2,
    hidden_size=8,
    num_layers=1,
    repr_dim=8,
    train=TrainConfig(epochs=3, batch_size=16, seed=0),
    seed=0,
)


class TestTrainCount:
    def test_six_gives_five(self):
        assert train_count_for_group(6) == 5

    def test_seventy_two_gives_sixty(self):
        assert train_count_for_group(72) == 60

    def test_tiny_group_rejected(self):
        with pytest.raises(SplitError):
            train_count_for_group(1)


class TestRunProtocol:
    def test_cross_subject_counts(self, small_dataset):
        result = run_protocol(small_dataset, "cross_subject", "category", FAST)
        assert len(result.reports) == 1
        report = result.reports[0]
        n_spaces = SMALL_CFG.n_subjects * SMALL_CFG.n_exemplars * (SMALL_CFG.trials_per_image // 2)
        assert report.n_train + report.n_test == n_spaces
        assert report.n_train == n_spaces * 5 // 6
        assert result.mean_accuracy == report.accuracy
        assert "cross_subject" in result.loss_curves

    def test_within_subject_one_report_per_subject(self, small_dataset):
        result = run_protocol(small_dataset, "within_subject", "category", FAST)
        assert len(result.reports) == SMALL_CFG.n_subjects
        subjects = [r.subject_id for r in result.reports]
        assert subjects == list(small_dataset.subjects)
        mean = sum(r.accuracy for r in result.reports) / len(result.reports)
        assert result.mean_accuracy == pytest.approx(mean)

    def test_single_subject_cross_equals_within(self, small_dataset):
        solo = small_dataset.for_subject(1)
        cross = run_protocol(solo, "cross_subject", "category", FAST)
        within = run_protocol(solo, "within_subject", "category", FAST)
        a, b = cross.reports[0], within.reports[0]
        assert a.accuracy == b.accuracy
        assert (a.confusion == b.confusion).all()

    def test_unknown_protocol(self, small_dataset):
        with pytest.raises(ConfigError):
            run_protocol(small_dataset, "mixed", "category", FAST)

    def test_deterministic_reports(self, small_dataset):
        a = run_protocol(small_dataset, "cross_subject", "category", FAST)
        b = run_protocol(small_dataset, "cross_subject", "category", FAST)
        assert a.reports[0].to_dict() == b.reports[0].to_dict()
        assert a.loss_curves == b.loss_curves

    def test_threads_do_not_change_results(self, small_dataset):
        serial = run_protocol(small_dataset, "within_subject", "category",
                              PipelineConfig(averaging_n=2, hidden_size=8, repr_dim=8,
                                             train=TrainConfig(epochs=2, batch_size=16, seed=0),
                                             seed=0, threads=1))
        parallel = run_protocol(small_dataset, "within_subject", "category",
                                PipelineConfig(averaging_n=2, hidden_size=8, repr_dim=8,
                                               train=TrainConfig(epochs=2, batch_size=16, seed=0),
                                               seed=0, threads=4))
        for a, b in zip(serial.reports, parallel.reports):
            assert a.accuracy == b.accuracy
            assert (a.confusion == b.confusion).all()
            assert a.subject_id == b.subject_id


@pytest.fixture(scope="module")
def comparison(small_dataset):
    return compare_frameworks(small_dataset, FAST, label_kinds=("category",))


class TestCompare:
    def test_rows_cover_both_frameworks(self, comparison):
        frameworks = {r["framework"] for r in comparison.rows}
        assert frameworks == {"eeg_lstm", "erp_lstm"}
        for row in comparison.rows:
            assert 0.0 <= row["accuracy"] <= 1.0

    def test_improvement_is_erp_minus_raw(self, comparison):
        raw = comparison.accuracy_of("cross_subject", "category", "eeg_lstm")
        erp = comparison.accuracy_of("cross_subject", "category", "erp_lstm")
        erp_row = [r for r in comparison.rows if r["framework"] == "erp_lstm"][0]
        assert erp_row["improvement"] == pytest.approx(erp - raw)
        raw_row = [r for r in comparison.rows if r["framework"] == "eeg_lstm"][0]
        assert raw_row["improvement"] is None

    def test_reference_constants_attached(self, comparison):
        ref = comparison.reference["cross_subject"]
        assert ref["category"]["erp_lstm"] == pytest.approx(0.6681)
        assert ref["category"]["eeg_lstm"] == pytest.approx(0.3672)
        assert ref["exemplar"]["kaneshiro"] == pytest.approx(0.1446)
        assert ref["exemplar"]["erp_lstm"] == pytest.approx(0.2708)

    def test_payload_serializes(self, comparison):
        import json

        payload = json.loads(comparison.to_json())
        assert payload["kind"] == "comparison"
        assert payload["rows"]
        assert payload["loss_curves"]
