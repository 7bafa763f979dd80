"""
BatchMonitor のテスト
"""

import os
import sys
import threading

import pytest

# プロジェクトルートをパスに追加
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from batch_monitor import BatchMonitor


class TestBatchMonitor:
    """試行結果の記録と集計"""

    @pytest.fixture
    def monitor(self):
        return BatchMonitor(threshold=0.5)

    def test_bounded_flag(self, monitor):
        start = monitor.start_measurement()
        inside = monitor.record_trial(start, 0, 1, max_deviation=0.49, energy_drift=1e-9)
        outside = monitor.record_trial(start, 1, 1, max_deviation=0.5, energy_drift=1e-9)
        faulted = monitor.record_trial(start, 2, 1, max_deviation=0.01, energy_drift=1e-9,
                                       fault_message="磁極接近")
        assert inside.bounded and not inside.fault
        assert not outside.bounded and not outside.fault
        assert faulted.fault and not faulted.bounded
        assert inside.duration_ms >= 0.0

    def test_summary_counts(self, monitor):
        start = monitor.start_measurement()
        for i, deviation in enumerate([0.1, 0.2, 0.9, 0.3]):
            monitor.record_trial(start, i, 7, max_deviation=deviation, energy_drift=1e-8 * (i + 1))
        monitor.record_trial(start, 4, 7, max_deviation=0.05, energy_drift=0.0, fault_message="非有限値")

        summary = monitor.get_summary()
        assert summary["n_trials"] == 5
        assert summary["bounded_count"] == 3
        assert summary["unbounded_count"] == 1
        assert summary["fault_count"] == 1
        assert summary["bounded_fraction"] == pytest.approx(0.6)
        assert summary["percentiles"]["max"] == 0.9
        assert summary["percentiles"]["p50"] == pytest.approx(0.2)
        # 有界な試行のみ平均する
        assert summary["mean_energy_drift"] == pytest.approx((1e-8 + 2e-8 + 4e-8) / 3)

    def test_empty_summary(self, monitor):
        summary = monitor.get_summary()
        assert summary["n_trials"] == 0
        assert summary["mean_energy_drift"] is None
        assert summary["percentiles"] == {}

    def test_records_sorted_by_index(self, monitor):
        start = monitor.start_measurement()

        def record(indices):
            for i in indices:
                monitor.record_trial(start, i, 0, max_deviation=0.1, energy_drift=0.0)

        threads = [threading.Thread(target=record, args=(range(k, 40, 4),)) for k in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert [r.trial_index for r in monitor.sorted_records()] == list(range(40))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
