import csv
import math

import numpy as np
import pytest

from lamai.errors import ConfigurationError
from lamai.harness import (
    CSV_COLUMNS,
    CampaignConfig,
    SerRecord,
    compare_to_se,
    emit_results,
    read_json_results,
    run_campaign,
)


def _small(**kw):
    base = dict(mr=32, mt=4, snr_start=0.0, snr_stop=8.0, snr_step=4.0, evm_db=-10.0,
                max_trials=400, min_errors=60, chunk=50, seed=3)
    base.update(kw)
    return CampaignConfig(**base)


@pytest.fixture(scope="module")
def records():
    return run_campaign(_small())


class TestConfig:
    def test_snr_points_inclusive(self):
        assert _small().snr_points == [0.0, 4.0, 8.0]
        assert CampaignConfig(snr_start=0, snr_stop=1, snr_step=0.3).snr_points == [0.0, 0.3, 0.6, 0.9]

    @pytest.mark.parametrize("kw", [dict(max_trials=0), dict(snr_step=0), dict(detectors=()),
                                    dict(detectors=("mmse",)), dict(tmax=0)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            _small(**kw)

    def test_dict_round_trip(self):
        cfg = _small(evm_db=-math.inf)
        assert CampaignConfig.from_dict(cfg.to_dict()) == cfg


class TestRecord:
    def test_ser_and_stderr(self):
        r = SerRecord("lama-i", 0.0, -10.0, trials=100, errors=40, mt=8)
        assert r.ser == 0.05
        assert r.stderr == pytest.approx(math.sqrt(0.05 * 0.95 / 800))

    def test_range_checked(self):
        with pytest.raises(ConfigurationError):
            SerRecord("lama", 0.0, -10.0, trials=1, errors=9, mt=8)


class TestCampaign:
    def test_shape(self, records):
        assert len(records) == 3 * 3
        assert [r.detector for r in records[:3]] == ["lama-i", "lama", "lama-whitened"]

    def test_invariants(self, records):
        for r in records:
            assert 0 <= r.ser <= 1
            assert r.errors <= r.trials * r.mt
            assert r.trials % 50 == 0 or r.trials == 400
            assert r.errors >= 60 or r.trials == 400

    def test_monotone_in_snr(self, records):
        for d in ("lama-i", "lama", "lama-whitened"):
            rs = [r for r in records if r.detector == d]
            for a, b in zip(rs, rs[1:]):
                assert b.ser <= a.ser + 3 * math.hypot(a.stderr, b.stderr)

    def test_paired_streams(self):
        # without impairment LAMA-I and LAMA are the same algorithm on the same draws
        recs = run_campaign(_small(evm_db=-math.inf, detectors=("lama-i", "lama"), min_errors=10**6, max_trials=200))
        for a, b in zip(recs[::2], recs[1::2]):
            assert (a.trials, a.errors) == (b.trials, b.errors)

    def test_worker_count_invariant(self, records):
        other = run_campaign(_small(), workers=3)
        assert [(r.trials, r.errors) for r in other] == [(r.trials, r.errors) for r in records]

    def test_seed_changes_counts(self, records):
        other = run_campaign(_small(seed=4))
        assert [r.errors for r in other] != [r.errors for r in records]

    def test_divergence_flag(self, monkeypatch):
        from lamai import harness

        def broken(y, h, cfg, tmax, **kw):
            from lamai.detector import lama_i_detect
            res = lama_i_detect(y, h, cfg, tmax=tmax, **kw)
            res.diverged[: max(1, len(res.diverged) // 10)] = True
            return res

        monkeypatch.setitem(harness.DETECTORS, "lama-i", broken)
        recs = run_campaign(_small(detectors=("lama-i",), max_trials=100))
        assert all(r.flagged and r.diverged > 0 for r in recs)

    def test_bad_workers(self):
        with pytest.raises(ConfigurationError):
            run_campaign(_small(), workers=0)


class TestEmit:
    def test_csv_columns_and_rows(self, records, tmp_path):
        path = emit_results(records, tmp_path / "ser.csv")
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) - 1 == 3 * 3
        assert int(rows[1][4]) == records[0].errors
        assert float(rows[1][5]) == records[0].ser

    def test_empty_csv(self, tmp_path):
        path = emit_results([], tmp_path / "empty.csv")
        assert path.read_text().strip() == ",".join(CSV_COLUMNS)

    def test_json_round_trip(self, records, tmp_path):
        cfg = _small()
        path = emit_results(records, tmp_path / "ser.json", cfg=cfg)
        back, back_cfg = read_json_results(path)
        assert back == records
        assert back_cfg == cfg

    def test_bad_format(self, tmp_path):
        with pytest.raises(ConfigurationError):
            emit_results([], tmp_path / "x.parquet")

    def test_unwritable(self, tmp_path):
        target = tmp_path / "file"
        target.write_text("")
        with pytest.raises(OSError):
            emit_results([], target / "ser.csv")


class TestCompare:
    def test_rows(self, records):
        rows = compare_to_se(_small(), records, samples=100_000)
        assert len(rows) == len(records)
        for row, r in zip(rows, records):
            assert row["ser"] == r.ser
            assert row["rel_dev"] == pytest.approx((r.ser - row["predicted_ser"]) / row["predicted_ser"])

    def test_single_user_matches_scalar_channel(self):
        # one user: decoupled channel up to channel-norm fluctuation
        cfg = CampaignConfig(mr=256, mt=1, snr_start=-18.0, snr_stop=-18.0, snr_step=1.0, evm_db=-math.inf,
                             detectors=("lama-i",), max_trials=20_000, min_errors=10**6, chunk=2000, tmax=5)
        recs = run_campaign(cfg)
        row = compare_to_se(cfg, recs, samples=100_000)[0]
        assert abs(row["ser"] - row["predicted_ser"]) < 3 * recs[0].stderr

    def test_unimpaired_prediction(self, records):
        cfg = _small(evm_db=-math.inf)
        recs = [SerRecord("lama", 4.0, -math.inf, 10, 1, 4)]
        from lamai.state_evolution import PsiSpec, predicted_ser
        sys = cfg.system(4.0)
        expected = predicted_ser(PsiSpec(sys.constellation, 0.0, samples=100_000, seed=cfg.seed), sys.beta, sys.n0)
        assert compare_to_se(cfg, recs, samples=100_000)[0]["predicted_ser"] == pytest.approx(expected)
