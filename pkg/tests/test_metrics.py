import csv
import io

import pytest
from hypothesis import given, strategies as st

from hevx.metrics import (
    CSV_COLUMNS,
    MetricsError,
    RunLabel,
    TrialMetrics,
    emit_csv,
    format_summary,
    linearity_check,
    read_csv,
    summarize,
)

LABEL = RunLabel("bfv-add", "count", 50, "ethernet")


def trial(rtt=100.0, hom=40.0, i=0, **kw) -> TrialMetrics:
    base = dict(encrypt_ms=5.0, hom_op_ms=hom, decrypt_ms=4.0, rtt_ms=rtt, frag_ms=0.1,
                reasm_ms=0.4, fragments_total=95, bytes_sent=131896, bytes_received=131896, trial=i)
    base.update(kw)
    return TrialMetrics(**base)


def test_jitter_examples():
    assert summarize([trial(10), trial(10), trial(10)]).jitter_ms == 0
    s = summarize([trial(10), trial(20), trial(10)])
    assert s.jitter_ms == 10
    assert s.jitter_defined


def test_single_trial():
    s = summarize([trial(12.5)])
    assert s.stddev["rtt_ms"] == 0 and s.jitter_ms == 0
    assert not s.jitter_defined


def test_empty_input():
    with pytest.raises(MetricsError):
        summarize([])


def test_negative_durations_rejected():
    with pytest.raises(MetricsError):
        trial(rtt=-1.0)


def test_decomposition():
    t = trial(rtt=100.0, hom=37.5)
    assert t.comm_latency_ms == 62.5
    assert t.comm_latency_ms + t.hom_op_ms == t.rtt_ms
    assert t.total_comp_ms == 5.0 + 37.5 + 4.0


def test_mean_and_sample_std():
    s = summarize([trial(rtt=r, i=i) for i, r in enumerate((10.0, 20.0, 30.0))])
    assert s.mean["rtt_ms"] == 20.0
    assert s.stddev["rtt_ms"] == pytest.approx(10.0)


def test_csv_shape_and_round_trip(tmp_path):
    trials = [trial(rtt=100 + 3.14159 * i, hom=40 + i / 7, i=i) for i in range(20)]
    s = summarize(trials)
    path = tmp_path / "run.csv"
    emit_csv(s, trials, path, LABEL, {"seed": 7})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# hevx-run: ")
    rows = list(csv.reader(lines[1:]))
    assert len(rows) == 22
    assert tuple(rows[0]) == CSV_COLUMNS
    parsed = read_csv(path)
    assert parsed.metadata["seed"] == 7
    assert "stddev" in parsed.metadata
    for t, row in zip(trials, parsed.trial_rows):
        assert float(row["rtt_ms"]) == pytest.approx(t.rtt_ms, abs=5e-4)
        assert float(row["hom_op_ms"]) == pytest.approx(t.hom_op_ms, abs=5e-4)
        assert float(row["comm_latency_ms"]) == pytest.approx(t.comm_latency_ms, abs=5e-4)
        assert int(row["fragments_total"]) == t.fragments_total
        assert row["scheme"] == "bfv-add" and row["vehicles"] == "50"
    summary = parsed.summary_row
    want = sum(t.encrypt_ms + t.hom_op_ms + t.decrypt_ms for t in trials) / 20
    assert float(summary["total_comp_ms"]) == pytest.approx(want, abs=5e-4)
    assert float(summary["jitter_ms"]) == pytest.approx(3.14159, abs=5e-4)
    assert summary["trials"] == "20"
    assert parsed.trial_rows[0]["jitter_ms"] == ""


def test_csv_to_stream():
    buf = io.StringIO()
    emit_csv(summarize([trial()]), [trial()], buf, LABEL)
    assert buf.getvalue().count("\n") == 4


@given(st.lists(st.floats(0, 1e5), min_size=1, max_size=30))
def test_jitter_formula(rtts):
    s = summarize([trial(rtt=r, hom=0.0) for r in rtts])
    diffs = [abs(b - a) for a, b in zip(rtts, rtts[1:])]
    assert s.jitter_ms == pytest.approx(sum(diffs) / len(diffs) if diffs else 0.0)
    assert s.jitter_ms >= 0


def test_published_ratios():
    bfv = linearity_check({50: 189.72, 100: 0.5 * (189.72 + 680.98), 200: 680.98})
    assert bfv.ratio == pytest.approx(3.59, abs=0.005)
    ckks = linearity_check({50: 685.10, 200: 2813.11})
    assert ckks.ratio == pytest.approx(4.11, abs=0.005)


def test_perfectly_linear_input():
    rep = linearity_check({n: 3.0 * (n - 1) + 12.0 for n in (50, 100, 200)})
    assert rep.r_squared == pytest.approx(1.0)
    assert rep.slope == pytest.approx(3.0)
    assert rep.intercept == pytest.approx(12.0)


def test_linearity_from_summaries():
    runs = [(RunLabel("bfv-add", "count", n, "ethernet"), summarize([trial(hom=2.0 * n)])) for n in (50, 100, 200)]
    rep = linearity_check(runs)
    assert rep.ratio == pytest.approx(4.0)
    mixed = runs[:2] + [(RunLabel("bgv-add", "count", 200, "ethernet"), runs[2][1])]
    with pytest.raises(MetricsError):
        linearity_check(mixed)


def test_summary_table_text():
    text = format_summary(summarize([trial(), trial(rtt=110)]), LABEL)
    assert "homomorphic ops" in text and "jitter" in text
