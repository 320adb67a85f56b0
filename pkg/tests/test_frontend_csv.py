"""Round-trip: CSVs exported by the browser task runner load cleanly.

The frontend's vitest suite writes session CSVs to frontend/test-output/
(run ``npm test`` there first); these tests skip when the artifacts are
absent so the Python suite stays self-contained.
"""

from pathlib import Path

import pytest

from geombench.pipeline import load_human_data

ARTIFACTS = Path(__file__).resolve().parent.parent / "frontend" / "test-output"


@pytest.mark.skipif(
    not (ARTIFACTS / "dmts_session.csv").exists(),
    reason="frontend artifacts not built (run npm test in frontend/)",
)
def test_dmts_session_csv_loads():
    ds = load_human_data(ARTIFACTS / "dmts_session.csv", "dmts")
    assert ds.kind == "dmts"
    assert len(ds.rows) == 20
    for row in ds.rows:
        assert row.encoding_rt_ms > 0
        assert row.choice_rt_ms > 0
        assert len(row.distractors) == 5
    assert "1 subjects" in ds.summary()


@pytest.mark.skipif(
    not (ARTIFACTS / "oddball_rates.csv").exists(),
    reason="frontend artifacts not built (run npm test in frontend/)",
)
def test_oddball_rates_csv_loads():
    ds = load_human_data(ARTIFACTS / "oddball_rates.csv", "oddball")
    assert ds.kind == "oddball"
    assert all(r.group == "human" for r in ds.rows)
    assert all(0.0 <= r.error_rate <= 1.0 for r in ds.rows)
