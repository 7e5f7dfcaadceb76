import os
from pathlib import Path

import pytest

import evidencesql as es

FIXTURES = Path(os.environ.get("EVIDENCESQL_FIXTURE_DIR", Path(__file__).resolve().parents[2] / "fixtures"))
MANIFEST = FIXTURES / "manifest.json"
DEMO = FIXTURES / "demo" / "case_demo"


def test_render_is_canonical():
    assert es.render("select  avg(area) from cells where cell_type='neoplastic'") == (
        "SELECT AVG(area) FROM cells WHERE cell_type = 'neoplastic'"
    )


def test_levenshtein():
    assert es.levenshtein("are", "area") == 1
    assert es.levenshtein("kitten", "sitting") == 3


def test_validate_repairs_identifier():
    out = es.validate(MANIFEST, "SELECT avg(are) FROM cells")
    assert out["status"] == "validated"
    assert out["canonical_text"] == "SELECT AVG(area) FROM cells"
    assert out["repair_log"] == [{"kind": "identifier_fix", "before": "are", "after": "area", "edit_distance": 1}]


def test_validate_rejects_writes():
    out = es.validate(MANIFEST, "DELETE FROM cells")
    assert out["status"] == "rejected"
    assert out["stage"] == "sanitize"


def test_query_demo_case():
    table = es.query(MANIFEST, DEMO, "SELECT COUNT(*) AS n, AVG(area) AS mean_area FROM cells")
    assert table["columns"] == ["n", "mean_area"]
    assert table["rows"] == [[6, 400.0]]


def test_query_rejected_raises():
    with pytest.raises(es.EvidenceSqlError):
        es.query(MANIFEST, DEMO, "DROP TABLE cells")


def test_score_fit_bands():
    assert es.score_fit(0.45, 0.3, 0.6) == "Excellent"
    assert es.score_fit(0.66, 0.3, 0.6) == "Good"
    assert es.score_fit(1.2, 0.3, 0.6) == "NoFit"


def test_calibrate_confidence():
    conf = es.calibrate_confidence([{"A": "Excellent", "B": "Poor"}], ["A", "B"])
    assert conf == [("A", 0.8), ("B", 0.2)]


def test_fuse_worked_example():
    d = es.fuse([("A", 0.6), ("B", 0.4)], [("A", 0.2), ("B", 0.8)], 0.7)
    assert d["fused"] == [("A", 0.48), ("B", 0.52)]
    assert d["label"] == "B"
    assert d["review_flag"] is True


def test_ask_sql_only_report():
    report = es.ask(MANIFEST, DEMO, FIXTURES / "questions.json", FIXTURES / "ranges.json", mode="sql_only")
    assert report["case_id"] == "case_demo"
    assert report["decision"]["label"] == "tubular_adenocarcinoma"
    ids = {t["query_id"] for t in report["sql_trace"]}
    assert all(f["query_id"] in ids for f in report["hypothesis"]["findings"])
