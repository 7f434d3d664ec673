import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentrec.domain import Product, Recommendation
from agentrec.harness import (
    CSV_COLUMNS,
    DuplicateRecord,
    EmptyRows,
    EvalRecord,
    MetricRow,
    MissingOutput,
    ParseError,
    SchemaViolation,
    SystemScore,
    evaluate_agent,
    fmt,
    load_dataset,
    match_gold,
    match_names,
    overall_mean,
    render_report,
    run_eval,
    write_report,
)
from agentrec.metrics import RougeScore, f_beta


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    return path


def product_record(record_id="p1", gold=("shoe x",), k=2):
    return {
        "record_id": record_id,
        "agent": "product",
        "prompt": "best shoes",
        "gold_items": list(gold),
        "k": k,
    }


def market_record(record_id="m1", summary="running shoes are popular"):
    return {
        "record_id": record_id,
        "agent": "market",
        "prompt": "trends",
        "reference_summary": summary,
    }


def test_load_dataset_roundtrip(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [product_record(), market_record()])
    records = load_dataset(path)
    assert len(records) == 2
    assert records[0].agent == "product"
    assert records[1].reference_summary


def test_load_dataset_bad_json(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text(json.dumps(product_record()) + "\nnot json\n")
    with pytest.raises(ParseError) as err:
        load_dataset(path)
    assert err.value.line == 2


def test_load_dataset_missing_gold(tmp_path):
    bad = product_record()
    bad["gold_items"] = []
    path = write_jsonl(tmp_path / "d.jsonl", [bad])
    with pytest.raises(SchemaViolation) as err:
        load_dataset(path)
    assert "line 1" in str(err.value)


def test_load_dataset_duplicate_id(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [product_record("dup"), product_record("dup")])
    with pytest.raises(DuplicateRecord):
        load_dataset(path)


def test_match_names_normalization():
    judged, ranking = match_names(["Shoe X", "Shoe Y"], ["shoe x"])
    assert ranking == ["shoe x", "shoe y"]
    assert judged == {"shoe x": 1.0, "shoe y": 0.0}


def test_match_gold_over_recommendations():
    recs = [
        Recommendation(product=Product(name="Shoe X"), rank=1),
        Recommendation(product=Product(name="Shoe Y"), rank=2),
    ]
    judged, ranking = match_gold(recs, ["SHOE  x"])
    assert judged["shoe x"] == 1.0
    assert judged["shoe y"] == 0.0
    assert ranking == ["shoe x", "shoe y"]


def test_match_names_empty_recs():
    judged, ranking = match_names([], ["gold a", "gold b"])
    assert ranking == []
    assert judged == {"gold a": 1.0, "gold b": 1.0}


def test_match_names_duplicate_gold_spellings():
    judged, _ = match_names(["x"], ["Shoe A", "shoe  a"])
    assert sum(1 for v in judged.values() if v > 0) == 1


def test_evaluate_agent_ranking_means():
    records = [
        EvalRecord(record_id="r1", agent="product", prompt="p", gold_items=("a", "b"), k=2),
        EvalRecord(record_id="r2", agent="product", prompt="p", gold_items=("c",), k=1),
    ]
    outputs = {
        "r1": {"recommendations": ["a", "x"]},  # P@2=0.5 R=0.5 first=1
        "r2": {"recommendations": ["c"]},  # P@1=1.0 R=1.0 first=1
    }
    row = evaluate_agent(records, outputs, "modelX")
    assert row.p_at_k == pytest.approx(0.75)
    assert row.r_at_k == pytest.approx(0.75)
    assert row.f1 == pytest.approx(f_beta(0.75, 0.75))
    assert row.mrr == pytest.approx(1.0)


def test_evaluate_agent_f1_from_means():
    records = [
        EvalRecord(record_id="r1", agent="product", prompt="p", gold_items=("a", "b"), k=2),
        EvalRecord(record_id="r2", agent="product", prompt="p", gold_items=("c",), k=1),
    ]
    outputs = {
        "r1": {"recommendations": ["a", "x"]},  # P=0.5, R=0.5
        "r2": {"recommendations": ["c"]},  # P=1.0, R=1.0
    }
    row = evaluate_agent(records, outputs, "m")
    # F1 is computed from mean P and mean R, not the mean of per-record F1.
    assert row.f1 == pytest.approx(f_beta(row.p_at_k, row.r_at_k), abs=1e-9)


def test_evaluate_agent_market_identity():
    records = [
        EvalRecord(record_id="m1", agent="market", prompt="p", reference_summary="alpha beta gamma"),
    ]
    outputs = {"m1": {"summary": "alpha beta gamma"}}
    row = evaluate_agent(records, outputs, "m")
    assert row.rouge1 == RougeScore(1.0, 1.0, 1.0)
    assert row.rouge2 == RougeScore(1.0, 1.0, 1.0)
    assert row.rougeL == RougeScore(1.0, 1.0, 1.0)


def test_evaluate_agent_missing_output():
    records = [EvalRecord(record_id="r1", agent="product", prompt="p", gold_items=("a",), k=1)]
    with pytest.raises(MissingOutput):
        evaluate_agent(records, {}, "m")


def test_evaluate_agent_record_order_invariant():
    records = [
        EvalRecord(record_id=f"r{i}", agent="product", prompt="p", gold_items=("a", "b"), k=2)
        for i in range(4)
    ]
    outputs = {f"r{i}": {"recommendations": ["a"] if i % 2 else ["b", "a"]} for i in range(4)}
    forward = evaluate_agent(records, outputs, "m")
    backward = evaluate_agent(list(reversed(records)), outputs, "m")
    assert forward == backward


def ranking_row(model="m", agent="product", p=0.5, r=1.0):
    return MetricRow(
        model_id=model, agent=agent, p_at_k=p, r_at_k=r, f1=f_beta(p, r), mrr=0.5, ndcg=1.0
    )


def test_overall_mean():
    rows = [ranking_row(p=0.5), ranking_row(agent="multimodal", p=0.1)]
    score = overall_mean(rows)
    assert score.means["p_at_k"] == pytest.approx(0.3)
    assert score.means["ndcg"] == pytest.approx(1.0)


def test_overall_mean_single_row_identity():
    row = ranking_row()
    score = overall_mean([row])
    assert score.means["p_at_k"] == row.p_at_k
    assert score.means["mrr"] == row.mrr


def test_overall_mean_empty():
    with pytest.raises(EmptyRows):
        overall_mean([])


def test_overall_mean_bounded_by_inputs():
    rows = [ranking_row(p=0.2), ranking_row(p=0.9), ranking_row(p=0.4)]
    score = overall_mean(rows)
    for name, value in score.means.items():
        values = [row.metric_values()[name] for row in rows]
        assert min(values) <= value <= max(values)


def test_fmt_half_even():
    assert fmt(2 / 3) == "0.6667"
    assert fmt(0.5) == "0.5000"
    assert fmt(0.00005) == "0.0000"  # half-even rounds to even neighbor
    assert fmt(0.00015) == "0.0002"
    assert fmt(None) == ""


def test_render_report_shapes():
    rows = [ranking_row()]
    text, csv_text = render_report(rows, overall_mean(rows))
    lines = text.splitlines()
    assert lines[0] == "Ranking metrics"
    assert "0.6667" in text
    csv_lines = csv_text.splitlines()
    assert csv_lines[0] == ",".join(CSV_COLUMNS)
    assert len(csv_lines) == 2


def test_render_report_empty_rows_header_only():
    text, csv_text = render_report([], SystemScore(means={}))
    assert "Model" in text
    assert csv_text.splitlines() == [",".join(CSV_COLUMNS)]


def test_csv_and_text_numbers_agree():
    rows = [
        ranking_row(),
        MetricRow(
            model_id="m",
            agent="market",
            rouge1=RougeScore(0.41, 0.13, 0.22),
            rouge2=RougeScore(0.09, 0.04, 0.05),
            rougeL=RougeScore(0.19, 0.12, 0.13),
        ),
    ]
    text, csv_text = render_report(rows, overall_mean(rows))
    csv_numbers = set()
    for line in csv_text.splitlines()[1:]:
        csv_numbers.update(cell for cell in line.split(",") if cell and cell[0].isdigit())
    for number in csv_numbers:
        assert number in text


def test_metric_row_shape_validation():
    with pytest.raises(ValueError):
        MetricRow(model_id="m", agent="product", p_at_k=0.5)
    with pytest.raises(ValueError):
        MetricRow(model_id="m", agent="market", rouge1=RougeScore(1, 1, 1))


def test_run_eval_and_write_report(tmp_path):
    dataset = write_jsonl(
        tmp_path / "d.jsonl",
        [product_record(), market_record()],
    )
    outputs_path = tmp_path / "outputs.json"
    outputs_path.write_text(
        json.dumps(
            {
                "model_id": "llama3-70b-8192",
                "outputs": {
                    "p1": {"recommendations": ["Shoe X", "Shoe Q"]},
                    "m1": {"summary": "running shoes are popular"},
                },
            }
        )
    )
    rows, score = run_eval(dataset, outputs_path)
    assert {r.agent for r in rows} == {"product", "market"}
    paths = write_report(rows, score, tmp_path / "reports")
    assert paths["text"].exists() and paths["csv"].exists() and paths["json"].exists()
    saved = json.loads(paths["json"].read_text())
    assert {r["agent"] for r in saved["rows"]} == {"product", "market"}


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8))
def test_system_mean_within_bounds_property(p_values):
    rows = [ranking_row(model=f"m{i}", p=p) for i, p in enumerate(p_values)]
    score = overall_mean(rows)
    assert min(p_values) - 1e-12 <= score.means["p_at_k"] <= max(p_values) + 1e-12
