"""Offline evaluation harness: dataset loading, gold matching, per-agent
metric rows, the overall system mean, and report rendering.

The dataset is JSON-Lines, one record per line:

    {"record_id": "p01", "agent": "product", "prompt": "...",
     "gold_items": ["name", ...], "k": 5}
    {"record_id": "m01", "agent": "market", "prompt": "...",
     "reference_summary": "..."}

Recorded agent outputs are a JSON document:

    {"model_id": "llama3-70b-8192",
     "outputs": {"p01": {"recommendations": ["name", ...]},
                 "m01": {"summary": "..."}}}

Evaluation runs entirely from such recordings; no model access is needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .domain import Recommendation, normalize_name
from .metrics import (
    RougeScore,
    f_beta,
    mean_reciprocal_rank,
    ndcg_at_k,
    precision_at_k,
    recall_at_k,
    rouge_l,
    rouge_n,
)

AGENTS = ("product", "multimodal", "market")
RANKING_AGENTS = ("product", "multimodal")


class HarnessError(Exception):
    pass


class ParseError(HarnessError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaViolation(HarnessError):
    def __init__(self, line: Optional[int], message: str):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class DuplicateRecord(HarnessError):
    pass


class MissingOutput(HarnessError):
    pass


class EmptyRows(HarnessError):
    pass


@dataclass(frozen=True)
class EvalRecord:
    record_id: str
    agent: str
    prompt: str
    gold_items: tuple[str, ...] = ()
    reference_summary: Optional[str] = None
    image_path: Optional[str] = None
    k: int = 1


@dataclass(frozen=True)
class MetricRow:
    model_id: str
    agent: str
    p_at_k: Optional[float] = None
    r_at_k: Optional[float] = None
    f1: Optional[float] = None
    mrr: Optional[float] = None
    ndcg: Optional[float] = None
    rouge1: Optional[RougeScore] = None
    rouge2: Optional[RougeScore] = None
    rougeL: Optional[RougeScore] = None

    def __post_init__(self):
        if self.agent in RANKING_AGENTS:
            if None in (self.p_at_k, self.r_at_k, self.f1, self.mrr, self.ndcg):
                raise ValueError(f"{self.agent} row needs all ranking metrics")
            if self.rouge1 or self.rouge2 or self.rougeL:
                raise ValueError("rouge scores belong to market rows only")
        elif self.agent == "market":
            if None in (self.rouge1, self.rouge2, self.rougeL):
                raise ValueError("market row needs rouge1/rouge2/rougeL")
        else:
            raise ValueError(f"bad agent {self.agent!r}")

    def metric_values(self) -> dict[str, float]:
        """Flat metric name -> value map (the unit for system means)."""
        if self.agent in RANKING_AGENTS:
            return {
                "p_at_k": self.p_at_k,
                "r_at_k": self.r_at_k,
                "f1": self.f1,
                "mrr": self.mrr,
                "ndcg": self.ndcg,
            }
        out = {}
        for label, score in (("rouge1", self.rouge1), ("rouge2", self.rouge2), ("rougeL", self.rougeL)):
            out[f"{label}_precision"] = score.precision
            out[f"{label}_recall"] = score.recall
            out[f"{label}_f"] = score.f
        return out

    def to_dict(self) -> dict:
        def rouge(s: Optional[RougeScore]):
            return None if s is None else {"precision": s.precision, "recall": s.recall, "f": s.f}

        return {
            "model_id": self.model_id,
            "agent": self.agent,
            "p_at_k": self.p_at_k,
            "r_at_k": self.r_at_k,
            "f1": self.f1,
            "mrr": self.mrr,
            "ndcg": self.ndcg,
            "rouge1": rouge(self.rouge1),
            "rouge2": rouge(self.rouge2),
            "rougeL": rouge(self.rougeL),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricRow":
        def rouge(v):
            return None if v is None else RougeScore(v["precision"], v["recall"], v["f"])

        return cls(
            model_id=d["model_id"],
            agent=d["agent"],
            p_at_k=d.get("p_at_k"),
            r_at_k=d.get("r_at_k"),
            f1=d.get("f1"),
            mrr=d.get("mrr"),
            ndcg=d.get("ndcg"),
            rouge1=rouge(d.get("rouge1")),
            rouge2=rouge(d.get("rouge2")),
            rougeL=rouge(d.get("rougeL")),
        )


@dataclass(frozen=True)
class SystemScore:
    means: Mapping[str, float]

    def to_dict(self) -> dict:
        return dict(self.means)


def load_dataset(path: Path | str) -> list[EvalRecord]:
    """Parse and validate a JSON-Lines dataset; duplicate ids are rejected."""
    path = Path(path)
    records: list[EvalRecord] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except ValueError as e:
                raise ParseError(line_no, f"invalid JSON: {e}") from e
            record = _validate_record(raw, line_no)
            if record.record_id in seen:
                raise DuplicateRecord(f"line {line_no}: duplicate record_id {record.record_id!r}")
            seen.add(record.record_id)
            records.append(record)
    return records


def _validate_record(raw: dict, line_no: int) -> EvalRecord:
    def fail(msg: str):
        raise SchemaViolation(line_no, msg)

    if not isinstance(raw, dict):
        fail("record must be a JSON object")
    record_id = raw.get("record_id")
    if not isinstance(record_id, str) or not record_id:
        fail("record_id must be a non-empty string")
    agent = raw.get("agent")
    if agent not in AGENTS:
        fail(f"agent must be one of {AGENTS}")
    prompt = raw.get("prompt")
    if not isinstance(prompt, str) or not prompt.strip():
        fail("prompt must be a non-empty string")

    gold = raw.get("gold_items") or []
    summary = raw.get("reference_summary")
    k = raw.get("k", 1)
    if agent in RANKING_AGENTS:
        if not isinstance(gold, list) or not gold or not all(isinstance(g, str) and g for g in gold):
            fail(f"{agent} record needs non-empty gold_items")
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            fail("k must be a positive integer")
    else:
        if not isinstance(summary, str) or not summary.strip():
            fail("market record needs a reference_summary")

    image_path = raw.get("image_path")
    if image_path is not None and not isinstance(image_path, str):
        fail("image_path must be a string when present")

    return EvalRecord(
        record_id=record_id,
        agent=agent,
        prompt=prompt,
        gold_items=tuple(gold),
        reference_summary=summary,
        image_path=image_path,
        k=k if isinstance(k, int) and not isinstance(k, bool) and k >= 1 else 1,
    )


def match_names(names: Sequence[str], gold_items: Sequence[str]) -> tuple[dict[str, float], list[str]]:
    """Binary judgments plus the ranking, both over normalized names.

    Gold spellings are normalized and deduplicated; a ranked name is relevant
    (rel=1) iff it normalizes to a gold name. Later duplicate ranked names
    are dropped so ranking ids stay unique.
    """
    gold = {normalize_name(g) for g in gold_items}
    ranking: list[str] = []
    for name in names:
        norm = normalize_name(name)
        if norm not in ranking:
            ranking.append(norm)
    judged = {g: 1.0 for g in gold}
    for item in ranking:
        judged.setdefault(item, 0.0)
    return judged, ranking


def match_gold(recs: Sequence[Recommendation], gold_items: Sequence[str]) -> tuple[dict[str, float], list[str]]:
    """match_names over the products of a recommendation list."""
    return match_names([r.product.name for r in recs], gold_items)


def _recommended_names(output: dict, record_id: str) -> list[str]:
    recs = output.get("recommendations")
    if recs is None:
        raise SchemaViolation(None, f"output for {record_id!r} lacks recommendations")
    names = []
    for item in recs:
        names.append(item["name"] if isinstance(item, dict) else str(item))
    return names


def evaluate_agent(
    records: Sequence[EvalRecord],
    outputs: Mapping[str, dict],
    model_id: str,
) -> MetricRow:
    """One metric row for one agent over its records.

    Ranking agents: per-record P@K, R@K, NDCG@K at the record's k, averaged;
    MRR over the record set; F1 from the mean P and mean R. Market agent:
    componentwise mean ROUGE-1/2/L between summaries and references.
    """
    if not records:
        raise EmptyRows("evaluate_agent needs at least one record")
    agents = {r.agent for r in records}
    if len(agents) > 1:
        raise ValueError(f"records span multiple agents: {sorted(agents)}")
    agent = records[0].agent
    for record in records:
        if record.record_id not in outputs:
            raise MissingOutput(record.record_id)

    if agent in RANKING_AGENTS:
        p_vals, r_vals, ndcg_vals = [], [], []
        first_ranks: dict[str, Optional[int]] = {}
        for record in records:
            names = _recommended_names(outputs[record.record_id], record.record_id)
            judged, ranking = match_names(names, record.gold_items)
            p_vals.append(precision_at_k(ranking, judged, record.k))
            r_vals.append(recall_at_k(ranking, judged, record.k))
            ndcg_vals.append(ndcg_at_k(ranking, judged, record.k))
            first = next((i for i, item in enumerate(ranking, start=1) if judged[item] > 0), None)
            first_ranks[record.record_id] = first
        mean_p = sum(p_vals) / len(p_vals)
        mean_r = sum(r_vals) / len(r_vals)
        return MetricRow(
            model_id=model_id,
            agent=agent,
            p_at_k=mean_p,
            r_at_k=mean_r,
            f1=f_beta(mean_p, mean_r),
            mrr=mean_reciprocal_rank(first_ranks),
            ndcg=sum(ndcg_vals) / len(ndcg_vals),
        )

    scores = {"rouge1": [], "rouge2": [], "rougeL": []}
    for record in records:
        summary = outputs[record.record_id].get("summary", "")
        scores["rouge1"].append(rouge_n(summary, record.reference_summary, 1))
        scores["rouge2"].append(rouge_n(summary, record.reference_summary, 2))
        scores["rougeL"].append(rouge_l(summary, record.reference_summary))

    def mean_score(values: list[RougeScore]) -> RougeScore:
        n = len(values)
        return RougeScore(
            sum(v.precision for v in values) / n,
            sum(v.recall for v in values) / n,
            sum(v.f for v in values) / n,
        )

    return MetricRow(
        model_id=model_id,
        agent=agent,
        rouge1=mean_score(scores["rouge1"]),
        rouge2=mean_score(scores["rouge2"]),
        rougeL=mean_score(scores["rougeL"]),
    )


def overall_mean(rows: Sequence[MetricRow]) -> SystemScore:
    """Unweighted arithmetic mean per metric across the rows carrying it."""
    if not rows:
        raise EmptyRows("overall_mean needs at least one row")
    buckets: dict[str, list[float]] = {}
    for row in rows:
        for name, value in row.metric_values().items():
            buckets.setdefault(name, []).append(value)
    return SystemScore(means={name: sum(vals) / len(vals) for name, vals in sorted(buckets.items())})


def fmt(value: Optional[float]) -> str:
    """4 decimal places, half-even rounding; empty string for absent values."""
    if value is None:
        return ""
    return str(Decimal(repr(value)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN))


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


CSV_COLUMNS = [
    "model_id",
    "agent",
    "p_at_k",
    "r_at_k",
    "f1",
    "mrr",
    "ndcg",
    "rouge1_precision",
    "rouge1_recall",
    "rouge1_f",
    "rouge2_precision",
    "rouge2_recall",
    "rouge2_f",
    "rougeL_precision",
    "rougeL_recall",
    "rougeL_f",
]


def render_report(rows: Sequence[MetricRow], score: SystemScore) -> tuple[str, str]:
    """Aligned text table plus CSV, both with 4-decimal half-even values."""
    ranking_rows = [r for r in rows if r.agent in RANKING_AGENTS]
    market_rows = [r for r in rows if r.agent == "market"]

    sections = ["Ranking metrics"]
    sections.append(
        _table(
            ["Model", "Agent", "P@K", "R@K", "F-score", "MRR", "NDCG"],
            [
                [r.model_id, r.agent, fmt(r.p_at_k), fmt(r.r_at_k), fmt(r.f1), fmt(r.mrr), fmt(r.ndcg)]
                for r in ranking_rows
            ],
        )
    )
    if market_rows:
        sections.append("")
        sections.append("ROUGE (market agent)")
        rouge_table_rows = []
        for r in market_rows:
            for label, s in (("rouge-1", r.rouge1), ("rouge-2", r.rouge2), ("rouge-L", r.rougeL)):
                rouge_table_rows.append(
                    [r.model_id, label, fmt(s.precision), fmt(s.recall), fmt(s.f)]
                )
        sections.append(
            _table(["Model", "Metric", "Precision", "Recall", "F-score"], rouge_table_rows)
        )
    sections.append("")
    sections.append("System mean")
    sections.append(
        _table(
            ["Metric", "Value"],
            [[name, fmt(value)] for name, value in score.means.items()],
        )
    )
    text = "\n".join(sections) + "\n"

    csv_lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        values = {
            "model_id": row.model_id,
            "agent": row.agent,
            "p_at_k": fmt(row.p_at_k),
            "r_at_k": fmt(row.r_at_k),
            "f1": fmt(row.f1),
            "mrr": fmt(row.mrr),
            "ndcg": fmt(row.ndcg),
        }
        for label, s in (("rouge1", row.rouge1), ("rouge2", row.rouge2), ("rougeL", row.rougeL)):
            values[f"{label}_precision"] = fmt(s.precision) if s else ""
            values[f"{label}_recall"] = fmt(s.recall) if s else ""
            values[f"{label}_f"] = fmt(s.f) if s else ""
        csv_lines.append(",".join(values[c] for c in CSV_COLUMNS))
    csv_text = "\n".join(csv_lines) + "\n"
    return text, csv_text


def run_eval(
    dataset_path: Path | str,
    outputs_path: Path | str,
) -> tuple[list[MetricRow], SystemScore]:
    """Evaluate recorded outputs against a dataset, grouped by agent."""
    records = load_dataset(dataset_path)
    doc = json.loads(Path(outputs_path).read_text(encoding="utf-8"))
    model_id = doc.get("model_id", "unknown")
    outputs = doc.get("outputs", {})
    rows = []
    for agent in AGENTS:
        agent_records = [r for r in records if r.agent == agent]
        if agent_records:
            rows.append(evaluate_agent(agent_records, outputs, model_id))
    return rows, overall_mean(rows)


def write_report(
    rows: Sequence[MetricRow],
    score: SystemScore,
    report_dir: Path | str,
) -> dict[str, Path]:
    """Persist report.txt, report.csv and latest.json under report_dir."""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    text, csv_text = render_report(rows, score)
    paths = {
        "text": report_dir / "report.txt",
        "csv": report_dir / "report.csv",
        "json": report_dir / "latest.json",
    }
    paths["text"].write_text(text, encoding="utf-8")
    paths["csv"].write_text(csv_text, encoding="utf-8")
    paths["json"].write_text(
        json.dumps(
            {"rows": [r.to_dict() for r in rows], "system": score.to_dict()},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return paths
