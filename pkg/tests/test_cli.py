import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from agentrec.cli import main
from agentrec.profiles import ProfileStore, UserProfile

REPO = Path(__file__).resolve().parent.parent
DATASET = str(REPO / "fixtures/eval/desk.jsonl")
OUTPUTS = str(REPO / "fixtures/eval/desk_outputs.json")


@pytest.fixture
def runner():
    return CliRunner()


def test_eval_writes_report(runner, tmp_path):
    result = runner.invoke(
        main,
        ["eval", "--dataset", DATASET, "--outputs", OUTPUTS, "--report-dir", str(tmp_path)],
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "report.txt").exists()
    assert (tmp_path / "report.csv").exists()
    assert "Ranking metrics" in result.output


def test_eval_reproduces_golden_report(runner, tmp_path):
    runner.invoke(
        main,
        ["eval", "--dataset", DATASET, "--outputs", OUTPUTS, "--report-dir", str(tmp_path)],
    )
    golden_txt = (REPO / "fixtures/eval/golden_report.txt").read_bytes()
    golden_csv = (REPO / "fixtures/eval/golden_report.csv").read_bytes()
    assert (tmp_path / "report.txt").read_bytes() == golden_txt
    assert (tmp_path / "report.csv").read_bytes() == golden_csv


def test_eval_schema_error_exit_code(runner, tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"record_id": "x", "agent": "product", "prompt": "p"}\n')
    result = runner.invoke(
        main, ["eval", "--dataset", str(bad), "--outputs", OUTPUTS, "--report-dir", str(tmp_path)]
    )
    assert result.exit_code == 2


def test_eval_missing_output_exit_code(runner, tmp_path):
    sparse = tmp_path / "sparse.json"
    sparse.write_text(json.dumps({"model_id": "m", "outputs": {}}))
    result = runner.invoke(
        main,
        ["eval", "--dataset", DATASET, "--outputs", str(sparse), "--report-dir", str(tmp_path)],
    )
    assert result.exit_code == 3


def test_eval_report_subcommand_exports_csv(runner, tmp_path):
    runner.invoke(
        main,
        ["eval", "--dataset", DATASET, "--outputs", OUTPUTS, "--report-dir", str(tmp_path)],
    )
    out_csv = tmp_path / "export.csv"
    result = runner.invoke(
        main, ["eval", "report", "--csv", str(out_csv), "--report-dir", str(tmp_path)]
    )
    assert result.exit_code == 0, result.output
    assert out_csv.read_bytes() == (tmp_path / "report.csv").read_bytes()


def test_eval_live_with_scripted_config(runner, tmp_path):
    # "Live" mode drives the agents; with a scripted config it stays offline.
    dataset = tmp_path / "tiny.jsonl"
    dataset.write_text(
        json.dumps(
            {
                "record_id": "p1",
                "agent": "product",
                "prompt": "best running shoes",
                "gold_items": ["Aero Glide 3"],
                "k": 3,
            }
        )
        + "\n"
    )
    result = runner.invoke(
        main,
        [
            "eval",
            "--dataset",
            str(dataset),
            "--live",
            "--config",
            str(REPO / "config/offline.json"),
            "--report-dir",
            str(tmp_path / "reports"),
        ],
    )
    assert result.exit_code == 0, result.output
    csv_text = (tmp_path / "reports/report.csv").read_text()
    # The scripted product agent ranks the gold item first.
    assert "llama3-70b-8192,product,0.3333,1.0000,0.5000,1.0000,1.0000" in csv_text


def test_fixtures_ls(runner):
    result = runner.invoke(main, ["fixtures", "ls", "--fixtures-dir", str(REPO / "fixtures")])
    assert result.exit_code == 0, result.output
    assert "best running shoes" in result.output
    assert "https://retail.example/running-trends" in result.output


def test_profiles_export(runner, tmp_path):
    store = ProfileStore(tmp_path)
    store.upsert_profile(UserProfile(user_id="u1", preferred_brands=("A",)))
    result = runner.invoke(main, ["profiles", "export", "--profiles-dir", str(tmp_path)])
    assert result.exit_code == 0
    exported = json.loads(result.output)
    assert exported[0]["user_id"] == "u1"


def test_eval_requires_dataset(runner):
    result = runner.invoke(main, ["eval"])
    assert result.exit_code != 0
    assert "--dataset" in result.output
