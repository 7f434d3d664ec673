import base64
import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from agentrec.clock import ManualClock
from agentrec.config import ConfigError, build_service_state, load_app_config
from agentrec.service import create_app

from .test_domain import PNG_1PX

REPO = Path(__file__).resolve().parent.parent
OFFLINE_CONFIG = REPO / "config" / "offline.json"


@pytest.fixture
def client(tmp_path):
    config = load_app_config(OFFLINE_CONFIG)
    # Redirect writable dirs into the test sandbox.
    object.__setattr__(config, "profiles_dir", str(tmp_path / "profiles"))
    object.__setattr__(config, "traces_dir", str(tmp_path / "traces"))
    object.__setattr__(config, "reports_dir", str(tmp_path / "reports"))
    state = build_service_state(config, offline=True, clock=ManualClock())
    return TestClient(create_app(state)), state


def start_session(api, user="u1"):
    resp = api.post("/sessions", json={"user_id": user})
    assert resp.status_code == 201
    return resp.json()["session_id"]


def image_payload():
    return {"bytes": base64.b64encode(PNG_1PX).decode(), "media_type": "png"}


def test_create_session(client):
    api, _ = client
    sid = start_session(api)
    assert sid
    resp = api.get(f"/sessions/{sid}")
    assert resp.status_code == 200
    body = resp.json()
    assert body["user_id"] == "u1"
    assert body["turns"] == []


def test_create_session_rejects_empty_body(client):
    api, _ = client
    assert api.post("/sessions", json={}).status_code == 400


def test_distinct_session_ids(client):
    api, _ = client
    assert start_session(api) != start_session(api)


def test_text_query_turn(client):
    api, _ = client
    sid = start_session(api)
    resp = api.post(f"/sessions/{sid}/query", json={"text": "best running shoes"})
    assert resp.status_code == 200
    turn = resp.json()
    assert [r["product"]["name"] for r in turn["recommendations"]] == [
        "Aero Glide 3",
        "Road Runner 2",
        "Cloud Nine Max",
    ]
    assert turn["market_report"]["summary"]
    assert turn["market_report"]["sources"]
    assert turn["image_answer"] is None
    assert turn["trace_id"]


def test_query_unknown_session(client):
    api, _ = client
    resp = api.post("/sessions/nope/query", json={"text": "x"})
    assert resp.status_code == 404
    assert resp.json()["code"] == "unknown_session"


def test_query_empty_text_and_no_image(client):
    api, _ = client
    sid = start_session(api)
    resp = api.post(f"/sessions/{sid}/query", json={"text": "   "})
    assert resp.status_code == 422
    assert resp.json()["code"] == "invalid_query"


def test_image_query_turn_with_followup(client):
    api, _ = client
    sid = start_session(api)
    resp = api.post(
        f"/sessions/{sid}/query",
        json={"text": "what shoe is this?", "image": image_payload()},
    )
    assert resp.status_code == 200
    turn = resp.json()
    assert turn["image_answer"].startswith("The photo shows")
    assert len(turn["pending_followups"]) == 1
    assert turn["pending_followups"][0]["text"] == "What is your budget?"
    assert turn["recommendations"]


def test_bad_image_rejected(client):
    api, _ = client
    sid = start_session(api)
    resp = api.post(
        f"/sessions/{sid}/query",
        json={"text": "x", "image": {"bytes": base64.b64encode(b"junk").decode(), "media_type": "png"}},
    )
    assert resp.status_code == 422


def test_followup_roundtrip(client):
    api, _ = client
    sid = start_session(api)
    turn = api.post(
        f"/sessions/{sid}/query",
        json={"text": "what shoe is this?", "image": image_payload()},
    ).json()
    qid = turn["pending_followups"][0]["question_id"]

    resp = api.post(f"/sessions/{sid}/followups/{qid}", json={"answer": "$100"})
    assert resp.status_code == 200
    refined = resp.json()
    assert refined["recommendations"]
    assert refined["pending_followups"] == []

    # Second submission conflicts.
    resp = api.post(f"/sessions/{sid}/followups/{qid}", json={"answer": "$100"})
    assert resp.status_code == 409
    assert resp.json()["code"] == "already_answered"

    # Unknown id is a 404.
    resp = api.post(f"/sessions/{sid}/followups/doesnotexist", json={"answer": "x"})
    assert resp.status_code == 404
    assert resp.json()["code"] == "unknown_followup"


def test_session_state_lists_turns_in_order(client):
    api, _ = client
    sid = start_session(api)
    api.post(f"/sessions/{sid}/query", json={"text": "best running shoes"})
    api.post(f"/sessions/{sid}/query", json={"text": "more shoes"})
    body = api.get(f"/sessions/{sid}").json()
    assert len(body["turns"]) == 2
    assert body["turns"][0]["query"]["text"] == "best running shoes"


def test_repeated_get_is_idempotent(client):
    api, _ = client
    sid = start_session(api)
    api.post(f"/sessions/{sid}/query", json={"text": "best running shoes"})
    first = api.get(f"/sessions/{sid}").json()
    second = api.get(f"/sessions/{sid}").json()
    assert first == second


def test_reports_endpoint_404_then_content(client, tmp_path):
    api, state = client
    resp = api.get("/reports")
    assert resp.status_code == 404
    assert resp.json()["code"] == "no_report"

    from agentrec.harness import run_eval, write_report

    rows, score = run_eval(REPO / "fixtures/eval/desk.jsonl", REPO / "fixtures/eval/desk_outputs.json")
    write_report(rows, score, state.report_dir)
    body = api.get("/reports").json()
    assert {r["agent"] for r in body["rows"]} == {"product", "multimodal", "market"}
    assert "p_at_k" in body["system"]


def test_trace_endpoint(client):
    api, state = client
    sid = start_session(api)
    turn = api.post(f"/sessions/{sid}/query", json={"text": "best running shoes"}).json()
    resp = api.get(f"/traces/{turn['trace_id']}")
    assert resp.status_code == 200
    assert resp.json()["trace_id"] == turn["trace_id"]
    assert api.get("/traces/doesnotexist").status_code == 404


def test_turn_response_matches_documented_schema(client):
    api, _ = client
    sid = start_session(api)
    turn = api.post(f"/sessions/{sid}/query", json={"text": "best running shoes"}).json()
    assert set(turn) == {
        "query",
        "recommendations",
        "image_answer",
        "market_report",
        "trace_id",
        "pending_followups",
    }
    rec = turn["recommendations"][0]
    assert set(rec) == {"product", "rank", "rationale", "agent_id"}
    assert set(rec["product"]) == {
        "name",
        "brand",
        "url",
        "price",
        "currency",
        "description",
        "source",
    }


def test_offline_config_rejects_live_providers(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(
        json.dumps(
            {
                "providers": {
                    "product": {"kind": "openai", "base_url": "https://x", "api_key_env": "K"},
                    "multimodal": {"kind": "scripted", "script_path": "s.json"},
                    "market": {"kind": "scripted", "script_path": "s.json"},
                }
            }
        )
    )
    with pytest.raises(ConfigError):
        build_service_state(load_app_config(bad), offline=True)
