#!/usr/bin/env python3
"""Walk one full multi-agent session turn, entirely offline.

Shows the plan for an image-bearing query, the three agents replaying their
bundled scripts (tool calls included), and the assembled session turn with
recommendations, an image answer, a pending follow-up question, and a market
report. Run from the repo root:

    python3 demos/offline_turn_demo.py
"""

from pathlib import Path

from agentrec.agents import TurnPipeline, default_agents
from agentrec.clock import ManualClock
from agentrec.domain import ImageAttachment, SessionState, validate_query
from agentrec.gateway import load_script, make_scripted_provider
from agentrec.profiles import ProfileStore
from agentrec.runtime import plan_tasks
from agentrec.tools import FixtureStore, WebTools, default_registry

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"


def providers():
    return {
        agent_id: make_scripted_provider(
            load_script(FIXTURES / "scripts" / "demo" / f"{agent_id}.json")
        )
        for agent_id in ("product", "multimodal", "market")
    }


def main():
    clock = ManualClock()
    image = ImageAttachment(
        bytes=(FIXTURES / "images" / "shoe.png").read_bytes(), media_type="png"
    )
    query = validate_query(
        "what shoe is this and what should I buy?",
        image,
        session_id="demo",
        timestamp=clock.now(),
    )

    agents = default_agents()
    plan = plan_tasks(query, agents)
    print("Plan:")
    for i, stage in enumerate(plan.stages, 1):
        print(f"  stage {i}: " + ", ".join(t.agent_id for t in stage))

    pipeline = TurnPipeline(
        agents=agents,
        providers=providers,  # factory: scripts replay fresh every turn
        registry=default_registry(WebTools(fixtures=FixtureStore(FIXTURES))),
        profile_store=ProfileStore(REPO / "var" / "profiles", clock=clock),
        clock=clock,
        trace_dir=REPO / "var" / "traces",
    )
    session = SessionState(session_id="demo", user_id="demo-user")
    turn = pipeline.run_turn(session, query)

    print("\nRecommendations:")
    for rec in turn.recommendations:
        print(f"  {rec.rank}. {rec.product.name} ({rec.rationale})")
    print(f"\nImage answer: {turn.image_answer}")
    for q in session.pending_followups:
        print(f"Pending follow-up [{q.question_id}]: {q.text}")
    print(f"\nMarket report: {turn.market_report.summary}")
    print("Sources: " + ", ".join(turn.market_report.sources))
    print(f"\nTrace written: var/traces/{turn.trace_id}.json")

    answer_turn = pipeline.answer_followup(
        session, session.pending_followups[0].question_id, "$100"
    )
    print("\nAfter answering the follow-up with '$100':")
    for rec in answer_turn.recommendations:
        print(f"  {rec.rank}. {rec.product.name} ({rec.rationale})")


if __name__ == "__main__":
    main()
