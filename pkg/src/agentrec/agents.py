"""The three concrete agents (product recommender, image QA with follow-up
questions, market-trend analyst) and the pipeline binding them into session
turns.

Structured output is imposed through the role prompts: the product agent
answers with a numbered list ``N. <name> — <rationale> [url]`` and the image
agent marks questions with ``FOLLOWUP:`` lines. The parsers here are the
inverse of those grammars.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .clock import SYSTEM_CLOCK
from .domain import (
    FollowupQuestion,
    ImageAttachment,
    MarketReport,
    Product,
    Query,
    Recommendation,
    SessionState,
    SessionTurn,
    renumber,
    validate_query,
)
from .gateway import (
    ChatRequest,
    DEFAULT_RETRY_POLICY,
    Message,
    Provider,
    RetryPolicy,
    complete_multimodal,
)
from .profiles import InteractionEvent, ProfileStore, UserProfile, rerank_with_profile
from .runtime import (
    MARKET_AGENT,
    MULTIMODAL_AGENT,
    PRODUCT_AGENT,
    STATUS_OK,
    AgentDef,
    AgentOutput,
    AgentTask,
    plan_tasks,
    run_agent,
    run_crew,
)
from .tools import ToolRegistry

MAX_FOLLOWUPS = 3


class AgentError(Exception):
    pass


class EmptyRecommendations(AgentError):
    """The product agent's answer parsed to zero items."""


class EmptySummary(AgentError):
    """The market agent produced a blank final answer."""


class AllAgentsFailed(AgentError):
    """No agent contributed a usable section to the turn."""


class UnknownFollowup(AgentError):
    """question_id is not pending in this session."""


def load_role_prompt(agent_id: str) -> str:
    return (resources.files("agentrec") / "prompts" / f"{agent_id}.txt").read_text(encoding="utf-8")


def default_agents(
    model_id: str = "llama3-70b-8192",
    multimodal_model_id: str = "gemini-1.5-pro",
    max_iterations: int = 15,
) -> list[AgentDef]:
    """The standard three-agent crew with bundled role prompts."""
    return [
        AgentDef(
            agent_id=PRODUCT_AGENT,
            role_prompt=load_role_prompt(PRODUCT_AGENT),
            allowed_tools=("web_search", "scrape"),
            model_id=model_id,
            max_iterations=max_iterations,
        ),
        AgentDef(
            agent_id=MULTIMODAL_AGENT,
            role_prompt=load_role_prompt(MULTIMODAL_AGENT),
            allowed_tools=("web_search",),
            model_id=multimodal_model_id,
            max_iterations=max_iterations,
        ),
        AgentDef(
            agent_id=MARKET_AGENT,
            role_prompt=load_role_prompt(MARKET_AGENT),
            allowed_tools=("web_search", "scrape"),
            model_id=model_id,
            max_iterations=max_iterations,
        ),
    ]


@dataclass(frozen=True)
class RecommendationParse:
    items: tuple[Recommendation, ...]
    unparsed_remainder: str


_ITEM_RE = re.compile(r"^\s*\d+[.)]\s+(?P<body>.*\S)\s*$")
_URL_RE = re.compile(r"\s*\[(?P<url>[^\[\]\s]+)\]\s*$")
_SEPARATORS = (" — ", " – ", " - ", "—", "–")


def parse_recommendations(text: str, agent_id: str = PRODUCT_AGENT) -> RecommendationParse:
    """Extract ranked items from a numbered-list answer.

    Lines that do not match the grammar accumulate in unparsed_remainder.
    Ranks follow list position (contiguous from 1), not the printed numbers.
    """
    items: list[Recommendation] = []
    remainder: list[str] = []
    for line in text.splitlines():
        m = _ITEM_RE.match(line)
        if not m:
            if line.strip():
                remainder.append(line)
            continue
        body = m.group("body")
        url = None
        um = _URL_RE.search(body)
        if um:
            url = um.group("url")
            body = body[: um.start()].rstrip()
        name, rationale = _split_name_rationale(body)
        if not name:
            remainder.append(line)
            continue
        items.append(
            Recommendation(
                product=Product(name=name, url=url, source="model_knowledge"),
                rank=len(items) + 1,
                rationale=rationale,
                agent_id=agent_id,
            )
        )
    return RecommendationParse(items=tuple(items), unparsed_remainder="\n".join(remainder))


def _split_name_rationale(body: str) -> tuple[str, str]:
    for sep in _SEPARATORS:
        if sep in body:
            name, rationale = body.split(sep, 1)
            return name.strip(), rationale.strip()
    return body.strip(), ""


def dedupe_recommendations(recs: Sequence[Recommendation]) -> list[Recommendation]:
    """Drop later duplicates by product identity, then renumber from 1."""
    seen: set[tuple] = set()
    out = []
    for r in recs:
        key = r.product.identity()
        if key not in seen:
            seen.add(key)
            out.append(r)
    return renumber(out)


def recommend_products(
    query: Query,
    profile: UserProfile,
    provider: Provider,
    registry: ToolRegistry,
    agent: Optional[AgentDef] = None,
    policy: RetryPolicy = DEFAULT_RETRY_POLICY,
    clock=SYSTEM_CLOCK,
) -> list[Recommendation]:
    """Run the product agent and return profile-ranked, deduplicated items."""
    if not query.text.strip():
        raise ValueError("recommend_products needs query text")
    agent = agent or default_agents()[0]
    task = AgentTask(
        task_id=f"adhoc-{PRODUCT_AGENT}",
        agent_id=agent.agent_id,
        instruction=f"Recommend the best products for this request: {query.text.strip()}",
    )
    output = run_agent(agent, task, provider, registry, policy=policy, clock=clock)
    return recommendations_from_answer(output.answer, profile, agent_id=agent.agent_id)


def recommendations_from_answer(
    answer: str, profile: UserProfile, agent_id: str = PRODUCT_AGENT
) -> list[Recommendation]:
    parsed = parse_recommendations(answer, agent_id=agent_id)
    if not parsed.items:
        raise EmptyRecommendations("no numbered product lines in the agent answer")
    return dedupe_recommendations(rerank_with_profile(list(parsed.items), profile))


_FOLLOWUP_RE = re.compile(r"^FOLLOWUP:\s*(?P<q>\S.*?)\s*$", re.MULTILINE)


def followup_id(index: int, text: str) -> str:
    return hashlib.sha256(f"{index}:{text}".encode("utf-8")).hexdigest()[:12]


def extract_followups(text: str) -> tuple[str, list[FollowupQuestion]]:
    """Split an image-agent answer into prose and up to three follow-ups."""
    questions = []
    for i, m in enumerate(_FOLLOWUP_RE.finditer(text)):
        if i >= MAX_FOLLOWUPS:
            break
        q = m.group("q")
        questions.append(FollowupQuestion(question_id=followup_id(i, q), text=q))
    answer = _FOLLOWUP_RE.sub("", text).strip()
    return answer, questions


@dataclass(frozen=True)
class ImageAnswer:
    answer: str
    followups: tuple[FollowupQuestion, ...]


def answer_image_query(
    image: ImageAttachment,
    question: str,
    context: Sequence[str],
    provider: Provider,
    model_id: str = "gemini-1.5-pro",
    role_prompt: Optional[str] = None,
    policy: RetryPolicy = DEFAULT_RETRY_POLICY,
    clock=SYSTEM_CLOCK,
) -> ImageAnswer:
    """Single-shot multimodal QA; extracts FOLLOWUP lines from the reply."""
    role_prompt = role_prompt if role_prompt is not None else load_role_prompt(MULTIMODAL_AGENT)
    user_text = question
    if context:
        blocks = "\n\n".join(f"[context {i}]\n{c}" for i, c in enumerate(context, start=1))
        user_text = f"{question}\n\n{blocks}"
    request = ChatRequest(
        model_id=model_id,
        messages=(
            Message.text("system", role_prompt),
            Message.user_with_image(user_text, image),
        ),
    )
    response = complete_multimodal(provider, request, policy, clock=clock)
    answer, followups = extract_followups(response.text)
    return ImageAnswer(answer=answer, followups=tuple(followups))


def market_report_from_output(topic: str, output: AgentOutput, clock=SYSTEM_CLOCK) -> MarketReport:
    if not output.answer.strip():
        raise EmptySummary(f"market agent produced a blank summary (status={output.status})")
    sources = []
    for _, result in output.tool_log:
        for url in result.source_urls:
            if url not in sources:
                sources.append(url)
    return MarketReport(
        topic=topic,
        summary=output.answer,
        sources=tuple(sources),
        generated_at=clock.now(),
    )


def analyze_market(
    topic: str,
    provider: Provider,
    registry: ToolRegistry,
    agent: Optional[AgentDef] = None,
    policy: RetryPolicy = DEFAULT_RETRY_POLICY,
    clock=SYSTEM_CLOCK,
) -> MarketReport:
    """Run the market agent; sources are its tool-log urls in first-use order."""
    if not topic.strip():
        raise ValueError("analyze_market needs a topic")
    agent = agent or default_agents()[2]
    task = AgentTask(
        task_id=f"adhoc-{MARKET_AGENT}",
        agent_id=agent.agent_id,
        instruction=f"Research current market trends relevant to: {topic.strip()}",
    )
    output = run_agent(agent, task, provider, registry, policy=policy, clock=clock)
    return market_report_from_output(topic, output, clock=clock)


class TurnPipeline:
    """Binds the crew to sessions: plans, runs, assembles SessionTurns.

    One pipeline instance serves many sessions; callers serialize turns per
    session (the HTTP service holds per-session locks).
    """

    def __init__(
        self,
        agents: Sequence[AgentDef],
        providers,
        registry: ToolRegistry,
        profile_store: ProfileStore,
        mode: str = "concurrent",
        policy: RetryPolicy = DEFAULT_RETRY_POLICY,
        clock=SYSTEM_CLOCK,
        trace_dir: Optional[Path | str] = None,
    ):
        self.agents = list(agents)
        self.agents_by_id = {a.agent_id: a for a in self.agents}
        # Either a mapping agent_id -> Provider, or a zero-arg factory
        # returning one (so scripted providers can be rebuilt per turn).
        self.providers = providers
        self.registry = registry
        self.profile_store = profile_store
        self.mode = mode
        self.policy = policy
        self.clock = clock
        self.trace_dir = trace_dir

    def resolve_providers(self) -> Mapping[str, Provider]:
        return self.providers() if callable(self.providers) else self.providers

    def ensure_profile(self, user_id: str) -> UserProfile:
        profile = self.profile_store.get(user_id)
        if profile is None:
            profile = UserProfile(user_id=user_id)
            self.profile_store.upsert_profile(profile)
        return profile

    def run_turn(self, session: SessionState, query: Query) -> SessionTurn:
        """Plan, execute the crew, and assemble one session turn.

        Per-agent failures degrade the turn (their sections are omitted);
        AllAgentsFailed is raised only when nothing usable came back.
        """
        profile = self.ensure_profile(session.user_id)
        plan = plan_tasks(query, self.agents)
        crew = run_crew(
            plan,
            self.agents_by_id,
            self.resolve_providers(),
            self.registry,
            mode=self.mode,
            policy=self.policy,
            clock=self.clock,
            trace_dir=self.trace_dir,
        )

        recommendations: tuple[Recommendation, ...] = ()
        image_answer: Optional[str] = None
        market_report: Optional[MarketReport] = None
        followups: list[FollowupQuestion] = []

        for task in plan.tasks():
            output = crew.outputs[task.task_id]
            if output.status != STATUS_OK:
                continue
            if task.agent_id == PRODUCT_AGENT:
                try:
                    recommendations = tuple(
                        recommendations_from_answer(output.answer, profile)
                    )
                except EmptyRecommendations:
                    pass
            elif task.agent_id == MULTIMODAL_AGENT:
                answer, questions = extract_followups(output.answer)
                if answer:
                    image_answer = answer
                    followups = questions
            elif task.agent_id == MARKET_AGENT:
                try:
                    market_report = market_report_from_output(
                        query.text.strip() or "attached product image",
                        output,
                        clock=self.clock,
                    )
                except EmptySummary:
                    pass

        if not recommendations and image_answer is None and market_report is None:
            raise AllAgentsFailed("no agent produced a usable section")

        turn = SessionTurn(
            query=query,
            recommendations=recommendations,
            image_answer=image_answer,
            market_report=market_report,
            trace_id=crew.trace_id,
        )
        session.append_turn(turn)
        session.pending_followups.extend(followups)
        self.profile_store.record_interaction(
            session.user_id,
            InteractionEvent(
                kind="query",
                payload=query.text.strip() or "[image query]",
                timestamp=self.clock.now(),
            ),
        )
        return turn

    def answer_followup(self, session: SessionState, question_id: str, user_answer: str) -> SessionTurn:
        """Mark a pending follow-up answered and run a refined product pass."""
        question = session.pop_followup(question_id)
        if question is None:
            raise UnknownFollowup(question_id)
        question.answer = user_answer
        question.answered = True

        profile = self.ensure_profile(session.user_id)
        self.profile_store.record_interaction(
            session.user_id,
            InteractionEvent(
                kind="followup_answer",
                payload=f"{question.text} -> {user_answer}",
                timestamp=self.clock.now(),
            ),
        )

        original = ""
        for turn in reversed(session.turns):
            if turn.query.text.strip():
                original = turn.query.text.strip()
                break
        agent = self.agents_by_id[PRODUCT_AGENT]
        task = AgentTask(
            task_id=f"followup-{question_id}",
            agent_id=agent.agent_id,
            instruction=(
                f"Refine the product recommendations for this request: {original}"
                if original
                else "Refine the product recommendations using the follow-up answer."
            ),
            context=(f"Follow-up question: {question.text}", f"User answer: {user_answer}"),
        )
        output = run_agent(
            agent,
            task,
            self.resolve_providers()[agent.agent_id],
            self.registry,
            policy=self.policy,
            clock=self.clock,
        )
        recommendations = recommendations_from_answer(output.answer, profile)
        turn = SessionTurn(
            query=validate_query(
                user_answer, session_id=session.session_id, timestamp=self.clock.now()
            ),
            recommendations=tuple(recommendations),
            trace_id=f"followup-{question_id}",
        )
        session.append_turn(turn)
        return turn
