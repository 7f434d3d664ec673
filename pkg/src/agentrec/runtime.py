"""Generic agent execution: routing, the iteration-limited think/act/observe
loop, staged task plans, sequential or concurrent crew runs, and trace files.

With scripted providers and offline fixtures every run is deterministic:
task ids and trace ids derive from plan content, timings come from recorded
latencies, and concurrent mode collects results in plan order, so trace files
are byte-identical across runs and across execution modes.
"""

from __future__ import annotations

import hashlib
import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .clock import SYSTEM_CLOCK
from .domain import ImageAttachment, Query
from .gateway import (
    CallTrace,
    CapabilityError,
    ChatRequest,
    DEFAULT_RETRY_POLICY,
    GatewayError,
    ImagePart,
    Message,
    Provider,
    RateLimited,
    RetryPolicy,
    TextPart,
    complete_chat,
    complete_multimodal,
)
from .tools import (
    MalformedArgs,
    ToolCall,
    ToolRegistry,
    ToolResult,
    UnknownTool,
    parse_tool_call,
)

PRODUCT_AGENT = "product"
MULTIMODAL_AGENT = "multimodal"
MARKET_AGENT = "market"
STANDARD_AGENTS = (PRODUCT_AGENT, MULTIMODAL_AGENT, MARKET_AGENT)

SECTION_HEADERS = {
    PRODUCT_AGENT: "Recommendations",
    MULTIMODAL_AGENT: "Image Insights",
    MARKET_AGENT: "Market Trends",
}

DEFAULT_MAX_ITERATIONS = 15
TOOL_FAILURE_THRESHOLD = 3

STATUS_OK = "ok"
STATUS_ITERATION_LIMIT = "iteration_limit"
STATUS_TOOL_FAILURE = "tool_failure"
STATUS_MODEL_FAILURE = "model_failure"

_TREND_RE = re.compile(r"\btrend|\bmarket|\bpopular now\b")


@dataclass(frozen=True)
class AgentDef:
    agent_id: str
    role_prompt: str
    allowed_tools: tuple[str, ...] = ()
    model_id: str = "llama3-70b-8192"
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def role_prompt_sha256(self) -> str:
        return hashlib.sha256(self.role_prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AgentTask:
    task_id: str
    agent_id: str
    instruction: str
    context: tuple[str, ...] = ()
    attachments: tuple[ImageAttachment, ...] = ()

    def __post_init__(self):
        if not self.instruction.strip():
            raise ValueError("task instruction must be non-empty")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "agent_id": self.agent_id,
            "instruction": self.instruction,
            "context": list(self.context),
            "attachments": [
                {
                    "sha256": hashlib.sha256(a.bytes).hexdigest(),
                    "media_type": a.media_type,
                }
                for a in self.attachments
            ],
        }


@dataclass(frozen=True)
class AgentOutput:
    task_id: str
    agent_id: str
    answer: str
    tool_log: tuple[tuple[ToolCall, ToolResult], ...] = ()
    model_calls: int = 0
    elapsed: float = 0.0
    status: str = STATUS_OK

    def __post_init__(self):
        if self.status == STATUS_OK and self.model_calls < 1:
            raise ValueError("an ok output implies at least one model call")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "agent_id": self.agent_id,
            "answer": self.answer,
            "tool_log": [
                {"call": call.to_dict(), "result": result.to_dict()}
                for call, result in self.tool_log
            ],
            "model_calls": self.model_calls,
            "elapsed": self.elapsed,
            "status": self.status,
        }


@dataclass(frozen=True)
class TaskPlan:
    stages: tuple[tuple[AgentTask, ...], ...]

    def __post_init__(self):
        ids = [t.task_id for stage in self.stages for t in stage]
        if len(ids) != len(set(ids)):
            raise ValueError("every task must appear exactly once in the plan")

    def tasks(self) -> list[AgentTask]:
        return [t for stage in self.stages for t in stage]

    def to_dict(self) -> dict:
        return {"stages": [[t.to_dict() for t in stage] for stage in self.stages]}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CrewResult:
    outputs: Mapping[str, AgentOutput]
    final_answer: str
    trace_id: str


def route_task(query: Query, agents: Sequence[AgentDef]) -> str:
    """Deterministic rule routing: image, trend lexicon, default product."""
    ids = {a.agent_id for a in agents}
    missing = set(STANDARD_AGENTS) - ids
    if not agents or missing:
        raise ValueError(f"routing needs the standard agents; missing {sorted(missing)}")
    if query.image is not None:
        return MULTIMODAL_AGENT
    if _TREND_RE.search(query.text.lower()):
        return MARKET_AGENT
    return PRODUCT_AGENT


def _tools_section(agent: AgentDef, registry: ToolRegistry) -> str:
    lines = [
        "",
        "You may use a tool by replying with exactly two lines:",
        "ACTION: <tool_name>",
        "ARGS: <json object>",
        "",
        "Available tools:",
    ]
    for name in agent.allowed_tools:
        spec, _ = registry.resolve(name)
        lines.append(f"- {name}: {spec.description}")
    lines.append("")
    lines.append("When you have the final answer, reply with it directly and no ACTION line.")
    return "\n".join(lines)


def build_request(
    agent: AgentDef,
    task: AgentTask,
    registry: ToolRegistry,
    scratchpad: Sequence[tuple[str, str]],
) -> ChatRequest:
    """Prompt assembly: role prompt, instruction + context, then the
    scratchpad as alternating assistant text / user observation."""
    system = agent.role_prompt
    if agent.allowed_tools:
        system = system + "\n" + _tools_section(agent, registry)
    user_text = task.instruction
    if task.context:
        blocks = "\n\n".join(f"[context {i}]\n{c}" for i, c in enumerate(task.context, start=1))
        user_text = f"{user_text}\n\n{blocks}"
    parts: list = [TextPart(user_text)]
    parts.extend(ImagePart(a) for a in task.attachments)
    messages = [Message.text("system", system), Message(role="user", parts=tuple(parts))]
    for model_text, observation in scratchpad:
        messages.append(Message.text("assistant", model_text))
        messages.append(Message.text("user", f"OBSERVATION:\n{observation}"))
    return ChatRequest(model_id=agent.model_id, messages=tuple(messages))


def run_agent(
    agent: AgentDef,
    task: AgentTask,
    provider: Provider,
    registry: ToolRegistry,
    policy: RetryPolicy = DEFAULT_RETRY_POLICY,
    clock=SYSTEM_CLOCK,
) -> AgentOutput:
    """The think/act/observe loop, bounded by the agent's iteration limit.

    Terminates ok on the first model reply without a tool call, with
    iteration_limit after max_iterations model calls, with tool_failure after
    three consecutive tool errors, and with model_failure when the gateway
    gives up (rate limits, transport, exhausted scripts).
    """
    missing = set(agent.allowed_tools) - set(registry.names())
    if missing:
        raise ValueError(f"agent {agent.agent_id} allows unregistered tools {sorted(missing)}")
    registry.freeze()

    scratchpad: list[tuple[str, str]] = []
    tool_log: list[tuple[ToolCall, ToolResult]] = []
    model_calls = 0
    consecutive_errors = 0
    elapsed = 0.0
    status = STATUS_ITERATION_LIMIT
    answer = ""

    for _ in range(agent.max_iterations):
        request = build_request(agent, task, registry, scratchpad)
        call_trace = CallTrace()
        try:
            if task.attachments:
                response = complete_multimodal(provider, request, policy, clock=clock, trace=call_trace)
            else:
                response = complete_chat(provider, request, policy, clock=clock, trace=call_trace)
        except (RateLimited, CapabilityError, GatewayError):
            status = STATUS_MODEL_FAILURE
            break
        model_calls += 1
        elapsed += response.latency
        text = response.text

        try:
            call = parse_tool_call(text, registry)
        except (UnknownTool, MalformedArgs) as e:
            consecutive_errors += 1
            scratchpad.append((text, f"ERROR: {e}"))
            if consecutive_errors >= TOOL_FAILURE_THRESHOLD:
                status = STATUS_TOOL_FAILURE
                break
            continue

        if call is None:
            answer = text
            status = STATUS_OK
            break

        if call.tool_name not in agent.allowed_tools:
            consecutive_errors += 1
            scratchpad.append((text, f"ERROR: tool {call.tool_name!r} not allowed for this agent"))
            if consecutive_errors >= TOOL_FAILURE_THRESHOLD:
                status = STATUS_TOOL_FAILURE
                break
            continue

        _, executor = registry.resolve(call.tool_name)
        try:
            result = executor(call)
        except Exception as e:
            result = ToolResult(tool_name=call.tool_name, ok=False, content=f"ERROR: {e}")
        tool_log.append((call, result))
        elapsed += result.elapsed
        consecutive_errors = 0 if result.ok else consecutive_errors + 1
        scratchpad.append((text, result.content))
        if consecutive_errors >= TOOL_FAILURE_THRESHOLD:
            status = STATUS_TOOL_FAILURE
            break

    return AgentOutput(
        task_id=task.task_id,
        agent_id=agent.agent_id,
        answer=answer,
        tool_log=tuple(tool_log),
        model_calls=model_calls,
        elapsed=round(elapsed, 6),
        status=status,
    )


def _agent_map(agents: Sequence[AgentDef]) -> dict[str, AgentDef]:
    return {a.agent_id: a for a in agents}


def plan_tasks(goal: Query, agents: Sequence[AgentDef]) -> TaskPlan:
    """Staged plan for one user goal.

    Image-bearing goals get the canonical three-stage chain (recommend, then
    image follow-up QA over stage-1 output, then market analysis); text-only
    goals run product recommendation and market analysis concurrently.
    """
    if not agents:
        raise ValueError("plan needs a non-empty agent list")
    by_id = _agent_map(agents)
    subject = goal.text.strip() or "the product shown in the attached image"

    def task(stage: int, agent_id: str, instruction: str, **kw) -> AgentTask:
        if agent_id not in by_id:
            raise ValueError(f"plan needs agent {agent_id!r}")
        return AgentTask(task_id=f"s{stage}-{agent_id}", agent_id=agent_id, instruction=instruction, **kw)

    recommend = task(1, PRODUCT_AGENT, f"Recommend the best products for this request: {subject}")
    market_instruction = f"Research current market trends relevant to: {subject}"
    if goal.image is not None:
        followup = task(
            2,
            MULTIMODAL_AGENT,
            f"Answer the user's question about the attached product image and ask any follow-up "
            f"questions needed to refine the recommendations. User query: {subject}",
            attachments=(goal.image,),
        )
        market = task(3, MARKET_AGENT, market_instruction)
        return TaskPlan(stages=((recommend,), (followup,), (market,)))
    market = task(1, MARKET_AGENT, market_instruction)
    return TaskPlan(stages=((recommend, market),))


def aggregate(outputs: Sequence[AgentOutput]) -> str:
    """Concatenate ok answers under fixed section headers, in plan order.

    A failed section becomes a one-line notice naming its status.
    """
    sections = []
    for out in outputs:
        header = SECTION_HEADERS.get(out.agent_id, out.agent_id)
        if out.status == STATUS_OK:
            sections.append(f"## {header}\n{out.answer}")
        else:
            sections.append(f"## {header}\n(unavailable: {out.status})")
    return "\n\n".join(sections)


def run_crew(
    plan: TaskPlan,
    agents: Sequence[AgentDef] | Mapping[str, AgentDef],
    providers: Mapping[str, Provider],
    registry: ToolRegistry,
    mode: str = "sequential",
    policy: RetryPolicy = DEFAULT_RETRY_POLICY,
    clock=SYSTEM_CLOCK,
    trace_dir: Optional[Path | str] = None,
) -> CrewResult:
    """Execute plan stages in order; tasks within a stage run concurrently in
    concurrent mode. Ok answers of stage k join the contexts of stage k+1.
    Per-task failures land in output statuses and never abort the crew.
    """
    if mode not in ("sequential", "concurrent"):
        raise ValueError(f"bad mode {mode!r}")
    by_id = agents if isinstance(agents, Mapping) else _agent_map(agents)

    outputs: dict[str, AgentOutput] = {}
    ordered: list[AgentOutput] = []
    prior_answers: list[str] = []

    for stage in plan.stages:
        staged = [replace(t, context=t.context + tuple(prior_answers)) for t in stage]

        def work(t: AgentTask) -> AgentOutput:
            agent = by_id[t.agent_id]
            provider = providers[t.agent_id]
            try:
                return run_agent(agent, t, provider, registry, policy=policy, clock=clock)
            except Exception:
                return AgentOutput(
                    task_id=t.task_id,
                    agent_id=t.agent_id,
                    answer="",
                    status=STATUS_MODEL_FAILURE,
                )

        if mode == "concurrent" and len(staged) > 1:
            with ThreadPoolExecutor(max_workers=len(staged)) as pool:
                stage_outputs = list(pool.map(work, staged))
        else:
            stage_outputs = [work(t) for t in staged]

        prior_answers = [o.answer for o in stage_outputs if o.status == STATUS_OK]
        for out in stage_outputs:
            outputs[out.task_id] = out
            ordered.append(out)

    trace_id = plan.digest()[:16]
    final_answer = aggregate(ordered)
    result = CrewResult(outputs=outputs, final_answer=final_answer, trace_id=trace_id)
    if trace_dir is not None:
        write_trace(result, plan, by_id, Path(trace_dir))
    return result


def write_trace(
    result: CrewResult,
    plan: TaskPlan,
    agents: Mapping[str, AgentDef],
    trace_dir: Path,
) -> Path:
    """One JSON object per run: plan, prompt hashes, outputs, final answer.

    Canonical formatting (sorted keys, fixed indent) makes the file the
    golden-transcript unit for replay tests.
    """
    used = sorted({t.agent_id for t in plan.tasks()})
    doc = {
        "trace_id": result.trace_id,
        "plan": plan.to_dict(),
        "agents": {
            aid: {
                "model_id": agents[aid].model_id,
                "role_prompt_sha256": agents[aid].role_prompt_sha256(),
                "max_iterations": agents[aid].max_iterations,
            }
            for aid in used
        },
        "outputs": {tid: out.to_dict() for tid, out in result.outputs.items()},
        "final_answer": result.final_answer,
    }
    trace_dir.mkdir(parents=True, exist_ok=True)
    path = trace_dir / f"{result.trace_id}.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
