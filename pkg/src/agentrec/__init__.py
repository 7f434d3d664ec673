"""agentrec: multi-agent, multimodal product recommendations with a
deterministic offline evaluation harness."""

from .domain import (
    ImageAttachment,
    MarketReport,
    Product,
    Query,
    Recommendation,
    SessionState,
    SessionTurn,
    dedupe_products,
    validate_query,
)
from .gateway import (
    ChatRequest,
    ChatResponse,
    Message,
    RetryPolicy,
    complete_chat,
    complete_multimodal,
    make_scripted_provider,
)
from .metrics import (
    RougeScore,
    dcg_at_k,
    f_beta,
    mean_reciprocal_rank,
    ndcg_at_k,
    precision_at_k,
    recall_at_k,
    rouge_l,
    rouge_n,
    tokenize,
)
from .runtime import AgentDef, AgentTask, TaskPlan, plan_tasks, route_task, run_agent, run_crew

__version__ = "0.1.0"
