"""Shared vocabulary types: queries, products, recommendations, sessions.

Every type has a canonical JSON form (``to_dict`` / ``from_dict``) used by the
HTTP service, the eval harness and the test fixtures. Value types are frozen;
``SessionState`` is the one mutable exception and is managed single-writer
(see its docstring).
"""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from typing import Optional

PRODUCT_SOURCES = ("web_search", "scrape", "model_knowledge")
MEDIA_TYPES = ("png", "jpeg", "webp")

# Magic-byte prefixes used to verify the declared media type.
_MAGIC = {
    "png": [b"\x89PNG\r\n\x1a\n"],
    "jpeg": [b"\xff\xd8\xff"],
}


class DomainError(ValueError):
    """Base for validation failures on domain values."""


class EmptyQuery(DomainError):
    """Query text empty after trimming and no image supplied."""


class UnsupportedMedia(DomainError):
    """Image payload does not match its declared media type."""


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


def normalize_name(name: str) -> str:
    """Lowercase and collapse internal whitespace; the product-identity key."""
    return re.sub(r"\s+", " ", name.strip()).lower()


def _require(cond: bool, exc: Exception) -> None:
    if not cond:
        raise exc


@dataclass(frozen=True)
class ImageAttachment:
    bytes: bytes
    media_type: str
    caption: Optional[str] = None

    def __post_init__(self):
        _require(len(self.bytes) > 0, DomainError("image payload is empty"))
        _require(
            self.media_type in MEDIA_TYPES,
            UnsupportedMedia(f"unsupported media type {self.media_type!r}"),
        )
        if not _magic_matches(self.bytes, self.media_type):
            raise UnsupportedMedia(
                f"payload does not look like {self.media_type} (magic-byte check failed)"
            )

    def to_dict(self) -> dict:
        return {
            "bytes": base64.b64encode(self.bytes).decode("ascii"),
            "media_type": self.media_type,
            "caption": self.caption,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ImageAttachment":
        return cls(
            bytes=base64.b64decode(d["bytes"]),
            media_type=d["media_type"],
            caption=d.get("caption"),
        )


def _magic_matches(payload: bytes, media_type: str) -> bool:
    if media_type == "webp":
        return payload[:4] == b"RIFF" and payload[8:12] == b"WEBP"
    return any(payload.startswith(m) for m in _MAGIC[media_type])


@dataclass(frozen=True)
class Query:
    text: str
    image: Optional[ImageAttachment] = None
    session_id: str = ""
    timestamp: datetime = field(default_factory=_utcnow)

    def __post_init__(self):
        # An image satisfies the non-empty-content rule for image-only queries.
        _require(
            self.text.strip() != "" or self.image is not None,
            EmptyQuery("query has neither text nor image"),
        )

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "image": self.image.to_dict() if self.image else None,
            "session_id": self.session_id,
            "timestamp": self.timestamp.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Query":
        return cls(
            text=d["text"],
            image=ImageAttachment.from_dict(d["image"]) if d.get("image") else None,
            session_id=d.get("session_id", ""),
            timestamp=datetime.fromisoformat(d["timestamp"]),
        )


def validate_query(
    raw_text: str,
    image: Optional[ImageAttachment] = None,
    *,
    session_id: str = "",
    timestamp: Optional[datetime] = None,
) -> Query:
    """Normalize raw user input into a Query (trimmed text, validated image).

    Raises EmptyQuery when the trimmed text is empty and no image is supplied.
    Image validation (magic bytes) happens in the ImageAttachment constructor,
    so a bad payload raises UnsupportedMedia before we get here.
    """
    text = raw_text.strip()
    if text == "" and image is None:
        raise EmptyQuery("query text is empty and no image was supplied")
    return Query(
        text=text,
        image=image,
        session_id=session_id,
        timestamp=timestamp or _utcnow(),
    )


@dataclass(frozen=True)
class Product:
    name: str
    brand: Optional[str] = None
    url: Optional[str] = None
    price: Optional[Decimal] = None
    currency: Optional[str] = None
    description: Optional[str] = None
    source: str = "model_knowledge"

    def __post_init__(self):
        _require(self.name.strip() != "", DomainError("product name is empty"))
        _require(self.source in PRODUCT_SOURCES, DomainError(f"bad source {self.source!r}"))
        if self.price is not None:
            _require(self.price >= 0, DomainError("price must be >= 0"))

    def identity(self) -> tuple:
        """Duplicate key: normalized name plus exact brand."""
        return (normalize_name(self.name), self.brand)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "brand": self.brand,
            "url": self.url,
            "price": str(self.price) if self.price is not None else None,
            "currency": self.currency,
            "description": self.description,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Product":
        price = d.get("price")
        try:
            price = Decimal(price) if price is not None else None
        except InvalidOperation as e:
            raise DomainError(f"bad price {price!r}") from e
        return cls(
            name=d["name"],
            brand=d.get("brand"),
            url=d.get("url"),
            price=price,
            currency=d.get("currency"),
            description=d.get("description"),
            source=d.get("source", "model_knowledge"),
        )


@dataclass(frozen=True)
class Recommendation:
    product: Product
    rank: int
    rationale: str = ""
    agent_id: str = ""

    def __post_init__(self):
        _require(self.rank >= 1, DomainError("rank must be >= 1"))

    def to_dict(self) -> dict:
        return {
            "product": self.product.to_dict(),
            "rank": self.rank,
            "rationale": self.rationale,
            "agent_id": self.agent_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Recommendation":
        return cls(
            product=Product.from_dict(d["product"]),
            rank=d["rank"],
            rationale=d.get("rationale", ""),
            agent_id=d.get("agent_id", ""),
        )


def check_rank_invariants(recs: list[Recommendation]) -> None:
    """Ranks within one result list must be unique and contiguous from 1."""
    ranks = sorted(r.rank for r in recs)
    if ranks != list(range(1, len(recs) + 1)):
        raise DomainError(f"ranks not contiguous from 1: {ranks}")


def renumber(recs: list[Recommendation]) -> list[Recommendation]:
    """Reassign contiguous ranks 1..n preserving list order."""
    return [
        Recommendation(product=r.product, rank=i, rationale=r.rationale, agent_id=r.agent_id)
        for i, r in enumerate(recs, start=1)
    ]


def dedupe_products(items: list[Product]) -> list[Product]:
    """Order-preserving dedupe on (normalized name, brand). Idempotent."""
    seen: set[tuple] = set()
    out = []
    for p in items:
        key = p.identity()
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out


@dataclass(frozen=True)
class MarketReport:
    topic: str
    summary: str
    sources: tuple[str, ...] = ()
    generated_at: datetime = field(default_factory=_utcnow)

    def __post_init__(self):
        _require(self.summary.strip() != "", DomainError("market summary is empty"))
        deduped = tuple(dict.fromkeys(self.sources))
        if deduped != tuple(self.sources):
            object.__setattr__(self, "sources", deduped)

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "summary": self.summary,
            "sources": list(self.sources),
            "generated_at": self.generated_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MarketReport":
        return cls(
            topic=d["topic"],
            summary=d["summary"],
            sources=tuple(d.get("sources", [])),
            generated_at=datetime.fromisoformat(d["generated_at"]),
        )


@dataclass
class FollowupQuestion:
    question_id: str
    text: str
    answered: bool = False
    answer: Optional[str] = None

    def __post_init__(self):
        _require(
            self.answered == (self.answer is not None),
            DomainError("answered flag must match presence of answer"),
        )

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "text": self.text,
            "answered": self.answered,
            "answer": self.answer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FollowupQuestion":
        return cls(
            question_id=d["question_id"],
            text=d["text"],
            answered=d.get("answered", False),
            answer=d.get("answer"),
        )


@dataclass(frozen=True)
class SessionTurn:
    query: Query
    recommendations: tuple[Recommendation, ...] = ()
    image_answer: Optional[str] = None
    market_report: Optional[MarketReport] = None
    trace_id: str = ""

    def __post_init__(self):
        _require(
            bool(self.recommendations) or self.image_answer is not None or self.market_report is not None,
            DomainError("turn must populate at least one of recommendations/image_answer/market_report"),
        )
        if self.recommendations:
            check_rank_invariants(list(self.recommendations))

    def to_dict(self) -> dict:
        return {
            "query": self.query.to_dict(),
            "recommendations": [r.to_dict() for r in self.recommendations],
            "image_answer": self.image_answer,
            "market_report": self.market_report.to_dict() if self.market_report else None,
            "trace_id": self.trace_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionTurn":
        return cls(
            query=Query.from_dict(d["query"]),
            recommendations=tuple(Recommendation.from_dict(r) for r in d.get("recommendations", [])),
            image_answer=d.get("image_answer"),
            market_report=MarketReport.from_dict(d["market_report"]) if d.get("market_report") else None,
            trace_id=d.get("trace_id", ""),
        )


@dataclass
class SessionState:
    """One live user conversation.

    Mutable, but single-writer: callers must serialize turn processing per
    session (the HTTP service holds a per-session lock). Turns are append-only
    via ``append_turn`` which enforces timestamp ordering.
    """

    session_id: str
    user_id: str
    turns: list[SessionTurn] = field(default_factory=list)
    pending_followups: list[FollowupQuestion] = field(default_factory=list)

    def append_turn(self, turn: SessionTurn) -> None:
        if self.turns and turn.query.timestamp < self.turns[-1].query.timestamp:
            raise DomainError("turn timestamps must be non-decreasing")
        self.turns.append(turn)

    def pop_followup(self, question_id: str) -> Optional[FollowupQuestion]:
        for i, q in enumerate(self.pending_followups):
            if q.question_id == question_id:
                return self.pending_followups.pop(i)
        return None

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "user_id": self.user_id,
            "turns": [t.to_dict() for t in self.turns],
            "pending_followups": [q.to_dict() for q in self.pending_followups],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionState":
        return cls(
            session_id=d["session_id"],
            user_id=d["user_id"],
            turns=[SessionTurn.from_dict(t) for t in d.get("turns", [])],
            pending_followups=[FollowupQuestion.from_dict(q) for q in d.get("pending_followups", [])],
        )
