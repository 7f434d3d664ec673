"""Persistent user profiles and deterministic preference re-ranking.

One JSON document per user under ``profiles/<user_id>.json`` with the event
log embedded; no database. Writes to one user's profile are serialized with
a per-user lock; different users proceed independently.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime
from decimal import Decimal
from pathlib import Path
from typing import Optional

from .clock import SYSTEM_CLOCK
from .domain import Recommendation, renumber

EVENT_KINDS = ("query", "click", "purchase", "followup_answer")

BRAND_WEIGHT = 2
PRICE_WEIGHT = 1


class ProfileError(Exception):
    pass


class UnknownUser(ProfileError):
    pass


class StorageError(ProfileError):
    pass


@dataclass(frozen=True)
class InteractionEvent:
    kind: str
    payload: str
    timestamp: datetime

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"bad event kind {self.kind!r}")
        if not self.payload:
            raise ValueError("event payload must be non-empty")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "payload": self.payload, "timestamp": self.timestamp.isoformat()}

    @classmethod
    def from_dict(cls, d: dict) -> "InteractionEvent":
        return cls(kind=d["kind"], payload=d["payload"], timestamp=datetime.fromisoformat(d["timestamp"]))


def _dedupe(values: list[str]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(values))


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    preferred_brands: tuple[str, ...] = ()
    price_ceiling: Optional[Decimal] = None
    interests: tuple[str, ...] = ()
    history: tuple[InteractionEvent, ...] = ()

    def __post_init__(self):
        if not self.user_id:
            raise ValueError("user_id must be non-empty")
        object.__setattr__(self, "preferred_brands", _dedupe(list(self.preferred_brands)))
        object.__setattr__(self, "interests", _dedupe(list(self.interests)))
        stamps = [e.timestamp for e in self.history]
        if any(b < a for a, b in zip(stamps, stamps[1:])):
            raise ValueError("history timestamps must be non-decreasing")

    def to_dict(self) -> dict:
        return {
            "user_id": self.user_id,
            "preferred_brands": list(self.preferred_brands),
            "price_ceiling": str(self.price_ceiling) if self.price_ceiling is not None else None,
            "interests": list(self.interests),
            "history": [e.to_dict() for e in self.history],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UserProfile":
        ceiling = d.get("price_ceiling")
        return cls(
            user_id=d["user_id"],
            preferred_brands=tuple(d.get("preferred_brands", [])),
            price_ceiling=Decimal(ceiling) if ceiling is not None else None,
            interests=tuple(d.get("interests", [])),
            history=tuple(InteractionEvent.from_dict(e) for e in d.get("history", [])),
        )


class ProfileStore:
    def __init__(self, root: Path | str, clock=SYSTEM_CLOCK):
        self.root = Path(root)
        self.clock = clock
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, user_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(user_id, threading.Lock())

    def _path(self, user_id: str) -> Path:
        # Opaque ids may contain path-hostile characters; hash those.
        if re.fullmatch(r"[A-Za-z0-9._-]+", user_id):
            name = user_id
        else:
            import hashlib

            name = hashlib.sha256(user_id.encode("utf-8")).hexdigest()
        return self.root / f"{name}.json"

    def upsert_profile(self, profile: UserProfile) -> None:
        """Durable last-write-wins upsert (atomic replace via temp file)."""
        with self._lock_for(profile.user_id):
            self._write(profile)

    def _write(self, profile: UserProfile) -> None:
        path = self._path(profile.user_id)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(profile.to_dict(), indent=2) + "\n", encoding="utf-8")
            tmp.replace(path)
        except OSError as e:
            raise StorageError(f"cannot write profile for {profile.user_id!r}: {e}") from e

    def get(self, user_id: str) -> Optional[UserProfile]:
        path = self._path(user_id)
        if not path.exists():
            return None
        return UserProfile.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def record_interaction(self, user_id: str, event: InteractionEvent) -> None:
        """Append one event to an existing profile, preserving order."""
        with self._lock_for(user_id):
            profile = self.get(user_id)
            if profile is None:
                raise UnknownUser(user_id)
            self._write(replace(profile, history=profile.history + (event,)))

    def export_all(self) -> list[dict]:
        """All profiles as JSON objects, ordered by file name."""
        if not self.root.exists():
            return []
        out = []
        for path in sorted(self.root.glob("*.json")):
            out.append(json.loads(path.read_text(encoding="utf-8")))
        return out


def preference_score(rec: Recommendation, profile: UserProfile) -> int:
    """2 for a preferred brand, plus 1 for a price at or under the ceiling."""
    score = 0
    if rec.product.brand is not None and rec.product.brand in profile.preferred_brands:
        score += BRAND_WEIGHT
    if (
        profile.price_ceiling is not None
        and rec.product.price is not None
        and rec.product.price <= profile.price_ceiling
    ):
        score += PRICE_WEIGHT
    return score


def rerank_with_profile(recs: list[Recommendation], profile: UserProfile) -> list[Recommendation]:
    """Stable sort by descending preference score; ranks renumbered from 1.

    Ties keep their input order, so an empty profile returns the input order.
    """
    ordered = sorted(recs, key=lambda r: -preference_score(r, profile))
    return renumber(ordered)
