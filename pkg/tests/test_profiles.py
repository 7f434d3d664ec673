from datetime import datetime, timezone
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentrec.domain import Product, Recommendation
from agentrec.profiles import (
    InteractionEvent,
    ProfileStore,
    UnknownUser,
    UserProfile,
    preference_score,
    rerank_with_profile,
)

T0 = datetime(2024, 5, 1, tzinfo=timezone.utc)


def rec(name, brand=None, price=None, rank=1):
    return Recommendation(
        product=Product(name=name, brand=brand, price=Decimal(price) if price else None),
        rank=rank,
    )


def ranked(*specs):
    return [rec(name, brand, price, rank=i) for i, (name, brand, price) in enumerate(specs, 1)]


def test_upsert_and_read_roundtrip(tmp_path):
    store = ProfileStore(tmp_path)
    profile = UserProfile(
        user_id="u1",
        preferred_brands=("A", "B"),
        price_ceiling=Decimal("100"),
        interests=("running",),
    )
    store.upsert_profile(profile)
    assert store.get("u1") == profile


def test_upsert_last_write_wins(tmp_path):
    store = ProfileStore(tmp_path)
    store.upsert_profile(UserProfile(user_id="u1", interests=("a",)))
    store.upsert_profile(UserProfile(user_id="u1", interests=("b",)))
    assert store.get("u1").interests == ("b",)


def test_empty_user_id_rejected():
    with pytest.raises(ValueError):
        UserProfile(user_id="")


def test_record_interaction_appends(tmp_path):
    store = ProfileStore(tmp_path)
    store.upsert_profile(UserProfile(user_id="u1"))
    store.record_interaction("u1", InteractionEvent("purchase", "Shoe X", T0))
    assert len(store.get("u1").history) == 1


def test_record_interaction_unknown_user(tmp_path):
    with pytest.raises(UnknownUser):
        ProfileStore(tmp_path).record_interaction("ghost", InteractionEvent("query", "x", T0))


def test_same_timestamp_events_keep_insertion_order(tmp_path):
    store = ProfileStore(tmp_path)
    store.upsert_profile(UserProfile(user_id="u1"))
    store.record_interaction("u1", InteractionEvent("click", "first", T0))
    store.record_interaction("u1", InteractionEvent("click", "second", T0))
    history = store.get("u1").history
    assert [e.payload for e in history] == ["first", "second"]


def test_history_ordering_enforced():
    later = InteractionEvent("query", "x", T0)
    earlier = InteractionEvent("query", "y", datetime(2024, 1, 1, tzinfo=timezone.utc))
    with pytest.raises(ValueError):
        UserProfile(user_id="u", history=(later, earlier))


def test_profile_lists_deduplicated():
    p = UserProfile(user_id="u", preferred_brands=("A", "A", "B"), interests=("x", "x"))
    assert p.preferred_brands == ("A", "B")
    assert p.interests == ("x",)


def test_hostile_user_id_is_hashed(tmp_path):
    store = ProfileStore(tmp_path)
    store.upsert_profile(UserProfile(user_id="../escape"))
    assert store.get("../escape") is not None
    assert all(p.parent == store.root for p in store.root.glob("*.json"))


def test_rerank_empty_profile_is_identity():
    recs = ranked(("Y", "B", None), ("X", "A", None))
    out = rerank_with_profile(recs, UserProfile(user_id="u"))
    assert [r.product.name for r in out] == ["Y", "X"]
    assert [r.rank for r in out] == [1, 2]


def test_rerank_preferred_brand_first():
    recs = ranked(("Y", "B", None), ("X", "A", None))
    out = rerank_with_profile(recs, UserProfile(user_id="u", preferred_brands=("A",)))
    assert [r.product.name for r in out] == ["X", "Y"]
    assert [r.rank for r in out] == [1, 2]


def test_rerank_brand_and_ceiling_scores():
    profile = UserProfile(user_id="u", preferred_brands=("A",), price_ceiling=Decimal("100"))
    recs = ranked(("P1", "A", "120"), ("P2", "B", "90"), ("P3", "B", "150"))
    assert [preference_score(r, profile) for r in recs] == [2, 1, 0]
    out = rerank_with_profile(recs, profile)
    assert [r.product.name for r in out] == ["P1", "P2", "P3"]


def test_rerank_ceiling_outranks_nothing_but_brand_wins():
    profile = UserProfile(user_id="u", preferred_brands=("A",), price_ceiling=Decimal("100"))
    recs = ranked(("Cheap", "B", "50"), ("Branded", "A", "500"))
    out = rerank_with_profile(recs, profile)
    assert [r.product.name for r in out] == ["Branded", "Cheap"]


@settings(max_examples=500, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(0, 5),
            st.sampled_from(["A", "B", "C", None]),
            st.sampled_from([None, "50", "150"]),
        ),
        max_size=12,
    )
)
def test_rerank_is_stable_permutation(items):
    recs = [
        rec(f"p{i}-{name_suffix}", brand, price, rank=i + 1)
        for i, (name_suffix, brand, price) in enumerate(items)
    ]
    profile = UserProfile(user_id="u", preferred_brands=("A",), price_ceiling=Decimal("100"))
    out = rerank_with_profile(recs, profile)
    # Permutation: same multiset of products.
    assert sorted(r.product.name for r in out) == sorted(r.product.name for r in recs)
    # Contiguous ranks.
    assert [r.rank for r in out] == list(range(1, len(out) + 1))
    # Stability: equal scores preserve input relative order.
    scores = [preference_score(r, profile) for r in recs]
    for s in set(scores):
        original = [r.product.name for r, sc in zip(recs, scores) if sc == s]
        reordered = [r.product.name for r in out if preference_score(r, profile) == s]
        assert original == reordered


def test_export_all(tmp_path):
    store = ProfileStore(tmp_path)
    store.upsert_profile(UserProfile(user_id="a"))
    store.upsert_profile(UserProfile(user_id="b"))
    exported = store.export_all()
    assert {p["user_id"] for p in exported} == {"a", "b"}
