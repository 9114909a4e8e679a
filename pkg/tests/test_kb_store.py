import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridel.kb_store import (
    Entity,
    EntityStore,
    KBError,
    TypeFilter,
    UnknownEntityError,
    apply_type_filter,
    get_description,
    load_denylist,
    load_entities,
    write_entities,
)


def _line(**rec):
    return json.dumps(rec) + "\n"


def test_load_two_records():
    src = _line(id="Q1", title="One") + _line(id="Q2", title="Two", aliases=["2"])
    store = load_entities(io.StringIO(src))
    assert len(store) == 2
    assert store.get("Q2").aliases == ("2",)


def test_load_empty_stream():
    assert len(load_entities([])) == 0


def test_duplicate_id_is_named():
    src = [_line(id="Q1", title="a"), _line(id="Q1", title="b")]
    with pytest.raises(KBError, match="Q1"):
        load_entities(src)


def test_missing_title_reports_line():
    with pytest.raises(KBError, match="line 2"):
        load_entities([_line(id="Q1", title="a"), _line(id="Q2")])


def test_invalid_json_reports_line():
    with pytest.raises(KBError, match="line 1"):
        load_entities(["{not json\n"])


def test_aliases_deduplicated_after_normalization():
    e = Entity("Q1", "T", aliases=("Amber", " amber ", "AMBER", "Other"))
    assert e.aliases == ("Amber", "Other")


def test_negative_prior_rejected():
    with pytest.raises(KBError):
        Entity("Q1", "T", pagerank=-1.0)


def test_type_filter_drops_denied():
    store = EntityStore({
        "Q1": Entity("Q1", "Page", type_tags=("disambiguation_page",)),
        "Q2": Entity("Q2", "Person", type_tags=("human",)),
    })
    out = apply_type_filter(store, TypeFilter({"disambiguation_page"}))
    assert out.ids() == ["Q2"]
    assert len(store) == 2


def test_empty_denylist_is_identity(amber_store):
    assert apply_type_filter(amber_store, TypeFilter()) == amber_store


def test_denylist_file_comments():
    f = load_denylist(["# header\n", "Q4167410\n", "\n", "Q13406463  # lists\n"])
    assert f.denylist == {"Q4167410", "Q13406463"}


def test_get_description(amber_store):
    assert get_description(amber_store, "Q_bird1", "short") == "species of bird"
    assert get_description(EntityStore({"Q1": Entity("Q1", "T")}), "Q1", "long") == ""
    with pytest.raises(UnknownEntityError):
        get_description(amber_store, "Q999999", "long")


def test_write_then_load_round_trip(amber_store):
    buf = io.StringIO()
    write_entities(amber_store, buf)
    assert load_entities(buf.getvalue().splitlines()) == amber_store


_ids = st.sampled_from([f"Q{i}" for i in range(12)])
_tags = st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=3)


@st.composite
def stores(draw):
    ids = draw(st.sets(_ids, max_size=10))
    return EntityStore({i: Entity(i, f"title {i}", type_tags=tuple(draw(_tags))) for i in ids})


@given(stores(), st.sets(st.sampled_from(["a", "b", "c", "d"])))
def test_filter_shrinks_and_is_idempotent(store, deny):
    f = TypeFilter(deny)
    once = apply_type_filter(store, f)
    assert len(once) <= len(store)
    matched = any(not f.keeps(e) for e in store)
    assert (len(once) == len(store)) == (not matched)
    assert apply_type_filter(once, f) == once
    assert all(set(e.type_tags).isdisjoint(deny) for e in once)


@given(stores())
def test_load_is_deterministic(store):
    buf = io.StringIO()
    write_entities(store, buf)
    text = buf.getvalue()
    assert load_entities(text.splitlines()) == load_entities(text.splitlines()) == store
