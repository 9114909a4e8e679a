import importlib.util
from pathlib import Path

from hybridel.kb_store import EntityStore
from hybridel.sparse import build_alias_table, normalize_surface
from hybridel.synthetic import make_corpus, make_disjoint_corpus, make_shared_short_corpus

ROOT = Path(__file__).resolve().parent.parent


def _load_script(name):
    spec = importlib.util.spec_from_file_location(name, ROOT / "scripts" / f"{name}.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_bundled_fixtures_are_current(tmp_path):
    mod = _load_script("make_fixtures")
    for name in mod.CORPORA:
        mod.write_fixture(name, tmp_path)
        for f in sorted((tmp_path / name).iterdir()):
            assert f.read_bytes() == (ROOT / "fixtures" / name / f.name).read_bytes(), f"{name}/{f.name}"


def test_generators_are_deterministic():
    assert make_corpus(3, 40, 20).dataset == make_corpus(3, 40, 20).dataset
    assert make_corpus(3, 40, 20).dataset != make_corpus(4, 40, 20).dataset


def test_disjoint_corpus_kinds():
    c = make_disjoint_corpus(0, 100, 40)
    store = EntityStore({e.id: e for e in c.entities})
    table = build_alias_table(store, c.alias_counts)
    c.dataset.validate()
    for span in c.dataset.spans:
        kind = c.kinds[span.key]
        key = normalize_surface(span.surface)
        if kind == "alias":
            assert span.gold_ids[0] in {e.entity_id for e in table.get(key)}
        else:
            assert kind == "misspell" and key not in table


def test_shared_short_descriptions():
    c = make_shared_short_corpus(0, 60, 30)
    assert {e.short_description for e in c.entities} == {"species of bird"}
    assert len({e.long_description for e in c.entities}) == 60
    assert all(c.kinds[s.key] == "first" for s in c.dataset.spans)


def test_convert_tweetnerd_script(tmp_path, monkeypatch, capsys):
    (tmp_path / "texts.jsonl").write_text('{"tweet_id": "100", "text": "Liam is a gr8 ML Researcher"}\n')
    (tmp_path / "a.tsv").write_text("id\tphrase\tstart\tend\tentityId\tscore\n100\tLiam\t0\t4\tQ1\t3\n")
    (tmp_path / "n.tsv").write_text("100\tLiam is\t0\t7\tQ1\t3\n")
    mod = _load_script("convert_tweetnerd")
    monkeypatch.setattr("sys.argv", ["x", "--texts", str(tmp_path / "texts.jsonl"),
                                     "--split", f"academic={tmp_path / 'a.tsv'}",
                                     "--ner", f"{tmp_path / 'n.tsv'}:academic"])
    assert mod.main() == 0
    from hybridel.evaluation import load_dataset

    ds = load_dataset(capsys.readouterr().out.splitlines())
    assert [s.source for s in ds.spans] == ["gold", "ner"] and ds.split_of == {"100": "academic"}
