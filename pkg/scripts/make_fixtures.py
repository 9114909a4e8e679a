"""Write the bundled synthetic corpora and their run configs under fixtures/.

    python scripts/make_fixtures.py [--out fixtures]

fixtures/mixed         general corpus: all mention kinds, NER spans, denied pages
fixtures/disjoint      half the golds alias-only, half embedding-only
fixtures/shared_short  every entity shares one short description
"""

import argparse
import json
from pathlib import Path

from hybridel.synthetic import make_corpus, make_disjoint_corpus, make_shared_short_corpus

CORPORA = {
    "mixed": lambda: make_corpus(seed=0, n_entities=200, n_tweets=50),
    "disjoint": lambda: make_disjoint_corpus(seed=0, n_entities=200, n_tweets=60),
    "shared_short": lambda: make_shared_short_corpus(seed=0, n_entities=150, n_tweets=120),
}


def write_fixture(name: str, root: Path) -> Path:
    d = root / name
    paths = CORPORA[name]().write(d)
    cfg = {
        "paths": {
            "entities": paths["entities"].name,
            "denylist": paths["denylist"].name,
            "alias_counts": paths["alias_counts"].name,
            "dataset": paths["dataset"].name,
            "output_dir": f"../../runs/{name}",
        },
    }
    out = d / "config.json"
    out.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "fixtures"))
    args = ap.parse_args()
    for name in CORPORA:
        print(write_fixture(name, Path(args.out)))


if __name__ == "__main__":
    main()
