"""Convert TweetNERD-style TSV annotations into the pipeline's dataset JSONL.

    python scripts/convert_tweetnerd.py --texts texts.jsonl \
        --split academic=academic.tsv --split ood=ood.tsv [--ner ner.tsv:academic] > dataset.jsonl

TSV columns: id, phrase, start, end, entityId[, score]. Tweet text is not
part of the TSV; supply it as JSONL lines {"tweet_id": ..., "text": ...}.
Tweets without text are skipped and counted on stderr.
"""

import argparse
import json
import sys

from hybridel.evaluation import Dataset, from_tweetnerd_tsv, write_dataset


def _pair(value: str, sep: str) -> tuple[str, str]:
    left, _, right = value.partition(sep)
    if not right:
        raise argparse.ArgumentTypeError(f"expected A{sep}B, got {value!r}")
    return left, right


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--texts", required=True)
    ap.add_argument("--split", action="append", default=[], type=lambda v: _pair(v, "="),
                    help="SPLIT=gold.tsv, repeatable")
    ap.add_argument("--ner", action="append", default=[], type=lambda v: _pair(v, ":"),
                    help="ner.tsv:SPLIT, repeatable")
    args = ap.parse_args()

    with open(args.texts, encoding="utf-8") as fh:
        texts = {str(r["tweet_id"]): r["text"] for r in map(json.loads, filter(str.strip, fh))}
    merged = Dataset()
    jobs = [(split, path, "gold") for split, path in args.split] + [(s, p, "ner") for p, s in args.ner]
    for split, path, source in jobs:
        with open(path, encoding="utf-8", newline="") as fh:
            part = from_tweetnerd_tsv(fh, texts, split, source)
        for tid, text in part.tweets.items():
            if merged.split_of.get(tid, split) != split:
                raise SystemExit(f"tweet {tid} appears in splits {merged.split_of[tid]} and {split}")
            merged.tweets[tid] = text
            merged.split_of[tid] = split
        merged.spans.extend(part.spans)
    merged.validate()
    write_dataset(sys.stdout, merged)
    print(f"{len(merged.tweets)} tweets, {len(merged.spans)} spans", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
