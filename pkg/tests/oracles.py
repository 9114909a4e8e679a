"""Independent reference computations used by several test modules."""

import math
import re
from collections import Counter

_WORD = re.compile(r"[^\W_]+")


def tokens(text):
    return _WORD.findall(text.lower())


def bm25_recount(docs, query, k1=0.9, b=0.4):
    """Score every document by recounting tokens from scratch; no index structures."""
    toks = {d: tokens(t) for d, t in docs.items()}
    n = len(toks)
    avg = sum(len(t) for t in toks.values()) / n
    out = {}
    for d, t in toks.items():
        counts = Counter(t)
        s = 0.0
        for term in set(tokens(query)):
            tf = counts[term]
            if not tf:
                continue
            df = sum(1 for other in toks.values() if term in other)
            idf = math.log((n - df + 0.5) / (df + 0.5) + 1)
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(t) / avg))
        if s > 0:
            out[d] = s
    return out


def top_k(scores, k):
    return sorted(scores.items(), key=lambda p: (-p[1], p[0]))[:k]
