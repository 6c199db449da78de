"""Page ranking for mixed keyword+formula queries.

Three methods share one entry point, rank_pages:

  * formula2vec: every query formula is matched against every page formula by
    cosine of their vectors; a page scores the mean over its formulae, and the
    query scores the mean of those means.  Pages without formulae get a fixed
    floor of -1, below any achievable cosine mean.
  * lm: Dirichlet-smoothed query likelihood over page text,
    p(w|d) = (tf(w,d) + mu * p(w|C)) / (|d| + mu), summed as log probabilities.
  * combined: both raw score sets are min-max normalized over the candidate
    set, then merged as C = (F + alpha * T) / (1 + alpha).

Formula vectors come from the trained table when the formula was part of the
training corpus and are inferred (deterministically, seeded by content)
otherwise, so unfiltered page formulae and unseen query formulae still match.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .analysis import cosine
from .corpus import Collection, Page, Query
from .embeddings import EmbeddingTable, Mode, infer_vector
from .errors import (
    MalformedRecord,
    NegativeAlpha,
    NoQueryFormulae,
    UnknownPage,
    UnknownTokensOnly,
)
from .tokenizer import TokenizedFormula

TEXTINDEX_HEADER = "MATHEMB-TEXTINDEX v1"
NO_FORMULA_FLOOR = -1.0
DEFAULT_MU = 2000.0
DEFAULT_ALPHA = 4.0
DEFAULT_INFER_STEPS = 50


class RankMethod(Enum):
    FORMULA2VEC = "formula2vec"
    LM = "lm"
    COMBINED = "combined"


# ---------------------------------------------------------------------------
# text side


@dataclass
class TextIndex:
    """Term statistics backing the smoothed query-likelihood model."""

    page_tf: dict[str, Counter]
    page_len: dict[str, int]
    coll_tf: Counter
    coll_len: int
    mu: float = DEFAULT_MU

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be > 0")

    @classmethod
    def build(cls, collection: Collection, mu: float = DEFAULT_MU) -> "TextIndex":
        page_tf: dict[str, Counter] = {}
        page_len: dict[str, int] = {}
        coll_tf: Counter = Counter()
        for p in collection.pages:
            tf = Counter(p.text_terms)
            page_tf[p.page_id] = tf
            page_len[p.page_id] = len(p.text_terms)
            coll_tf.update(tf)
        return cls(page_tf, page_len, coll_tf, sum(page_len.values()), mu)

    def save(self, path, meta: dict | None = None) -> None:
        lines = [TEXTINDEX_HEADER]
        if meta:
            lines.append("# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta)))
        lines.append(json.dumps(
            {"collection_length": self.coll_len, "mu": self.mu, "pages": len(self.page_tf)},
            sort_keys=True, separators=(",", ":")))
        for page_id in self.page_tf:
            lines.append(json.dumps(
                {"page_id": page_id, "length": self.page_len[page_id],
                 "tf": dict(sorted(self.page_tf[page_id].items()))},
                sort_keys=True, separators=(",", ":")))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "TextIndex":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if header != TEXTINDEX_HEADER:
                raise MalformedRecord(f"{path}: expected header {TEXTINDEX_HEADER!r}")
            stats = None
            page_tf: dict[str, Counter] = {}
            page_len: dict[str, int] = {}
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                rec = json.loads(line)
                if stats is None:
                    stats = rec
                    continue
                page_tf[rec["page_id"]] = Counter(rec["tf"])
                page_len[rec["page_id"]] = int(rec["length"])
        if stats is None:
            raise MalformedRecord(f"{path}: missing collection statistics line")
        coll_tf = Counter()
        for tf in page_tf.values():
            coll_tf.update(tf)
        return cls(page_tf, page_len, coll_tf, int(stats["collection_length"]),
                   float(stats["mu"]))


def lm_score(keywords, page_id: str, index: TextIndex, mu: float | None = None) -> float:
    """Dirichlet-smoothed log query likelihood of a page.

    Terms absent from the whole collection are skipped (contribute 0); an
    empty keyword list scores 0 for every page.
    """
    if page_id not in index.page_tf:
        raise UnknownPage(page_id)
    mu = index.mu if mu is None else mu
    if mu <= 0:
        raise ValueError("mu must be > 0")
    tf = index.page_tf[page_id]
    length = index.page_len[page_id]
    score = 0.0
    for w in keywords:
        cf = index.coll_tf.get(w, 0)
        if cf == 0:
            continue
        p_coll = cf / index.coll_len
        score += math.log((tf.get(w, 0) + mu * p_coll) / (length + mu))
    return score


# ---------------------------------------------------------------------------
# formula side


def _content_seed(base_seed: int, formula: TokenizedFormula) -> int:
    digest = hashlib.sha256(
        f"{base_seed}|{' '.join(formula.surfaces)}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class FormulaVectorProvider:
    """Resolves a formula to its vector: trained row if present, else a
    cached, content-seeded inference."""

    table: EmbeddingTable
    infer_steps: int = DEFAULT_INFER_STEPS
    infer_lr: float | None = None
    base_seed: int | None = None
    _cache: dict[str, np.ndarray | None] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.table.config.mode is not Mode.FORMULA2VEC:
            raise ValueError("provider needs a table trained in formula2vec mode")
        if self.infer_lr is None:
            self.infer_lr = self.table.config.lr_start
        if self.base_seed is None:
            self.base_seed = self.table.config.seed

    def vector_for(self, formula: TokenizedFormula) -> np.ndarray | None:
        trained = self.table.formula_vector(formula.id)
        if trained is not None:
            return trained
        key = " ".join(formula.surfaces)
        if key not in self._cache:
            try:
                vec = infer_vector(formula.tokens, self.table, steps=self.infer_steps,
                                   lr=self.infer_lr, seed=_content_seed(self.base_seed, formula))
            except UnknownTokensOnly:
                vec = None
            self._cache[key] = vec
        return self._cache[key]


def formula_page_score(query: Query, page: Page, provider: FormulaVectorProvider,
                       collection: Collection) -> float:
    """Mean over query formulae of the page's mean formula cosine.

    Page formulae that cannot be resolved to a vector (all tokens unknown)
    drop out of the page mean; a page with no resolvable formula scores the
    -1 floor.  A query formula that cannot be resolved is an error.
    """
    if not query.formulae:
        raise NoQueryFormulae(query.query_id)
    page_vecs = []
    for fid in page.formula_ids:
        vec = provider.vector_for(collection.formulas[fid])
        if vec is not None:
            page_vecs.append(vec)
    if not page_vecs:
        return NO_FORMULA_FLOOR
    total = 0.0
    for qf in query.formulae:
        qvec = provider.vector_for(qf)
        if qvec is None:
            raise UnknownTokensOnly(f"query formula {qf.id} has no known tokens")
        p_simi = sum(cosine(qvec, pv) for pv in page_vecs) / len(page_vecs)
        total += p_simi
    return total / len(query.formulae)


def combined_score(f_norm: float, t_norm: float, alpha: float) -> float:
    """C = (F + alpha*T) / (1 + alpha) over normalized scores."""
    if alpha < 0:
        raise NegativeAlpha(f"alpha={alpha}")
    return (f_norm + alpha * t_norm) / (1.0 + alpha)


# ---------------------------------------------------------------------------
# ranking


@dataclass
class PageScore:
    page_id: str
    F: float
    T: float
    C: float


@dataclass
class RankedList:
    query_id: str
    entries: list[PageScore]   # descending by C, ties by page_id

    def page_ids(self) -> list[str]:
        return [e.page_id for e in self.entries]


def _minmax(raw: dict[str, float]) -> dict[str, float]:
    lo = min(raw.values())
    hi = max(raw.values())
    if hi == lo:
        return {k: 0.0 for k in raw}
    span = hi - lo
    return {k: (v - lo) / span for k, v in raw.items()}


def rank_pages(query: Query, collection: Collection, method: RankMethod,
               provider: FormulaVectorProvider | None = None,
               index: TextIndex | None = None,
               alpha: float = DEFAULT_ALPHA, mu: float | None = None) -> RankedList:
    """Score every page in the collection and sort descending.

    For single-signal methods the combined field C mirrors the active raw
    score; for COMBINED, F and T are the min-max normalized scores and
    C = (F + alpha*T)/(1+alpha) exactly.
    """
    if method in (RankMethod.FORMULA2VEC, RankMethod.COMBINED) and provider is None:
        raise ValueError(f"{method.value} ranking needs formula vectors")
    if method in (RankMethod.LM, RankMethod.COMBINED) and index is None:
        raise ValueError(f"{method.value} ranking needs a text index")
    if alpha < 0:
        raise NegativeAlpha(f"alpha={alpha}")

    raw_f: dict[str, float] = {}
    raw_t: dict[str, float] = {}
    if method in (RankMethod.FORMULA2VEC, RankMethod.COMBINED):
        for page in collection.pages:
            raw_f[page.page_id] = formula_page_score(query, page, provider, collection)
    if method in (RankMethod.LM, RankMethod.COMBINED):
        for page in collection.pages:
            raw_t[page.page_id] = lm_score(query.keywords, page.page_id, index, mu=mu)

    entries = []
    if method is RankMethod.FORMULA2VEC:
        entries = [PageScore(pid, f, 0.0, f) for pid, f in raw_f.items()]
    elif method is RankMethod.LM:
        entries = [PageScore(pid, 0.0, t, t) for pid, t in raw_t.items()]
    else:
        f_norm = _minmax(raw_f)
        t_norm = _minmax(raw_t)
        entries = [
            PageScore(pid, f_norm[pid], t_norm[pid],
                      combined_score(f_norm[pid], t_norm[pid], alpha))
            for pid in raw_f
        ]
    entries.sort(key=lambda e: (-e.C, e.page_id))
    return RankedList(query.query_id, entries)


def write_run(ranked_lists, path, tag: str = "mathemb", top: int = 1000,
              meta: dict | None = None) -> None:
    """TREC run format: query_id Q0 page_id rank score tag."""
    lines = []
    if meta:
        lines.append("# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta)))
    for rl in ranked_lists:
        for rank, entry in enumerate(rl.entries[:top], start=1):
            lines.append(f"{rl.query_id} Q0 {entry.page_id} {rank} {entry.C:.6f} {tag}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
