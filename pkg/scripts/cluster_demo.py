#!/usr/bin/env python3
"""Neighbor-table demo on a synthetic two-cluster symbol corpus.

Generates formulae whose symbols come from either a trigonometric pool or a
Greek-letter pool (plus shared glue symbols), trains symbol vectors, and
prints the nearest neighbors of every pool symbol.  With clean co-occurrence
structure the top neighbors of each symbol come from its own pool.

Usage: python scripts/cluster_demo.py [--dim N] [--epochs N] [--seed N] [--k N]
"""

import argparse
import pathlib
import sys

import numpy as np

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from mathemb.analysis import nearest_neighbors  # noqa: E402
from mathemb.corpus import build_vocabulary  # noqa: E402
from mathemb.embeddings import Mode, TrainingConfig, train_symbol2vec  # noqa: E402
from mathemb.tokenizer import TokenizedFormula, tokenize  # noqa: E402

TRIG = ["\\sin", "\\cos", "\\tan", "\\cot", "\\sec", "\\csc"]
GREEK = ["\\alpha", "\\beta", "\\gamma", "\\delta", "\\epsilon", "\\mu"]
GLUE = ["+", "=", "1", "2"]


def make_corpus(rng, n_formulas=60, length=9):
    formulas = []
    for i in range(n_formulas):
        pool = TRIG if i % 2 == 0 else GREEK
        toks = [pool[rng.integers(len(pool))] if rng.random() < 0.7
                else GLUE[rng.integers(len(GLUE))] for _ in range(length)]
        formulas.append(TokenizedFormula(f"s{i}", tokenize(" ".join(toks))))
    return formulas


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=100)
    ap.add_argument("--epochs", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--k", type=int, default=8)
    args = ap.parse_args()

    corpus = make_corpus(np.random.default_rng(1234))
    vocab = build_vocabulary(corpus)
    cfg = TrainingConfig(dim=args.dim, window=5, negatives=5, epochs=args.epochs,
                         lr_start=0.05, lr_end=0.0001, seed=args.seed,
                         mode=Mode.SYMBOL2VEC)
    table = train_symbol2vec(corpus, vocab, cfg)

    print(f"corpus: {len(corpus)} formulae, vocabulary {len(vocab)} symbols, "
          f"dim {args.dim}, {args.epochs} epochs, seed {args.seed}\n")
    width = max(len(s) for s in TRIG + GREEK)
    for pool_name, pool in (("trig", TRIG), ("greek", GREEK)):
        print(f"--- {pool_name} pool ---")
        for probe in pool:
            nl = nearest_neighbors(table, probe, args.k)
            row = "  ".join(f"{s}({c:.2f})" for s, c in nl.neighbors)
            print(f"{probe:<{width}}  {row}")
        print()


if __name__ == "__main__":
    main()
