#!/usr/bin/env python3
"""Run the whole retrieval pipeline on the bundled fixture corpus.

Ingests the collection, filters it, trains both embedding models, builds the
text index, searches with all three ranking methods, evaluates each run, and
produces the dimension and alpha sweep tables.  All artifacts land in the
output directory (default ./out).

Usage: python scripts/run_pipeline.py [--out DIR] [--seed N] [--dim N]
       [--epochs N] [--lr-start F]
"""

import argparse
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from mathemb.cli import main as mathemb  # noqa: E402

FIXTURE = ROOT / "data" / "fixture"


def run(argv):
    print("$ mathemb " + " ".join(argv))
    code = mathemb(argv)
    if code != 0:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--dim", type=int, default=96,
                    help="formula vector dimension (96 suits the tiny fixture; "
                         "use 300 for larger corpora)")
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--lr-start", type=float, default=0.1)
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store = out / "collection.store"
    train = out / "train.corpus"
    sym = out / "sym"
    f2v = out / "f2v"
    index = out / "text.index"
    collection = str(FIXTURE / "collection.jsonl")
    queries = str(FIXTURE / "queries.jsonl")
    qrels = str(FIXTURE / "qrels.txt")
    seed = str(args.seed)

    run(["ingest", "--collection", collection, "--out", str(store)])
    run(["filter", "--store", str(store), "--out", str(train)])
    run(["train-symbol2vec", "--corpus", str(train), "--out", str(sym),
         "--dim", "100", "--epochs", "20", "--lr-start", "0.05", "--seed", seed])
    run(["train-formula2vec", "--corpus", str(train), "--out", str(f2v),
         "--dim", str(args.dim), "--epochs", str(args.epochs),
         "--lr-start", str(args.lr_start), "--seed", seed])
    run(["neighbors", "--model", str(sym), "--k", "8",
         "--out", str(out / "neighbors.tsv")])
    run(["pca", "--model", str(sym), "--out", str(out / "pca.tsv")])
    run(["index-text", "--store", str(store), "--out", str(index), "--mu", "2000"])

    for method in ("formula2vec", "lm", "combined"):
        run_file = out / f"{method}.run"
        run(["search", "--store", str(store), "--queries", queries,
             "--method", method, "--model", str(f2v), "--index", str(index),
             "--alpha", "4", "--mu", "2000", "--out", str(run_file)])
        run(["evaluate", "--run", str(run_file), "--qrels", qrels,
             "--out", str(out / f"{method}.report.tsv")])

    sweep_common = ["--store", str(store), "--corpus", str(train),
                    "--queries", queries, "--qrels", qrels,
                    "--dim", str(args.dim), "--epochs", str(args.epochs),
                    "--lr-start", str(args.lr_start), "--seed", seed]
    run(["sweep", "--axis", "dimension", "--values", "10,50,100", *sweep_common,
         "--out", str(out / "sweep_dimension.tsv")])
    run(["sweep", "--axis", "alpha", "--values", "0,1,4,1e6", *sweep_common,
         "--out", str(out / "sweep_alpha.tsv")])

    print("\n=== mean metrics per ranking method ===")
    for method in ("formula2vec", "lm", "combined"):
        lines = (out / f"{method}.report.tsv").read_text().splitlines()
        header = next(ln for ln in lines if ln.startswith("query_id"))
        means = next(ln for ln in lines if ln.startswith("ALL"))
        print(f"[{method}]")
        print("  " + header)
        print("  " + means)
    print(f"\nartifacts in {out}/")


if __name__ == "__main__":
    main()
