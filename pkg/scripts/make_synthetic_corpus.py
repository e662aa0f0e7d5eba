"""Write a small synthetic workspace for trying the CLI end to end.

Creates, under OUT:
  pairs.tsv, teacher.embs(+.ids), config.json   cipher bitext and frozen teacher
  src.tsv, tgt.tsv, oracle.embs(+.ids)          sentence files with oracle embeddings
  gold_alignment.tsv                            the true links
  sts.tsv                                       STS items with gold = oracle cosine
"""

import argparse
import json
from pathlib import Path

import numpy as np

from grc_embed.aligner import AlignmentLink, write_alignment
from grc_embed.embed_core import EmbeddingStore, store_write
from grc_embed.synthetic import aligned_documents, cipher_bitext, random_teacher
from grc_embed.text_prep import write_pairs, write_sentences


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--sentences", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = args.out
    out.mkdir(parents=True, exist_ok=True)

    pairs = cipher_bitext(args.pairs, seed=args.seed)
    write_pairs(out / "pairs.tsv", pairs)
    teacher = random_teacher(seed=args.seed + 1)
    targets = sorted({p.target for p in pairs})
    store_write(EmbeddingStore.from_texts(teacher, targets, targets), out / "teacher.embs")

    docs = aligned_documents(args.sentences, seed=args.seed)
    write_sentences(out / "src.tsv", docs.src)
    write_sentences(out / "tgt.tsv", docs.tgt)
    texts = [s.text for s in docs.src + docs.tgt]
    store_write(EmbeddingStore.from_texts(docs.encoder, texts, texts), out / "oracle.embs")
    write_alignment(out / "gold_alignment.tsv", [AlignmentLink(s, t, 1.0) for s, t in docs.gold], "src", "tgt")

    # STS items over the source sentences; gold is the oracle cosine mapped to [0, 1]
    rng = np.random.default_rng(args.seed)
    lines = ["a_grc\ta_en\tb_grc\tb_en\tgold"]
    for _ in range(50):
        i, j = rng.choice(len(docs.src), size=2, replace=False)
        a, b = docs.src[i].text, docs.src[j].text
        u, v = docs.encoder.encode(a), docs.encoder.encode(b)
        gold = (1 + float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))) / 2
        lines.append(f"{a}\t{a}\t{b}\t{b}\t{gold!r}")
    (out / "sts.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    cfg = {
        "seed": args.seed,
        "out_dir": "out",
        "phases": [{"dataset": "pairs.tsv", "epochs": 15}],
        "holdout_size": 200,
        "teacher_store": "teacher.embs",
        "student_dim_in": 64,
        "train": {"objective": "distill"},
    }
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    print(f"wrote synthetic workspace to {out}")


if __name__ == "__main__":
    main()
