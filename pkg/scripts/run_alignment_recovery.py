"""Compare stage-1 and stage-2 alignment F1 on synthetic documents with known links.

    python scripts/run_alignment_recovery.py --seeds 0 1 2 3 4
"""

import argparse
import time

import numpy as np

from grc_embed.aligner import BilingualDictionary, embed_align, length_dict_align, link_f1
from grc_embed.synthetic import aligned_documents


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sentences", type=int, default=200)
    ap.add_argument("--merge", type=float, default=0.10)
    ap.add_argument("--delete", type=float, default=0.05)
    ap.add_argument("--noise", type=float, default=0.25, help="log-normal sigma of target length noise")
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    args = ap.parse_args()

    rows = []
    print(f"{'seed':>4} {'src':>4} {'tgt':>4} {'F1 length-dict':>15} {'F1 embed':>9} {'t1 (s)':>7} {'t2 (s)':>7}")
    for seed in args.seeds:
        docs = aligned_documents(args.sentences, args.merge, args.delete, length_noise=args.noise, seed=seed)
        t0 = time.perf_counter()
        f1 = link_f1(length_dict_align(docs.src, docs.tgt, BilingualDictionary()), docs.gold)
        t1 = time.perf_counter()
        f2 = link_f1(embed_align(docs.src, docs.tgt, docs.encoder), docs.gold)
        t2 = time.perf_counter()
        rows.append((f1, f2))
        print(f"{seed:>4} {len(docs.src):>4} {len(docs.tgt):>4} {f1:>15.3f} {f2:>9.3f} {t1 - t0:>7.2f} {t2 - t1:>7.2f}")
    mean = np.mean(rows, axis=0)
    print(f"mean {'':>9} {mean[0]:>15.3f} {mean[1]:>9.3f}")


if __name__ == "__main__":
    main()
