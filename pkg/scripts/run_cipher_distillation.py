"""Train a student on the synthetic cipher bitext and report holdout metrics.

    python scripts/run_cipher_distillation.py --objective distill --epochs 15
"""

import argparse
import time

from grc_embed.student import build_vocab, init_params
from grc_embed.synthetic import cipher_bitext, random_teacher
from grc_embed.trainer import TrainConfig, format_log, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--objective", choices=["distill", "simcse"], default="distill")
    ap.add_argument("--pairs", type=int, default=2000)
    ap.add_argument("--holdout", type=int, default=200)
    ap.add_argument("--vocab", type=int, default=200)
    ap.add_argument("--dim", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--lr", type=float, default=1e-2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--log", help="write the training log TSV here")
    args = ap.parse_args()

    pairs = cipher_bitext(args.pairs, vocab_size=args.vocab, seed=args.seed)
    holdout, data = pairs[:args.holdout], pairs[args.holdout:]
    teacher = random_teacher(args.vocab, args.dim, seed=args.seed + 1) if args.objective == "distill" else None
    vocab = build_vocab([t for p in data for t in (p.source, p.target)], 50_000, 64)
    params = init_params(vocab, 64, args.dim, seed=args.seed)
    cfg = TrainConfig.toy(epochs=args.epochs, learning_rate=args.lr, objective=args.objective, seed=args.seed)

    t0 = time.perf_counter()
    res = train(cfg, data, params, vocab, holdout, teacher=teacher)
    elapsed = time.perf_counter() - t0

    print(f"{'step':>6} {'acc':>7} {'mse':>10} {'composite':>10}")
    for r in res.evaluations:
        mse = "" if r.holdout_mse is None else f"{r.holdout_mse:.3e}"
        print(f"{r.step:>6} {r.holdout_acc:>7.3f} {mse:>10} {r.composite:>10.4f}")
    print(f"best step {res.best_step}, composite {res.best_composite:.4f}, {elapsed:.1f}s")
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            fh.write(format_log(res.log, [f"objective={args.objective}", f"seed={args.seed}"]))


if __name__ == "__main__":
    main()
