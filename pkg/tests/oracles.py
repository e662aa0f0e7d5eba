"""Naive reference implementations used as test oracles.

Deliberately written without numpy vectorisation or the library's own
helpers, so agreement means something.
"""

import math
import unicodedata
from fractions import Fraction


def strip_marks_by_table(text):
    """Lowercase + diacritic stripping via the raw decomposition table."""
    def base(ch):
        dec = unicodedata.decomposition(ch)
        if not dec or dec.startswith("<"):
            return ch
        return "".join(base(chr(int(cp, 16))) for cp in dec.split())
    out = []
    for ch in text.lower():
        for c in base(ch):
            if unicodedata.category(c) not in ("Mn", "Me", "Mc"):
                out.append(c)
    return " ".join("".join(out).split())


def py_cosine(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return dot / (nu * nv)


def naive_ranks(xs):
    """Average ranks (1-based) by pairwise comparison counting."""
    ranks = []
    for x in xs:
        less = sum(1 for y in xs if y < x)
        equal = sum(1 for y in xs if y == x)
        ranks.append(less + (equal + 1) / 2)
    return ranks


def naive_spearman(x, y):
    rx, ry = naive_ranks(list(x)), naive_ranks(list(y))
    n = len(rx)
    mx, my = sum(rx) / n, sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return cov / math.sqrt(vx * vy)


def naive_recall(ranked, relevant, k):
    return sum(1 for d in ranked[:k] if d in relevant) / len(relevant)


def naive_ap(ranked, relevant, k):
    precisions = []
    for i in range(1, min(k, len(ranked)) + 1):
        if ranked[i - 1] in relevant:
            precisions.append(sum(1 for d in ranked[:i] if d in relevant) / i)
    return sum(precisions) / min(len(relevant), k)


def cosine_key(q, c):
    """Exact value ordered like cos(q, c) for a fixed q: sign(q.c) (q.c)^2 / |c|^2."""
    q = [Fraction(x) for x in q]
    c = [Fraction(x) for x in c]
    dot = sum(a * b for a, b in zip(q, c))
    sign = (dot > 0) - (dot < 0)
    return sign * dot * dot / sum(b * b for b in c)


def naive_translation_accuracy(src, tgt):
    """Exact-arithmetic top-1 accuracy; ties go to the earliest index."""
    n = len(src)

    def top1(q, cands):
        best, arg = None, None
        for j, c in enumerate(cands):
            s = cosine_key(q, c)
            if best is None or s > best:
                best, arg = s, j
        return arg

    fwd = sum(1 for i in range(n) if top1(src[i], tgt) == i) / n
    bwd = sum(1 for i in range(n) if top1(tgt[i], src) == i) / n
    return (fwd + bwd) / 2


def naive_mrr(greek, candidates):
    """candidates: list of (name, rows). Rank = 1 + #strictly better + #equal listed earlier (exact)."""
    names = [n for n, _ in candidates]
    totals = {n: 0.0 for n in names}
    for v, g in enumerate(greek):
        scores = [(cosine_key(g, rows[v]), idx) for idx, (_, rows) in enumerate(candidates)]
        for idx, (s, _) in enumerate(scores):
            rank = 1 + sum(1 for s2, i2 in scores if s2 > s or (s2 == s and i2 < idx))
            totals[names[idx]] += 1.0 / rank
    return {n: t / len(greek) for n, t in totals.items()}


def enumerate_alignments(n_src, n_tgt, beads):
    """Yield every monotone bead decomposition as a list of (i, j, a, b)."""
    def rec(i, j, acc):
        if i == n_src and j == n_tgt:
            yield list(acc)
            return
        for a, b in beads:
            if i + a <= n_src and j + b <= n_tgt:
                acc.append((i, j, a, b))
                yield from rec(i + a, j + b, acc)
                acc.pop()
    yield from rec(0, 0, [])


def brute_force_min_cost(n_src, n_tgt, beads, cost):
    table = {}
    best = math.inf
    for path in enumerate_alignments(n_src, n_tgt, beads):
        total = 0.0
        for bead in path:
            if bead not in table:
                table[bead] = cost(*bead)
            total += table[bead]
        best = min(best, total)
    return best


def central_difference(f, x, eps=1e-4):
    """Numerical gradient of scalar f at array x (perturbed in place, restored)."""
    import numpy as np
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + eps
        fp = f()
        x[idx] = old - eps
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
    return g


def rel_error(analytic, numeric):
    import numpy as np
    return float(np.max(np.abs(analytic - numeric)) / max(1e-8, np.max(np.abs(analytic)) + np.max(np.abs(numeric))))
