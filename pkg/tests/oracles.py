"""Independent brute-force implementations used as test oracles.

These stay deliberately separate from the package code paths they check:
plain-Python DP for edit alignment, and definitional per-class
precision/recall/F1 for the macro metrics.
"""


def edit_ops(ref, hyp):
    """(hits, substitutions, deletions, insertions) via a plain DP table,
    ties broken substitution > insertion > deletion."""
    n, m = len(ref), len(hyp)
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dp[i][0] = i
    for j in range(m + 1):
        dp[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            dp[i][j] = min(dp[i - 1][j - 1] + cost, dp[i][j - 1] + 1, dp[i - 1][j] + 1)
    i, j = n, m
    hits = subs = dels = ins = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1):
            if ref[i - 1] == hyp[j - 1]:
                hits += 1
            else:
                subs += 1
            i -= 1
            j -= 1
        elif j > 0 and dp[i][j] == dp[i][j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dels += 1
            i -= 1
    return hits, subs, dels, ins


def edit_distance(ref, hyp):
    h, s, d, i = edit_ops(ref, hyp)
    return s + d + i


def rates_from_ops(h, s, d, i):
    """(wer, mer, wip) recomputed straight from the definitions."""
    n_ref = h + s + d
    n_hyp = h + s + i
    if n_ref == 0 and n_hyp == 0:
        return 0.0, 0.0, 1.0
    if n_ref == 0:
        return float("nan"), 1.0, 0.0
    wer = (s + d + i) / n_ref
    mer = (s + d + i) / (h + s + d + i)
    wip = 0.0 if n_hyp == 0 else (h / n_ref) * (h / n_hyp)
    return wer, mer, wip


def macro_prf(preds, golds, classes):
    """(macro_f1, macro_recall) from per-class definitional counts.

    ``None`` predictions count as wrong for their gold class and never
    earn precision credit.
    """
    f1s, recalls = [], []
    for c in classes:
        tp = sum(1 for p, g in zip(preds, golds) if p == c and g == c)
        fp = sum(1 for p, g in zip(preds, golds) if p == c and g != c)
        fn = sum(1 for p, g in zip(preds, golds) if p != c and g == c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        f1s.append(f1)
        recalls.append(recall)
    return sum(f1s) / len(f1s), sum(recalls) / len(recalls)
