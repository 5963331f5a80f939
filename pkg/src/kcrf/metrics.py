"""Token and sequence level labeling metrics."""
import numpy as np


def evaluate(gold, predicted, n_labels):
    """Accuracy, per-label precision/recall/F1 and exact-match rate.

    ``gold`` and ``predicted`` are lists of label-id arrays of matching lengths.
    """
    g = np.concatenate([np.asarray(s, dtype=int) for s in gold])
    p = np.concatenate([np.asarray(s, dtype=int) for s in predicted])
    if g.shape != p.shape:
        raise ValueError("gold and predicted labelings differ in length")
    per_label = []
    for y in range(n_labels):
        tp = int(np.sum((p == y) & (g == y)))
        n_pred = int(np.sum(p == y))
        n_gold = int(np.sum(g == y))
        precision = tp / n_pred if n_pred else 0.0
        recall = tp / n_gold if n_gold else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_label.append({"precision": precision, "recall": recall, "f1": f1,
                          "support": n_gold})
    exact = [np.array_equal(a, b) for a, b in zip(gold, predicted)]
    return {
        "accuracy": float(np.mean(g == p)),
        "tokens": int(len(g)),
        "sequences": len(exact),
        "exact_match": float(np.mean(exact)),
        "per_label": per_label,
    }


def format_report(metrics, alphabet):
    lines = [f"token_accuracy\t{metrics['accuracy']:.6f}",
             f"exact_match\t{metrics['exact_match']:.6f}",
             "label\tprecision\trecall\tf1\tsupport"]
    for name, m in zip(alphabet.names, metrics["per_label"]):
        lines.append(f"{name}\t{m['precision']:.6f}\t{m['recall']:.6f}\t{m['f1']:.6f}\t{m['support']}")
    return "\n".join(lines)
