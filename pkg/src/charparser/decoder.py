"""Greedy and Chu-Liu-Edmonds decoding of head score matrices.

A score matrix has one row per dependent ``w = 1..n`` and one column per
candidate head ``h = 0..n`` (column 0 is ROOT); entries are log-probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .treebank import is_tree


@dataclass
class ParseTree:
    heads: np.ndarray
    labels: np.ndarray | None = None
    is_tree: bool = False


def _check(scores):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != scores.shape[0] + 1:
        raise ValueError(f"score matrix must be [n, n+1], got {scores.shape}")
    return scores


def tree_score(scores, heads):
    scores = np.asarray(scores)
    return float(scores[np.arange(len(heads)), np.asarray(heads)].sum())


def decode_greedy(scores):
    """Best head per word independently; ties go to the smaller head index."""
    scores = _check(scores)
    heads = scores.argmax(axis=1)
    return ParseTree(heads, None, is_tree(heads.tolist()))


def _find_cycle(heads):
    """Nodes of one cycle in ``heads`` (heads[0] ignored), or None."""
    n = len(heads)
    color = [0] * n
    color[0] = 2
    for start in range(1, n):
        path, node = [], start
        while color[node] == 0:
            color[node] = 1
            path.append(node)
            node = heads[node]
        if color[node] == 1:
            return path[path.index(node):]
        for v in path:
            color[v] = 2
    return None


def _mst(weights):
    """Maximum arborescence rooted at 0 of a dense ``weights[head, dep]`` matrix."""
    size = weights.shape[0]
    heads = [0] * size
    for d in range(1, size):
        heads[d] = int(np.argmax(weights[:, d]))
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads
    in_cycle = np.zeros(size, dtype=bool)
    in_cycle[cycle] = True
    rest = [v for v in range(size) if not in_cycle[v]]
    cyc = sorted(cycle)
    new_size = len(rest) + 1
    c = new_size - 1
    pos = {v: i for i, v in enumerate(rest)}
    w2 = np.full((new_size, new_size), -np.inf)
    w2[np.ix_(range(len(rest)), range(len(rest)))] = weights[np.ix_(rest, rest)]
    enter_via, leave_via = {}, {}
    kept = np.array([weights[heads[v], v] for v in cyc])
    for u in rest:
        gains = weights[u, cyc] - kept
        j = int(np.argmax(gains))
        w2[pos[u], c] = gains[j]
        enter_via[u] = cyc[j]
    for d in rest:
        if d == 0:
            continue
        col = weights[cyc, d]
        j = int(np.argmax(col))
        w2[c, pos[d]] = col[j]
        leave_via[d] = cyc[j]
    sub = _mst(w2)
    out = list(heads)
    for d in rest:
        if d == 0:
            continue
        h = sub[pos[d]]
        out[d] = leave_via[d] if h == c else rest[h]
    u = rest[sub[c]]
    out[enter_via[u]] = u
    return out


def _weights(scores):
    n = scores.shape[0]
    w = np.full((n + 1, n + 1), -np.inf)
    w[:, 1:] = scores.T
    w[np.arange(1, n + 1), np.arange(1, n + 1)] = -np.inf
    return w


def decode_cle(scores, single_root=False):
    """Highest-scoring arborescence rooted at 0 (self-arcs excluded).

    With ``single_root`` exactly one word attaches to ROOT.
    """
    scores = _check(scores)
    n = scores.shape[0]
    if n == 0:
        raise ValueError("cannot decode an empty sentence")
    weights = _weights(scores)
    heads = np.array(_mst(weights)[1:])
    if single_root and np.count_nonzero(heads == 0) != 1:
        best, best_score = None, -np.inf
        for child in range(1, n + 1):
            w = weights.copy()
            w[0, 1:] = -np.inf
            w[0, child] = weights[0, child]
            cand = np.array(_mst(w)[1:])
            s = tree_score(scores, cand)
            if s > best_score:
                best, best_score = cand, s
        heads = best
    return ParseTree(heads, None, True)


def assign_labels(tree, states, label_logits):
    """Label each chosen edge with the labeler's argmax.

    ``label_logits(states, deps, heads)`` returns ``[n, n_labels]`` scores.
    """
    heads = np.asarray(tree.heads)
    deps = np.arange(1, len(heads) + 1)
    logits = np.asarray(label_logits(states, deps, heads))
    return ParseTree(heads, logits.argmax(axis=-1), tree.is_tree)


@dataclass
class DecoderReport:
    sentences: list = field(default_factory=list)
    agreement: float = 0.0
    cycle_rate: float = 0.0
    mean_delta: float = 0.0
    uas_greedy: float | None = None
    uas_cle: float | None = None

    def summary(self):
        lines = [f"sentences: {len(self.sentences)}",
                 f"greedy/CLE agreement: {100 * self.agreement:.2f}%",
                 f"greedy cycle rate: {100 * self.cycle_rate:.2f}%",
                 f"mean CLE - greedy log-score: {self.mean_delta:.6f}"]
        if self.uas_greedy is not None:
            lines.append(f"UAS greedy: {self.uas_greedy:.2f}  UAS CLE: {self.uas_cle:.2f}")
        return "\n".join(lines)


def compare_decoders(score_list, gold_heads=None, single_root=False):
    """Decode every matrix both ways and tabulate where the decoders differ."""
    if not score_list:
        raise ValueError("need at least one sentence")
    report = DecoderReport()
    hits_g = hits_c = tokens = 0
    for i, scores in enumerate(score_list):
        g = decode_greedy(scores)
        c = decode_cle(scores, single_root=single_root)
        rec = {
            "sentence": i,
            "greedy": g.heads.tolist(),
            "cle": c.heads.tolist(),
            "agree": bool(np.array_equal(g.heads, c.heads)),
            "greedy_is_tree": g.is_tree,
            "greedy_score": tree_score(scores, g.heads),
            "cle_score": tree_score(scores, c.heads),
        }
        rec["delta"] = rec["cle_score"] - rec["greedy_score"]
        if gold_heads is not None:
            gold = np.asarray(gold_heads[i])
            rec["greedy_correct"] = int((g.heads == gold).sum())
            rec["cle_correct"] = int((c.heads == gold).sum())
            hits_g += rec["greedy_correct"]
            hits_c += rec["cle_correct"]
            tokens += len(gold)
        report.sentences.append(rec)
    m = len(report.sentences)
    report.agreement = sum(r["agree"] for r in report.sentences) / m
    report.cycle_rate = sum(not r["greedy_is_tree"] for r in report.sentences) / m
    report.mean_delta = sum(r["delta"] for r in report.sentences) / m
    if gold_heads is not None and tokens:
        report.uas_greedy = 100.0 * hits_g / tokens
        report.uas_cle = 100.0 * hits_c / tokens
    return report
