"""Report figures, rendered straight to files without pyplot's global state."""

from __future__ import annotations

import os
from collections import defaultdict

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {"linewidth": 1.4}


def _figure(width=5.5, height=3.4):
    fig = Figure(figsize=(width, height), layout="constrained")
    FigureCanvasAgg(fig)
    return fig


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=120)
    return path


def learning_curves(log, path):
    """Dev UAS and LAS per epoch, one colour per language."""
    series = defaultdict(lambda: ([], [], []))
    for rec in log:
        xs, uas, las = series[rec["language"]]
        xs.append(rec["epoch"])
        uas.append(rec["UAS"])
        las.append(rec["LAS"])
    fig = _figure()
    ax = fig.add_subplot()
    for i, (lang, (xs, uas, las)) in enumerate(sorted(series.items())):
        colour = f"C{i}"
        ax.plot(xs, uas, color=colour, label=f"{lang} UAS", **STYLE)
        ax.plot(xs, las, color=colour, linestyle="--", label=f"{lang} LAS", **STYLE)
    ax.set_xlabel("epoch")
    ax.set_ylabel("score (%)")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False, fontsize="small")
    return _save(fig, path)


def decoder_deltas(report, path):
    """Histogram of CLE minus greedy tree log-score per sentence."""
    deltas = [r["delta"] for r in report.sentences]
    fig = _figure()
    ax = fig.add_subplot()
    ax.hist(deltas, bins=30, color="C0")
    ax.set_xlabel("CLE - greedy log-score")
    ax.set_ylabel("sentences")
    ax.set_title(f"agreement {100 * report.agreement:.1f}%, "
                 f"greedy cycles {100 * report.cycle_rate:.1f}%", fontsize="medium")
    return _save(fig, path)


def analogy_ranks(report, path):
    """How far down the ranking the expected letter sits for each query."""
    ranks = [r["rank"] for r in report.queries if r["rank"] is not None]
    fig = _figure()
    ax = fig.add_subplot()
    if ranks:
        top = max(ranks)
        ax.hist(ranks, bins=range(1, top + 2), align="left", rwidth=0.8, color="C2")
    ax.set_xlabel("rank of expected letter")
    ax.set_ylabel("queries")
    ax.set_title(f"accuracy {report.accuracy:.1f}% of {report.total}", fontsize="medium")
    return _save(fig, path)


def pos_attribution(attribution, path):
    """Head and label error rates split by whether the predicted UPOS was right."""
    rates = attribution.rates()
    names = list(rates)
    values = [100 * (r["rate"] or 0.0) for r in rates.values()]
    fig = _figure(6.5, 3.4)
    ax = fig.add_subplot()
    bars = ax.bar(range(len(names)), values, color=["C3", "C0"] * 2)
    for bar, r in zip(bars, rates.values()):
        note = "n/a" if r["rate"] is None else f"n={r['denominator']}"
        ax.annotate(note, (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize="x-small")
    ax.set_xticks(range(len(names)), names, rotation=15, fontsize="x-small")
    ax.set_ylabel("error rate (%)")
    return _save(fig, path)
