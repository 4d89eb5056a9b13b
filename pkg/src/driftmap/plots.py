"""Figure rendering for report outputs.

Every report-style CLI command writes its delimited data first and then, by
default, a PNG next to it. Figures are deliberately plain: one axes per
panel, labeled units, no styling beyond matplotlib defaults. PNG metadata is
pinned so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_METADATA = {"Software": "driftmap"}


def _save(fig, path):
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata=_METADATA)
    plt.close(fig)


def corner_difference_figure(rows, path):
    """Bar chart of corner current difference vs crossbar size."""
    sizes = [str(r["n"]) for r in rows]
    diffs = [100.0 * r["diff_fraction"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(sizes, diffs, color="tab:blue")
    for x, d in zip(sizes, diffs):
        ax.text(x, d, f"{d:.1f}%", ha="center", va="bottom", fontsize=8)
    ax.set_xlabel("crossbar size (N x N)")
    ax.set_ylabel("corner current difference (%)")
    _save(fig, path)


def heatmap_figure(grid, label, path):
    """Heatmap of a per-cell quantity over the crossbar."""
    fig, ax = plt.subplots(figsize=(4.4, 3.6))
    im = ax.imshow(np.asarray(grid), origin="upper", cmap="viridis")
    fig.colorbar(im, ax=ax, label=label)
    ax.set_xlabel("output port")
    ax.set_ylabel("input port")
    _save(fig, path)


def state_dependence_figure(rows, path):
    """Grouped bars: minimum transition time per state and tech node."""
    techs = sorted({r["tech"] for r in rows})
    states = ("HRS", "LRS")
    width = 0.38
    xs = np.arange(len(techs))
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for offset, state in zip((-width / 2, width / 2), states):
        vals = []
        for tech in techs:
            match = [r for r in rows if r["tech"] == tech
                     and r["state"] == state]
            vals.append(match[0]["min_transition_time_s"] if match else 0.0)
        ax.bar(xs + offset, vals, width, label=state)
    ax.set_yscale("log")
    ax.set_xticks(xs, techs)
    ax.set_ylabel("min transition time (s)")
    ax.legend()
    _save(fig, path)


def spike_histogram_figure(histogram, path):
    """Histogram of average spikes per inference across synapses."""
    items = sorted(histogram.items(), key=lambda kv: float(kv[0].split("-")[0]))
    labels = [k for k, _ in items]
    counts = [v for _, v in items]
    fig, ax = plt.subplots(figsize=(5.2, 3.2))
    ax.bar(labels, counts, color="tab:green")
    ax.set_xlabel("average spikes per inference")
    ax.set_ylabel("synapses")
    if len(labels) > 12:
        ax.tick_params(axis="x", labelrotation=90, labelsize=7)
    _save(fig, path)


def timeline_figure(report, path):
    """Windowed accuracy over the inference stream with event markers."""
    idx = [p.inference_index for p in report.timeline]
    acc = [p.accuracy_window for p in report.timeline]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(idx, acc, lw=1.2, label="windowed accuracy")
    ax.axhline(report.baseline_accuracy, color="gray", ls=":", lw=1,
               label="drift-free baseline")
    drifts = [p.inference_index for p in report.timeline if p.drift_events]
    if drifts:
        ax.plot(drifts, [report.baseline_accuracy] * len(drifts), "v",
                color="tab:red", ms=4, label="drift event")
    reprograms = [p.inference_index for p in report.timeline
                  if p.reprogram_event]
    for k, x in enumerate(reprograms):
        ax.axvline(x, color="tab:orange", lw=0.6, alpha=0.5,
                   label="reprogram" if k == 0 else None)
    ax.set_xlabel("inference index")
    ax.set_ylabel("accuracy")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=8, loc="lower left")
    _save(fig, path)


def comparison_figure(rows, path):
    """Interval and overhead per mapping mode, side by side."""
    modes = [r["mode"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7, 3))
    ax1.bar(modes, [r["tRPI"] for r in rows], color="tab:blue")
    ax1.set_ylabel("reprogram interval (inferences)")
    ax2.bar(modes, [r["overhead"] for r in rows], color="tab:orange")
    ax2.set_ylabel("reprogram overhead")
    for ax in (ax1, ax2):
        ax.tick_params(axis="x", labelrotation=20)
    _save(fig, path)
