"""Matplotlib figures written next to the CSV/JSON artifacts."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)


def solution_profiles(path, times, x, named_slices, title="", count=5):
    """Profiles of each field at a few output times, one panel per field."""
    names = list(named_slices)
    fig, axes = plt.subplots(len(names), 1, figsize=(7, 2.4 * len(names)), sharex=True, squeeze=False)
    picks = np.unique(np.linspace(0, len(times) - 1, count).round().astype(int))
    for ax, name in zip(axes[:, 0], names):
        data = np.asarray(named_slices[name])
        for k in picks:
            ax.plot(x, data[k], lw=1.0, label=f"t={times[k]:.3g}")
        ax.set_ylabel(name)
    axes[0, 0].legend(fontsize=7, ncol=len(picks))
    axes[-1, 0].set_xlabel("x")
    if title:
        axes[0, 0].set_title(title)
    _save(fig, path)


def iteration_history(path, updates, ratios, threshold=None):
    fig, (a, b) = plt.subplots(1, 2, figsize=(9, 3.2))
    a.semilogy(np.arange(1, len(updates) + 1), updates, "o-")
    a.set_xlabel("iteration")
    a.set_ylabel("update norm")
    if len(ratios):
        b.plot(np.arange(2, len(ratios) + 2), ratios, "s-")
    if threshold is not None:
        b.axhline(threshold, color="k", ls="--", lw=0.8)
    b.set_xlabel("iteration")
    b.set_ylabel("update ratio")
    _save(fig, path)


def convergence_plot(path, h, errors, order=None):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(h, errors, "o-", label="error")
    if order is not None and len(h) > 1:
        ref = errors[-1] * (np.asarray(h) / h[-1]) ** order
        ax.loglog(h, ref, "k--", lw=0.8, label=f"slope {order:.2f}")
    ax.set_xlabel("h")
    ax.set_ylabel("max-norm error")
    ax.legend()
    _save(fig, path)


def ratio_histogram(path, ratios, threshold):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(ratios, bins=min(20, max(5, len(ratios))))
    ax.axvline(threshold, color="k", ls="--", lw=0.8)
    ax.set_xlabel("contraction ratio")
    ax.set_ylabel("pairs")
    _save(fig, path)


def interface_history(path, times, jump, mismatch):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.semilogy(times, np.abs(jump) + 1e-300, "o-", label="|jump|")
    ax.semilogy(times, np.abs(mismatch) + 1e-300, "s-", label="|flux mismatch|")
    ax.set_xlabel("t")
    ax.legend()
    _save(fig, path)
