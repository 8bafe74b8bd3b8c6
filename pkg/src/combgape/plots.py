"""Figures written next to the delimited result files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import HardnessProfile  # noqa: E402
from .harness import STRATEGY_NAMES, ResultTable  # noqa: E402

# pinned so repeated runs write identical files
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def figure_path(results_path: str | Path, suffix: str) -> Path:
    p = Path(results_path)
    return p.with_name(f"{p.stem}_{suffix}.png")


def plot_sample_complexity(table: ResultTable, path: str | Path) -> Path:
    """Per-strategy stopping times (log scale) and the normalized means."""
    strategies = [s for s in STRATEGY_NAMES if any(t.strategy is s for t in table.trials)]
    with plt.rc_context(RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.0, 3.0), gridspec_kw={"width_ratios": [3, 2]})
        data = [table.taus(s) for s in strategies]
        labels = [STRATEGY_NAMES[s] for s in strategies]
        ax1.boxplot([d if d else [np.nan] for d in data], showfliers=True)
        ax1.set_xticks(range(1, len(labels) + 1), labels)
        for k, d in enumerate(data, 1):
            if d:
                jitter = np.linspace(-0.12, 0.12, len(d))
                ax1.plot(k + jitter, d, ".", ms=3, alpha=0.5, color="C0")
        ax1.set_yscale("log")
        ax1.set_ylabel("stopping time (pulls)")
        ax1.set_title("sample complexity per trial")

        ratios = [table.row(s).ratio_to_gapweighted for s in strategies]
        ax2.bar(labels, ratios, color=["C0", "C1"][: len(labels)])
        ax2.axhline(1.0, color="k", lw=0.8, ls="--")
        ax2.set_ylabel("mean stopping time / GapWeighted")
        ax2.set_title("normalized")
        fig.tight_layout()
        fig.savefig(path, **_SAVE_KW)
        plt.close(fig)
    return Path(path)


def plot_hardness(profile: HardnessProfile, path: str | Path) -> Path:
    """Per-arm gaps and V constants of one instance."""
    arms = np.arange(profile.d)
    finite = np.isfinite(profile.delta_s)
    with plt.rc_context(RC):
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 4.0), sharex=True)
        ax1.bar(arms[finite], profile.delta_s[finite], color="C0")
        ax1.set_ylabel("per-arm gap")
        ax1.set_yscale("log")
        ax2.bar(arms, profile.v_s, color="C2")
        ax2.set_ylabel("V")
        ax2.set_xlabel("arm")
        ax1.set_title(f"A = {profile.amplification:.4g}, sum V/gap^2 = {profile.thm2_sum:.4g}")
        fig.tight_layout()
        fig.savefig(path, **_SAVE_KW)
        plt.close(fig)
    return Path(path)
