"""Figure rendering for the CLI report paths (written next to the CSVs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["render_sweep_figure", "render_tamper_figure"]

_MESSAGE_NAMES = ("mu1", "ms1", "mu2", "ms2")


def render_sweep_figure(reports, estimate, path) -> None:
    """False-match and false-non-match rates against basis length, with the
    interpolated equal-error crossing marked when one exists."""
    ds = [r.d for r in reports]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(ds, [r.fmr for r in reports], "o-", label="FMR (impostors accepted)")
    ax.plot(ds, [r.fnmr for r in reports], "s-", label="FNMR (genuine rejected)")
    if estimate is not None:
        ax.axvline(estimate.d, color="gray", linestyle=":", linewidth=1)
        ax.plot([estimate.d], [estimate.eer], "k*", markersize=12,
                label=f"EER = {estimate.eer:.4f} @ d = {estimate.d:.3g}")
    ax.set_xscale("log")
    ax.set_xlabel("basis length d")
    ax.set_ylabel("rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="center right", fontsize=9)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def render_tamper_figure(records, path) -> None:
    """One strip per message: byte offset vs which party aborted."""
    fig, axes = plt.subplots(4, 1, figsize=(7.5, 5.2), sharex=False)
    colors = {"user": "tab:blue", "sp": "tab:orange", "both": "tab:green", "none": "tab:red"}
    for index, ax in enumerate(axes):
        subset = [r for r in records if r.message_index == index]
        for r in subset:
            parties = r.outcome.aborted_parties
            kind = "both" if len(parties) == 2 else (parties[0] if parties else "none")
            ax.bar(r.offset, 1.0, width=1.0, color=colors[kind], edgecolor="none")
        ax.set_yticks([])
        ax.set_ylabel(_MESSAGE_NAMES[index], rotation=0, ha="right", va="center")
        if subset:
            ax.set_xlim(-0.5, max(r.offset for r in subset) + 0.5)
    axes[-1].set_xlabel("flipped payload byte offset")
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in colors.values()]
    fig.legend(handles, [f"{k} aborted" for k in colors], loc="upper right", fontsize=8, ncol=4)
    fig.suptitle("Abort coverage per tampered byte", fontsize=11)
    fig.tight_layout(rect=(0, 0, 1, 0.95))
    fig.savefig(path, dpi=140)
    plt.close(fig)
