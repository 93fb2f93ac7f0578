"""Figure rendering for sweep reports.

Renders the aggregate sweep table to PNG files next to the CSV output:
one figure for the achievable rate and one for the binary code rate, each
versus SNR with solid/dashed styling separating blind and supervised
estimation. The CSV remains the canonical output; figures are a convenience
for eyeballing runs.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["save_sweep_figures"]


def save_sweep_figures(aggregate_rows: list[dict], out_stem: str) -> list[str]:
    """Render R_a and R_abc versus SNR from aggregate sweep rows.

    ``aggregate_rows`` must carry mode, snr_db, r_a_da, r_a_em, r_abc_da,
    r_abc_em. Returns the written file paths.
    """
    paths = []
    panels = [
        ("r_a", "achievable rate [bits/channel use]", f"{out_stem}_ra.png"),
        ("r_abc", "binary code rate", f"{out_stem}_rabc.png"),
    ]
    modes = sorted({row["mode"] for row in aggregate_rows})
    for key, ylabel, path in panels:
        fig, ax = plt.subplots(figsize=(6.5, 4.5))
        for i, mode in enumerate(modes):
            rows = sorted(
                (r for r in aggregate_rows if r["mode"] == mode),
                key=lambda r: r["snr_db"],
            )
            snr = [r["snr_db"] for r in rows]
            color = f"C{i}"
            ax.plot(snr, [r[f"{key}_em"] for r in rows], "-o", color=color,
                    label=f"{mode} EM")
            ax.plot(snr, [r[f"{key}_da"] for r in rows], "--s", color=color,
                    markerfacecolor="none", label=f"{mode} DA")
        ax.set_xlabel("SNR [dB]")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.4)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths
