"""Matplotlib figures for experiment reports, rendered to PNG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .exper import MODE_TITLES, MODES, ExperimentReport, read_history_csv

_PNG_KW = {"dpi": 120, "metadata": {"Software": "gradtune"}}


def save_learning_curves(histories: dict[str, list[dict]], title: str, path) -> None:
    """Validation and monitored test error per epoch, one line per repetition."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, (label, rows) in enumerate(sorted(histories.items())):
        color = colors[i % len(colors)]
        epochs = [row["epoch"] for row in rows]
        val_keys = [k for k in rows[0] if k.startswith("val_err_")]
        test_keys = [k for k in rows[0] if k.startswith("test_err_")]
        for key in val_keys:
            ax.plot(epochs, [row[key] for row in rows], color=color, lw=1.2,
                    label=f"{label} valid" if key == val_keys[0] else None)
        for key in test_keys:
            ax.plot(epochs, [row[key] for row in rows], color=color, lw=1.0, ls="--",
                    label=f"{label} task-A test" if key == test_keys[0] else None)
    ax.set_xlabel("epoch")
    ax.set_ylabel("error (%)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    fig.savefig(path, **_PNG_KW)
    plt.close(fig)


def save_forgetting_chart(report: ExperimentReport, path) -> None:
    """Task-A error before transfer vs after, per mode, with std whiskers."""
    tasks = list(report.task_a)
    modes = [m for m in MODES if m in report.aggregates]
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(tasks), 4.2))
    width = 0.8 / (1 + len(modes))
    xs = range(len(tasks))
    ax.bar([x - width * len(modes) / 2 for x in xs],
           [report.a_before[t] for t in tasks], width, label="after Task-A", color="#888888")
    for j, mode in enumerate(modes):
        agg = report.aggregates[mode]
        means = [agg[f"task_a_err_{t}"]["mean"] for t in tasks]
        stds = [agg[f"task_a_err_{t}"]["std"] for t in tasks]
        offset = width * (j + 1 - len(modes) / 2)
        ax.bar([x + offset for x in xs], means, width, yerr=stds, capsize=3,
               label=f"after Task-B ({MODE_TITLES[mode]})")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(tasks)
    ax.set_ylabel("Task-A test error (%)")
    ax.set_title(f"Forgetting on {'+'.join(tasks)} after training {report.task_b}")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_PNG_KW)
    plt.close(fig)


def render_report_figures(report: ExperimentReport, out_dir) -> list[Path]:
    """All report figures: forgetting bars plus per-mode learning curves."""
    out = Path(out_dir)
    written = []
    chart = out / "forgetting.png"
    save_forgetting_chart(report, chart)
    written.append(chart)
    for mode in MODES:
        histories = {}
        for path in sorted(out.glob(f"history_{mode}_rep*.csv")):
            rep = path.stem.removeprefix(f"history_{mode}_")
            histories[rep] = read_history_csv(path)
        if histories:
            fig_path = out / f"learning_curves_{mode}.png"
            save_learning_curves(histories, MODE_TITLES[mode], fig_path)
            written.append(fig_path)
    return written
