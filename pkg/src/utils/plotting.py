import logging
import os
from typing import Dict, List

import pandas as pd

logger = logging.getLogger(__name__)

PLOT_SCRIPT = "plot.gp"

_PREAMBLE = """set datafile separator ','
set terminal pngcairo size 1000,600
set grid
"""

# (png name, title, x label, y label, [(column, label)])
_PANELS: Dict[str, List[tuple]] = {
    "trajectory": [
        ("epidemic.png", "Epidemic spreading", "Time (days)", "Individuals",
         [("S", "Susceptible"), ("I", "Infected"), ("R", "Recovered")]),
        ("r_t.png", "Reproduction number", "Time (days)", "R_t", [("R_t", "R_t")]),
        ("beta_critical.png", "Critical infection rate", "Time (days)", "beta_critical",
         [("beta_critical", "beta_critical")]),
    ],
    "comparison": [
        ("comparison.png", "Reproduction number, real vs model", "Day", "R_t",
         [("rt_empirical", "Empirical"), ("rt_model", "Model")]),
    ],
}


def gnuplot_script(kind: str, csv_name: str) -> str:
    """Script text for a CSV written by one of the subcommands."""
    lines = [_PREAMBLE]
    if kind == "degree_hist":
        lines.append("set output 'degree_hist.png'\n")
        lines.append("set title 'Degree distribution'\nset xlabel 'Degree'\nset ylabel 'Probability'\n")
        lines.append("set style fill solid 0.6\nset logscale y\n")
        lines.append(f"plot '{csv_name}' skip 1 using (($1+$2)/2):3 with boxes title 'P(k)'\n")
        return "".join(lines)
    if kind == "sweep":
        lines.append("set output 'sweep.png'\n")
        lines.append("set title 'Critical infection rate by radius'\nset xlabel 'Time (days)'\n")
        lines.append("set ylabel 'beta_critical'\n")
        lines.append("set cblabel 'radius (m)'\n")
        lines.append(f"plot '{csv_name}' skip 1 using 1:3:2 with points palette title 'beta_critical'\n")
        return "".join(lines)

    frame_columns = {
        "trajectory": ["tick", "S", "I", "R", "k_mean", "R_t", "beta_critical", "spreading_speed"],
        "comparison": ["day", "rt_empirical", "rt_model"],
    }[kind]
    for png, title, xlabel, ylabel, series in _PANELS[kind]:
        lines.append(f"set output '{png}'\nset title '{title}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\n")
        parts = [
            f"'{csv_name}' skip 1 using 1:{frame_columns.index(col) + 1} with lines title '{label}'"
            for col, label in series
        ]
        lines.append("plot " + ", \\\n     ".join(parts) + "\n")
    return "".join(lines)


def write_gnuplot_script(kind: str, csv_name: str, out_dir) -> str:
    path = os.path.join(out_dir, PLOT_SCRIPT)
    with open(path, "w", encoding="utf-8") as f:
        f.write(gnuplot_script(kind, csv_name))
    return path


def render_plots(kind: str, csv_path, out_dir) -> List[str]:
    """
    Render PNGs with matplotlib. Failures are logged and yield no files.

    Returns:
        Paths of the images written
    """
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except Exception as e:
        logger.error(f"Error importing matplotlib, skipping plots: {str(e)}")
        return []

    written = []
    try:
        frame = pd.read_csv(csv_path)
        if kind == "degree_hist":
            plt.figure(figsize=(10, 6))
            plt.bar(frame["bin_lo"], frame["probability"], width=frame["bin_hi"] - frame["bin_lo"], align="edge")
            plt.yscale("log")
            plt.title("Degree distribution")
            plt.xlabel("Degree")
            plt.ylabel("Probability")
            plt.grid(True)
            written.append(_save(plt, out_dir, "degree_hist.png"))
        elif kind == "sweep":
            plt.figure(figsize=(10, 6))
            for radius, group in frame.groupby("radius"):
                plt.plot(group["tick"], group["beta_critical"], label=f"r = {radius:g}")
            plt.title("Critical infection rate by radius")
            plt.xlabel("Time (days)")
            plt.ylabel("beta_critical")
            plt.grid(True)
            plt.legend()
            written.append(_save(plt, out_dir, "sweep.png"))
        else:
            x = frame.columns[0]
            for png, title, xlabel, ylabel, series in _PANELS[kind]:
                plt.figure(figsize=(10, 6))
                for col, label in series:
                    plt.plot(frame[x], frame[col], label=label)
                plt.title(title)
                plt.xlabel(xlabel)
                plt.ylabel(ylabel)
                plt.grid(True)
                plt.legend()
                written.append(_save(plt, out_dir, png))
    except Exception as e:
        logger.error(f"Error rendering {kind} plots: {str(e)}")
        plt.close("all")
    return written


def _save(plt, out_dir, name: str) -> str:
    path = os.path.join(out_dir, name)
    plt.savefig(path)
    plt.close()
    return path
