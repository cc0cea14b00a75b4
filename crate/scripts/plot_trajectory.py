"""Plot an artifact directory written by `dmoc simulate` or `dmoc optimize`.

    python scripts/plot_trajectory.py out/bb_case1 [--save fig.png]

Shows the configuration, the momenta and the control against time, and the
multipliers when the directory holds a solution.
"""

import argparse
import csv
from pathlib import Path

import matplotlib.pyplot as plt


def read_columns(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {key: [float(r[key]) for r in rows] for key in rows[0]}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dir", type=Path)
    parser.add_argument("--save", type=Path, help="write the figure instead of showing it")
    args = parser.parse_args()

    traj = read_columns(args.dir / "trajectory.csv")
    lam_path = args.dir / "multipliers.csv"
    lam = read_columns(lam_path) if lam_path.exists() else None

    panels = 4 if lam else 3
    fig, axes = plt.subplots(panels, 1, sharex=True, figsize=(8, 2.4 * panels))
    t = traj["t"]
    axes[0].plot(t, traj["theta"], label="theta [rad]")
    axes[0].plot(t, traj["xi"], label="xi [m]")
    axes[1].plot(t, traj["mu_a"], label="mu_a")
    axes[1].plot(t, traj["mu_u"], label="mu_u")
    axes[2].plot(t, traj["u"], label="u")
    if lam:
        h = t[1] - t[0]
        tk = [k * h for k in lam["k"]]
        for i in range(1, 7):
            axes[3].plot(tk, lam[f"lam{i}"], label=f"lam{i}", linewidth=0.8)
        axes[3].set_yscale("symlog")
    for ax in axes:
        ax.legend(loc="upper right", fontsize="small")
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("t [s]")
    fig.suptitle(args.dir.name)
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
