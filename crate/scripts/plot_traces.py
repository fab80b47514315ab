#!/usr/bin/env python3
"""Plot the CSV files written by `varchen run`.

Columns read:
  *.epochs.csv  epoch,full_loss,full_grad_norm,val_metric
  *.trace.csv   k,epoch,minibatch_loss,grad_norm,alpha,lambda_k,Lambda_k,flush,wall_ms

Usage: plot_traces.py OUT_DIR [--save FIG.png]
"""

import argparse
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd


def load(out_dir: Path, suffix: str) -> dict[str, pd.DataFrame]:
    return {p.name[: -len(suffix)]: pd.read_csv(p) for p in sorted(out_dir.glob(f"*{suffix}"))}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--save", type=Path, help="write the figure instead of showing it")
    args = ap.parse_args()

    epochs = load(args.out_dir, ".epochs.csv")
    traces = load(args.out_dir, ".trace.csv")
    if not epochs:
        raise SystemExit(f"no *.epochs.csv files in {args.out_dir}")

    fig, (ax_loss, ax_grad, ax_bounds) = plt.subplots(1, 3, figsize=(15, 4))
    for name, df in epochs.items():
        ax_loss.plot(df["epoch"], df["full_loss"], label=name)
        ax_grad.semilogy(df["epoch"], df["full_grad_norm"], label=name)
    for name, df in traces.items():
        (line,) = ax_bounds.semilogy(df["k"], df["Lambda_k"], label=f"{name} Λ")
        ax_bounds.semilogy(df["k"], df["lambda_k"], color=line.get_color(), linestyle="--")
        flushes = df[df["flush"] == 1]
        ax_bounds.scatter(flushes["k"], flushes["Lambda_k"], color=line.get_color(), marker="x")

    ax_loss.set(xlabel="epoch", ylabel="f(x)", title="full loss")
    ax_grad.set(xlabel="epoch", ylabel="‖∇f(x)‖", title="full gradient norm")
    ax_bounds.set(xlabel="iteration", title="eigenvalue bounds (x = flush)")
    ax_loss.legend(fontsize="small")
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
