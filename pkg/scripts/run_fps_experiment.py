"""Frame-rate experiment: native 30 fps, 10 fps and 10 fps interpolated back to 30 fps."""
import argparse
import logging
from pathlib import Path

import torch

from egoppg.experiments import MiniDatasetConfig, build_mini_dataset, fps_experiment
from egoppg.preprocess import FPS_MODES
from egoppg.training import write_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--modes", nargs="+", default=list(FPS_MODES), choices=FPS_MODES)
    ap.add_argument("--out", default="results/fps")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    torch.set_num_threads(1)

    cfg = MiniDatasetConfig()
    parts = build_mini_dataset(cfg)
    table = {}
    for mode in args.modes:
        table[mode] = fps_experiment(parts, cfg, mode, args.epochs, args.seed).overall
        print(f"{mode:12s} MAE {table[mode].mae_bpm:.2f}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table(table, out / "table_fps.csv")
    print(f"wrote {out / 'table_fps.csv'}")


if __name__ == "__main__":
    main()
