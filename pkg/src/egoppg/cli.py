"""Command-line entry point: ``egoppg <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, dump_config, load_config

log = logging.getLogger("egoppg")

ABLATIONS = {"none": {}, "sa": {"use_sa": False}, "mita": {"use_mita": False},
             "both": {"use_sa": False, "use_mita": False}}
ABLATION_NAMES = {"none": "PulseFormer", "sa": "PulseFormer w/o SA", "mita": "PulseFormer w/o MITA",
                  "both": "PulseFormer w/o SA, w/o MITA"}


class CliError(RuntimeError):
    pass


# --- helpers --------------------------------------------------------------------------

def _versions() -> Dict[str, str]:
    import scipy
    import torch
    return {"egoppg": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "torch": torch.__version__}


class RunManifest:
    """JSON record of one invocation; marked incomplete until ``finish``."""

    def __init__(self, out_dir: Path, command: str, cfg: RunConfig, argv: List[str]):
        self.path = out_dir / f"run_{command}.json"
        self.t0 = time.time()
        self.data = {"command": command, "argv": argv, "status": "incomplete", "seed": cfg.seed,
                     "config_hash": cfg.hash(), "config": cfg.to_dict(), "versions": _versions(),
                     "started": time.strftime("%Y-%m-%dT%H:%M:%S"), "timings": {}, "outputs": []}
        out_dir.mkdir(parents=True, exist_ok=True)
        self._write()

    def output(self, path) -> None:
        self.data["outputs"].append(str(path))

    def timing(self, name: str, seconds: float) -> None:
        self.data["timings"][name] = round(seconds, 3)

    def finish(self, status: str = "complete", error: Optional[dict] = None, **extra) -> None:
        self.data.update(status=status, **extra)
        self.data["timings"]["total"] = round(time.time() - self.t0, 3)
        if error:
            self.data["error"] = error
        self._write()

    def _write(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=2, default=str))


def _find(root: Path, pattern: str) -> List[Path]:
    if root.is_file():
        return [root]
    found = sorted(root.rglob(pattern))
    if not found:
        raise CliError(f"no {pattern} found under {root}")
    return found


def _require(path: Optional[str], what: str) -> Path:
    if path is None:
        raise CliError(f"--input is required ({what})")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _plan(cfg: RunConfig, participants: List[str], fold: int):
    from .training import FoldPlan, make_folds
    fc = cfg.folds
    if fc.train is not None or fc.test is not None:
        if fc.train is None or fc.test is None:
            raise ConfigError("folds: explicit plans need both train and test")
        return FoldPlan(0, tuple(sorted(fc.test)), tuple(sorted(fc.val or [])), tuple(sorted(fc.train)))
    plans = make_folds(participants, fc.k, fc.n_val, cfg.seed)
    if not 0 <= fold < len(plans):
        raise CliError(f"--fold must be in [0, {len(plans) - 1}]")
    return plans[fold]


def _model_cfg(cfg: RunConfig, ablate: str):
    m = dataclasses.replace(cfg.model, T=cfg.preprocess.T, h=cfg.preprocess.h, w=cfg.preprocess.w)
    return dataclasses.replace(m, **ABLATIONS[ablate])


def _truth_fn(truth_dir: Optional[str]):
    if truth_dir is None:
        return None
    from .synth import load_truth
    from .training import StitchedSegment
    truths = {}
    for p in _find(Path(truth_dir), "truth.json"):
        man = json.loads((p.parent / "manifest.json").read_text()) if (p.parent / "manifest.json").exists() else {}
        truths[str(man.get("participant", p.parent.name))] = load_truth(p)

    def fn(seg: StitchedSegment, pred):
        if seg.participant not in truths:
            raise CliError(f"no truth.json for participant {seg.participant}")
        return truths[seg.participant].hr_windows(pred.window_starts, pred.window_s)
    return fn


# --- subcommands ---------------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args, out: Path, man: RunManifest) -> dict:
    from .synth import SynthSpec, generate, write_synthetic
    sc = cfg.synth
    rows = []
    for i in range(sc.n_participants):
        pid = f"P{i:02d}"
        spec = SynthSpec(duration_s=sc.duration_s, fps=sc.fps, frame_size=tuple(sc.frame_size),
                         hr_profile=sc.hr_bpm + i * sc.hr_step_bpm,
                         activities=[tuple(a) for a in sc.activities] if sc.activities else None,
                         motion_gain=sc.motion_gain, pulse_amplitude=sc.pulse_amplitude,
                         specular_amplitude=sc.specular_amplitude, noise_sigma=sc.noise_sigma,
                         device_offsets={"ppg": sc.ppg_offset_s, "ecg": sc.ecg_offset_s},
                         device_drift_ppm={"ppg": sc.ppg_drift_ppm, "ecg": sc.ecg_drift_ppm},
                         participant=pid)
        raw, truth = generate(spec, seed=cfg.seed + i)
        path = write_synthetic(raw, truth, out / "data" / pid)
        man.output(path)
        rows.append({"participant": pid, "manifest": str(path), "mean_hr_bpm": truth.mean_hr(0, sc.duration_s)})
    return {"recordings": rows}


def cmd_ingest(cfg: RunConfig, args, out: Path, man: RunManifest) -> dict:
    from .ingest import load_recording, save_synced, sync_streams
    ic = cfg.ingest
    rows = []
    for mpath in _find(_require(args.input, "recording directory"), "manifest.json"):
        raw = load_recording(mpath)
        rec = sync_streams(raw, ic.anchor_s, ic.max_lag_s, min_corr=ic.min_corr)
        dest = out / "synced" / f"{rec.participant}.npz"
        save_synced(rec, dest)
        man.output(dest)
        rows.append({"participant": rec.participant, "offsets_s": rec.offsets_s,
                     "clock_scale": rec.clock_scale, "residual_s": rec.residual_s})
    return {"recordings": rows}


def cmd_validate(cfg: RunConfig, args, out: Path, man: RunManifest) -> dict:
    import csv
    from .ingest import apply_exclusion, load_synced, save_synced
    ic = cfg.ingest
    report = out / "validation.csv"
    rows = []
    for path in _find(_require(args.input, "synced directory"), "*.npz"):
        rec = load_synced(path)
        rec.activities = apply_exclusion(rec, ic.exclusion_threshold_bpm, ic.validation_window_s,
                                         ic.validation_slide_s)
        save_synced(rec, path)
        for s in rec.activities:
            rows.append({"participant": rec.participant, "activity": s.label, "start_s": s.start_s,
                         "end_s": s.end_s, "ppg_ecg_mae_bpm": s.exclusion_mae_bpm, "excluded": s.excluded})
    with open(report, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["participant", "activity", "start_s", "end_s",
                                          "ppg_ecg_mae_bpm", "excluded"])
        w.writeheader()
        w.writerows(rows)
    man.output(report)
    return {"excluded": [r for r in rows if r["excluded"]], "n_segments": len(rows)}


def cmd_preprocess(cfg: RunConfig, args, out: Path, man: RunManifest) -> dict:
    from .ingest import load_synced
    from .preprocess import resample_fps, save_clips, window_clips
    pc = cfg.preprocess
    mode = args.fps_mode or pc.fps_mode
    clips = []
    for path in _find(_require(args.input, "synced directory"), "*.npz"):
        rec = resample_fps(load_synced(path), mode)
        clips += window_clips(rec, pc.T, pc.h, pc.w)
    if not clips:
        raise CliError("no clips produced (all segments excluded or shorter than T)")
    index = save_clips(clips, out / "clips")
    man.output(index)
    return {"n_clips": len(clips), "fps_mode": mode, "index": str(index)}


def cmd_train(cfg: RunConfig, args, out: Path, man: RunManifest) -> dict:
    from .preprocess import load_clips
    from .training import split_clips, train_model
    clips = load_clips(_require(args.input, "clip cache"))
    plan = _plan(cfg, sorted({c.meta.participant for c in clips}), args.fold)
    train, val, _ = split_clips(plan, clips)
    tag = f"fold{plan.fold}_{args.ablate}"
    model, res = train_model(_model_cfg(cfg, args.ablate), train, val, cfg.train, out / "checkpoints", tag)
    man.output(res.checkpoint)
    (out / "checkpoints" / f"{tag}_plan.json").write_text(json.dumps(dataclasses.asdict(plan), indent=2))
    return {"checkpoint": res.checkpoint, "best_epoch": res.best_epoch, "best_val_loss": res.best_val_loss,
            "plan": dataclasses.asdict(plan), "train_seconds": res.seconds}


def _plot_hr(result, path: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(8, 3))
    for key, p in result.pred_hr.items():
        g = result.gt_hr[key]
        ax.plot(p.window_starts, p.values_bpm, "o-", label=f"pred {key[0]}/{key[2]}")
        ax.plot(g.window_starts, g.values_bpm, "k--", alpha=0.6)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("HR [bpm]")
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_eval(cfg: RunConfig, args, out: Path, man: RunManifest) -> dict:
    from .model import load_checkpoint
    from .preprocess import load_clips
    from .signal_core import save_hr_csv
    from .training import evaluate_clips, split_clips, write_activity_table, write_pairs, write_table
    if args.checkpoint is None:
        raise CliError("--checkpoint is required for eval")
    model, meta = load_checkpoint(args.checkpoint)
    clips = load_clips(_require(args.input, "clip cache"))
    plan = _plan(cfg, sorted({c.meta.participant for c in clips}), args.fold)
    _, _, test = split_clips(plan, clips)
    ec = cfg.eval
    res = evaluate_clips(model, test, ec.window_s, _truth_fn(args.truth), tuple(ec.band), ec.order)
    name = ABLATION_NAMES.get(args.ablate, "PulseFormer")
    d = out / "eval"
    (d / "hr").mkdir(parents=True, exist_ok=True)
    write_table({name: res.overall}, d / "table_overall.csv")
    write_activity_table({name: res.per_activity}, d / "table_activity.csv")
    write_pairs(res.pairs, d / "windows.csv")
    for (pid, rec, seg), hr in res.pred_hr.items():
        save_hr_csv(hr, d / "hr" / f"{pid}{'_' + rec if rec else ''}_seg{seg}.csv")
    for f in ("table_overall.csv", "table_activity.csv", "windows.csv"):
        man.output(d / f)
    if args.plots:
        _plot_hr(res, d / "hr_overlay.png")
        man.output(d / "hr_overlay.png")
    return {"overall": res.overall.as_row(), "per_activity": {k: v.as_row() for k, v in res.per_activity.items()},
            "checkpoint_config_hash": meta.get("config_hash")}


def cmd_baseline(cfg: RunConfig, args, out: Path, man: RunManifest) -> dict:
    from .baseline import baseline_hr, load_roi_csv
    from .ingest import load_recording
    from .signal_core import compute_metrics, metrics_from_pairs, align_series, save_hr_csv
    from .synth import load_truth
    from .training import write_table
    bc = cfg.baseline
    d = out / "baseline"
    d.mkdir(parents=True, exist_ok=True)
    pairs: Dict[str, list] = {"skin": [], "eyes": []}
    per_rec = []
    for mpath in _find(_require(args.input, "recording directory"), "manifest.json"):
        raw = load_recording(mpath)
        roi_path = Path(bc.roi_csv) if bc.roi_csv else mpath.parent / "rois.csv"
        if not roi_path.exists():
            raise FileNotFoundError(f"ROI CSV not found: {roi_path}")
        rois = load_roi_csv(roi_path)
        truth = load_truth(mpath.parent) if (mpath.parent / "truth.json").exists() else None
        v = raw.eye_video
        for kind in ("skin", "eyes"):
            roi = rois.get((raw.participant, kind))
            if roi is None:
                continue
            hr = baseline_hr(v.frames, v.fps, roi, bc.window_s, tuple(bc.band), bc.order, v.t0, bc.iqr_fence)
            dest = d / f"{raw.participant}_{kind}_hr.csv"
            save_hr_csv(hr, dest)
            man.output(dest)
            row = {"participant": raw.participant, "roi": kind, "n_valid": hr.n_valid}
            if truth is not None:
                gt = truth.hr_windows(hr.window_starts, hr.window_s)
                p, g, _ = align_series(hr, gt)
                pairs[kind].append((p, g))
                if p.size:
                    row["mae_bpm"] = compute_metrics(hr, gt).mae_bpm
            per_rec.append(row)
    table = {}
    for kind, label in (("skin", "Baseline skin"), ("eyes", "Baseline eyes")):
        if pairs[kind]:
            p = np.concatenate([a for a, _ in pairs[kind]])
            g = np.concatenate([b for _, b in pairs[kind]])
            if p.size:
                table[label] = metrics_from_pairs(p, g)
    if table:
        write_table(table, d / "table_baseline.csv")
        man.output(d / "table_baseline.csv")
    return {"recordings": per_rec, "table": {k: v.as_row() for k, v in table.items()}}


def cmd_fps_exp(cfg: RunConfig, args, out: Path, man: RunManifest) -> dict:
    from .ingest import load_synced
    from .preprocess import FPS_MODES, resample_fps, window_clips
    from .training import evaluate_clips, split_clips, train_model, write_table
    pc, ec = cfg.preprocess, cfg.eval
    recs = [load_synced(p) for p in _find(_require(args.input, "synced directory"), "*.npz")]
    plan = _plan(cfg, sorted({r.participant for r in recs}), args.fold)
    modes = [args.fps_mode] if args.fps_mode else list(FPS_MODES)
    gt = _truth_fn(args.truth)
    table = {}
    for mode in modes:
        t = time.time()
        clips = [c for r in recs for c in window_clips(resample_fps(r, mode), pc.T, pc.h, pc.w)]
        train, val, test = split_clips(plan, clips)
        model, _ = train_model(_model_cfg(cfg, args.ablate), train, val, cfg.train, tag=f"fps_{mode}")
        table[mode] = evaluate_clips(model, test, ec.window_s, gt, tuple(ec.band), ec.order).overall
        man.timing(mode, time.time() - t)
    d = out / "fps"
    d.mkdir(parents=True, exist_ok=True)
    write_table(table, d / "table_fps.csv")
    man.output(d / "table_fps.csv")
    return {"table": {k: v.as_row() for k, v in table.items()}}


def cmd_features(cfg: RunConfig, args, out: Path, man: RunManifest) -> dict:
    from .features import extract_features, save_features_csv
    from .signal_core import load_hr_csv
    feats, skipped = {}, []
    for path in _find(_require(args.input, "HR CSV directory"), "*.csv"):
        try:
            hr = load_hr_csv(path, cfg.eval.window_s)
        except (KeyError, ValueError):
            skipped.append(str(path))
            continue
        try:
            feats[path.stem] = extract_features(hr)
        except ValueError as e:
            skipped.append(f"{path}: {e}")
    if not feats:
        raise CliError("no HR series with at least 2 valid windows")
    dest = out / "features.csv"
    save_features_csv(feats, dest)
    man.output(dest)
    return {"n_videos": len(feats), "skipped": skipped}


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "validate": cmd_validate,
            "preprocess": cmd_preprocess, "train": cmd_train, "eval": cmd_eval,
            "baseline": cmd_baseline, "fps-exp": cmd_fps_exp, "features": cmd_features}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out-dir", help="output directory (overrides config)")
    common.add_argument("--fold", type=int, default=0, help="cross-validation fold index")
    common.add_argument("--fps-mode", choices=["30", "down10", "down10_up30"])
    common.add_argument("--ablate", choices=list(ABLATIONS), default="none")
    common.add_argument("--plots", action="store_true", help="emit PNG figures where available")
    common.add_argument("--input", help="input path (recordings, synced files, clips or HR CSVs)")
    common.add_argument("--checkpoint", help="model checkpoint (.pt) for eval")
    common.add_argument("--truth", help="directory with truth.json files for reference HR")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="egoppg", description="Heart rate from eye-tracking video and IMU.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, {"seed": args.seed, "out_dir": args.out_dir})
        if args.seed is not None:
            cfg.train = dataclasses.replace(cfg.train, seed=args.seed)
    except (ConfigError, OSError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 2
    out = Path(cfg.out_dir)
    man = RunManifest(out, args.command, cfg, argv)
    dump_config(cfg, out / f"config_{args.command}.yaml")
    try:
        result = COMMANDS[args.command](cfg, args, out, man)
    except Exception as e:  # structured report for every failure, including unexpected ones
        err = {"error": type(e).__name__, "message": str(e), "command": args.command}
        man.finish("failed", err)
        print(json.dumps(err), file=sys.stderr)
        return 1 if not isinstance(e, (CliError, ConfigError, FileNotFoundError, ValueError)) else 2
    man.finish("complete", result=result)
    print(json.dumps({"command": args.command, "status": "complete", "manifest": str(man.path)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
