"""``featslam`` command line: simulate, calibrate, run, eval, replay.

Exit codes: 0 success, 2 input or configuration error, 3 tracking failure
(more than half the frames lost without ``oracle_relocalize``). ``replay``
exits 1 when the rerun's outputs differ from the manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

from . import __version__, config, instrument, kernels
from .awareness import calibrate, feature_quality
from .errors import FeatSlamError, InvalidConfig, TrackingLost
from .metrics import evaluate, format_trajectory, parse_trajectory
from .pipeline import calibration_stats, frames_csv, run_sequence
from .sim import format_observations, generate_world, ground_truth, parse_observations, render_sequence, degrade_texture

log = logging.getLogger("featslam")

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2
EXIT_TRACKING = 3

SEQ_OBS = "observations.txt"
SEQ_GT = "groundtruth.txt"
SEQ_CFG = "sequence.cfg"
MANIFEST = "manifest.json"


class InputError(FeatSlamError):
    """Unreadable or inconsistent inputs (exit 2)."""


# --- file helpers --------------------------------------------------------------


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_atomic(path, text):
    """Write via a temporary sibling and rename, so readers never see a
    partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_text(path, what):
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc}") from exc


def write_manifest(out_dir, command, args, inputs, outputs, cfg_snapshot, seed, started, manifest_name=MANIFEST):
    out_dir = Path(out_dir)
    manifest = {
        "tool": "featslam",
        "version": __version__,
        "backend": kernels.BACKEND,
        "command": command,
        "args": args,
        "seed": seed,
        "config": cfg_snapshot,
        "inputs": {str(Path(p).resolve()): _sha256(p) for p in inputs},
        "outputs": {name: _sha256(out_dir / name) for name in outputs},
        "duration_s": round(time.perf_counter() - started, 6),
    }
    write_atomic(out_dir / manifest_name, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


# --- sequences -------------------------------------------------------------------


def load_sequence(seq_dir):
    """Frames, ground truth and camera of an exported sequence directory."""
    seq_dir = Path(seq_dir)
    if not seq_dir.is_dir():
        raise InputError(f"sequence directory {seq_dir} does not exist")
    values = config.parse_config(_read_text(seq_dir / SEQ_CFG, "sequence config"), config.WORLD_SCHEMA)
    wcfg = config.world_config(values)
    try:
        gt = parse_trajectory(_read_text(seq_dir / SEQ_GT, "ground truth"))
    except FeatSlamError as exc:
        raise InputError(f"{seq_dir / SEQ_GT}: {exc}") from exc
    try:
        frames = parse_observations(_read_text(seq_dir / SEQ_OBS, "observations"), gt, len(gt))
    except FeatSlamError as exc:
        raise InputError(f"{seq_dir / SEQ_OBS}: {exc}") from exc
    return frames, gt, wcfg.camera


def _seq_inputs(seq_dir):
    return [Path(seq_dir) / n for n in (SEQ_CFG, SEQ_GT, SEQ_OBS)]


# --- commands --------------------------------------------------------------------


def cmd_simulate(args):
    started = time.perf_counter()
    values = config.read_config(args.config, config.WORLD_SCHEMA)
    wcfg = config.world_config(values)
    deg = config.degradation(values)
    world = generate_world(wcfg)
    if deg is not None:
        world = degrade_texture(world, *deg)
    frames = render_sequence(world)
    out = Path(args.out)
    write_atomic(out / SEQ_CFG, config.format_config(config.world_values(wcfg, deg)))
    write_atomic(out / SEQ_GT, format_trajectory(ground_truth(world)))
    write_atomic(out / SEQ_OBS, format_observations(frames))
    write_manifest(
        out, "simulate", {"config": str(Path(args.config).resolve())}, [args.config],
        [SEQ_CFG, SEQ_GT, SEQ_OBS], config.world_values(wcfg, deg), wcfg.seed, started,
    )
    log.info("wrote %d frames to %s", len(frames), out)
    return EXIT_OK


def cmd_calibrate(args):
    started = time.perf_counter()
    stats = []
    report = ["sequence,frame,q_feature\n"]
    per_seq = []
    for seq in args.sequences:
        frames, _, K = load_sequence(seq)
        s = calibration_stats(frames, K, args.d_th, args.grid_rows, args.grid_cols)
        per_seq.append(s)
        stats.extend(s)
    aw = calibrate(stats, args.grid_rows, args.grid_cols)
    for seq, s in zip(args.sequences, per_seq):
        for f, g in enumerate(s):
            report.append(f"{seq},{f},{feature_quality(g, aw.c_base)!r}\n")
    out = Path(args.out)
    write_atomic(out, config.format_config(config.awareness_values(aw)))
    outputs = [out.name]
    if args.report:
        write_atomic(args.report, "".join(report))
    inputs = [p for seq in args.sequences for p in _seq_inputs(seq)]
    write_manifest(
        out.parent, "calibrate",
        {"sequences": [str(Path(s).resolve()) for s in args.sequences], "out_name": out.name,
         "d_th": args.d_th, "grid_rows": args.grid_rows, "grid_cols": args.grid_cols},
        inputs, outputs, config.awareness_values(aw), None, started, manifest_name=out.name + ".manifest.json",
    )
    print(f"c_base = {aw.c_base!r}\nth = {aw.th!r}")
    return EXIT_OK


def _line_policy(args):
    if args.always_lines:
        return "always"
    if args.never_lines:
        return "never"
    return "auto"


def cmd_run(args):
    started = time.perf_counter()
    values = {}
    if args.awareness:
        values.update(config.read_config(args.awareness, config.PIPELINE_SCHEMA))
    if args.config:
        for k, v in config.read_config(args.config, config.PIPELINE_SCHEMA).items():
            values[k] = v
    pcfg = config.pipeline_config(values, removal=not args.no_removal, line_policy=_line_policy(args))
    frames, gt, K = load_sequence(args.sequence)

    instrument.reset()
    traj, results, report, tracker = run_sequence(frames, gt, pcfg, K)
    out = Path(args.out)
    write_atomic(out / "trajectory.txt", format_trajectory(traj))
    write_atomic(out / "frames.csv", frames_csv(results, traj))
    write_atomic(out / "metrics.csv", report.to_csv())
    write_atomic(out / "metrics.txt", report.to_table())
    write_atomic(out / "trace.log", "frame stage iteration cost lambda update_norm accepted\n"
                 + "".join(line + "\n" for line in tracker.trace))
    outputs = ["trajectory.txt", "frames.csv", "metrics.csv", "metrics.txt", "trace.log"]
    inputs = _seq_inputs(args.sequence) + [p for p in (args.awareness, args.config) if p]
    snapshot = dict(values)
    snapshot.update(removal=pcfg.removal, line_policy=pcfg.line_policy)
    write_manifest(
        out, "run",
        {"sequence": str(Path(args.sequence).resolve()),
         "config": str(Path(args.config).resolve()) if args.config else None,
         "awareness": str(Path(args.awareness).resolve()) if args.awareness else None,
         "no_removal": args.no_removal, "always_lines": args.always_lines, "never_lines": args.never_lines},
        inputs, outputs, snapshot, None, started,
    )
    sys.stdout.write(report.to_table())
    n_lost = sum(r.lost for r in results)
    if n_lost * 2 > len(results) and not pcfg.oracle_relocalize:
        raise TrackingLost(f"tracking lost in {n_lost} of {len(results)} frames")
    return EXIT_OK


def cmd_eval(args):
    try:
        est = parse_trajectory(_read_text(args.estimate, "trajectory"))
    except FeatSlamError as exc:
        raise InputError(f"{args.estimate}: {exc}") from exc
    try:
        gt = parse_trajectory(_read_text(args.groundtruth, "trajectory"))
    except FeatSlamError as exc:
        raise InputError(f"{args.groundtruth}: {exc}") from exc
    if args.rpe_delta < 1:
        raise InputError("--rpe-delta must be >= 1")
    report = evaluate(est, gt, align=args.align, rpe_delta=args.rpe_delta, max_dt=args.max_dt)
    sys.stdout.write(report.to_table())
    if args.out:
        write_atomic(args.out, report.to_csv())
    return EXIT_OK


def cmd_replay(args):
    manifest = json.loads(_read_text(args.manifest, "manifest"))
    for path, digest in manifest["inputs"].items():
        if not os.path.exists(path) or _sha256(path) != digest:
            raise InputError(f"input {path} is missing or changed since the manifest was written")
    if manifest.get("backend") != kernels.BACKEND:
        log.warning("manifest was produced with the %s backend, replaying with %s",
                    manifest.get("backend"), kernels.BACKEND)
    a = manifest["args"]
    out = Path(args.out)
    cmd = manifest["command"]
    if cmd == "simulate":
        ns = argparse.Namespace(config=a["config"], out=str(out))
        cmd_simulate(ns)
    elif cmd == "calibrate":
        ns = argparse.Namespace(sequences=a["sequences"], out=str(out / a["out_name"]), report=None,
                                d_th=a["d_th"], grid_rows=a["grid_rows"], grid_cols=a["grid_cols"])
        cmd_calibrate(ns)
    elif cmd == "run":
        ns = argparse.Namespace(sequence=a["sequence"], config=a["config"], awareness=a["awareness"],
                                out=str(out), no_removal=a["no_removal"], always_lines=a["always_lines"],
                                never_lines=a["never_lines"])
        try:
            cmd_run(ns)
        except TrackingLost:
            pass
    else:
        raise InputError(f"manifest names unknown command {cmd!r}")
    diffs = [n for n, d in manifest["outputs"].items() if _sha256(out / n) != d]
    for n in manifest["outputs"]:
        print(f"{n}: {'differs' if n in diffs else 'identical'}")
    return EXIT_MISMATCH if diffs else EXIT_OK


# --- parser ------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="featslam", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"featslam {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic sequence")
    s.add_argument("config", help="world config file (key = value)")
    s.add_argument("--out", required=True, help="output sequence directory")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="derive c_base and th from stable sequences")
    c.add_argument("sequences", nargs="+", help="sequence directories")
    c.add_argument("--out", required=True, help="awareness config file to write")
    c.add_argument("--report", help="optional per-frame Q CSV")
    c.add_argument("--d-th", type=float, default=1.0, help="epipolar threshold in pixels")
    c.add_argument("--grid-rows", type=int, default=3)
    c.add_argument("--grid-cols", type=int, default=3)
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("run", help="track a sequence and score it")
    r.add_argument("sequence", help="sequence directory")
    r.add_argument("--config", help="pipeline config file")
    r.add_argument("--awareness", help="calibration file from 'featslam calibrate'")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--no-removal", action="store_true", help="skip dynamic feature removal")
    g = r.add_mutually_exclusive_group()
    g.add_argument("--always-lines", action="store_true", help="force PointLine mode in every frame")
    g.add_argument("--never-lines", action="store_true", help="force Point mode in every frame")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="ATE and translational RPE of a trajectory")
    e.add_argument("estimate")
    e.add_argument("groundtruth")
    e.add_argument("--align", action=argparse.BooleanOptionalAction, default=True,
                   help="rigidly align before ATE (default on)")
    e.add_argument("--rpe-delta", type=int, default=1, help="frame offset for RPE")
    e.add_argument("--max-dt", type=float, default=0.02, help="timestamp association tolerance (s)")
    e.add_argument("--out", help="write the metrics CSV here")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("replay", help="rerun a command from its manifest and compare outputs")
    m.add_argument("manifest")
    m.add_argument("--out", required=True, help="fresh output directory")
    m.set_defaults(func=cmd_replay)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except TrackingLost as exc:
        print(f"featslam: tracking failure: {exc}", file=sys.stderr)
        return EXIT_TRACKING
    except InvalidConfig as exc:
        key = f" (key: {exc.key})" if getattr(exc, "key", None) else ""
        print(f"featslam: config error: {exc}{key}", file=sys.stderr)
        return EXIT_INPUT
    except (FeatSlamError, ValueError) as exc:
        print(f"featslam: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
