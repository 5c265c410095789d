"""``fastedi`` command line.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 benchmark or replay threshold not met.
"""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from pathlib import Path

import numpy as np

from . import calib, storage, synth
from .baseline import reconstruct_latent, run_offline_baseline
from .errors import FastEdiError
from .fast import EdiAccumulator, run_offline
from .metrics import laplacian_variance, psnr, psnr_for_report, record_throughput
from .model import IntegrationMode, SensorGeometry
from .replay import replay

log = logging.getLogger("fastedi")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_THRESHOLD = 0, 1, 2, 3

# published single-core figures, reported next to local measurements but never gated
PUBLISHED_FAST_EV_PER_SEC = 13e6
PUBLISHED_BASELINE_EV_PER_SEC = 49e3
PUBLISHED_SPEEDUP = 260.0


class UsageError(Exception):
    """Flags parse but describe something impossible; exits like a parse error."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    print(text)


def _load(manifest_path):
    m = storage.read_manifest(manifest_path)
    return m, m.load_events(), m.load_frames(), m.contrast()


# -- synth ---------------------------------------------------------------------

def cmd_synth(args) -> int:
    try:
        spec = synth.SceneSpec(
            pattern=args.pattern,
            velocity=args.velocity,
            geometry=SensorGeometry(args.width, args.height),
            duration=args.duration,
            wavelength=args.wavelength,
        )
        cp = calib.symmetric_contrast(args.contrast)
        if not 0 < args.exposure_frac <= 1 or args.fps < 1 or args.sample_period < 1:
            raise ValueError("need 0 < --exposure-frac <= 1, --fps >= 1, --sample-period >= 1")
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    ds = synth.make_dataset(spec, cp, args.fps, args.exposure_frac, args.sample_period)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_events(ds.events, out / "events.txt", header=[
        "t_us x y p (p: 1 = ON, 0 = OFF)",
        f"pattern={spec.pattern} velocity={spec.velocity} contrast={args.contrast}",
    ])
    entries = []
    for i, ((b, w), gt) in enumerate(zip(ds.frames, ds.ground_truth)):
        storage.write_pgm(b, out / f"blur_{i:04d}.pgm")
        storage.write_pgm(gt, out / f"gt_{i:04d}.pgm")
        entries.append(storage.FrameEntry(f"blur_{i:04d}.pgm", w, f"gt_{i:04d}.pgm"))
    manifest = storage.DatasetManifest(ds.geometry, "events.txt", tuple(entries),
                                       contrast_override=cp, root=out)
    storage.write_manifest(manifest, out / "manifest.json")
    log.info("wrote %d events and %d frames to %s", len(ds.events), len(entries), out)
    print(json.dumps({"out_dir": str(out), "events": len(ds.events), "frames": len(entries)}))
    return EXIT_OK


# -- deblur --------------------------------------------------------------------

def _max_rel_diff(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / b))


def cmd_deblur(args) -> int:
    m, events, frames, cp = _load(args.manifest)
    mode = IntegrationMode.parse(args.mode) if args.mode else m.mode
    truth = m.load_ground_truth()
    if args.engine == "baseline":
        results = run_offline_baseline(events, frames, cp, m.geometry, mode)
    else:
        acc = EdiAccumulator(m.geometry, cp, mode)
        results = run_offline(events, frames, cp, m.geometry, mode, accumulator=acc)
    ref = run_offline_baseline(events, frames, cp, m.geometry, mode) if args.engine == "both" else None

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, gains_b, gains_d, diffs = [], [], [], []
    for i, (res, (b, w)) in enumerate(zip(results, frames)):
        name = f"deblur_{i:04d}.pgm"
        storage.write_pgm(res.latent, out / name)
        row = {
            "index": i, "t_start_us": w.t_start, "t_end_us": w.t_end,
            "events": res.events_processed, "output": name,
            "step1_time": res.step1_time, "step2_time": res.step2_time,
        }
        if truth[i] is not None:
            pb, pd = psnr(b, truth[i]), psnr(res.latent, truth[i])
            row["psnr_blurred"] = psnr_for_report(pb)
            row["psnr_deblurred"] = psnr_for_report(pd)
            gains_b.append(row["psnr_blurred"])
            gains_d.append(row["psnr_deblurred"])
        if b.width >= 3 and b.height >= 3:
            row["sharpness_blurred"] = laplacian_variance(b)
            row["sharpness_deblurred"] = laplacian_variance(res.latent)
        if ref is not None:
            row["max_rel_diff_vs_baseline"] = _max_rel_diff(res.edi_map.e, ref[i].edi_map.e)
            diffs.append(row["max_rel_diff_vs_baseline"])
        rows.append(row)
    tp = record_throughput(results) if results else None
    report = {
        "engine": args.engine,
        "mode": mode.value,
        "contrast": {"c_on": cp.c_on, "c_off": cp.c_off},
        "events_total": tp.events_total if tp else 0,
        "events_dropped": len(events) - (tp.events_total if tp else 0),
        "wall_time": tp.wall_time if tp else 0.0,
        "ev_per_sec": tp.ev_per_sec if tp else 0.0,
        "mean_psnr_blurred": statistics.fmean(gains_b) if gains_b else None,
        "mean_psnr_deblurred": statistics.fmean(gains_d) if gains_d else None,
        "max_rel_diff_vs_baseline": max(diffs) if diffs else None,
        "frames": rows,
    }
    _emit(report, args.out or str(out / "report.json"))
    return EXIT_OK


# -- reconstruct ---------------------------------------------------------------

def cmd_reconstruct(args) -> int:
    m, events, frames, cp = _load(args.manifest)
    if not 0 <= args.frame_index < len(frames):
        raise FastEdiError(f"frame index {args.frame_index} out of range (0..{len(frames) - 1})")
    b, w = frames[args.frame_index]
    targets = [int(t) for t in args.timestamps.split(",")] if args.timestamps else [w.t_start]
    acc = EdiAccumulator(m.geometry, cp, m.mode)
    acc.begin_exposure(w.t_start)
    acc.push_events(events.in_window(w))
    latent = acc.end_exposure(w.t_end, b).latent
    images = reconstruct_latent(latent, events, cp, w.t_start, targets)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_pgm(latent, out / "deblurred.pgm")
    outputs = []
    for t, img in zip(targets, images):
        name = f"latent_{t}.pgm"
        storage.write_pgm(img, out / name)
        outputs.append({"t_us": t, "path": name})
    report = {"frame_index": args.frame_index, "t_start_us": w.t_start, "t_end_us": w.t_end,
              "deblurred": "deblurred.pgm", "outputs": outputs}
    _emit(report, args.out or str(out / "report.json"))
    return EXIT_OK


# -- bench ---------------------------------------------------------------------

def _bench_engine(engine, events, frames, cp, geom, mode, repeat):
    run = run_offline if engine == "fast" else run_offline_baseline
    run(events, frames[:1], cp, geom, mode)  # warm-up: JIT and caches, not reported
    rates, walls, last = [], [], None
    for _ in range(repeat):
        last = record_throughput(run(events, frames, cp, geom, mode))
        rates.append(last.ev_per_sec)
        walls.append(last.wall_time)
    mean = statistics.fmean(rates)
    rel_std = statistics.pstdev(rates) / mean if mean > 0 else 0.0
    return {
        "ev_per_sec": mean,
        "ev_per_sec_runs": rates,
        "wall_time_runs": walls,
        "rel_std": rel_std,
        "per_frame_step1_time": last.per_frame_step1_time,
        "per_frame_step2_time": last.per_frame_step2_time,
    }


def cmd_bench(args) -> int:
    if args.repeat < 1:
        raise FastEdiError("--repeat must be >= 1")
    m, events, frames, cp = _load(args.manifest)
    mode = IntegrationMode.parse(args.mode) if args.mode else m.mode
    engines = ["fast", "baseline"] if args.engine == "both" else [args.engine]
    report_engines = {e: _bench_engine(e, events, frames, cp, m.geometry, mode, args.repeat)
                      for e in engines}
    in_window = sum(len(events.in_window(w)) for _, w in frames)
    speed = None
    if len(engines) == 2:
        f_wall = statistics.fmean(report_engines["fast"]["wall_time_runs"])
        b_wall = statistics.fmean(report_engines["baseline"]["wall_time_runs"])
        speed = b_wall / f_wall if f_wall > 0 else None
    failures = []
    if "fast" in report_engines and report_engines["fast"]["ev_per_sec"] < args.min_ev_per_sec:
        failures.append(f"fast engine {report_engines['fast']['ev_per_sec']:.4g} ev/s "
                        f"< {args.min_ev_per_sec:.4g}")
    if speed is not None and speed < args.min_speedup:
        failures.append(f"speedup {speed:.3g} < {args.min_speedup:.3g}")
    report = {
        "geometry": {"width": m.geometry.width, "height": m.geometry.height},
        "events_total": in_window,
        "repeat": args.repeat,
        "engines": report_engines,
        "speedup": speed,
        "thresholds": {"min_ev_per_sec": args.min_ev_per_sec, "min_speedup": args.min_speedup},
        "passed": not failures,
        "failures": failures,
        "reference": {"fast_ev_per_sec": PUBLISHED_FAST_EV_PER_SEC,
                      "baseline_ev_per_sec": PUBLISHED_BASELINE_EV_PER_SEC,
                      "speedup": PUBLISHED_SPEEDUP},
    }
    _emit(report, args.out)
    for f in failures:
        log.error("threshold not met: %s", f)
    return EXIT_OK if not failures else EXIT_THRESHOLD


# -- stream-sim ----------------------------------------------------------------

def cmd_stream_sim(args) -> int:
    m, events, frames, cp = _load(args.manifest)
    rep = replay(events, frames, cp, m.geometry, m.mode, engine=args.engine,
                 rate_multiplier=args.rate_multiplier, queue_cap=args.queue_cap,
                 chunk_us=args.chunk_us)
    _emit(rep.to_dict(), args.out)
    if rep.jammed:
        log.error("jammed: %d of %d frames dropped, peak queue depth %d",
                  len(rep.dropped_frames), rep.frames_total, rep.peak_queue_depth)
        return EXIT_THRESHOLD
    return EXIT_OK


# -- contrast ------------------------------------------------------------------

def cmd_contrast(args) -> int:
    if args.manifest:
        m = storage.read_manifest(args.manifest)
        cp = m.contrast()
        hp = m.hardware if m.contrast_override is None else None
    else:
        if args.on_ratio is not None or args.off_ratio is not None:
            if args.on_ratio is None or args.off_ratio is None:
                raise FastEdiError("--on-ratio and --off-ratio go together")
            i_d, i_on, i_off = 1.0, args.on_ratio, args.off_ratio
        else:
            if None in (args.id, args.ion, args.ioff):
                raise FastEdiError("give --id/--ion/--ioff, --on-ratio/--off-ratio, or --manifest")
            i_d, i_on, i_off = args.id, args.ion, args.ioff
        hp = calib.HardwareParams(args.kappa_n, args.kappa_p, args.c1, args.c2, i_d, i_on, i_off)
        cp = calib.contrast_from_hardware(hp)
    alpha = calib.contrast_prefactor(hp.kappa_n, hp.kappa_p, hp.cap_c1, hp.cap_c2) if hp else None
    _emit({"c_on": cp.c_on, "c_off": cp.c_off, "prefactor": alpha}, args.out)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fastedi", description="Real-time event-based motion deblurring.")
    p.add_argument("--log-level", default="WARNING", help="logging level (default: %(default)s)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--pattern", choices=synth.PATTERNS, default="vertical_edge")
    s.add_argument("--velocity", type=float, default=200.0, help="px/s, horizontal")
    s.add_argument("--width", type=int, default=128)
    s.add_argument("--height", type=int, default=96)
    s.add_argument("--fps", type=float, default=20.0)
    s.add_argument("--exposure-frac", type=float, default=0.5)
    s.add_argument("--contrast", type=float, default=0.26)
    s.add_argument("--duration", type=int, default=500_000, help="microseconds")
    s.add_argument("--wavelength", type=float, default=16.0, help="grating period in px")
    s.add_argument("--sample-period", type=int, default=100, help="microseconds")
    s.add_argument("--out-dir", default="dataset")
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("deblur", help="deblur every frame of a dataset")
    d.add_argument("--manifest", required=True)
    d.add_argument("--mode", choices=["time", "count"], default=None,
                   help="default: the manifest's mode")
    d.add_argument("--engine", choices=["fast", "baseline", "both"], default="fast",
                   help="'both' writes fast output and reports the difference to baseline")
    d.add_argument("--out-dir", default="deblurred")
    d.add_argument("--out", default=None, help="report path (default: OUT_DIR/report.json)")
    d.set_defaults(func=cmd_deblur)

    r = sub.add_parser("reconstruct", help="latent frames at chosen timestamps")
    r.add_argument("--manifest", required=True)
    r.add_argument("--frame-index", type=int, default=0)
    r.add_argument("--timestamps", default=None, help="comma separated microseconds (default: t_start)")
    r.add_argument("--out-dir", default="reconstructed")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_reconstruct)

    b = sub.add_parser("bench", help="throughput and speedup benchmark")
    b.add_argument("--manifest", required=True)
    b.add_argument("--engine", choices=["fast", "baseline", "both"], default="both")
    b.add_argument("--mode", choices=["time", "count"], default=None)
    b.add_argument("--repeat", type=int, default=3)
    b.add_argument("--min-ev-per-sec", type=float, default=1e6)
    b.add_argument("--min-speedup", type=float, default=20.0)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench)

    st = sub.add_parser("stream-sim", help="paced real-time replay through a bounded queue")
    st.add_argument("--manifest", required=True)
    st.add_argument("--rate-multiplier", type=float, default=1.0)
    st.add_argument("--queue-cap", type=int, default=64)
    st.add_argument("--engine", choices=["fast", "baseline"], default="fast")
    st.add_argument("--chunk-us", type=int, default=1000)
    st.add_argument("--out", default=None)
    st.set_defaults(func=cmd_stream_sim)

    c = sub.add_parser("contrast", help="thresholds from DVS bias parameters")
    c.add_argument("--kappa-n", type=float, default=calib.DAVIS346_KAPPA)
    c.add_argument("--kappa-p", type=float, default=calib.DAVIS346_KAPPA)
    c.add_argument("--c1", type=float, default=calib.DAVIS346_C1)
    c.add_argument("--c2", type=float, default=calib.DAVIS346_C2)
    c.add_argument("--id", type=float, default=None, help="photoreceptor bias current, A")
    c.add_argument("--ion", type=float, default=None, help="ON threshold bias current, A")
    c.add_argument("--ioff", type=float, default=None, help="OFF threshold bias current, A")
    c.add_argument("--on-ratio", type=float, default=None, help="i_on / i_d")
    c.add_argument("--off-ratio", type=float, default=None, help="i_off / i_d")
    c.add_argument("--manifest", default=None)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_contrast)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fastedi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FastEdiError, ValueError, OSError) as exc:
        log.error("%s", exc)
        print(f"fastedi: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
