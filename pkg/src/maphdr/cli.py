"""Command-line interface: ``maphdr <verb> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io, metrics
from .background import CompletionError, LINEAR, PAIRWISE
from .config import ConfigError, RunConfig, load_config, parse_items, parse_overrides
from .imaging import luminance

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("maphdr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    items = parse_overrides(args.set or [])
    if getattr(args, "support_prior", None):
        items["support_prior"] = args.support_prior
    return parse_items(items, cfg) if items else cfg


def _radiance_files(folder) -> list[Path]:
    folder = Path(folder)
    if not folder.is_dir():
        raise FileNotFoundError(f"{folder}: not a directory")
    return sorted(p for p in folder.iterdir() if p.suffix.lower() in io.HDR_SUFFIXES)


def _metric_names(choice: str) -> list[str]:
    return sorted(metrics.METRICS) if choice == "all" else [choice]


def _score(names, tests, refs, luminance_scale: float) -> dict:
    out = {}
    for name in names:
        params = {"luminance_scale": luminance_scale} if name == "pupsnr" else {}
        out[name] = metrics.evaluate(name, tests, refs, **params).to_dict()
    return out


# ---------------------------------------------------------------- verbs

def cmd_synthesize(args) -> int:
    from .pipeline import synthesize_video
    cfg = _config(args)
    crf = io.read_crf(args.crf)
    frames = io.load_sequence(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(r, res):
        s = res.stats
        log.info("frame %d: %.1fs, %d outer iterations, %d support pixels", r, s.seconds,
                 s.outer_iterations, s.support_pixels)

    results = synthesize_video(frames, crf, cfg, run_log=args.log_json, debug_dir=args.debug_dir,
                               progress=progress)
    paths = []
    for r, res in enumerate(results):
        path = out / f"hdr_{r:04d}.{args.format}"
        io.write_radiance(path, res.irradiance)
        paths.append(path)
        if args.preview:
            io.write_ldr(out / f"hdr_{r:04d}.png", _tonemap(res.irradiance, args.key))
    print(f"wrote {len(paths)} frames to {out}")
    if args.ref:
        refs = [io.read_radiance(p) for p in _radiance_files(args.ref)]
        if len(refs) != len(results):
            raise ValueError(f"{args.ref}: {len(refs)} reference frames for {len(results)} outputs")
        tests = [res.irradiance for res in results]
        report = _score(sorted(metrics.METRICS), tests, refs, cfg.luminance_scale)
        for r in range(len(tests)):
            print(f"frame {r}: " + "  ".join(f"{m} {report[m]['values'][r]:.3f}" for m in report))
        (out / "metrics.json").write_text(json.dumps(report, indent=2))
    return EXIT_OK


def _tonemap(frame, key: float, white: float | None = None) -> np.ndarray:
    from .tonemap import tonemap_reinhard
    return tonemap_reinhard(frame, key=key, white=white)


def cmd_metrics(args) -> int:
    tests = _radiance_files(args.test)
    refs = _radiance_files(args.ref)
    if not tests:
        raise ValueError(f"{args.test}: no .pfm or .hdr files")
    if len(tests) != len(refs):
        raise ValueError(f"{len(tests)} test frames but {len(refs)} reference frames")
    report = _score(_metric_names(args.metric), [io.read_radiance(p) for p in tests],
                    [io.read_radiance(p) for p in refs], args.luminance_scale)
    for name, entry in report.items():
        entry["files"] = [p.name for p in tests]
        print(f"{name}: mean {entry['mean']:.3f} over {len(tests)} frames")
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_OK


def cmd_tonemap(args) -> int:
    inputs = [Path(p) for p in args.inputs]
    if args.out and len(inputs) != 1:
        raise UsageError("--out takes a single input; use --out-dir for several")
    for path in inputs:
        img = _tonemap(io.read_radiance(path), args.key, args.white)
        dest = Path(args.out) if args.out else Path(args.out_dir or path.parent) / (path.stem + ".png")
        dest.parent.mkdir(parents=True, exist_ok=True)
        io.write_ldr(dest, img)
        print(f"wrote {dest}")
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    from .synthetic import SceneSpec, generate_synthetic
    spec = SceneSpec(width=args.width, height=args.height, frames=args.frames, noise_sigma=args.noise,
                     seed=args.seed)
    seq = generate_synthetic(spec, exposures=tuple(args.exposures))
    out = Path(args.out)
    for sub in ("frames", "truth", "masks"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    for k, (frame, rad, mask) in enumerate(zip(seq.frames, seq.radiance, seq.masks)):
        name = f"frames/frame_{k:04d}.png"
        io.write_ldr(out / name, frame.data)
        io.write_pfm_file(out / "truth" / f"truth_{k:04d}.pfm", rad)
        io.write_mask_png(out / "masks" / f"mask_{k:04d}.png", mask)
        entries.append((name, frame.exposure_s))
    io.write_manifest(out / "manifest.txt", entries)
    io.write_crf(out / "crf.txt", seq.crf)
    print(f"wrote {len(entries)} frames to {out}")
    return EXIT_OK


def cmd_kr_selftest(args) -> int:
    from .selftest import gradient_check, ridge_check
    ok = True
    for rep in (gradient_check(args.instances, args.seed), ridge_check(args.ridge_instances, args.seed)):
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {rep.name}: {rep.instances} instances, worst error {rep.worst:.2e} "
              f"(tolerance {rep.tolerance:.0e}), {rep.seconds:.2f}s")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_NUMERICAL


def _flow_image(path, scale: float | None) -> tuple[np.ndarray, float]:
    path = Path(path)
    if path.suffix.lower() in io.HDR_SUFFIXES:
        lum = luminance(io.read_radiance(path).data)
        scale = scale or float(lum.max()) or 1.0
        return np.clip(lum / scale, 0.0, 1.0), scale
    frame = io.read_ldr(path, 1.0)
    top = float(np.iinfo(np.uint16).max if frame.data.max() > 255 else 255)
    return luminance(frame.data.astype(float)) / top, top


def cmd_flow(args) -> int:
    from .motion import estimate_flow
    cfg = _config(args)
    ref, scale = _flow_image(args.ref, None)
    tgt, _ = _flow_image(args.tgt, scale)
    if ref.shape != tgt.shape:
        raise ValueError(f"image shapes differ: {ref.shape} vs {tgt.shape}")
    flow = estimate_flow(ref, tgt, cfg.flow())
    io.write_flow_pfm(args.out, flow)
    mag = np.hypot(flow[..., 0], flow[..., 1])
    print(f"wrote {args.out}: median |flow| {np.median(mag):.3f} px, max {mag.max():.3f} px")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="maphdr", description="MAP-HDR video synthesis from alternating exposures.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", help="key = value run configuration (default: packaged defaults)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    sp = sub.add_parser("synthesize", help="synthesize HDR frames from an exposure manifest")
    sp.add_argument("--manifest", required=True, help="'filename exposure_seconds' per line, temporal order")
    sp.add_argument("--crf", required=True, help="response table file")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--format", choices=("pfm", "hdr"), default="pfm")
    sp.add_argument("--support-prior", choices=(PAIRWISE, LINEAR))
    sp.add_argument("--log-json", help="write a JSON-lines run log")
    sp.add_argument("--debug-dir", help="dump supports and backgrounds per outer iteration")
    sp.add_argument("--preview", action="store_true", help="also write tonemapped PNG previews")
    sp.add_argument("--key", type=float, default=0.18, help="tonemapping key for previews")
    sp.add_argument("--ref", help="directory of reference HDR frames; prints per-frame logPSNR and puPSNR")
    with_config(sp)
    sp.set_defaults(run=cmd_synthesize)

    sp = sub.add_parser("metrics", help="logPSNR / puPSNR between two directories of HDR frames")
    sp.add_argument("--metric", choices=sorted(metrics.METRICS) + ["all"], default="all")
    sp.add_argument("--test", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--out", help="JSON report path")
    sp.add_argument("--luminance-scale", type=float, default=1.0, help="cd/m^2 per radiance unit (puPSNR)")
    sp.set_defaults(run=cmd_metrics)

    sp = sub.add_parser("tonemap", help="photographic tonemapping to 8-bit PNG")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out")
    sp.add_argument("--out-dir")
    sp.add_argument("--key", type=float, default=0.18)
    sp.add_argument("--white", type=float, help="burn-out luminance (default: frame maximum)")
    sp.set_defaults(run=cmd_tonemap)

    sp = sub.add_parser("gen-synthetic", help="write a synthetic alternating-exposure sequence")
    sp.add_argument("--out", required=True)
    sp.add_argument("--frames", type=int, default=9)
    sp.add_argument("--width", type=int, default=160)
    sp.add_argument("--height", type=int, default=120)
    sp.add_argument("--noise", type=float, default=1.0, help="code noise standard deviation")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--exposures", type=float, nargs="+", default=[0.005, 0.0005])
    sp.set_defaults(run=cmd_gen_synthetic)

    sp = sub.add_parser("kr-selftest", help="check steering gradients and the ridge solver")
    sp.add_argument("--instances", type=int, default=100)
    sp.add_argument("--ridge-instances", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(run=cmd_kr_selftest)

    sp = sub.add_parser("flow", help="estimate optical flow between two images (debug)")
    sp.add_argument("--ref", required=True)
    sp.add_argument("--tgt", required=True)
    sp.add_argument("--out", required=True, help="2-channel flow PFM")
    with_config(sp)
    sp.set_defaults(run=cmd_flow)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.run(args)
    except UsageError as exc:
        print(f"maphdr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CompletionError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"maphdr: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (io.FormatError, ConfigError, ValueError, OSError) as exc:
        print(f"maphdr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
