"""Command-line codec: encode, decode, inspect, evaluate, ablate.

Exit codes: 0 success, 2 bad input, 3 malformed/unsupported bitstream,
4 training divergence.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bitstream import stream_bpp, stream_info
from .codec import decode_stream, encode_image
from .errors import (
    ConfigurationError,
    ContractViolation,
    MalformedBitstream,
    TrainingDiverged,
    UnsupportedFormat,
)
from .imageio import load_image, save_gray_png, save_png
from .model import count_params, get_setting, no_gpp_dimensions, reparameterize
from .reports import (
    EvalRecord,
    ablation_figure,
    bd_rate,
    convergence_figure,
    rd_figure,
    read_eval_csv,
    write_eval_csv,
    write_rd_datafile,
)
from .training import psnr_from_mse

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_MALFORMED = 3
EXIT_DIVERGED = 4

IMAGE_SUFFIXES = {".png", ".ppm"}

_EPILOG = """\
exit codes:
  0  success
  2  bad input (unreadable image, dimensions too small, invalid arguments)
  3  malformed or unsupported bitstream
  4  training diverged
"""


def _int_list(text: str) -> list[int]:
    text = text.strip()
    if not text:
        return []
    try:
        return [int(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_encode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--setting", type=int, default=0, choices=range(5), help="model size preset")
    p.add_argument("--seed", type=int, default=0, help="noise seed carried in the stream")
    p.add_argument("--init-seed", type=int, default=0, help="weight initialization seed")
    p.add_argument("--steps", type=int, default=10000, help="optimization steps")
    p.add_argument(
        "--lambda", dest="lam", type=float, default=None,
        help="rate-distortion weight (default 0.02 * H * W)",
    )
    p.add_argument("--eval-every", type=int, default=100, help="loss logging interval")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="n2l",
        description="Overfitted noise-to-image codec: the bitstream carries "
        "only network weights and a noise seed.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="overfit a model to one image and write a stream")
    p.add_argument("image", help="input PNG or PPM (8-bit RGB, at least 8x8)")
    p.add_argument("-o", "--out", default=None, help="output stream path (default: <image>.n2l)")
    _add_encode_flags(p)
    p.add_argument("--no-gpp", action="store_true", help="direct noise-to-image variant")
    p.add_argument("--single-scale", action="store_true", help="disable the noise pyramid")
    p.add_argument("--curves", default=None, help="write the training curve CSV here")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct the image from a stream alone")
    p.add_argument("stream", help="input stream path")
    p.add_argument("-o", "--out", default=None, help="output PNG path (default: <stream>.png)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("info", help="print header fields and coded section sizes")
    p.add_argument("stream", help="input stream path")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("eval", help="encode+decode a directory of images, emit CSV/RD outputs")
    p.add_argument("images", help="image directory (or a single image file)")
    p.add_argument("--out", required=True, help="output directory for CSV, RD data and figures")
    p.add_argument("--settings", type=_int_list, default=[0], help="comma list, e.g. 0,2,4")
    p.add_argument("--seeds", type=_int_list, default=[0], help="comma list; >1 enables the seed sweep outputs")
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train the full model and one ablated variant, compare")
    p.add_argument("image", help="input PNG or PPM")
    p.add_argument("--mode", required=True, choices=["no-gpp", "single-scale"])
    p.add_argument("--out", required=True, help="output directory for streams, report and figure")
    _add_encode_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("dump-latent", help="dump one noise/latent channel pair plus the reconstruction")
    p.add_argument("stream", help="input stream path")
    p.add_argument("--channel", type=int, default=0, help="channel index to visualize")
    p.add_argument("--out", required=True, help="output directory for the PNGs")
    p.set_defaults(func=cmd_dump_latent)

    p = sub.add_parser("bdrate", help="average rate difference between two eval CSVs")
    p.add_argument("anchor", help="anchor eval CSV")
    p.add_argument("test", help="test eval CSV")
    p.set_defaults(func=cmd_bdrate)

    return parser


def _recompute_quality(image_path, decoded_u8) -> float:
    """Decoder-side PSNR against the source, never copied from the encoder."""
    original = load_image(image_path)
    decoded = decoded_u8.astype(np.float64) / 255.0
    mse = float(np.mean((original.data[0].transpose(1, 2, 0) - decoded) ** 2))
    return psnr_from_mse(mse)


def cmd_encode(args) -> int:
    image = load_image(args.image)
    out = Path(args.out) if args.out else Path(args.image).with_suffix(".n2l")
    result = encode_image(
        image,
        setting_id=args.setting,
        seed=args.seed,
        init_seed=args.init_seed,
        steps=args.steps,
        lam=args.lam,
        no_gpp=args.no_gpp,
        single_scale=args.single_scale,
        eval_every=args.eval_every,
    )
    out.write_bytes(result.stream)
    if args.curves:
        result.report.write_csv(args.curves)
    print(f"wrote {out} ({len(result.stream)} bytes)")
    print(f"setting {args.setting}  seed {args.seed}  steps {args.steps}")
    print(f"bpp {result.bpp:.6f}")
    print(
        f"psnr pre-quant {result.pre_quant_psnr_db:.4f} dB"
        f"  post-quant {result.post_quant_psnr_db:.4f} dB"
    )
    print(f"encode time {result.seconds:.2f} s")
    return EXIT_OK


def cmd_decode(args) -> int:
    data = Path(args.stream).read_bytes()
    out = Path(args.out) if args.out else Path(args.stream).with_suffix(".png")
    result = decode_stream(data)
    save_png(out, result.image_u8)
    print(f"wrote {out} ({result.header.width}x{result.header.height})")
    print(f"decode time {result.seconds * 1000.0:.2f} ms")
    return EXIT_OK


def cmd_info(args) -> int:
    info = stream_info(Path(args.stream).read_bytes())
    ablations = [name for name in ("no_gpp", "single_scale") if info[name]]
    rows = [
        ("magic", info["magic"]),
        ("version", info["version"]),
        ("setting", info["setting_id"]),
        ("flags", f"0x{info['flags']:02x} ({', '.join(ablations) if ablations else 'none'})"),
        ("dims", f"{info['width']}x{info['height']}"),
        ("seed", info["seed"]),
        ("init_seed", info["init_seed"]),
        ("gpp_step_exp", info["gpp_step_exp"]),
        ("synth_step_exp", info["synth_step_exp"]),
        ("header_bits", info["header_bits"]),
        ("gpp_bits", info["gpp_bits"]),
        ("synth_bits", info["synth_bits"]),
        ("total_bits", info["total_bits"]),
        ("bpp", f"{info['bpp']:.6f}"),
    ]
    width = max(len(k) for k, _ in rows)
    for key, value in rows:
        print(f"{key:<{width}}  {value}")
    return EXIT_OK


def _scan_images(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if path.is_dir():
        found = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not found:
            raise ConfigurationError(f"no PNG/PPM images in {path}")
        return found
    raise ConfigurationError(f"no such file or directory: {path}")


def _eval_job(job):
    """One (image, setting, seed) cell; returns (record, training report)."""
    dataset, image_path, setting, seed, init_seed, steps, lam, eval_every = job
    record = EvalRecord(dataset=dataset, image=Path(image_path).stem, setting=setting, seed=seed)
    try:
        image = load_image(image_path)
        enc = encode_image(
            image, setting_id=setting, seed=seed, init_seed=init_seed,
            steps=steps, lam=lam, eval_every=eval_every,
        )
        dec = decode_stream(enc.stream)
        h, w = dec.header.height, dec.header.width
        record.bpp = stream_bpp(len(enc.stream), h, w)
        record.psnr_db = _recompute_quality(image_path, dec.image_u8)
        record.encode_s = enc.seconds
        record.decode_ms = dec.seconds * 1000.0
        return record, enc.report
    except Exception as exc:  # per-cell failures land in the CSV, the run continues
        record.status = f"failed: {type(exc).__name__}"
        return record, None


def cmd_eval(args) -> int:
    images = _scan_images(Path(args.images))
    dataset = (images[0].parent if images[0].parent.name else Path.cwd()).name
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (dataset, str(path), setting, seed, args.init_seed, args.steps, args.lam, args.eval_every)
        for path in images
        for setting in args.settings
        for seed in args.seeds
    ]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_eval_job, jobs))
    else:
        results = [_eval_job(job) for job in jobs]

    records = [record for record, _ in results]
    write_eval_csv(records, out_dir / "eval.csv")
    write_rd_datafile(records, out_dir / "rd.dat")
    rd_figure(records, out_dir / "rd.png")
    written = [out_dir / "eval.csv", out_dir / "rd.dat", out_dir / "rd.png"]

    sweep = len(args.seeds) > 1
    if sweep:
        for (record, report), job in zip(results, jobs):
            if report is None:
                continue
            name = f"convergence_{record.image}_s{record.setting}_seed{record.seed}"
            report.write_csv(out_dir / f"{name}.csv")
            written.append(out_dir / f"{name}.csv")
        for path in images:
            for setting in args.settings:
                group = {
                    record.seed: report
                    for (record, report), _ in zip(results, jobs)
                    if report is not None
                    and record.image == path.stem
                    and record.setting == setting
                }
                if len(group) < 2:
                    continue
                fig_path = out_dir / f"convergence_{path.stem}_s{setting}.png"
                convergence_figure(group, fig_path, title=f"{path.stem} setting {setting}")
                written.append(fig_path)
                finals = [
                    record.psnr_db
                    for record, _ in results
                    if record.status == "ok"
                    and record.image == path.stem
                    and record.setting == setting
                ]
                if len(finals) > 1:
                    spread = max(finals) - min(finals)
                    print(
                        f"seed spread {path.stem} setting {setting}: "
                        f"{spread:.4f} dB over {len(finals)} seeds"
                    )

    failures = sum(1 for record in records if record.status != "ok")
    print(f"{len(records)} cells, {failures} failed")
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    image = load_image(args.image)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = get_setting(args.setting)
    mode = args.mode
    variants = {
        "full": {},
        mode: {"no_gpp": True} if mode == "no-gpp" else {"single_scale": True},
    }
    rows = {}
    for label, extra in variants.items():
        enc = encode_image(
            image, setting_id=args.setting, seed=args.seed, init_seed=args.init_seed,
            steps=args.steps, lam=args.lam, eval_every=args.eval_every, **extra,
        )
        stream_path = out_dir / f"{label}.n2l"
        stream_path.write_bytes(enc.stream)
        dec = decode_stream(enc.stream)
        psnr_db = _recompute_quality(args.image, dec.image_u8)
        rows[label] = (enc.bpp, psnr_db)

    full_params = count_params(config)
    variant_params = (
        count_params(config, no_gpp=True) if mode == "no-gpp" else full_params
    )
    print(f"full    bpp {rows['full'][0]:.6f}  psnr {rows['full'][1]:.4f} dB  params {full_params}")
    print(f"{mode:<7} bpp {rows[mode][0]:.6f}  psnr {rows[mode][1]:.4f} dB  params {variant_params}")
    delta = rows["full"][1] - rows[mode][1]
    print(f"delta psnr (full - {mode}): {delta:+.4f} dB")
    if mode == "no-gpp":
        width, blocks = no_gpp_dimensions(config)
        print(f"matched direct net: width {width}, {blocks} blocks")

    labels = ["full", mode]
    ablation_figure(
        labels,
        [rows[k][0] for k in labels],
        [rows[k][1] for k in labels],
        out_dir / "ablation.png",
        title=f"setting {args.setting}, {args.steps} steps",
    )
    print(f"wrote {out_dir / 'full.n2l'}")
    print(f"wrote {out_dir / (mode + '.n2l')}")
    print(f"wrote {out_dir / 'ablation.png'}")
    return EXIT_OK


def cmd_dump_latent(args) -> int:
    result = decode_stream(Path(args.stream).read_bytes())
    if result.header.no_gpp:
        raise ContractViolation("stream was coded without a Gaussian predictor; no latent to dump")
    channels = result.model.config.latent_ch
    if not 0 <= args.channel < channels:
        raise ContractViolation(f"channel {args.channel} out of range [0, {channels})")
    mu, sigma = result.model.predict_gaussian(result.fused_noise, result.position)
    latent = reparameterize(mu, sigma, result.fused_noise)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {
        out_dir / f"noise_ch{args.channel}.png": result.fused_noise.data[0, args.channel],
        out_dir / f"latent_ch{args.channel}.png": latent.data[0, args.channel],
    }
    for path, channel in outputs.items():
        save_gray_png(path, channel)
    save_png(out_dir / "recon.png", result.image_u8)
    for path in [*outputs, out_dir / "recon.png"]:
        print(f"wrote {path}")
    return EXIT_OK


def _setting_means(records):
    """Per-setting (bpp, psnr) means over successful rows, setting-ordered."""
    points = {}
    for setting in sorted({r.setting for r in records if r.status == "ok"}):
        group = [r for r in records if r.status == "ok" and r.setting == setting]
        points[setting] = (
            float(np.mean([r.bpp for r in group])),
            float(np.mean([r.psnr_db for r in group])),
        )
    return points


def cmd_bdrate(args) -> int:
    anchor = _setting_means(read_eval_csv(args.anchor))
    test = _setting_means(read_eval_csv(args.test))
    if len(anchor) < 2 or len(test) < 2:
        raise ConfigurationError("need successful rows for at least two settings per CSV")
    rate = bd_rate(
        [anchor[s][0] for s in anchor], [anchor[s][1] for s in anchor],
        [test[s][0] for s in test], [test[s][1] for s in test],
    )
    print(f"bd-rate {rate:+.2f}% (negative: test needs fewer bits at equal quality)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports its own usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (MalformedBitstream, UnsupportedFormat) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ContractViolation, ConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
