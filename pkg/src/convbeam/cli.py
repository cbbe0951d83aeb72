"""Command line interface: ``convbeam {simulate,dereverb,separate,eval}``.

Every subcommand accepts ``--config FILE`` holding ``key=value`` lines whose
keys are option names (dashes or underscores); explicit flags override it.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import Waveform, read_wav, write_wav
from .errors import ConvbeamError, InvalidParam
from .linalg import DEFAULT_LOADING
from .masks import DEFAULT_POWER_FLOOR, load_masks, oracle_early_mask, oracle_masks
from .metrics import best_permutation_si_sdr
from .pipeline import ARCHITECTURES, PipelineConfig, interior, separate, uniform_masks
from .simulator import make_scene, read_manifest, read_scene, write_scene
from .stft import StftConfig, istft, stft
from .wpd import WpdConfig
from .wpe import WpeConfig, wpe_run

log = logging.getLogger("convbeam")

ARCH_ALIASES = {"arch1": "wpe_mvdr", "arch2": "wpd"}
THREADS_ENV = "CONVBEAM_THREADS"


def _add_stft_options(p):
    g = p.add_argument_group("STFT")
    g.add_argument("--win-len", type=int, default=400)
    g.add_argument("--hop", type=int, default=160)
    g.add_argument("--fft-size", type=int, default=512)


def _add_filter_options(p):
    g = p.add_argument_group("filters")
    g.add_argument("--taps", type=int, default=5, help="filter taps K")
    g.add_argument("--delay", type=int, default=3, help="prediction delay D (frames)")
    g.add_argument("--iterations", type=int, default=1, help="WPE iterations")
    g.add_argument("--loading", type=float, default=DEFAULT_LOADING, help="relative diagonal loading")
    g.add_argument("--power-floor", type=float, default=DEFAULT_POWER_FLOOR,
                   help="power estimate floor relative to each bin's mean power")
    g.add_argument("--threads", type=int, default=None,
                   help=f"worker threads for per-bin solves (default ${THREADS_ENV} or 1)")


def _add_mask_options(p):
    g = p.add_argument_group("masks")
    g.add_argument("--mask-source", choices=("oracle", "uniform", "file"), default=None,
                   help="default: oracle with --scene, uniform otherwise")
    g.add_argument("--scene", type=Path, help="scene directory written by 'simulate'")
    g.add_argument("--mask-file", type=Path, help="mask tensor file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="convbeam", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"convbeam {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic reverberant scene")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--sources", type=int, default=2)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--rt60", type=float, default=0.3)
    p.add_argument("--snr", type=float, default=20.0, help="dB; 'inf' for no noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=4.0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--drr", type=float, default=8.0, help="direct-to-reverberant ratio, dB")
    p.add_argument("--mic-spacing", type=float, default=0.08, help="metres")
    p.add_argument("--reflections", type=int, default=2000)
    p.add_argument("--early-ms", type=float, default=50.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dereverb", help="mask-based WPE dereverberation of a WAV file")
    p.add_argument("--input", type=Path, help="multi-channel WAV (default: the scene mixture)")
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    _add_mask_options(p)
    _add_filter_options(p)
    _add_stft_options(p)
    p.set_defaults(func=cmd_dereverb)

    p = sub.add_parser("separate", help="separate and dereverberate J sources")
    p.add_argument("--arch", default="wpd", choices=ARCHITECTURES + tuple(ARCH_ALIASES),
                   help="mvdr, wpe_mvdr (arch1) or wpd (arch2)")
    p.add_argument("--input", type=Path, help="multi-channel WAV (default: the scene mixture)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    p.add_argument("--sources", type=int, default=None, help="number of sources for uniform masks")
    p.add_argument("--ref-channel", type=int, default=0)
    p.add_argument("--wpe-mode", choices=("shared", "per_source"), default="shared")
    p.add_argument("--shared-mask", dest="shared_mask", action="store_const", const=True, default=True,
                   help="one mask per source drives both WPD paths (default)")
    p.add_argument("--split-masks", dest="shared_mask", action="store_const", const=False,
                   help="WPD power path uses --power-mask-file")
    p.add_argument("--power-mask-file", type=Path)
    p.add_argument("--noise-in-power", action="store_true", help="add the noise mask to WPD power masks")
    p.add_argument("--power-alignment", choices=("shifted", "aligned"), default="shifted",
                   help="WPD covariance: weight stacked frame t-D by the power of frame t (shifted) or t-D")
    _add_mask_options(p)
    _add_filter_options(p)
    _add_stft_options(p)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("eval", help="SI-SDR report for separated signals")
    p.add_argument("--estimates", type=Path, nargs="+", required=True)
    p.add_argument("--references", type=Path, nargs="+", help="mono reference WAVs")
    p.add_argument("--mixture", type=Path, help="unprocessed signal for improvements")
    p.add_argument("--scene", type=Path, help="take references/mixture from a scene directory")
    p.add_argument("--ref-channel", type=int, default=0)
    p.add_argument("--report", type=Path, help="also write the report here")
    _add_stft_options(p)
    p.set_defaults(func=cmd_eval)

    for action in sub.choices.values():
        action.add_argument("--config", type=Path, help="key=value defaults file")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in read_manifest(args.config).items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help", "func"):
            raise InvalidParam(f"{args.config}: unknown option {key!r} for '{args.command}'")
        action = known[dest]
        if isinstance(action, argparse._StoreConstAction) or isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = value.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            defaults[dest] = [action.type(v) if action.type else v for v in value.split()]
        else:
            defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get(THREADS_ENV, "1"))


def _stft_cfg(args, sample_rate: int) -> StftConfig:
    return StftConfig(sample_rate=sample_rate, win_len=args.win_len, hop=args.hop, fft_size=args.fft_size)


def _write_run_manifest(path: Path, args, **extra) -> None:
    items = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    items.update(extra)
    lines = [f"convbeam_version={__version__}"] + [f"{k}={v}" for k, v in items.items()]
    path.write_text("\n".join(lines) + "\n")


def _load_input(args):
    scene = read_scene(args.scene) if args.scene else None
    if args.input is not None:
        wave = read_wav(args.input)
    elif scene is not None:
        wave = Waveform(scene.sample_rate, scene.mixture)
    else:
        raise InvalidParam("need --input or --scene")
    if scene is not None and scene.sample_rate != wave.sample_rate:
        raise InvalidParam(f"input rate {wave.sample_rate} differs from scene rate {scene.sample_rate}")
    return wave, scene


def _mask_source(args, scene) -> str:
    source = args.mask_source or ("oracle" if scene is not None else "uniform")
    if source == "oracle" and scene is None:
        raise InvalidParam("oracle masks need --scene")
    if source == "file" and args.mask_file is None:
        raise InvalidParam("--mask-source file needs --mask-file")
    return source


def cmd_simulate(args) -> int:
    scene = make_scene(
        n_sources=args.sources,
        n_channels=args.channels,
        rt60=args.rt60,
        snr_db=args.snr,
        seed=args.seed,
        duration=args.duration,
        sample_rate=args.sample_rate,
        mic_spacing=args.mic_spacing,
        drr_db=args.drr,
        n_reflections=args.reflections,
        early_boundary_ms=args.early_ms,
    )
    write_scene(scene, args.out)
    _write_run_manifest(args.out / "run.txt", args)
    print(f"wrote scene with {scene.n_sources} source(s), {scene.n_channels} channel(s) to {args.out}")
    return 0


def cmd_dereverb(args) -> int:
    wave, scene = _load_input(args)
    cfg = _stft_cfg(args, wave.sample_rate)
    X = stft(wave.samples, cfg)
    source = _mask_source(args, scene)
    if source == "oracle":
        mask = oracle_early_mask(scene, cfg)
    elif source == "file":
        mask = load_masks(args.mask_file)
        if mask.ndim == 4:
            # a full set: use everything but the noise
            mask = np.clip(mask[1:].sum(axis=0), 0.0, 1.0)
    else:
        mask = None
    wcfg = WpeConfig(args.delay, args.taps, args.iterations, args.loading, args.power_floor)
    Y = wpe_run(X, mask, wcfg, threads=_threads(args))
    out = istft(Y, cfg, wave.samples.shape[1])
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_wav(args.output, Waveform(wave.sample_rate, out), args.format)
    _write_run_manifest(args.output.with_name(args.output.name + ".run.txt"), args, mask_source_used=source)
    return 0


def cmd_separate(args) -> int:
    wave, scene = _load_input(args)
    cfg = _stft_cfg(args, wave.sample_rate)
    X = stft(wave.samples, cfg)
    arch = ARCH_ALIASES.get(args.arch, args.arch)
    source = _mask_source(args, scene)
    if source == "oracle":
        masks = oracle_masks(scene, cfg)
    elif source == "file":
        masks = load_masks(args.mask_file)
    else:
        n_src = args.sources or (scene.n_sources if scene is not None else 1)
        masks = uniform_masks(n_src, X.shape)
    power_masks = None
    if not args.shared_mask:
        if args.power_mask_file is None:
            raise InvalidParam("--split-masks needs --power-mask-file")
        power_masks = load_masks(args.power_mask_file)
    wpe_mask = None
    if arch == "wpe_mvdr":
        wpe_mask = oracle_early_mask(scene, cfg) if source == "oracle" else np.clip(masks[1:].sum(axis=0), 0.0, 1.0)

    pcfg = PipelineConfig(
        architecture=arch,
        stft=cfg,
        wpe=WpeConfig(args.delay, args.taps, args.iterations, args.loading, args.power_floor),
        wpd=WpdConfig(args.delay, args.taps, args.loading, args.ref_channel, args.shared_mask,
                      args.noise_in_power, args.power_floor, args.power_alignment),
        wpe_mode=args.wpe_mode,
        ref_channel=args.ref_channel,
        loading=args.loading,
        threads=_threads(args),
    )
    outputs = separate(X, masks, pcfg, wpe_mask=wpe_mask, power_masks=power_masks, silence_degenerate=True)
    n = wave.samples.shape[1]
    estimates = [istft(Y, cfg, n)[0] for Y in outputs]
    args.out.mkdir(parents=True, exist_ok=True)
    for j, est in enumerate(estimates, start=1):
        write_wav(args.out / f"source_{j}.wav", Waveform(wave.sample_rate, est), args.format)
    _write_run_manifest(args.out / "run.txt", args, architecture=arch, mask_source_used=source)
    if scene is not None:
        sl = interior(n, cfg)
        refs = [img[args.ref_channel][sl] for img in scene.early_images]
        report = best_permutation_si_sdr([e[sl] for e in estimates], refs, wave.samples[args.ref_channel][sl])
        text = "\n".join(report.lines()) + "\n"
        (args.out / "report.txt").write_text(text)
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    estimates = [read_wav(p) for p in args.estimates]
    if args.scene is not None:
        scene = read_scene(args.scene)
        references = [img[args.ref_channel] for img in scene.early_images]
        mixture = scene.mixture[args.ref_channel]
    elif args.references:
        references = [read_wav(p).samples[0] for p in args.references]
        mixture = read_wav(args.mixture).samples[args.ref_channel] if args.mixture else None
    else:
        raise InvalidParam("need --references or --scene")
    n = min(len(r) for r in references)
    sl = interior(n, _stft_cfg(args, estimates[0].sample_rate))
    report = best_permutation_si_sdr(
        [e.samples[0][:n][sl] for e in estimates],
        [r[:n][sl] for r in references],
        None if mixture is None else mixture[:n][sl],
    )
    text = "\n".join(report.lines()) + "\n"
    if args.report:
        args.report.write_text(text)
    sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (ConvbeamError, OSError) as exc:
        print(f"convbeam: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
