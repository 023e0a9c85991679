"""``goldenphy`` command line: every experiment as a subcommand writing CSV plus a manifest."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ber_approx, ber_integral_for, monte_carlo_ber, rejection_table
from .channel import SampleBuffer, ShapingConfig, occupied_bandwidth, psd_estimate, pulse_shape, read_iq, write_iq
from .framing import FrameConfig, frame_decode, frame_encode, preamble_detect
from .modem import LinkConfig, modulate
from .multiuser import cross_sf_correlator_trace, fractional_delay_sweep, multiuser_error_curve, xcorr_matrix
from .zc import ZcParams, root_set, truncate, zc_generate


@dataclass
class RunManifest:
    command: str
    params: dict
    seed: int
    version: str = __version__
    outputs: list[str] = field(default_factory=list)
    duration_s: float = 0.0


class Run:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.started = time.perf_counter()
        params = {k: v for k, v in vars(args).items() if k not in ("func",)}
        self.manifest = RunManifest(args.command_path, _jsonable(params), args.seed)
        self.out_dir = Path(args.out_dir or os.environ.get("GOLDENPHY_OUT_DIR") or ".")

    def path(self, name: str) -> Path:
        p = Path(name)
        if not p.is_absolute():
            p = self.out_dir / p
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_csv(self, name: str, header: list[str], rows, comments: dict | None = None) -> Path:
        p = self.path(name)
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        self.manifest.outputs.append(str(p))
        if comments:
            self.manifest.params.setdefault("results", {}).update(_jsonable(comments))
        return p

    def finish(self) -> None:
        self.manifest.duration_s = round(time.perf_counter() - self.started, 6)
        for out in self.manifest.outputs:
            Path(out + ".manifest.json").write_text(json.dumps(asdict(self.manifest), indent=2) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_gen_sequence(run: Run) -> None:
    a = run.args
    seq = zc_generate(ZcParams(a.n, a.root, a.q))
    if a.truncate:
        seq = truncate(seq, a.truncate)
    if a.format == "csv":
        run.write_csv(a.out or "sequence.csv", ["k", "re", "im"],
                      ([k, _fmt(c.real), _fmt(c.imag)] for k, c in enumerate(seq.chips)))
    else:
        p = run.path(a.out or "sequence.cf32")
        write_iq(p, SampleBuffer(seq.chips, rate=a.bandwidth, chip_count=len(seq)))
        run.manifest.outputs.append(str(p))


def _roots(a, N: int) -> list[int]:
    if a.root_list:
        return _int_list(a.root_list)
    return sorted(root_set(N, a.roots, seed=a.seed if a.random_roots else None))


def cmd_xcorr_matrix(run: Run) -> None:
    a = run.args
    roots = _roots(a, a.n)
    m = xcorr_matrix(a.n, roots, truncated=a.truncate)
    length = a.truncate or a.n
    scale = {"raw": 1.0, "n": length, "sqrt_n": math.sqrt(length)}[a.normalize]
    rows = ([r, *(_fmt(v / scale) for v in row)] for r, row in zip(roots, m))
    run.write_csv(a.out or "xcorr_matrix.csv", ["root", *map(str, roots)], rows,
                  {"normalization": a.normalize, "length": length})


def cmd_delay_sweep(run: Run) -> None:
    a = run.args
    rng = np.random.default_rng(a.seed)
    pairs = [tuple(int(v) for v in rng.choice(np.arange(1, a.n), 2, replace=False)) for _ in range(a.pairs)]
    delays = np.arange(0.0, a.max_delay + 1e-12, a.step)
    out = fractional_delay_sweep(a.n, pairs, delays, beta=a.beta)
    header = ["r_target", "r_interferer", "delay_chips", "peak", "level_by_n", "level_by_sqrt_n", "level_db"]
    run.write_csv(a.out or "delay_sweep.csv", header,
                  ([r.r_target, r.r_interferer, _fmt(r.delay_chips), _fmt(r.peak), _fmt(r.level_by_n),
                    _fmt(r.level_by_sqrt_n), _fmt(r.level_db)] for r in out))


def cmd_cross_sf(run: Run) -> None:
    a = run.args
    tgt = LinkConfig.for_sf(a.target_sf, r=a.target_root)
    itf = LinkConfig.for_sf(a.interferer_sf, r=a.interferer_root)
    tr = cross_sf_correlator_trace(tgt, itf, a.target_delay, a.interferer_delay, seed=a.seed)
    run.write_csv(a.out or "cross_sf.csv", ["shift", "target_only", "interferer_only", "combined"],
                  ([int(s), _fmt(x), _fmt(y), _fmt(z)] for s, x, y, z in
                   zip(tr.shifts, tr.target_only, tr.interferer_only, tr.combined)),
                  {"peak_shift": tr.peak_shift, "interferer_max_by_sqrt_n": float(tr.interferer_only.max()
                                                                                  / math.sqrt(tr.n_target))})


def cmd_ber_sweep(run: Run) -> None:
    a = run.args
    cfg = LinkConfig.for_sf(a.sf)
    snrs = np.round(np.arange(a.snr_start, a.snr_stop + a.snr_step / 2, a.snr_step), 10)
    mc = {}
    if a.trials > 0:
        shaping = ShapingConfig(beta=a.beta) if a.shaped else None
        for p in monte_carlo_ber(cfg, snrs, a.trials, seed=a.seed, shaping=shaping, threads=a.threads):
            mc[p.snr_db] = p
    rows = []
    for s in snrs:
        g = 10 ** (s / 10)
        p = mc.get(float(s))
        rows.append([a.sf, _fmt(float(s)), _fmt(float(ber_approx(g, a.sf))), _fmt(ber_integral_for(g, a.sf, cfg.N)),
                     _fmt(p.ber) if p else "", _fmt(p.ci_low) if p else "", _fmt(p.ci_high) if p else "",
                     p.trials if p else 0, p.errors if p else 0, a.seed])
    header = ["sf", "snr_db", "ber_theory", "ber_integral", "ber_mc", "mc_lo", "mc_hi", "trials", "errors", "seed"]
    run.write_csv(a.out or f"ber_sf{a.sf}.csv", header, rows)


def cmd_multiuser(run: Run) -> None:
    a = run.args
    shaping = ShapingConfig(beta=a.beta) if a.shaped else None
    pts = multiuser_error_curve(a.sf, _int_list(a.counts), a.snr_db, a.trials, seed=a.seed,
                                payload_len=a.payload_len, shaping=shaping)
    run.write_csv(a.out or f"multiuser_sf{a.sf}.csv", ["sf", "n_interferers", "snr_db", "per", "ser", "trials", "seed"],
                  ([p.sf, p.n_interferers, _fmt(p.snr_db), _fmt(p.per), _fmt(p.ser), p.trials, p.seed] for p in pts))


def cmd_psd(run: Run) -> None:
    a = run.args
    cfg = LinkConfig.for_sf(a.sf, B=a.bandwidth)
    rng = np.random.default_rng(a.seed)
    chips = modulate(rng.integers(0, cfg.M, a.symbols), cfg)
    buf = pulse_shape(chips, ShapingConfig(beta=a.beta, oversampling=a.oversampling), bandwidth=cfg.B)
    f, p = psd_estimate(buf, segment_length=a.segment)
    obw = occupied_bandwidth(f, p)
    run.write_csv(a.out or "psd.csv", ["freq_hz", "psd_db"], ([_fmt(x), _fmt(y)] for x, y in zip(f, p)),
                  {"occupied_bandwidth_99_hz": obw})


def cmd_table1(run: Run) -> None:
    rows = rejection_table()
    run.write_csv(run.args.out or "table1.csv", ["sf", "n", "rejection_db", "set_size"],
                  ([r.sf, r.n, f"{r.rejection_db:.4f}", r.set_size] for r in rows))


def _frame_cfg(a, payload_len: int) -> FrameConfig:
    if a.descriptor:
        d = json.loads(Path(a.descriptor).read_text())
        return FrameConfig.from_descriptor(d)
    mode = "truncated" if a.truncated else "full"
    link = LinkConfig.for_sf(a.sf, r=a.root, mode=mode, B=a.bandwidth)
    return FrameConfig(link, a.preamble_len, a.q0, payload_len)


def _bytes_to_bits(data: bytes, b: int) -> tuple[np.ndarray, int]:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8)).astype(np.int64)
    pad = (-bits.size) % b
    return np.concatenate([bits, np.zeros(pad, np.int64)]), (bits.size + pad) // b


def cmd_frame_encode(run: Run) -> None:
    a = run.args
    data = bytes.fromhex(a.payload_hex)
    probe = _frame_cfg(a, 0)
    bits, n_sym = _bytes_to_bits(data, probe.link.b)
    cfg = FrameConfig(probe.link, probe.preamble_len, probe.q0, n_sym)
    x = np.concatenate([np.zeros(a.offset, complex), frame_encode(bits, cfg)])
    buf = SampleBuffer(x, rate=cfg.link.B, chip_count=x.size)
    desc = {**cfg.describe(), "payload_bytes": len(data), "offset_chips": a.offset}
    if a.out == "-":
        write_iq(sys.stdout.buffer, buf)
        sys.stdout.buffer.flush()
        return
    p = run.path(a.out or "frame.cf32")
    write_iq(p, buf)
    desc_path = Path(str(p) + ".frame.json")
    desc_path.write_text(json.dumps(desc, indent=2) + "\n")
    run.manifest.outputs.append(str(p))


def cmd_frame_decode(run: Run) -> None:
    a = run.args
    src = sys.stdin.buffer if a.input == "-" else a.input
    buf = read_iq(src)
    desc = {}
    if a.descriptor:
        desc = json.loads(Path(a.descriptor).read_text())
    elif a.input != "-" and Path(a.input + ".frame.json").exists():
        desc = json.loads(Path(a.input + ".frame.json").read_text())
        a.descriptor = a.input + ".frame.json"
    n_bytes = a.payload_bytes if a.payload_bytes is not None else desc.get("payload_bytes")
    if n_bytes is None:
        raise ValueError("payload size unknown: pass --payload-bytes or a frame descriptor")
    probe = _frame_cfg(a, 0)
    n_sym = -(-n_bytes * 8 // probe.link.b)
    cfg = FrameConfig(probe.link, probe.preamble_len, probe.q0, n_sym)
    det = preamble_detect(buf.samples, cfg, threshold=a.threshold)
    if not det.found:
        raise ValueError(f"no preamble above threshold {a.threshold}")
    bits = frame_decode(buf.samples, cfg, det)[: n_bytes * 8]
    text = np.packbits(bits).tobytes().hex()
    if a.out in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        p = run.path(a.out)
        p.write_text(text + "\n")
        run.manifest.outputs.append(str(p))
        run.manifest.params["results"] = {"offset_chips": det.offset_samples, "metric": det.metric}


def _frame_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sf", type=int, default=9)
    p.add_argument("--root", type=int, default=1)
    p.add_argument("--truncated", action="store_true", help="power-of-two block length")
    p.add_argument("--bandwidth", type=float, default=125e3)
    p.add_argument("--preamble-len", type=int, default=8)
    p.add_argument("--q0", type=int, default=0)
    p.add_argument("--descriptor", help="frame descriptor JSON (overrides the link flags)")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the globals without defaults so they never clobber earlier values
    def d(v):
        return argparse.SUPPRESS if suppress else v

    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--threads", type=int, default=d(os.cpu_count() or 1))
    p.add_argument("--out-dir", default=d(None), help="output directory (default $GOLDENPHY_OUT_DIR or .)")
    p.add_argument("--out", default=d(None), help="output file name, relative to the output directory")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="goldenphy", parents=[_global_flags(suppress=False)],
                                     description="Zadoff-Chu spread-spectrum PHY simulations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-sequence", parents=[common], help="write one sequence")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--root", type=int, default=1)
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--format", choices=["csv", "iq"], default="csv")
    p.add_argument("--truncate", type=int, default=None)
    p.add_argument("--bandwidth", type=float, default=125e3)
    p.set_defaults(func=cmd_gen_sequence)

    p = sub.add_parser("xcorr-matrix", parents=[common], help="max cyclic cross-correlation per root pair")
    p.add_argument("--n", type=int, default=2053)
    p.add_argument("--roots", type=int, default=100, help="number of roots")
    p.add_argument("--root-list", default=None, help="explicit comma-separated roots")
    p.add_argument("--random-roots", action="store_true", help="draw roots with --seed instead of 1..K")
    p.add_argument("--truncate", type=int, default=None)
    p.add_argument("--normalize", choices=["raw", "n", "sqrt_n"], default="raw")
    p.set_defaults(func=cmd_xcorr_matrix)

    p = sub.add_parser("delay-sweep", parents=[common], help="interference level vs delay")
    p.add_argument("--n", type=int, default=521)
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--max-delay", type=float, default=8.0)
    p.add_argument("--step", type=float, default=0.25)
    p.add_argument("--beta", type=float, default=0.25)
    p.set_defaults(func=cmd_delay_sweep)

    p = sub.add_parser("cross-sf", parents=[common], help="correlator trace with a different-SF interferer")
    p.add_argument("--target-sf", type=int, default=11)
    p.add_argument("--interferer-sf", type=int, default=10)
    p.add_argument("--target-root", type=int, default=1)
    p.add_argument("--interferer-root", type=int, default=1)
    p.add_argument("--target-delay", type=int, default=1000)
    p.add_argument("--interferer-delay", type=int, default=0)
    p.set_defaults(func=cmd_cross_sf)

    p = sub.add_parser("ber-sweep", parents=[common], help="theoretical and simulated BER")
    p.add_argument("--sf", type=int, default=8)
    p.add_argument("--snr-start", type=float, default=-22.0)
    p.add_argument("--snr-stop", type=float, default=-6.0)
    p.add_argument("--snr-step", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=2000, help="symbols per SNR point; 0 for theory only")
    p.add_argument("--shaped", action="store_true", help="simulate through RRC shaping and matched filter")
    p.add_argument("--beta", type=float, default=0.25)
    p.set_defaults(func=cmd_ber_sweep)

    p = sub.add_parser("multiuser", parents=[common], help="SER/PER vs number of interferers")
    p.add_argument("--sf", type=int, default=9)
    p.add_argument("--counts", default="0,5,10,20")
    p.add_argument("--snr-db", type=float, default=10.0)
    p.add_argument("--trials", type=int, default=200, help="packets per count")
    p.add_argument("--payload-len", type=int, default=16)
    p.add_argument("--shaped", action="store_true", help="fractional delays through RRC shaping")
    p.add_argument("--beta", type=float, default=0.25)
    p.set_defaults(func=cmd_multiuser)

    p = sub.add_parser("psd", parents=[common], help="Welch PSD of a shaped random signal")
    p.add_argument("--sf", type=int, default=12)
    p.add_argument("--bandwidth", type=float, default=100e3)
    p.add_argument("--beta", type=float, default=0.25)
    p.add_argument("--oversampling", type=int, default=4)
    p.add_argument("--symbols", type=int, default=64)
    p.add_argument("--segment", type=int, default=4096)
    p.set_defaults(func=cmd_psd)

    p = sub.add_parser("table1", parents=[common], help="interference rejection per SF")
    p.set_defaults(func=cmd_table1)

    frame = sub.add_parser("frame", help="frame encode/decode")
    fsub = frame.add_subparsers(dest="frame_command", required=True)
    p = fsub.add_parser("encode", parents=[common], help="bytes to a chip-rate I/Q frame ('-' writes stdout)")
    _frame_flags(p)
    p.add_argument("--payload-hex", required=True)
    p.add_argument("--offset", type=int, default=0, help="leading zero chips")
    p.set_defaults(func=cmd_frame_encode)
    p = fsub.add_parser("decode", parents=[common], help="detect and decode a frame ('-' reads stdin)")
    _frame_flags(p)
    p.add_argument("--input", default="-")
    p.add_argument("--payload-bytes", type=int, default=None)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_frame_decode)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.command_path = args.command + (f" {args.frame_command}" if args.command == "frame" else "")
    run = Run(args)
    try:
        args.func(run)
        run.finish()
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"goldenphy {args.command_path}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
