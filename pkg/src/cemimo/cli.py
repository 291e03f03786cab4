"""Command-line entry point: ``ce-mimo sweep`` and ``ce-mimo compare``."""

from __future__ import annotations

import argparse
import configparser
import sys

import numpy as np

from . import simharness as sh

EXIT_CONFIG = 2

_GROUPING_ALIASES = {"enumerate": "enumerate", "index": "index", "sample": "sampled", "sampled": "sampled"}


def parse_snr(text: str) -> tuple:
    """``start:step:stop`` (inclusive, dB), a comma list, or a single value."""
    text = text.strip()
    try:
        if ":" in text:
            start, step, stop = (float(v) for v in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return tuple(round(start + i * step, 10) for i in range(count))
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise sh.ConfigError(f"bad SNR grid {text!r}; expected start:step:stop or a comma list") from None


def _grouping(name: str) -> str:
    try:
        return _GROUPING_ALIASES[name]
    except KeyError:
        raise sh.ConfigError(f"unknown grouping {name!r}") from None


def _sweep_config(**kw) -> sh.SweepConfig:
    return sh.SweepConfig(
        scheme=kw["scheme"],
        m_t=int(kw["mt"]),
        m_r=int(kw["mr"]),
        k_streams=int(kw.get("k", 1)),
        rate=int(kw["rate"]),
        snr_grid=parse_snr(str(kw["snr"])),
        channel_trials=int(kw.get("channels", 2000)),
        symbols_per_channel=int(kw.get("symbols", 50)),
        seed=int(kw.get("seed", 0)),
        l_u=int(kw.get("lu", 50)),
        l_p=int(kw.get("lp", 50)),
        grouping=_grouping(str(kw.get("grouping", "enumerate"))),
    )


def _print_curve(curve: sh.SerCurve, out) -> None:
    out.write("\t".join(sh.CSV_HEADER) + "\n")
    for p in curve.points:
        out.write(f"{p.snr_db:g}\t{p.ser:.4e}\t{p.ber:.4e}\t{p.symbols}\t{p.errors}\t"
                  f"{p.ci_low:.4e}\t{p.ci_high:.4e}\t{p.infeasible_channels}\n")


def cmd_sweep(args) -> int:
    cfg = _sweep_config(scheme=args.scheme, mt=args.mt, mr=args.mr, k=args.k, rate=args.rate, snr=args.snr,
                        channels=args.channels, symbols=args.symbols, seed=args.seed, lu=args.lu, lp=args.lp,
                        grouping=args.grouping)
    curve = sh.run_sweep(cfg, args.workers)
    if args.out:
        sh.write_csv(curve, args.out)
    else:
        _print_curve(curve, sys.stdout)
    return 0


_KEYS = {"scheme", "mt", "mr", "k", "rate", "snr", "channels", "symbols", "seed", "lu", "lp", "grouping", "out"}


def load_compare_config(path):
    """Sections of a ``key = value`` file, one sweep each; ``[DEFAULT]`` holds shared keys."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise sh.ConfigError(f"cannot read {path}: {exc}") from None
    if not parser.sections():
        raise sh.ConfigError(f"{path}: no sweep sections")
    sweeps = []
    for name in parser.sections():
        sec = dict(parser[name])
        unknown = set(sec) - _KEYS
        if unknown:
            raise sh.ConfigError(f"[{name}]: unknown keys {', '.join(sorted(unknown))}")
        missing = {"scheme", "mt", "mr", "rate", "snr"} - set(sec)
        if missing:
            raise sh.ConfigError(f"[{name}]: missing keys {', '.join(sorted(missing))}")
        try:
            cfg = _sweep_config(**sec)
        except (KeyError, TypeError) as exc:
            raise sh.ConfigError(f"[{name}]: {exc}") from None
        except ValueError as exc:
            raise sh.ConfigError(f"[{name}]: {exc}") from None
        sweeps.append((name, cfg, sec.get("out")))
    return sweeps


def cmd_compare(args) -> int:
    sweeps = load_compare_config(args.config)
    report = sh.compare_schemes([c for _, c, _ in sweeps], [n for n, _, _ in sweeps], args.workers)
    for (_, _, out), curve in zip(sweeps, report.curves):
        if out:
            sh.write_csv(curve, out)
    sys.stdout.write(report.to_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ce-mimo", description="CE-precoded MIMO transceiver simulator")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="SER/BER versus SNR for one scheme")
    s.add_argument("--scheme", required=True, choices=sh.SCHEMES)
    s.add_argument("--mt", type=int, required=True)
    s.add_argument("--mr", type=int, required=True)
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--rate", type=int, required=True, help="bits per channel use (all streams)")
    s.add_argument("--snr", required=True, help="start:step:stop in dB, inclusive")
    s.add_argument("--channels", type=int, default=2000)
    s.add_argument("--symbols", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--lu", type=int, default=50)
    s.add_argument("--lp", type=int, default=50)
    s.add_argument("--grouping", default="enumerate", choices=["enumerate", "index", "sample"])
    s.add_argument("--out", help="CSV path (prints a table when omitted)")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="run several sweeps with common random numbers")
    c.add_argument("--config", required=True)
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except sh.ConfigError as exc:
        print(f"ce-mimo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
