"""Command-line entry point: ``mbthp {ber,sumrate,covariance,flops,patterns}``."""
from __future__ import annotations

import argparse
import logging
import sys

from mbthp.channel import SystemGeometry
from mbthp.errors import MbthpError
from mbthp.metrics import flop_table
from mbthp.patterns import build_patterns, format_patterns
from mbthp.simkit.config import (CSV_HEADER, ExperimentConfig, load_config,
                                 parse_ebno_range)
from mbthp.simkit.engine import run_ber, run_covariance_check, run_sumrate


def _add_sweep_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file of experiment settings")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.add_argument("--precoder", help="e.g. MMSE-cTHP, MB-ZF-dTHP, linear-ZF")
    p.add_argument("--branches", type=int, help="branch count for MB precoders")
    p.add_argument("--ebno", help="Eb/N0 sweep in dB as start:step:stop")
    p.add_argument("--trials", type=int)
    p.add_argument("--corr", type=float, help="transmit correlation coefficient")
    p.add_argument("--csi-err", type=float, help="CSI error variance")
    p.add_argument("--workers", type=int)
    p.add_argument("--modulation", choices=["QPSK", "QAM16"])
    p.add_argument("--packet-len", type=int)
    p.add_argument("--users", help="receive antennas per user, comma separated")


def _config_from_args(args, metric: str) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {"metric": metric}
    direct = {"seed": "master_seed", "precoder": "precoder", "branches": "branches",
              "trials": "trials", "corr": "correlation_r", "csi_err": "csi_error_var",
              "workers": "workers", "modulation": "modulation", "packet_len": "packet_len"}
    for arg, field in direct.items():
        val = getattr(args, arg)
        if val is not None:
            changes[field] = val
    if args.ebno is not None:
        changes["ebno_db"] = parse_ebno_range(args.ebno)
    if args.users is not None:
        users = tuple(int(u) for u in args.users.split(","))
        changes["users"] = users
        changes["num_tx"] = sum(users)
    return cfg.replace(**changes)


def _write(text: str, out) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_sweep(args, metric):
    cfg = _config_from_args(args, metric)
    rows = run_ber(cfg) if metric == "ber" else run_sumrate(cfg)
    _write("\n".join([CSV_HEADER] + [r.csv_line() for r in rows]) + "\n", args.out)


def _cmd_covariance(args):
    cfg = _config_from_args(args, "covariance")
    lines = ["scheme,ebno_db,samples,layer,empirical_var,analytic_var,ratio"]
    for rep in run_covariance_check(cfg):
        for i in range(rep.ratio.size):
            lines.append(f"{rep.scheme},{rep.ebno_db:.10g},{rep.samples},{i + 1},"
                         f"{rep.empirical[i]:.10g},{rep.analytic[i]:.10g},{rep.ratio[i]:.10g}")
        print(f"{rep.scheme} at {rep.ebno_db:g} dB: max |ratio - 1| = {rep.max_deviation:.4f}",
              file=sys.stderr)
    _write("\n".join(lines) + "\n", args.out)


def _cmd_flops(args):
    lines = [f"{'Algorithm':<14}{'FLOPs':>12}  note"]
    for rep in flop_table(args.n, args.K, args.N_k, args.L_B, args.M, args.d):
        note = "analytic-only" if rep.analytic_only else ""
        lines.append(f"{rep.algorithm:<14}{rep.flops:>12}  {note}".rstrip())
    _write("\n".join(lines) + "\n", args.out)


def _cmd_patterns(args):
    users = tuple(int(u) for u in args.users.split(","))
    geometry = SystemGeometry(sum(users), users)
    _write(format_patterns(build_patterns(geometry, args.branches)), args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mbthp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (("ber", "BER sweep over Eb/N0"),
                           ("sumrate", "mean sum-rate sweep over Eb/N0"),
                           ("covariance", "empirical vs analytic error covariance")):
        _add_sweep_args(sub.add_parser(name, help=helptext))

    p = sub.add_parser("flops", help="closed-form FLOP table")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--N-k", dest="N_k", type=int, default=2)
    p.add_argument("--L-B", dest="L_B", type=int, default=2)
    p.add_argument("--M", type=int, default=4, help="constellation size for the VP row")
    p.add_argument("--d", type=float, default=1.0, help="sphere radius for the VP row")
    p.add_argument("--out")

    p = sub.add_parser("patterns", help="dump the transmit-pattern list")
    p.add_argument("--users", default="2,2,2,2", help="receive antennas per user")
    p.add_argument("--branches", type=int, default=8)
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("ber", "sumrate"):
            _cmd_sweep(args, args.command)
        elif args.command == "covariance":
            _cmd_covariance(args)
        elif args.command == "flops":
            _cmd_flops(args)
        else:
            _cmd_patterns(args)
    except MbthpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
