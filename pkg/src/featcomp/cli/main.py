"""``featcomp`` command-line entry point."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .commands import COMMANDS, EXIT_CONFIG
from .config import SCHEMAS, ConfigError, load_config

HELP = {
    "surface": "exact signal I(Y_l; X_r | X_l) over a (rho_l, rho_r) grid",
    "sweep": "two-phase probe sweep and its correlation with the signal",
    "table1": "probe accuracy of supervised, AE, GAN and WGAN features vs untrained weights",
    "gansim": "discriminator/generator information identities on a discrete scenario",
    "micalc": "entropy and mutual information of a serialized joint distribution",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run config (defaults are used for missing keys)")
    common.add_argument("--seed", type=int, help="global seed, overrides [run] seed")
    common.add_argument("--out-dir", type=Path, help="output directory (default: runs/<command>)")
    parser = argparse.ArgumentParser(prog="featcomp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, text in HELP.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "gansim":
            p.add_argument("--scenario", help="bundled scenario name (lead, matched) or scenario file")
            p.add_argument("--policy", help="balancing policy for the trace")
        if name == "micalc":
            p.add_argument("pmf", nargs="?", help="JointPMF file")
            p.add_argument("--measure", help="report, entropy, conditional-entropy, mi, cmi or signal")
            p.add_argument("--a", help="first variable set (names or indices, comma separated)")
            p.add_argument("--b", help="second variable set; for signal, the ordered features")
            p.add_argument("--given", help="conditioning variable set")
    return parser


_OVERRIDES = {
    "gansim": {"scenario": "gansim", "policy": "gansim"},
    "micalc": {"pmf": "micalc", "measure": "micalc", "a": "micalc", "b": "micalc", "given": "micalc"},
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg["run"]["seed"] = args.seed
        # flags go through the same parsers as config values
        for key, section in _OVERRIDES.get(args.command, {}).items():
            value = getattr(args, key)
            if value is not None:
                try:
                    cfg[section][key] = SCHEMAS[args.command][section][key].parse(value)
                except ValueError as exc:
                    raise ConfigError(f"--{key} {value!r}: {exc}") from exc
        out_dir = args.out_dir or Path("runs") / args.command
        return COMMANDS[args.command](cfg, out_dir)
    except ConfigError as exc:
        print(f"featcomp {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
