"""Command-line runner: ``dcslab <suite> [flags]``.

Exit codes: 0 all gates passed, 1 a statistical or exactness gate failed,
2 usage or configuration error, 3 internal invariant violated.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import build_config, load_config
from .errors import ConsistencyError, DcsError
from .suites import SUITES, _clean

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

# flag name -> config key, for the common per-suite knobs
_FLAGS = {
    "depth": int,
    "m": int,
    "a": float,
    "b": float,
    "bridges": int,
    "H": float,
    "oracle": str,
    "invariance_oracles": str,
    "level": float,
    "instances": int,
    "instance_file": str,
    "L": int,
    "sweeps": int,
    "significance": float,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="64-bit master seed")
    common.add_argument("--replicas", type=int, default=argparse.SUPPRESS, help="replica or path count")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="artifact directory (default: runs/<command>)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value file; flags override it")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="print summary.json to stdout")
    for name, kind in _FLAGS.items():
        common.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=argparse.SUPPRESS)
    common.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                        help="override any config key")
    p = argparse.ArgumentParser(prog="dcslab", parents=[common], description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"dcslab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUITES:
        sub.add_parser(name, parents=[common])
    return p


def _overrides(ns: argparse.Namespace) -> dict:
    out = {}
    for key in ("seed", "replicas", *_FLAGS):
        if hasattr(ns, key):
            out[key] = getattr(ns, key)
    for item in getattr(ns, "set", []) or []:
        if "=" not in item:
            raise DcsError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def main(argv=None) -> int:
    parser = _parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    as_json = getattr(ns, "json", False)
    try:
        file_values = load_config(ns.config) if hasattr(ns, "config") else {}
        cfg = build_config(file_values, _overrides(ns))
        out_dir = getattr(ns, "out_dir", None) or os.path.join("runs", ns.command)
        result = SUITES[ns.command](cfg, out_dir)
    except ConsistencyError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (DcsError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    summary = {
        "command": ns.command,
        "version": __version__,
        "config": cfg.to_dict(),
        "suites": [result.to_dict()],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(_clean(summary), fh, indent=1, sort_keys=True)
        fh.write("\n")
    if as_json:
        print(json.dumps(_clean(summary), indent=1, sort_keys=True))
    else:
        for rep in result.reports:
            print(f"{'PASS' if rep.passed else 'FAIL'}  {rep.test_id:<34} stat={rep.statistic:.6g}  p={rep.p_value:.4g}")
        print(f"{ns.command}: {'PASS' if result.passed else 'FAIL'}  (artifacts in {out_dir})")
    return EXIT_OK if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
