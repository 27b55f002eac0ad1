"""Command-line surface for the experiment runners.

Exit codes: 0 on success, 1 for configuration errors, 2 for runtime or
statistical-infeasibility errors.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigurationError, VqLabError
from .experiments import (load_config, run_eta_curves, run_mva_oracle,
                          run_steady, run_transient)

_RUNNERS = {
    "steady": run_steady,
    "transient": run_transient,
    "eta": run_eta_curves,
    "mva-oracle": run_mva_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqlab",
        description="Loss-probability estimation experiments: virtual-queue "
                    "estimator vs direct simulation and the variance-curve oracle.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("steady", "buffer sweep: direct loss vs online estimate"),
            ("transient", "growing-window estimate vs first direct loss"),
            ("eta", "closed-form variance-reduction curve datasets"),
            ("mva-oracle", "variance-curve oracle over the buffer sweep")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None,
                       help="replace the config's seed list with this seed")
        p.add_argument("--out", default=None, help="output directory override")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed,
                          out_override=args.out)
        result = _RUNNERS[args.command](cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (VqLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    paths = result if isinstance(result, list) else [result]
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
