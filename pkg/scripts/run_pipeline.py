#!/usr/bin/env python3
"""Run the whole experiment end to end: corpus, three training stages,
evaluation reports, and all plot-data exports.

    python3 scripts/run_pipeline.py [--config PATH] [--out DIR] [--seed N]

Equivalent to the `svcnet` CLI verbs run in order; per-stage wall times
are printed at the end.
"""

import argparse
import sys
import time

from svcnet.cli import load_config
from svcnet import pipeline


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="JSON run-configuration file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="rebase all stage seeds from N")
    args = parser.parse_args(argv)
    config = load_config(args)

    stages = [
        ("gen", lambda: pipeline.run_gen(config)),
        ("train ppc", lambda: pipeline.run_train_ppc(config)),
        ("train svc", lambda: pipeline.run_train_svc(config)),
        ("train rec", lambda: pipeline.run_train_rec(config)),
        ("eval", lambda: pipeline.run_eval(config)),
        ("plot ppc_scatter", lambda: pipeline.run_plot(config, "ppc_scatter")),
        ("plot svc_trajectory", lambda: pipeline.run_plot(config, "svc_trajectory")),
        ("plot svc_halves", lambda: pipeline.run_plot(config, "svc_halves")),
    ]
    timings = []
    for name, fn in stages:
        t0 = time.monotonic()
        fn()
        timings.append((name, time.monotonic() - t0))
        print(f"{name}: done in {timings[-1][1]:.1f}s")

    total = sum(t for _, t in timings)
    print(f"\npipeline complete in {total:.1f}s; outputs under {config.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
