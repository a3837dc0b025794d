"""Reproduce the fig1 curves with default settings into results/fig1/.

Extra arguments are passed through to ``qdiscrim fig1``, e.g. ``--format json``.
"""

import sys

from qdiscrim.cli import main

if __name__ == "__main__":
    sys.exit(main(["fig1", "--emit-plot", "--out", "results/fig1", *sys.argv[1:]]))
