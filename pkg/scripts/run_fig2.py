"""Reproduce the fig2 curves with default settings into results/fig2/.

Extra arguments are passed through to ``qdiscrim fig2``, e.g. ``--format json``.
"""

import sys

from qdiscrim.cli import main

if __name__ == "__main__":
    sys.exit(main(["fig2", "--emit-plot", "--out", "results/fig2", *sys.argv[1:]]))
