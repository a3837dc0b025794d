"""Reproduce the fig3 curves with default settings into results/fig3/.

Extra arguments are passed through to ``qdiscrim fig3``, e.g. ``--format json``.
"""

import sys

from qdiscrim.cli import main

if __name__ == "__main__":
    sys.exit(main(["fig3", "--emit-plot", "--out", "results/fig3", *sys.argv[1:]]))
