"""Dump 100 trajectories with and without feedback at theta = pi/4 into results/traj/."""

import sys

from qdiscrim.cli import main

if __name__ == "__main__":
    sys.exit(main(["traj", "--feedback", "both", "--n-traj", "100", "--dump", "5", "--out", "results/traj", *sys.argv[1:]]))
