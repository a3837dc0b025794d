"""Run the oracle suites, then the sigma_z negative control.

The first run must pass (exit 0); the second must fail its closed-form suite
(exit 2).  Prints one line per run and exits nonzero if either expectation
is not met.
"""

import sys

from qdiscrim.cli import EXIT_OK, EXIT_VALIDATION, main

if __name__ == "__main__":
    extra = sys.argv[1:]
    ok = main(["validate", "--out", "results/validate", *extra])
    bad = main(["validate", "--debug-sigma-z-exponent", "--out", "results/validate_sigma_z", *extra])
    print(f"oracle suites: exit {ok} (expected {EXIT_OK})")
    print(f"sigma_z control: exit {bad} (expected {EXIT_VALIDATION})")
    sys.exit(0 if (ok, bad) == (EXIT_OK, EXIT_VALIDATION) else 1)
