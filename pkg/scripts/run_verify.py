"""Gradient checks and invariant oracles; exits 3 on any failure."""

import sys

from _common import parser

from retinet.verify import run_verify

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--trials", type=int, default=20)
    a = p.parse_args()
    report = run_verify(a.seed, a.trials)
    print("\n".join(report.summary()))
    print(f"{len(report.results)} checks in {report.seconds:.1f} s")
    sys.exit(0 if report.passed else 3)
