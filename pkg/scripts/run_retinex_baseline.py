"""Retinex against the identity predictor, plus the Poisson recovery check."""

import dataclasses
import time

from _common import emit, parser

from retinet.experiments import poisson_recovery, retinex_baseline

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--size", type=int, default=64)
    a = p.parse_args()
    t0 = time.perf_counter()
    res = retinex_baseline(seed=a.seed, n=a.n, canvas=(a.size, a.size))
    emit("retinex_baseline", res, t0, poisson=dataclasses.asdict(poisson_recovery(a.seed)))
