"""Overfit the desk IntrinsicNet on four samples and report the loss ratio."""

import time

from _common import emit, parser

from retinet.experiments import overfit

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--runs", type=int, default=2)
    a = p.parse_args()
    t0 = time.perf_counter()
    emit("overfit", overfit(seed=a.seed, epochs=a.epochs, runs=a.runs), t0)
