"""Train with and without the image formation loss and compare held-out reconstruction."""

import time

from _common import emit, parser

from retinet.experiments import imf_trend

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--epochs", type=int, default=50)
    a = p.parse_args()
    t0 = time.perf_counter()
    emit("imf_trend", imf_trend(seed=a.seed, n_train=a.n_train, epochs=a.epochs), t0)
