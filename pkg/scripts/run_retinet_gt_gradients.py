"""RetiNet stage 2 on ground-truth versus predicted intrinsic gradients."""

import time

from _common import emit, parser

from retinet.experiments import retinet_gt_gradients

if __name__ == "__main__":
    p = parser(__doc__)
    p.add_argument("--n-train", type=int, default=128)
    p.add_argument("--epochs-s1", type=int, default=20)
    p.add_argument("--epochs-s2", type=int, default=20)
    a = p.parse_args()
    t0 = time.perf_counter()
    res = retinet_gt_gradients(seed=a.seed, n_train=a.n_train, epochs_s1=a.epochs_s1, epochs_s2=a.epochs_s2)
    emit("retinet_gt_gradients", res, t0)
