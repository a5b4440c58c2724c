"""Compare ||W^T (I-J)||_F^2, ||W^T - J||_F^2 and delta on random selected matrices."""
import argparse

import numpy as np

from coopsgd.matrix import j_matrix
from coopsgd.mixing import consensus_deviation_sq, delta_of, random_family_matrix
from coopsgd.trainer import participation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    stats = {"client_c": 0, "participant_c": 0, "literal": 0}
    for t in range(args.count):
        n = int(rng.integers(2, 9))
        v = int(rng.integers(0, min(2, n - 1) + 1))
        m = n - v
        k = int(rng.integers(1, m + 1))
        members = sorted(int(i) for i in rng.choice(m, k, replace=False))
        w = random_family_matrix(n, m, members, args.seed, t, concentration=0.3).w
        dev = consensus_deviation_sq(w)
        stats["client_c"] += dev > delta_of(w, k / m) + 1e-9
        stats["participant_c"] += dev > delta_of(w, participation(k, m, v)) + 1e-9
        stats["literal"] += float(np.sum((w.T - j_matrix(n)) ** 2)) > \
            delta_of(w, participation(k, m, v)) + 1e-9
    print(f"{args.count} matrices; bound exceeded:")
    print(f"  ||W^T(I-J)||^2 with c = |C|/m         : {stats['client_c']}")
    print(f"  ||W^T(I-J)||^2 with c = (|C|+v)/(m+v) : {stats['participant_c']}")
    print(f"  ||W^T - J||^2  with c = (|C|+v)/(m+v) : {stats['literal']}")


if __name__ == "__main__":
    main()
