"""How often aggregated k-means and relaxation recover three planted blobs exactly."""

import argparse

from statind.classification import rand_index
from statind.hierarchy import bottom_up, relaxation_cluster
from statind.synthetic import planted_returns


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--num-try", type=int, default=100)
    ap.add_argument("--separation", type=float, default=10.0)
    a = ap.parse_args()

    hits = relax = 0
    for s in range(a.runs):
        x, lab = planted_returns([20, 20, 20], 20, separation=a.separation, seed=1000 + s)
        hits += rand_index(bottom_up(x, (3,), num_try=a.num_try, seed=s)[0].cluster_of, lab) == 1.0
        relax += rand_index(relaxation_cluster(x, 3).cluster_of, lab) == 1.0
    print(f"bottom_up exact: {hits}/{a.runs}  relaxation exact: {relax}/{a.runs}")


if __name__ == "__main__":
    main()
