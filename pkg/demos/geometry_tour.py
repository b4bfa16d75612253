"""A tour of the rank-K PSD geometry: factors, charts, and the closed-form mean.

Walks through the basic objects on small matrices you can check by eye:
the reduced Cholesky factor, the log-coordinate chart, geodesic distances,
and the Karcher mean with its geometric/arithmetic split.

Run:  python3 demos/geometry_tour.py
"""

import numpy as np

from psdk import (
    IndexSet,
    LowRankPsd,
    factorize,
    geodesic_distance,
    karcher_mean,
    log_chol,
    log_chol_inv,
    reduced_cholesky,
)

np.set_printoptions(precision=4, suppress=True)


def main():
    print("=== a rank-1 matrix and its factor ===")
    mat = np.array([[4.0, 2.0], [2.0, 1.0]])
    psd = LowRankPsd(mat, rank=1, index_set=IndexSet((0,)))
    factor = factorize(psd)
    print("matrix:\n", mat)
    print("reduced Cholesky factor (anchored at row 0):\n", factor.entries)
    print("factor @ factor.T reproduces it:\n", factor.entries @ factor.entries.T)

    print("\n=== the anchor rows matter ===")
    # this matrix vanishes on row 0, so row 0 cannot anchor it ...
    mat = np.array([[0.0, 0.0], [0.0, 4.0]])
    try:
        reduced_cholesky(mat, 1, IndexSet((0,)))
    except Exception as err:
        print("anchoring at row 0 fails:", err)
    # ... but row 1 works fine
    factor = reduced_cholesky(mat, 1, IndexSet((1,)))
    print("anchored at row 1:\n", factor.entries)

    print("\n=== the chart is a global isometry ===")
    rng = np.random.default_rng(0)
    entries = rng.normal(size=(5, 2))
    entries[:2, :] = np.tril(entries[:2, :])
    entries[[0, 1], [0, 1]] = (1.5, 0.7)
    psd = LowRankPsd(entries @ entries.T, 2, IndexSet.canonical(2))
    coords = log_chol(psd)
    back = log_chol_inv(coords)
    print("log coordinates (diagonal of the anchor block is logged):")
    print(coords.entries)
    print("round-trip max error:", np.max(np.abs(back.matrix - psd.matrix)))

    print("\n=== closed-form Karcher mean ===")
    a = LowRankPsd(np.diag([1.0, 0.0]), 1, IndexSet((0,)))
    b = LowRankPsd(np.diag([4.0, 0.0]), 1, IndexSet((0,)))
    mean = karcher_mean([a, b])
    print("mean of diag(1,0) and diag(4,0):\n", mean.matrix)
    print("geometric on the anchored diagonal: sqrt(1*4) =", mean.matrix[0, 0])
    print("distance a<->b:", geodesic_distance(a, b))
    print("  the factors are diag sqrt(1) and sqrt(4), so this is "
          "|log 2 - log 1| =", np.log(2.0))
    print("distance a<->mean:", geodesic_distance(a, mean), "(the midpoint)")


if __name__ == "__main__":
    main()
