"""How the store-forward allocation turns into the fair allocation.

At a fixed queue vector Q the store-forward service rates depend on the
exact packet counts.  Scaling Q upward by a factor c washes that
granularity out: the rates at cQ approach the solution of the
queue-weighted log-throughput program, and (1/c) log Phi(cQ) approaches
that program's optimal value.  This script prints both convergences.
"""

import numpy as np

from switchnet import (
    CapacityPolytope,
    load_example,
    log_norm_const_scaling,
    sf_pf_gap,
    solve_prop_fair,
    store_forward_rates,
)


def rate_convergence():
    ex = load_example("cycle4")
    Q = np.array([2, 1, 1, 2])
    pf = solve_prop_fair(Q, ex.polytope)
    print("=== service rates at cQ on the 4-cycle, Q =", Q)
    print("  fair-allocation solution:", np.round(pf.rates, 4))
    for c in (1, 4, 16, 64, 256):
        s = store_forward_rates(c * Q, ex.polytope)
        print(f"  c = {c:4d}: rates {np.round(s, 4)}")
    gaps = sf_pf_gap(Q, ex.polytope, [8, 32, 128, 512])
    print("  max rate gap at c in (8, 32, 128, 512):", np.round(gaps, 5))


def norm_const_convergence():
    poly = CapacityPolytope(np.array([[1.0, 1.0]]))
    Q = [2, 1]
    diag = log_norm_const_scaling(Q, poly, [4, 16, 64, 256, 1024])
    print("\n=== (1/c) log Phi(cQ) on one shared pool, Q =", Q)
    print(f"  limit (negated fair objective): {diag.target:.10f}")
    for c, v, g in zip(diag.scales, diag.values, diag.gaps):
        print(f"  c = {c:5d}: value {v:.6f}   gap {g:.2e}")


def main():
    rate_convergence()
    norm_const_convergence()


if __name__ == "__main__":
    main()
