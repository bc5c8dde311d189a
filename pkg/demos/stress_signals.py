"""Signals engineered to sit exactly on the class boundary.

Three families used to stress the estimators:

  1. Two-piece ramps whose kink slides dyadically toward the right
     edge: members of the maximally smooth two-piece class at every
     level, with amplitudes tuned to the iterated-log noise floor.
  2. Convex piecewise-linear ensembles indexed by per-segment shape
     choices, all global members of the convex cone with few kinks.
  3. Middle-vanishing splines from the exact rational construction:
     the smallest piece budgets at which a class member can hide in
     the middle third of the design.
"""

import numpy as np

from l0spline import (
    ModelParams,
    exhaustive_fit,
    least_favorable_signal,
    lf_max_level,
    shape_lse,
    shaped_lf_ensemble,
    sparse_construct,
)


def sketch(values, lo=None, hi=None) -> str:
    chars = " .:-=+*#%@"
    v = np.asarray(values, dtype=float)
    lo = v.min() if lo is None else lo
    hi = v.max() if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    return "".join(chars[int(round((x - lo) / span * (len(chars) - 1)))]
                   for x in v)


def ramps() -> None:
    n, d = 64, 1
    print(f"dyadic ramps, n={n}, degree {d}:")
    for ell in range(1, lf_max_level(n, d) + 1):
        theta = least_favorable_signal(n, d, ell)
        fit = exhaustive_fit(theta.values,
                             ModelParams(d=d, d0=d - 1, k=2, n=n))
        print(f"  level {ell}: |{sketch(theta.values)}|  "
              f"max {theta.values.max():.4f}  "
              f"two-piece refit sse {fit.sse:.1e}")
    print()


def shaped() -> None:
    n, k = 32, 3
    rng = np.random.default_rng(20260817)
    print(f"convex ensembles, n={n}, k={k} (one segment):")
    for idx in ((0,), (2,), (4,)):
        theta = shaped_lf_ensemble(n, k, idx)
        print(f"  index {idx}: |{sketch(theta.values)}|")
    theta = shaped_lf_ensemble(n, k, (3,))
    sigma = 0.1
    y = theta.values + sigma * rng.standard_normal(n)
    fit = shape_lse(y, d=1, k=k)
    err = float(np.max(np.abs(fit.theta_hat.values - theta.values)))
    print(f"  noisy recovery at sigma={sigma}: max deviation {err:.3f} "
          f"(noise floor {sigma})")
    print()


def middle_vanishing() -> None:
    print("middle-vanishing constructions:")
    for d, d0, k in ((0, -1, 3), (1, 0, 4), (2, 1, 6)):
        system = sparse_construct(d, d0, k)
        sig = system.signal
        if abs(sig.min()) > abs(sig.max()):
            sig = -sig  # nullspace direction, display positive side up
        print(f"  d={d}, d0={d0}, k={k}: nullspace dim "
              f"{system.nullspace_dim}, gridded signal "
              f"|{sketch(sig)}|")
    below = sparse_construct(1, 0, 3)
    print(f"  d=1, d0=0, k=3: nullspace dim {below.nullspace_dim} "
          f"(one piece short: only the zero signal hides)")


def main() -> None:
    print(__doc__)
    ramps()
    shaped()
    middle_vanishing()


if __name__ == "__main__":
    main()
