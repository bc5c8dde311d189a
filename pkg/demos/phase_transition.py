"""Where fitting difficulty changes character as the piece budget grows.

The complexity width of a signal class measures how much of a pure
noise vector the class can soak up: the expected maximum squared
projection of the noise onto unit-norm class members.  For piecewise
constant fits with jumps (d=0, d0=-1) the width behaves very
differently at k=2 and k=3 pieces:

  k=2  the width tracks loglog(16n); its ratio column is flat.
  k=3  the width switches to the log(en) growth law: the iterated-log
       ratio climbs steadily while the log ratio flattens out.

The two extra columns make the switch visible on a laptop-scale grid.
Pass an integer argument to change the replicate count (default 40).
"""

import math
import sys

from l0spline import ModelParams, complexity_width, noise_vector


def main(reps: int = 40) -> None:
    grid = (256, 512, 1024, 2048, 4096, 8192)
    print(__doc__)
    header = (f"{'n':>6} {'width k=2':>10} {'width k=3':>10} "
              f"{'k2/loglog':>10} {'k3/loglog':>10} {'k3/log':>10}")
    print(header)
    print("-" * len(header))
    for idx, n in enumerate(grid):
        p2 = ModelParams(d=0, d0=-1, k=2, n=n)
        p3 = ModelParams(d=0, d0=-1, k=3, n=n)
        acc2 = acc3 = 0.0
        for rep in range(reps):
            eps = noise_vector(20260817, idx * reps + rep, n)
            acc2 += complexity_width(eps, p2)
            acc3 += complexity_width(eps, p3)
        w2, w3 = acc2 / reps, acc3 / reps
        loglog = math.log(math.log(16 * n))
        logen = math.log(math.e * n)
        print(f"{n:>6} {w2:>10.3f} {w3:>10.3f} {w2 / loglog:>10.3f} "
              f"{w3 / loglog:>10.3f} {w3 / logen:>10.3f}")
    print()
    print("Flat columns mark the matching growth law; the climbing")
    print("k3/loglog column is the signature of the rate change.")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 40)
