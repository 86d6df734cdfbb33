"""Demonstrate the Lipschitz cutoff applied to response nonlinearities.

The particle schemes need a globally Lipschitz response f.  For a range
eta and exponent alpha the budget is eta**(-alpha): inside a feasibility
band the raw function is used verbatim, outside it the argument is bent
over smoothly so the slope never exceeds the budget.  Identity with
alpha=0 needs no truncation at all.  Some combinations are impossible
(the budget cannot even cover the slopes near the origin); those raise
with a message naming the admissible range.
"""

import numpy as np

from crossdiff import make_cutoff, make_nonlinearity


def audit(label, resp, lo=-8.0, hi=8.0, n=100001):
    x = np.linspace(lo, hi, n)
    fx = resp.value(x)
    slope = np.max(np.abs(np.diff(fx) / np.diff(x)))
    print(f"  {label}: band={resp.band!r}  budget={resp.lip_bound:.4f}  "
          f"max measured slope={slope:.4f}")


def main():
    identity = make_nonlinearity("identity")
    square = make_nonlinearity("power", power=2.0)

    print("identity, alpha=0 (budget 1, never truncated):")
    audit("eta=2.0", make_cutoff(identity, eta=2.0, alpha=0.0))
    audit("eta=0.1", make_cutoff(identity, eta=0.1, alpha=0.0))

    print("square response, alpha=0.5:")
    for eta in (0.25, 0.1, 0.02):
        audit(f"eta={eta}", make_cutoff(square, eta=eta, alpha=0.5))

    print("infeasible request (square response, eta too large):")
    try:
        make_cutoff(square, eta=0.5, alpha=0.5)
    except ValueError as exc:
        print(f"  ValueError: {exc}")


if __name__ == "__main__":
    main()
