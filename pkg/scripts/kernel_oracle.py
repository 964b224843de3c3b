"""Regenerate the frozen tensor values used in tests/test_kernels.py.

Integrates each kernel against the hat basis function with mpmath
(tanh-sinh quadrature, 30 digits), independently of the package.  Takes a
few minutes; the 2D singular entries dominate.

    python scripts/kernel_oracle.py
"""
import mpmath as mp

mp.mp.dps = 30


def kernel(family, r, alpha=None, eps=None):
    if family == "power_law":
        return r ** (-alpha)
    if family == "exponential":
        return mp.e ** (-r)
    if family == "log2d":
        return mp.log(r)
    return 1 / (r ** alpha + eps)


def half_1d(family, k, dx, **kw):
    f = lambda x: kernel(family, abs((k - x) * dx), **kw) * (1 - x)
    return dx * mp.quad(f, [0, 1])


def full_1d(family, k, dx, **kw):
    return half_1d(family, k, dx, **kw) + half_1d(family, -k, dx, **kw)


def quarter_2d(family, k, l, dx, dy, **kw):
    f = lambda x, y: kernel(family, mp.sqrt(((k - x) * dx) ** 2 + ((l - y) * dy) ** 2), **kw) * (1 - x) * (1 - y)
    return dx * dy * mp.quad(f, [0, 1], [0, 1])


def full_2d(family, k, l, dx, dy, **kw):
    return sum(quarter_2d(family, a * k, b * l, dx, dy, **kw) for a in (1, -1) for b in (1, -1))


def main():
    f = mp.mpf
    show = lambda vals, n=20: [mp.nstr(v, n) for v in vals]
    print("1D power_law 0.5, dx 0.1", show(full_1d("power_law", k, f("0.1"), alpha=f("0.5")) for k in range(6)))
    print("1D power_law 0.3, dx 0.05", show(full_1d("power_law", k, f("0.05"), alpha=f("0.3")) for k in range(4)))
    print("1D exponential, dx 0.25", show(full_1d("exponential", k, f("0.25")) for k in range(4)))
    print("1D regularized 0.5/0.125, dx 0.05",
          show(full_1d("regularized_power_law", k, f("0.05"), alpha=f("0.5"), eps=f("0.125")) for k in range(4)))
    offsets = [(0, 0), (1, 0), (1, 1), (2, 1), (3, 0)]
    for family, kw in [("power_law", dict(alpha=f("1.5"))), ("log2d", {}), ("exponential", {})]:
        print("2D", family, "dx = dy = 0.1",
              show((full_2d(family, k, l, f("0.1"), f("0.1"), **kw) for k, l in offsets), 18))
    print("2D power_law 1.5, dx 0.1, dy 0.05",
          show((full_2d("power_law", k, l, f("0.1"), f("0.05"), alpha=f("1.5"))
                for k, l in [(0, 0), (1, 0), (0, 1), (2, 3)]), 18))


if __name__ == "__main__":
    main()
