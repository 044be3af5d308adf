"""Brute-force enumeration oracle for the 162-box partition.

Bins are written out as explicit interval lists (no edge counting), the
20x20x20x20 grid over the non-failing region is enumerated and every point
is checked against every cell.
"""
import itertools, math

X = [(-2.2, -0.8, False), (-0.8, 0.8, False), (0.8, 2.2, True)]
TH = [(-12, -6, False), (-6, -1, False), (-1, 0, False), (0, 1, False), (1, 6, False), (6, 12, True)]
XD = [(-math.inf, -0.5, False), (-0.5, 0.5, False), (0.5, math.inf, True)]
THD = [(-math.inf, -50, False), (-50, 50, False), (50, math.inf, True)]


def member(v, lo, hi, closed):
    return lo <= v <= hi if closed else lo <= v < hi


def cells(x, xd, th_deg, thd_deg):
    out = []
    for (i, a), (j, b), (k, c), (l, d) in itertools.product(enumerate(X), enumerate(TH), enumerate(XD), enumerate(THD)):
        if member(x, *a) and member(th_deg, *b) and member(xd, *c) and member(thd_deg, *d):
            out.append(i * 54 + j * 9 + k * 3 + l)
    return out


def grid(lo, hi, n=20):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


if __name__ == "__main__":
    seen = set()
    for x, xd, th, thd in itertools.product(grid(-2.2, 2.2), grid(-2, 2), grid(-12, 12), grid(-150, 150)):
        c = cells(x, xd, th, thd)
        assert len(c) == 1, (x, xd, th, thd, c)
        seen.add(c[0])
    print("distinct cells:", len(seen))
    print("theta=0.5deg:", cells(0, 0, 0.5, 0))
    print("theta=0:", cells(0, 0, 0, 0), "theta=0.9deg:", cells(0, 0, 0.9, 0))
