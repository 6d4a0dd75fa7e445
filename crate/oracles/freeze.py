"""Reference values computed with mpmath at 50 digits."""
import mpmath as mp

mp.mp.dps = 50


def ml(a, b, z):
    a, b, z = mp.mpf(a), mp.mpf(b), mp.mpf(z)
    s = mp.mpf(0)
    n = 0
    while True:
        t = z**n * mp.rgamma(a * n + b)
        s += t
        if n > 20 and abs(t) < mp.mpf(10) ** (-45) * max(1, abs(s)):
            break
        n += 1
    return s


print("# gamma")
for x in [0.1, 0.5, 1.3, 2.5, 7.7, 33.3, 100.5, 170.5, -0.5, -2.5, -7.3]:
    print(f"({x!r}, {mp.nstr(mp.gamma(x), 17)}),")

print("# mittag-leffler (alpha, beta, z, value)")
for a, b, z in [(0.5, 1.0, 2.0), (0.75, 0.75, 1.5), (0.6, 1.0, -1.0), (0.9, 1.2, 10.0),
                (0.5, 0.5, 3.0), (0.2, 1.0, 0.5), (1.5, 2.0, 4.0), (0.8, 1.8, -2.0)]:
    print(f"({a}, {b}, {z}, {mp.nstr(ml(a, b, z), 17)}),")

print("# scalar constant drift: a=-1, lam=0.8, y0=1, c=0.5")
a, lam, y0, c = -1, mp.mpf("0.8"), 1, mp.mpf("0.5")
for t in [0.25, 0.5, 1.0]:
    t = mp.mpf(t)
    v = ml(lam, 1, a * t**lam) * y0 + c * t**lam * ml(lam, lam + 1, a * t**lam)
    print(f"({mp.nstr(t, 4)}, {mp.nstr(v, 17)}),")

print("# expm of [[-1,0.5],[0.2,-0.3]] at t=1")
A = mp.matrix([[-1, 0.5], [0.2, -0.3]])
E = mp.expm(A)
print([mp.nstr(E[i, j], 17) for i in range(2) for j in range(2)])
