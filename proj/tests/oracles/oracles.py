"""Independent reference values frozen into the unit tests.

Run with numpy + scipy; prints C++ literals.
"""
import numpy as np
from scipy import linalg, optimize


def frechet(mu1, s1, mu2, s2):
    covmean = linalg.sqrtm(s1 @ s2)
    return float(np.sum((mu1 - mu2) ** 2) + np.trace(s1) + np.trace(s2) - 2 * np.trace(covmean).real)


def spd(seed, d):
    r = np.random.default_rng(seed)
    a = r.standard_normal((d, d))
    return a @ a.T / d + 0.1 * np.eye(d), r.standard_normal(d)


def fixed_pair(c, h, w):
    i = np.arange(h)[:, None]
    j = np.arange(w)[None, :]
    a = np.stack([np.sin(0.3 * i + 0.7 * j + ch) for ch in range(c)])
    b = a + 0.25 * np.stack([np.cos(1.1 * i - 0.4 * j + 2 * ch) for ch in range(c)])
    return a, b


def ms_ssim(a, b, window=7, sigma=1.5, data_range=2.0, max_scales=5):
    weights = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]
    g = np.arange(window) - (window - 1) / 2
    g = np.exp(-g ** 2 / (2 * sigma ** 2))
    g /= g.sum()

    def blur(x):
        # valid separable correlation per channel
        out = []
        for ch in x:
            rows = np.array([[np.dot(ch[r, c:c + window], g) for c in range(ch.shape[1] - window + 1)]
                             for r in range(ch.shape[0])])
            cols = np.array([[np.dot(rows[r:r + window, c], g) for c in range(rows.shape[1])]
                             for r in range(rows.shape[0] - window + 1)])
            out.append(cols)
        return np.stack(out)

    side = min(a.shape[1:])
    scales = 1
    while scales < max_scales and (side >> scales) >= window:
        scales += 1
    wsum = sum(weights[:scales])
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    res = 1.0
    for s in range(scales):
        ma, mb = blur(a), blur(b)
        va = blur(a * a) - ma ** 2
        vb = blur(b * b) - mb ** 2
        cv = blur(a * b) - ma * mb
        cs = (2 * cv + c2) / (va + vb + c2)
        wt = weights[s] / wsum
        if s + 1 < scales:
            res *= max(cs.mean(), 0) ** wt
            pool = lambda x: x.reshape(x.shape[0], x.shape[1] // 2, 2, x.shape[2] // 2, 2).mean(axis=(2, 4))
            a, b = pool(a), pool(b)
        else:
            lum = (2 * ma * mb + c1) / (ma ** 2 + mb ** 2 + c1)
            res *= max((lum * cs).mean(), 0) ** wt
    return res


def logistic_data():
    # x[i, j] = sin(1.3 i + 0.7 j), y = 1 when x0 - 0.5 x1 + 0.2 > 0.4 sin(3.1 i)
    n, d = 40, 3
    i = np.arange(n)[:, None]
    j = np.arange(d)[None, :]
    x = np.sin(1.3 * i + 0.7 * j)
    y = (x[:, 0] - 0.5 * x[:, 1] + 0.2 > 0.4 * np.sin(3.1 * np.arange(n))).astype(float)
    return x, y


def logistic(x, y, l2):
    n, d = x.shape

    def f(beta):
        z = x @ beta[:d] + beta[d]
        return np.mean(np.logaddexp(0, z) - y * z) + 0.5 * l2 * beta[:d] @ beta[:d]

    r = optimize.minimize(f, np.zeros(d + 1), method="BFGS", options={"gtol": 1e-12})
    return r.x


def main():
    s1, m1 = spd(1, 4)
    s2, m2 = spd(2, 4)
    print("frechet_4d", repr(frechet(m1, s1, m2, s2)))
    print("  s1", repr(s1.ravel().tolist()), "\n  m1", repr(m1.tolist()))
    print("  s2", repr(s2.ravel().tolist()), "\n  m2", repr(m2.tolist()))
    a, b = fixed_pair(3, 32, 32)
    print("ms_ssim_32", repr(ms_ssim(a, b)))
    a, b = fixed_pair(3, 16, 16)
    print("ms_ssim_16", repr(ms_ssim(a, b)))
    x, y = logistic_data()
    print("logistic y", y.astype(int).tolist())
    print("logistic beta", repr(logistic(x, y, 1e-1).tolist()))
    m = np.array([[np.sin(0.9 * r + 1.7 * c) + (2.0 if c == 1 else 0.0) * np.cos(0.31 * r) for c in range(3)]
                  for r in range(30)])
    cov = np.cov(m.T)
    ev, vec = np.linalg.eigh(cov)
    order = np.argsort(ev)[::-1]
    for k in order[:2]:
        v = vec[:, k]
        v = v * np.sign(v[np.argmax(np.abs(v))])
        print("pca", repr(ev[k]), repr(v.tolist()))


if __name__ == "__main__":
    main()
