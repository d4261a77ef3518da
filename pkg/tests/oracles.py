"""Slow, loop-based reference implementations used only as test oracles.

They follow the textbook definitions directly and share no code with the
package kernels.
"""
import cmath
import math


def _pstd(x):
    mu = sum(x) / len(x)
    return math.sqrt(sum((v - mu) ** 2 for v in x) / len(x))


def _templates(x, m, tau):
    n = len(x) - (m - 1) * tau
    return [[x[i + k * tau] for k in range(m)] for i in range(n)]


def _cheb(a, b):
    return max(abs(p - q) for p, q in zip(a, b))


def _omega(xa, xb, m, tau, r, floor):
    ta, tb = _templates(xa, m, tau), _templates(xb, m, tau)
    n = len(ta)
    total = 0.0
    for u in ta:
        c = sum(1 for v in tb if _cheb(u, v) <= r)
        if c == 0 and floor:
            c = 1
        total += math.log(c / n)
    return total / n


def apen_ref(x, m, r_fraction, tau=1):
    x = [float(v) for v in x]
    sd = _pstd(x)
    if sd == 0:
        return 0.0
    r = r_fraction * sd
    return _omega(x, x, m, tau, r, False) - _omega(x, x, m + 1, tau, r, False)


def xapen_ref(a, b, m, r, tau=1):
    def z(x):
        x = [float(v) for v in x]
        mu, sd = sum(x) / len(x), _pstd(x)
        return [(v - mu) / sd if sd else 0.0 for v in x]

    za, zb = z(a), z(b)
    return _omega(za, zb, m, tau, r, True) - _omega(za, zb, m + 1, tau, r, True)


def dft_ref(x, n_coeffs):
    N = len(x)
    return [
        abs(sum(x[n] * cmath.exp(-2j * math.pi * k * n / N) for n in range(N)))
        for k in range(n_coeffs)
    ]


def dct2_ref(x, n_coeffs):
    N = len(x)
    return [
        sum(x[n] * math.cos(math.pi * k * (2 * n + 1) / (2 * N)) for n in range(N))
        for k in range(n_coeffs)
    ]


def glcm_ref(q, levels):
    """Symmetric, normalized co-occurrence matrix at offset (1, 1)."""
    P = [[0.0] * levels for _ in range(levels)]
    W = len(q)
    for i in range(W - 1):
        for j in range(W - 1):
            a, b = q[i][j], q[i + 1][j + 1]
            P[a][b] += 1
            P[b][a] += 1
    tot = sum(map(sum, P))
    return [[v / tot for v in row] for row in P]


def _h(ps):
    return -sum(p * math.log2(p) for p in ps if p > 0)


def haralick_ref(P):
    """The 13 Haralick statistics, written out one by one."""
    L = len(P)
    idx = range(L)
    px = [sum(P[i][j] for j in idx) for i in idx]
    py = [sum(P[i][j] for i in idx) for j in idx]
    mux = sum(i * px[i] for i in idx)
    muy = sum(j * py[j] for j in idx)
    sx = math.sqrt(sum((i - mux) ** 2 * px[i] for i in idx))
    sy = math.sqrt(sum((j - muy) ** 2 * py[j] for j in idx))
    psum = [0.0] * (2 * L - 1)
    pdiff = [0.0] * L
    for i in idx:
        for j in idx:
            psum[i + j] += P[i][j]
            pdiff[abs(i - j)] += P[i][j]
    asm = sum(P[i][j] ** 2 for i in idx for j in idx)
    contrast = sum((i - j) ** 2 * P[i][j] for i in idx for j in idx)
    if sx > 0 and sy > 0:
        corr = sum((i - mux) * (j - muy) * P[i][j] for i in idx for j in idx) / (sx * sy)
    else:
        corr = 0.0
    mu = sum(i * P[i][j] for i in idx for j in idx)
    sos = sum((i - mu) ** 2 * P[i][j] for i in idx for j in idx)
    idm = sum(P[i][j] / (1 + (i - j) ** 2) for i in idx for j in idx)
    savg = sum(k * psum[k] for k in range(2 * L - 1))
    svar = sum((k - savg) ** 2 * psum[k] for k in range(2 * L - 1))
    sent = _h(psum)
    ent = _h([P[i][j] for i in idx for j in idx])
    dmean = sum(k * pdiff[k] for k in range(L))
    dvar = sum((k - dmean) ** 2 * pdiff[k] for k in range(L))
    dent = _h(pdiff)
    hx, hy = _h(px), _h(py)
    hxy1 = -sum(P[i][j] * math.log2(px[i] * py[j]) for i in idx for j in idx if P[i][j] > 0)
    hxy2 = -sum(
        px[i] * py[j] * math.log2(px[i] * py[j]) for i in idx for j in idx if px[i] * py[j] > 0
    )
    denom = max(hx, hy)
    imc1 = (ent - hxy1) / denom if denom > 0 else 0.0
    imc2 = math.sqrt(max(0.0, 1 - math.exp(-2 * (hxy2 - ent))))
    return [asm, contrast, corr, sos, idm, savg, svar, sent, ent, dvar, dent, imc1, imc2]


def loocv_nn_ref(X, y):
    """Leave-one-out 1-NN accuracy by exhaustive scan (Euclidean, lowest index wins ties)."""
    n = len(X)
    correct = 0
    for i in range(n):
        best, best_j = None, None
        for j in range(n):
            if j == i:
                continue
            d = math.sqrt(sum((a - b) ** 2 for a, b in zip(X[i], X[j])))
            if best is None or d < best:
                best, best_j = d, j
        correct += y[best_j] == y[i]
    return correct / n
