"""Naive reference implementations used as test oracles.

Each routine works pixel by pixel with plain Python arithmetic and shares no
code with the vectorized implementations under test.
"""

import cmath
import math

import numpy as np

TIE = 1e-9
SQUARE = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)]
KIRSCH = [
    [[-3, -3, 5], [-3, 0, 5], [-3, -3, 5]],
    [[-3, 5, 5], [-3, 0, 5], [-3, -3, -3]],
    [[5, 5, 5], [-3, 0, -3], [-3, -3, -3]],
    [[5, 5, -3], [5, 0, -3], [-3, -3, -3]],
    [[5, -3, -3], [5, 0, -3], [5, -3, -3]],
    [[-3, -3, -3], [5, 0, -3], [5, 5, -3]],
    [[-3, -3, -3], [-3, 0, -3], [5, 5, 5]],
    [[-3, -3, -3], [-3, 0, 5], [-3, 5, 5]],
]


def bilinear(img, x, y):
    h, w = len(img), len(img[0])
    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    return (
        img[y0][x0] * (1 - fx) * (1 - fy)
        + img[y0][x1] * fx * (1 - fy)
        + img[y1][x0] * (1 - fx) * fy
        + img[y1][x1] * fx * fy
    )


def _snap(v):
    return round(v) if abs(v - round(v)) < 1e-9 else v


def lbp(img, neighbors=8, radius=1.0, topology="square3x3"):
    img = [[int(v) for v in row] for row in img]
    h, w = len(img), len(img[0])
    m = 1 if topology == "square3x3" else math.ceil(radius)
    out = []
    for y in range(m, h - m):
        row = []
        for x in range(m, w - m):
            g = img[y][x]
            code = 0
            for p in range(neighbors if topology == "circle" else 8):
                if topology == "square3x3":
                    dx, dy = SQUARE[p]
                    bit = img[y + dy][x + dx] >= g
                else:
                    ang = 2 * math.pi * p / neighbors
                    v = bilinear(img, x + _snap(radius * math.cos(ang)), y + _snap(-radius * math.sin(ang)))
                    bit = v - g >= -TIE
                code += int(bit) << p
            row.append(code)
        out.append(row)
    return out


def ltp(img, t):
    img = [[int(v) for v in row] for row in img]
    h, w = len(img), len(img[0])
    upper, lower = [], []
    for y in range(1, h - 1):
        ur, lr = [], []
        for x in range(1, w - 1):
            g = img[y][x]
            u = l = 0
            for p, (dx, dy) in enumerate(SQUARE):
                v = img[y + dy][x + dx]
                tern = 1 if v > g + t else (-1 if v < g - t else 0)
                u += (tern == 1) << p
                l += (tern == -1) << p
            ur.append(u)
            lr.append(l)
        upper.append(ur)
        lower.append(lr)
    return upper, lower


def kirsch(img, x, y):
    return [
        sum(KIRSCH[i][r][c] * int(img[y + r - 1][x + c - 1]) for r in range(3) for c in range(3))
        for i in range(8)
    ]


def ldp(img, k=3):
    h, w = len(img), len(img[0])
    out = []
    for y in range(1, h - 1):
        row = []
        for x in range(1, w - 1):
            mags = [abs(m) for m in kirsch(img, x, y)]
            chosen = sorted(range(8), key=lambda i: (-mags[i], i))[:k]
            row.append(sum(1 << i for i in chosen))
        out.append(row)
    return out


def lpq_coefficients_at(img, x, y, size=7):
    r = size // 2
    a = 1.0 / size
    freqs = [(a, 0.0), (0.0, a), (a, a), (a, -a)]
    coeffs = []
    for ux, uy in freqs:
        total = 0j
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                total += int(img[y + dy][x + dx]) * cmath.exp(-2j * math.pi * (ux * dx + uy * dy))
        coeffs.append(total)
    return [c.real for c in coeffs] + [c.imag for c in coeffs]


def lpq(img, size=7):
    h, w = len(img), len(img[0])
    r = size // 2
    out = []
    for y in range(r, h - r):
        row = []
        for x in range(r, w - r):
            comps = lpq_coefficients_at(img, x, y, size)
            # complex exponentials leave ~1e-12 residue on coefficients that are exactly zero
            row.append(sum(int(c > 1e-7) << j for j, c in enumerate(comps)))
        out.append(row)
    return out


def correlate(img, kernel):
    kernel = [[float(v) for v in row] for row in kernel]
    k = len(kernel)
    h, w = len(img), len(img[0])
    out = []
    for y in range(h - k + 1):
        row = []
        for x in range(w - k + 1):
            s = 0.0
            for i in range(k):
                for j in range(k):
                    s += kernel[i][j] * float(img[y + i][x + j])
            row.append(s)
        out.append(row)
    return out


def bsif(img, kernels):
    responses = [correlate(img, k) for k in kernels]
    h, w = len(responses[0]), len(responses[0][0])
    return [[sum(int(responses[i][y][x] > 0) << i for i in range(len(kernels))) for x in range(w)] for y in range(h)]


def histogram(codes, n_bins=256):
    counts = [0] * n_bins
    total = 0
    for row in codes:
        for c in row:
            counts[c] += 1
            total += 1
    return [c / total for c in counts]


# ---------------------------------------------------------------------------
# threshold sweep


def sweep(genuine, impostor):
    """(threshold, far, frr) at every distinct score plus sentinels, by counting."""
    values = sorted(set(genuine) | set(impostor))
    thresholds = [values[0] - 1.0] + values + [values[-1] + 1.0]
    out = []
    for t in thresholds:
        far = sum(1 for s in impostor if s <= t) / len(impostor)
        frr = sum(1 for s in genuine if s > t) / len(genuine)
        out.append((t, far, frr))
    return out


def eer_by_sweep(genuine, impostor):
    """Scan every consecutive threshold pair for the FAR = FRR crossing."""
    pts = sweep(genuine, impostor)
    for t, far, frr in pts:
        if far == frr:
            return 100.0 * far
    for (t0, a0, r0), (t1, a1, r1) in zip(pts, pts[1:]):
        d0, d1 = a0 - r0, a1 - r1
        if d0 < 0 < d1:
            s = d0 / (d0 - d1)
            return 100.0 * (a0 + s * (a1 - a0))
    raise AssertionError("no crossing")


def min_hter_by_sweep(genuine, impostor):
    return 100.0 * min((far + frr) / 2.0 for _, far, frr in sweep(genuine, impostor))


def ci(values, z):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, z * math.sqrt(var) / math.sqrt(n)


def nearest_subjects(probe, gallery):
    """gallery: dict subject -> list of vectors; returns subjects by (min distance, id)."""
    scored = []
    for sid, vectors in gallery.items():
        d = min(math.sqrt(sum((a - b) ** 2 for a, b in zip(probe, v))) for v in vectors)
        scored.append((d, sid))
    scored.sort()
    return [sid for _, sid in scored]


def random_images(seed, count, size=16):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, size=(size, size)) for _ in range(count)]
