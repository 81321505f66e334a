"""Independent reference computations the tests compare against.

Each oracle takes the slow, obvious route (explicit loops, enumeration,
full stacked systems) and shares no code with the package.
"""
import itertools
import math

import numpy as np


def grid_centers(width, height, block=16):
    return np.array([(x + block / 2, y + block / 2)
                     for y in range(0, height - block + 1, block)
                     for x in range(0, width - block + 1, block)], dtype=float)


def affine_field(params, centers):
    a1, a2, a3, a4, a5, a6 = params
    x, y = centers[:, 0], centers[:, 1]
    return np.column_stack([a1 + a2 * x + a3 * y, a4 + a5 * x + a6 * y])


def affine_normal_equations(centers, disp):
    """Solve the full 2n x 6 stacked system through its normal equations."""
    rows, rhs = [], []
    for (x, y), (dx, dy) in zip(centers, disp):
        rows.append([1, x, y, 0, 0, 0])
        rhs.append(dx)
        rows.append([0, 0, 0, 1, x, y])
        rhs.append(dy)
    M = np.array(rows, dtype=float)
    b = np.array(rhs, dtype=float)
    return np.linalg.solve(M.T @ M, M.T @ b)


def homogeneous(params):
    a1, a2, a3, a4, a5, a6 = params
    return np.array([[1 + a2, a3, a1], [a5, 1 + a6, a4], [0.0, 0.0, 1.0]])


def compose_corners(corners, motions):
    """Apply each motion's 3x3 homogeneous matrix to the corners in turn."""
    M = np.eye(3)
    for p in motions:
        M = homogeneous(p) @ M
    hom = np.column_stack([corners, np.ones(len(corners))])
    return (hom @ M.T)[:, :2]


def replay_cuts(motions, width, height, threshold):
    """Hand-rolled corner tracking with per-corner Euclidean threshold."""
    start = [(0.0, 0.0), (width, 0.0), (0.0, height), (width, height)]
    pos = list(start)
    cuts = []
    for k, (a1, a2, a3, a4, a5, a6) in enumerate(motions):
        pos = [(x + a1 + a2 * x + a3 * y, y + a4 + a5 * x + a6 * y) for x, y in pos]
        worst = max(math.hypot(x - x0, y - y0) for (x, y), (x0, y0) in zip(pos, start))
        if worst > threshold:
            cuts.append(k)
            pos = list(start)
    return cuts


def cut_hist_enumerate(cuts, frame, n_bins):
    return [sum(1 for c in cuts if frame - 2**i <= c < frame) for i in range(1, n_bins + 1)]


def tpe_bin_scalar(value, n_bins, step):
    """1-based bin following the three cases of the log-energy rule."""
    e = 2 * math.log(abs(value)) if value != 0 else -math.inf
    if e < step:
        return 1
    for i in range(2, n_bins):
        if (i - 1) * step <= e < i * step:
            return i
    return n_bins


ZIGZAG_6 = [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2)]


def direct_cld(image):
    """Block means by loops, BT.601 by matrix, DCT-II by the double sum."""
    img = np.asarray(image, dtype=float)
    h, w = img.shape[:2]
    ys = [i * (h // 8) for i in range(8)] + [h]
    xs = [j * (w // 8) for j in range(8)] + [w]
    avg = np.zeros((8, 8, 3))
    for i in range(8):
        for j in range(8):
            block = img[ys[i]:ys[i + 1], xs[j]:xs[j + 1]].reshape(-1, 3)
            avg[i, j] = block.sum(axis=0) / len(block)
    conv = np.array([[0.299, 0.587, 0.114],
                     [-0.168736, -0.331264, 0.5],
                     [0.5, -0.418688, -0.081312]])
    ycc = avg @ conv.T + np.array([0.0, 128.0, 128.0])

    def dct(plane, u, v):
        cu = math.sqrt(1 / 8) if u == 0 else math.sqrt(2 / 8)
        cv = math.sqrt(1 / 8) if v == 0 else math.sqrt(2 / 8)
        s = 0.0
        for x in range(8):
            for y in range(8):
                s += plane[x, y] * math.cos((2 * x + 1) * u * math.pi / 16) \
                    * math.cos((2 * y + 1) * v * math.pi / 16)
        return cu * cv * s

    out = []
    for ch, count in ((0, 6), (1, 3), (2, 3)):
        out.extend(dct(ycc[..., ch], u, v) for u, v in ZIGZAG_6[:count])
    return np.array(out)


TIE = 1e-12


def brute_nn(sig, train, labels):
    """Exactly rounded L1 sums; distances within TIE count as tied."""
    best, best_label = None, None
    for row, lab in zip(train, labels):
        d = math.fsum(abs(a - b) for a, b in zip(sig, row))
        if best is None or d < best - TIE or (abs(d - best) <= TIE and lab < best_label):
            best, best_label = d, lab
    return best_label


def all_paths(n_states, T):
    return np.array(list(itertools.product(range(n_states), repeat=T)))


def path_scores(log_pi, log_A, log_B, paths):
    T = log_B.shape[0]
    s = log_pi[paths[:, 0]] + log_B[0, paths[:, 0]]
    for t in range(1, T):
        s = s + log_A[paths[:, t - 1], paths[:, t]] + log_B[t, paths[:, t]]
    return s


def brute_viterbi(log_pi, log_A, log_B):
    paths = all_paths(log_B.shape[1], log_B.shape[0])
    s = path_scores(log_pi, log_A, log_B, paths)
    order = np.argsort(-s, kind="stable")
    return paths[order[0]], s[order[0]], s[order[1]] if len(order) > 1 else -np.inf


def brute_posteriors(log_pi, log_A, log_B):
    T, S = log_B.shape
    paths = all_paths(S, T)
    s = path_scores(log_pi, log_A, log_B, paths)
    top = s.max()
    w = np.exp(s - top)
    post = np.zeros((T, S))
    for t in range(T):
        np.add.at(post[t], paths[:, t], w)
    total = w.sum()
    return post / total, float(np.log(total) + top)


def flatten_by_hand(As, pis, P, stay):
    """Composite transition matrix written entry by entry."""
    sizes = [len(p) for p in pis]
    owner = [(a, i) for a, m in enumerate(sizes) for i in range(m)]
    S = len(owner)
    M = np.zeros((S, S))
    for r, (a, i) in enumerate(owner):
        for c, (b, j) in enumerate(owner):
            if a == b:
                M[r, c] = stay * As[a][i][j]
            else:
                M[r, c] = (1 - stay) * P[a][b] * pis[b][j]
        M[r] /= M[r].sum()
    start = np.array([pis[a][i] / len(pis) for a, i in owner])
    return M, start


def tally(truth, pred, labels):
    M = [[0] * len(labels) for _ in labels]
    for t, p in zip(truth, pred):
        M[labels.index(t)][labels.index(p)] += 1
    return np.array(M)
