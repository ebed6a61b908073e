"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version. The numba path is used when numba imports cleanly and the
environment variable ``SMARTBSP_DISABLE_NUMBA`` is unset (or ``0``).
Both paths are kept in lockstep by ``tests/test_kernels.py``.
"""
import math
import os

import numpy as np

_flag = os.environ.get("SMARTBSP_DISABLE_NUMBA", "0").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("disabled by SMARTBSP_DISABLE_NUMBA")
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


USE_NUMBA = NUMBA_AVAILABLE


# ---------------------------------------------------------------------------
# polar binning
# ---------------------------------------------------------------------------

def _bin_index_np(values, low, step, n):
    idx = np.floor((values - low) / step).astype(np.int64)
    # nudge so the result agrees with explicit [lo, hi) bound tests
    lo = low + idx * step
    idx = np.where(values < lo, idx - 1, idx)
    hi = low + (idx + 1) * step
    idx = np.where(values >= hi, idx + 1, idx)
    return idx


def locate_points_numpy(xs, ys, n_rings, n_rows, dr, half_fov, dtheta):
    r = np.hypot(xs, ys)
    th = np.arctan2(ys, xs)
    ring = _bin_index_np(r, 0.0, dr, n_rings)
    row = _bin_index_np(th, -half_fov, dtheta, n_rows)
    ok = (ring >= 0) & (ring < n_rings) & (row >= 0) & (row < n_rows)
    ring = np.where(ok, ring, -1)
    row = np.where(ok, row, -1)
    return ring, row


@njit(cache=True)
def _bin_index_scalar(v, low, step):
    i = int(math.floor((v - low) / step))
    if v < low + i * step:
        i -= 1
    if v >= low + (i + 1) * step:
        i += 1
    return i


@njit(cache=True)
def locate_points_numba(xs, ys, n_rings, n_rows, dr, half_fov, dtheta):
    n = xs.shape[0]
    ring = np.empty(n, dtype=np.int64)
    row = np.empty(n, dtype=np.int64)
    for k in range(n):
        r = math.hypot(xs[k], ys[k])
        th = math.atan2(ys[k], xs[k])
        i = _bin_index_scalar(r, 0.0, dr)
        j = _bin_index_scalar(th, -half_fov, dtheta)
        if 0 <= i < n_rings and 0 <= j < n_rows:
            ring[k] = i
            row[k] = j
        else:
            ring[k] = -1
            row[k] = -1
    return ring, row


def locate_points(xs, ys, n_rings, n_rows, dr, half_fov, dtheta):
    """Cell indices for each point; (-1, -1) for points outside the sector."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    f = locate_points_numba if USE_NUMBA else locate_points_numpy
    return f(xs, ys, int(n_rings), int(n_rows), float(dr), float(half_fov), float(dtheta))


def bin_points(xs, ys, n_rings, n_rows, dr, half_fov, dtheta):
    ring, row = locate_points(xs, ys, n_rings, n_rows, dr, half_fov, dtheta)
    counts = np.zeros((n_rings, n_rows), dtype=np.int64)
    ok = ring >= 0
    np.add.at(counts, (ring[ok], row[ok]), 1)
    return counts


# ---------------------------------------------------------------------------
# B-spline basis (Cox-de Boor with derivatives)
# ---------------------------------------------------------------------------

def _span_numpy(knots, degree, ts):
    n_ctrl = len(knots) - degree - 1
    span = np.searchsorted(knots, ts, side="right") - 1
    return np.clip(span, degree, n_ctrl - 1)


def basis_numpy(knots, degree, ts, nderiv):
    """Basis values and derivatives, shape (nderiv + 1, len(ts), n_ctrl)."""
    knots = np.asarray(knots, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    m = len(knots)
    span = _span_numpy(knots, degree, ts)
    # levels[p][:, i] = N_{i,p}(t)
    levels = []
    n0 = np.zeros((len(ts), m - 1))
    n0[np.arange(len(ts)), span] = 1.0
    levels.append(n0)
    for p in range(1, degree + 1):
        prev = levels[-1]
        cnt = m - p - 1
        cur = np.zeros((len(ts), cnt))
        for i in range(cnt):
            d1 = knots[i + p] - knots[i]
            d2 = knots[i + p + 1] - knots[i + 1]
            if d1 > 0:
                cur[:, i] += (ts - knots[i]) / d1 * prev[:, i]
            if d2 > 0:
                cur[:, i] += (knots[i + p + 1] - ts) / d2 * prev[:, i + 1]
        levels.append(cur)

    def deriv(k, p):
        if k == 0:
            return levels[p]
        lower = deriv(k - 1, p - 1)
        cnt = m - p - 1
        out = np.zeros((len(ts), cnt))
        for i in range(cnt):
            d1 = knots[i + p] - knots[i]
            d2 = knots[i + p + 1] - knots[i + 1]
            if d1 > 0:
                out[:, i] += p / d1 * lower[:, i]
            if d2 > 0:
                out[:, i] -= p / d2 * lower[:, i + 1]
        return out

    return np.stack([deriv(k, degree) if k <= degree else np.zeros_like(levels[degree])
                     for k in range(nderiv + 1)])


@njit(cache=True)
def basis_numba(knots, degree, ts, nderiv):
    m = knots.shape[0]
    n_ctrl = m - degree - 1
    nt = ts.shape[0]
    out = np.zeros((nderiv + 1, nt, n_ctrl))
    # table[p, i] = N_{i,p}; dtab[k, p, i] = k-th derivative of N_{i,p}
    dtab = np.zeros((nderiv + 1, degree + 1, m))
    for s in range(nt):
        t = ts[s]
        span = degree
        for j in range(degree, n_ctrl):
            if knots[j] <= t:
                span = j
        dtab[:, :, :] = 0.0
        dtab[0, 0, span] = 1.0
        for p in range(1, degree + 1):
            for i in range(m - p - 1):
                d1 = knots[i + p] - knots[i]
                d2 = knots[i + p + 1] - knots[i + 1]
                v = 0.0
                if d1 > 0:
                    v += (t - knots[i]) / d1 * dtab[0, p - 1, i]
                if d2 > 0:
                    v += (knots[i + p + 1] - t) / d2 * dtab[0, p - 1, i + 1]
                dtab[0, p, i] = v
        for k in range(1, nderiv + 1):
            for p in range(k, degree + 1):
                for i in range(m - p - 1):
                    d1 = knots[i + p] - knots[i]
                    d2 = knots[i + p + 1] - knots[i + 1]
                    v = 0.0
                    if d1 > 0:
                        v += p / d1 * dtab[k - 1, p - 1, i]
                    if d2 > 0:
                        v -= p / d2 * dtab[k - 1, p - 1, i + 1]
                    dtab[k, p, i] = v
        for k in range(nderiv + 1):
            for i in range(n_ctrl):
                out[k, s, i] = dtab[k, degree, i]
    return out


def basis(knots, degree, ts, nderiv=0):
    knots = np.ascontiguousarray(knots, dtype=np.float64)
    ts = np.ascontiguousarray(ts, dtype=np.float64)
    if USE_NUMBA:
        return basis_numba(knots, int(degree), ts, int(nderiv))
    return basis_numpy(knots, int(degree), ts, int(nderiv))


# ---------------------------------------------------------------------------
# 3x3 same-padding convolution
# ---------------------------------------------------------------------------

def _patches(x):
    # (B, C, H, W) -> (B*H*W, C*9)
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * 9)


def conv3x3_forward_numpy(x, w, bias):
    b, _, h, wd = x.shape
    cout = w.shape[0]
    out = _patches(x) @ w.reshape(cout, -1).T + bias
    return np.ascontiguousarray(out.reshape(b, h, wd, cout).transpose(0, 3, 1, 2))


def conv3x3_backward_numpy(x, w, dout):
    b, cin, h, wd = x.shape
    cout = w.shape[0]
    dmat = dout.transpose(0, 2, 3, 1).reshape(b * h * wd, cout)
    dw = (dmat.T @ _patches(x)).reshape(w.shape)
    db = dmat.sum(axis=0)
    dpatch = (dmat @ w.reshape(cout, -1)).reshape(b, h, wd, cin, 3, 3)
    dxp = np.zeros((b, cin, h + 2, wd + 2))
    for ki in range(3):
        for kj in range(3):
            dxp[:, :, ki:ki + h, kj:kj + wd] += dpatch[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dw, db


@njit(cache=True)
def _im2col_numba(x):
    b, c, h, w = x.shape
    cols = np.zeros((b * h * w, c * 9))
    for n in range(b):
        for i in range(h):
            for j in range(w):
                r = (n * h + i) * w + j
                for ch in range(c):
                    for ki in range(3):
                        ii = i + ki - 1
                        if ii < 0 or ii >= h:
                            continue
                        for kj in range(3):
                            jj = j + kj - 1
                            if 0 <= jj < w:
                                cols[r, ch * 9 + ki * 3 + kj] = x[n, ch, ii, jj]
    return cols


@njit(cache=True)
def conv3x3_forward_numba(x, w, bias):
    b, cin, h, wd = x.shape
    cout = w.shape[0]
    cols = _im2col_numba(x)
    prod = np.dot(cols, np.ascontiguousarray(w.reshape(cout, cin * 9).T))
    out = np.empty((b, cout, h, wd))
    for n in range(b):
        for i in range(h):
            for j in range(wd):
                r = (n * h + i) * wd + j
                for o in range(cout):
                    out[n, o, i, j] = prod[r, o] + bias[o]
    return out


@njit(cache=True)
def conv3x3_backward_numba(x, w, dout):
    b, cin, h, wd = x.shape
    cout = w.shape[0]
    dmat = np.empty((b * h * wd, cout))
    for n in range(b):
        for i in range(h):
            for j in range(wd):
                r = (n * h + i) * wd + j
                for o in range(cout):
                    dmat[r, o] = dout[n, o, i, j]
    cols = _im2col_numba(x)
    dw = np.dot(dmat.T, cols).reshape(w.shape)
    db = dmat.sum(axis=0)
    dcols = np.dot(dmat, np.ascontiguousarray(w.reshape(cout, cin * 9)))
    dx = np.zeros(x.shape)
    for n in range(b):
        for i in range(h):
            for j in range(wd):
                r = (n * h + i) * wd + j
                for ch in range(cin):
                    for ki in range(3):
                        ii = i + ki - 1
                        if ii < 0 or ii >= h:
                            continue
                        for kj in range(3):
                            jj = j + kj - 1
                            if 0 <= jj < wd:
                                dx[n, ch, ii, jj] += dcols[r, ch * 9 + ki * 3 + kj]
    return dx, dw, db


def conv3x3_forward(x, w, bias):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if USE_NUMBA:
        return conv3x3_forward_numba(x, w, bias)
    return conv3x3_forward_numpy(x, w, bias)


def conv3x3_backward(x, w, dout):
    x = np.ascontiguousarray(x, dtype=np.float64)
    dout = np.ascontiguousarray(dout, dtype=np.float64)
    if USE_NUMBA:
        return conv3x3_backward_numba(x, w, dout)
    return conv3x3_backward_numpy(x, w, dout)


# ---------------------------------------------------------------------------
# adaptive-moment update on flat buffers (in place)
# ---------------------------------------------------------------------------

# moments below these magnitudes are flushed to zero; decaying first moments
# of dead units otherwise go subnormal and slow every update ~20x
M_FLUSH = 1e-150
V_FLUSH = 1e-300


def adam_update_numpy(p, g, m, v, lr, b1, b2, eps, t):
    m *= b1
    m += (1 - b1) * g
    m[np.abs(m) < M_FLUSH] = 0.0
    v *= b2
    v += (1 - b2) * g * g
    v[v < V_FLUSH] = 0.0
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@njit(cache=True, fastmath=True)
def adam_update_numba(p, g, m, v, lr, b1, b2, eps, t):
    step = lr / (1 - b1 ** t)
    inv_c2 = 1.0 / (1 - b2 ** t)
    for i in range(p.shape[0]):
        gi = g[i]
        mi = b1 * m[i] + (1 - b1) * gi
        if -M_FLUSH < mi < M_FLUSH:
            mi = 0.0
        vi = b2 * v[i] + (1 - b2) * gi * gi
        if vi < V_FLUSH:
            vi = 0.0
        m[i] = mi
        v[i] = vi
        p[i] -= step * mi / (math.sqrt(vi * inv_c2) + eps)


def adam_update(p, g, m, v, lr, b1, b2, eps, t):
    f = adam_update_numba if USE_NUMBA else adam_update_numpy
    f(p, g, m, v, float(lr), float(b1), float(b2), float(eps), int(t))
