"""Independent reference computations used by the tests.

Everything here is written as plainly as possible (explicit loops, direct
formulas) and shares no code with the package under test.
"""

import numpy as np
from scipy.interpolate import CubicSpline


def estimate_shift(a: np.ndarray, b: np.ndarray, max_shift: float = 3.0, step: float = 0.01) -> float:
    """Shift ``s`` such that ``b(x) ~= a(x - s)``, by a spline-interpolated grid search.

    Only the interior samples (away from the ends by ``max_shift + 1``) are compared.
    """
    x = np.arange(len(a), dtype=np.float64)
    spline = CubicSpline(x, a)
    m = int(np.ceil(max_shift)) + 1
    xi = x[m:-m]
    best, best_err = 0.0, np.inf
    for s in np.arange(-max_shift, max_shift + step / 2, step):
        err = np.sum((b[m:-m] - spline(xi - s)) ** 2)
        if err < best_err:
            best, best_err = s, err
    return float(best)


def keys(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x**3 - (a + 3) * x**2 + 1
    if x < 2:
        return a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a
    return 0.0


def conv_per_view_3x3(views: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Plain 3x3 pad-1 convolution of each view. ``views``: (A, A, C, H, W)."""
    A, _, C, H, W = views.shape
    O = w.shape[0]
    out = np.zeros((A, A, O, H, W))
    for u in range(A):
        for v in range(A):
            xp = np.pad(views[u, v], ((0, 0), (1, 1), (1, 1)))
            for i in range(3):
                for j in range(3):
                    out[u, v] += np.einsum("oc,chw->ohw", w[:, :, i, j], xp[:, i : i + H, j : j + W])
            out[u, v] += b[:, None, None]
    return out


def macpi_gather(feat: np.ndarray, A: int) -> np.ndarray:
    """(C, A*H, A*W) -> (A, A, C, H, W) by explicit index arithmetic."""
    C, AH, AW = feat.shape
    H, W = AH // A, AW // A
    out = np.zeros((A, A, C, H, W))
    for u in range(A):
        for v in range(A):
            for h in range(H):
                for w in range(W):
                    out[u, v, :, h, w] = feat[:, u + A * h, v + A * w]
    return out


def macpi_scatter(views: np.ndarray) -> np.ndarray:
    A, _, C, H, W = views.shape
    out = np.zeros((C, A * H, A * W))
    for u in range(A):
        for v in range(A):
            for h in range(H):
                for w in range(W):
                    out[:, u + A * h, v + A * w] = views[u, v, :, h, w]
    return out


def afe_oracle(feat: np.ndarray, A: int, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Each macro-pixel is an AxA angular patch; convolve its top-left kxk block
    (stride A, no padding) independently."""
    C, AH, AW = feat.shape
    H, W = AH // A, AW // A
    k = w.shape[-1]
    out = np.zeros((w.shape[0], H, W))
    for h in range(H):
        for ww in range(W):
            patch = feat[:, A * h : A * h + k, A * ww : A * ww + k]
            out[:, h, ww] = np.einsum("ocij,cij->o", w, patch) + b
    return out


def efe_h_oracle(feat: np.ndarray, A: int, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise 1xA^2 correlation with horizontal stride A and A(A-1)/2 zero padding.

    Each MacPI row ``u + A*h`` is the horizontal EPI row of fixed (u, h) over (w, v)."""
    C, AH, AW = feat.shape
    K = A * A
    pad = A * (A - 1) // 2
    W = AW // A
    out = np.zeros((w.shape[0], AH, W))
    for r in range(AH):
        row = np.pad(feat[:, r, :], ((0, 0), (pad, pad)))
        for j in range(W):
            seg = row[:, A * j : A * j + K]
            out[:, r, j] = np.einsum("ock,ck->o", w[:, :, 0, :], seg) + b
    return out


def efe_v_oracle(feat: np.ndarray, A: int, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    wt = np.transpose(w, (0, 1, 3, 2))
    return np.transpose(efe_h_oracle(np.transpose(feat, (0, 2, 1)), A, wt, b), (0, 2, 1))


def ssim_reference(x: np.ndarray, y: np.ndarray) -> float:
    """Direct windowed SSIM, 11x11 Gaussian (sigma 1.5), valid positions only."""
    r = np.arange(11) - 5.0
    g = np.exp(-(r**2) / (2 * 1.5**2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = 0.01**2, 0.03**2
    H, W = x.shape
    vals = []
    for i in range(H - 10):
        for j in range(W - 10):
            px, py = x[i : i + 11, j : j + 11], y[i : i + 11, j : j + 11]
            mx, my = (win * px).sum(), (win * py).sum()
            vx = (win * (px - mx) ** 2).sum()
            vy = (win * (py - my) ** 2).sum()
            cxy = (win * (px - mx) * (py - my)).sum()
            vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def gaussian_posterior_grid(x0: float, xt: float, alpha_t: float, abar_prev: float, n: int = 200001):
    """Posterior of x_{t-1} given x_t and x0 by multiplying the two Gaussian
    densities on a fine grid and taking moments numerically."""
    m_prior = np.sqrt(abar_prev) * x0
    v_prior = 1.0 - abar_prev
    v_lik = 1.0 - alpha_t
    # locate the mass via the precision-weighted product, then integrate numerically
    prec = 1.0 / v_prior + alpha_t / v_lik
    centre = (m_prior / v_prior + np.sqrt(alpha_t) * xt / v_lik) / prec
    sd = np.sqrt(1.0 / prec)
    grid = np.linspace(centre - 12 * sd, centre + 12 * sd, n)
    logp = -((grid - m_prior) ** 2) / (2 * v_prior) - ((xt - np.sqrt(alpha_t) * grid) ** 2) / (2 * v_lik)
    p = np.exp(logp - logp.max())
    p /= p.sum()
    mu = float((grid * p).sum())
    var = float(((grid - mu) ** 2 * p).sum())
    return mu, var
