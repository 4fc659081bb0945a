"""Pure numpy implementations of the compiled kernels (same signatures)."""
import numpy as np

TWO_OVER_PI = 2.0 / np.pi


def wigner_laguerre(rho, xs, ys):
    """W[iy, ix] = (2/pi) sum_jk rho_jk (-1)^j <k|D(2 gamma)|j>, vectorized over grid points."""
    rho = np.ascontiguousarray(rho, dtype=complex)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    S = rho.shape[0]
    beta = 2.0 * (xs[None, :] + 1j * ys[:, None]).ravel()
    bc = beta.conj()
    sq = np.sqrt(np.arange(S, dtype=float))
    col = np.empty((S, beta.size), dtype=complex)
    col[0] = np.exp(-0.5 * np.abs(beta) ** 2)
    for k in range(1, S):
        col[k] = col[k - 1] * beta / sq[k]
    acc = rho[0] @ col
    sign = 1.0
    for j in range(1, S):
        sign = -sign
        new = np.empty_like(col)
        new[1:] = (sq[1:, None] * col[:-1] - bc * col[1:]) / sq[j]
        new[0] = -bc * col[0] / sq[j]
        col = new
        acc += sign * (rho[j] @ col)
    return (TWO_OVER_PI * acc.real).reshape(ys.size, xs.size)


def _relax(phi, phi_ext, beta, r, s, max_iter=200):
    step = 1.0
    for _ in range(max_iter):
        a = (phi_ext - s) / 3.0
        g = -r * (phi - s) + beta * np.sin(s) - np.sin(a)
        h = r + beta * np.cos(s) + np.cos(a) / 3.0
        if h <= 0.0:
            return s, False
        step = min(max(g / h, -0.5), 0.5)
        s -= step
        if abs(step) < 1e-15 * (1.0 + abs(s)):
            return s, True
    return s, abs(step) <= 1e-12


def snail_effective_delta(phis, phi_ext, beta, r, phi_m, s_m):
    """Relax the SNAIL phase at each phi (continuation in the given order, starting
    from s_m) and return (U_eff(phi) - U_eff(phi_m)) / EJ and the relaxed phases.
    Non-converged points are NaN."""
    phis = np.asarray(phis, dtype=float)
    s_arr = np.full(phis.size, np.nan)
    s = s_m
    for i, phi in enumerate(phis):
        s, ok = _relax(phi, phi_ext, beta, r, s)
        if ok:
            s_arr[i] = s
        else:
            s = s_m
    ds = s_arr - s_m
    x = phis - s_arr
    y = phi_m - s_m
    am = (phi_ext - s_m) / 3.0
    a = (phi_ext - s_arr) / 3.0
    delta = (0.5 * r * ((phis - phi_m) - ds) * (x + y)
             + 2.0 * beta * np.sin(0.5 * (s_arr + s_m)) * np.sin(0.5 * ds)
             + 6.0 * np.sin(0.5 * (a + am)) * np.sin(-ds / 6.0))
    return delta, s_arr
