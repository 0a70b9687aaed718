"""Compiled RK4 stepping for the master equation.

Jump operators arrive in COO form grouped per operator (``ptr`` delimits each
group) so ``L rho L^dag`` costs nnz^2 instead of two dense products.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _generator(t, g_static, freqs, amps, out):
    # out = g_static - i * sum_f (c_f A_f + h.c.)
    d = g_static.shape[0]
    out[:, :] = g_static
    for f in range(freqs.shape[0]):
        c = -1j * np.exp(1j * freqs[f] * t)
        cc = -1j * np.exp(-1j * freqs[f] * t)
        a = amps[f]
        for i in range(d):
            for j in range(d):
                v = a[i, j]
                if v != 0:
                    out[i, j] += c * v
                    out[j, i] += cc * np.conj(v)


@njit(cache=True)
def master_rhs_kernel(t, rho, g_static, freqs, amps, ptr, rows, cols, vals, gen, out):
    """d rho/dt = G rho + rho G^dag + sum_k L_k rho L_k^dag, G = -iH - (1/2) sum L^dag L."""
    _generator(t, g_static, freqs, amps, gen)
    out[:, :] = np.dot(gen, rho)
    out += np.dot(rho, np.ascontiguousarray(np.conj(gen.T)))
    for k in range(ptr.shape[0] - 1):
        for p in range(ptr[k], ptr[k + 1]):
            i = rows[p]
            a = cols[p]
            x = vals[p]
            for q in range(ptr[k], ptr[k + 1]):
                out[i, rows[q]] += x * np.conj(vals[q]) * rho[a, cols[q]]


@njit(cache=True)
def rk4_steps(rho, t0, h, step0, n_steps, g_static, freqs, amps, ptr, rows, cols, vals,
              diag_obs, record):
    """Advance ``rho`` by ``n_steps`` fixed RK4 steps, Hermitising after each.

    Step ``s`` starts at ``t0 + (step0 + s) * h``. Diagonal observables are
    written into ``record[step0 + s + 1]``. Returns the new state and the
    largest Hermiticity defect removed.
    """
    d = rho.shape[0]
    gen = np.empty((d, d), dtype=np.complex128)
    k1 = np.empty((d, d), dtype=np.complex128)
    k2 = np.empty((d, d), dtype=np.complex128)
    k3 = np.empty((d, d), dtype=np.complex128)
    k4 = np.empty((d, d), dtype=np.complex128)
    cur = rho.copy()
    max_defect = 0.0
    for s in range(n_steps):
        t = t0 + (step0 + s) * h
        master_rhs_kernel(t, cur, g_static, freqs, amps, ptr, rows, cols, vals, gen, k1)
        master_rhs_kernel(t + 0.5 * h, cur + (0.5 * h) * k1, g_static, freqs, amps,
                          ptr, rows, cols, vals, gen, k2)
        master_rhs_kernel(t + 0.5 * h, cur + (0.5 * h) * k2, g_static, freqs, amps,
                          ptr, rows, cols, vals, gen, k3)
        master_rhs_kernel(t + h, cur + h * k3, g_static, freqs, amps,
                          ptr, rows, cols, vals, gen, k4)
        cur += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for i in range(d):
            for j in range(i, d):
                defect = abs(cur[i, j] - np.conj(cur[j, i]))
                if defect > max_defect:
                    max_defect = defect
                v = 0.5 * (cur[i, j] + np.conj(cur[j, i]))
                cur[i, j] = v
                cur[j, i] = np.conj(v)
        row = record[step0 + s + 1]
        for m in range(diag_obs.shape[0]):
            acc = 0.0
            for i in range(d):
                acc += diag_obs[m, i] * cur[i, i].real
            row[m] = acc
    return cur, max_defect
