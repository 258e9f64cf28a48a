# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gibbs chain kernel.

Mirrors ``gibbs.gibbs_sweep`` step for step and draws from the caller's
bit generator through numpy's C distribution functions, so for the same
generator state both paths consume the same variates.  The location grid
log-target is evaluated through a precomputed kernel table instead of
fresh exponentials; results agree with the reference to rounding.
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, log, sqrt
from libc.stdlib cimport free, malloc
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_gamma, random_standard_normal

cdef double LOG_SQRT_2PI = 0.9189385332046727


cdef inline void kernel_column(double *g, double t, double T, double inv_2h2, Py_ssize_t N) noexcept nogil:
    cdef Py_ssize_t n
    cdef double d
    for n in range(N):
        d = n * T - t
        g[n] = exp(-(d * d) * inv_2h2)


cdef inline double log_target_at(double x, double gamma, const double *nu, double scale,
                                 double T, double inv_2h2, Py_ssize_t N) noexcept nogil:
    cdef Py_ssize_t n
    cdef double d, g, sg2 = 0.0, snu = 0.0
    for n in range(N):
        d = n * T - x
        g = exp(-(d * d) * inv_2h2)
        sg2 += g * g
        snu += g * nu[n]
    return scale * (gamma * sg2 + snu)


cdef inline double log_mixture(double x, double mean, double std, double log_std,
                              double wu, double dens_u) noexcept nogil:
    # x is always inside the support here
    cdef double zq = (x - mean) / std
    cdef double log_g = -0.5 * zq * zq - log_std - LOG_SQRT_2PI
    if wu == 0.0:
        return log_g
    return log((1.0 - wu) * exp(log_g) + dens_u)


cdef double draw_location(bitgen_t *bg, const double[::1] grid, const double[:, ::1] G,
                          const double[::1] G2, double gamma, const double *nu, double scale,
                          double T, double inv_2h2, Py_ssize_t N, Py_ssize_t max_attempts,
                          double log_safety, double wu, double *f, long *attempts,
                          long *fallbacks) noexcept nogil:
    cdef Py_ssize_t n_grid = grid.shape[0]
    cdef Py_ssize_t j, n, jmax = 0
    cdef double lo = grid[0], hi = grid[n_grid - 1]
    cdef double width = hi - lo, h = grid[1] - grid[0]
    cdef double acc, fmax, var, std, mean, zq, log_std, log_c, v, x, u, log_ratio, dens_u = 0.0

    for j in range(n_grid):
        acc = 0.0
        for n in range(N):
            acc += G[j, n] * nu[n]
        f[j] = scale * (gamma * G2[j] + acc)
        if j == 0 or f[j] > f[jmax]:
            jmax = j
    fmax = f[jmax]

    # moment-matched proposal on the grid-normalized target
    acc = 0.0
    mean = 0.0
    for j in range(n_grid):
        v = exp(f[j] - fmax)
        acc += v
        mean += v * grid[j]
    mean /= acc
    var = 0.0
    for j in range(n_grid):
        zq = grid[j] - mean
        var += exp(f[j] - fmax) * zq * zq
    var /= acc
    if width > 0:
        std = 2.0 * sqrt(var)
        if std < h:
            std = h
        if std > width:
            std = width
    else:
        std = 1.0
        wu = 0.0
    log_std = log(std)
    if wu > 0.0:
        dens_u = wu / width

    log_c = -1e308
    for j in range(n_grid):
        v = f[j] - log_mixture(grid[j], mean, std, log_std, wu, dens_u)
        if v > log_c:
            log_c = v
    log_c += log_safety

    for j in range(max_attempts):
        if wu > 0.0 and bg.next_double(bg.state) < wu:
            x = lo + width * bg.next_double(bg.state)
        else:
            x = mean + std * random_standard_normal(bg)
        u = bg.next_double(bg.state)
        attempts[0] += 1
        if not (lo <= x and x <= hi):
            continue
        log_ratio = log_target_at(x, gamma, nu, scale, T, inv_2h2, N) - log_c \
            - log_mixture(x, mean, std, log_std, wu, dens_u)
        if log_ratio > 0.0:
            log_ratio = 0.0
        if u < exp(log_ratio):
            return x

    fallbacks[0] += 1
    # categorical draw on the grid, same cumulative-sum convention as the reference
    acc = 0.0
    for j in range(n_grid):
        acc += exp(f[j] - fmax)
        f[j] = acc
    u = bg.next_double(bg.state) * acc
    for j in range(n_grid):
        if f[j] > u:
            return grid[j]
    return grid[n_grid - 1]


def run_chain(const double[::1] y, double T, double sigma_h,
              const double[::1] c0, const double[::1] t0, double sigma0,
              Py_ssize_t n_sweeps, Py_ssize_t n_grid, Py_ssize_t max_attempts,
              double safety, double uniform_weight, double lambda_floor, object bit_generator):
    """Run ``n_sweeps`` Gibbs sweeps from ``(c0, t0, sigma0)``.

    Returns ``(c_hist, t_hist, sigma_hist, neg_log_lik, fallbacks, attempts)``.
    """
    cdef Py_ssize_t N = y.shape[0]
    cdef Py_ssize_t K = c0.shape[0]
    cdef Py_ssize_t i, k, n, kk
    if n_grid < 2:
        raise ValueError("n_grid must be >= 2")
    if t0.shape[0] != K:
        raise ValueError("c0 and t0 lengths differ")

    grid_np = np.linspace(0.0, (N - 1) * T, n_grid)
    d = grid_np[:, None] - np.arange(N)[None, :] * T
    G_np = np.exp(-(d * d) / (2.0 * sigma_h * sigma_h))
    G2_np = np.sum(G_np * G_np, axis=1)
    cdef const double[::1] grid = grid_np
    cdef const double[:, ::1] G = G_np
    cdef const double[::1] G2 = G2_np

    c_hist_np = np.empty((n_sweeps, K))
    t_hist_np = np.empty((n_sweeps, K))
    s_hist_np = np.empty(n_sweeps)
    nll_np = np.empty(n_sweeps)
    cdef double[:, ::1] c_hist = c_hist_np
    cdef double[:, ::1] t_hist = t_hist_np
    cdef double[::1] s_hist = s_hist_np
    cdef double[::1] nll = nll_np

    cdef double *c = <double *> malloc(K * sizeof(double))
    cdef double *t = <double *> malloc(K * sizeof(double))
    cdef double *r = <double *> malloc(N * sizeof(double))
    cdef double *g = <double *> malloc(N * sizeof(double))
    cdef double *partial = <double *> malloc(N * sizeof(double))
    cdef double *nu = <double *> malloc(N * sizeof(double))
    cdef double *f = <double *> malloc(n_grid * sizeof(double))
    if not (c and t and r and g and partial and nu and f):
        free(c); free(t); free(r); free(g); free(partial); free(nu); free(f)
        raise MemoryError()

    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")
    cdef double inv_2h2 = 1.0 / (2.0 * sigma_h * sigma_h)
    cdef double log_safety = log(safety)
    cdef double sigma = sigma0
    cdef double s2, sg2, sgp, mean, var, ck, tnew, rss, lam, gam
    cdef long attempts = 0, fallbacks = 0
    cdef double shape = N / 2.0

    for k in range(K):
        c[k] = c0[k]
        t[k] = t0[k]

    try:
        with bit_generator.lock, nogil:
            for i in range(n_sweeps):
                # residual from scratch each sweep so rounding never accumulates
                for n in range(N):
                    r[n] = y[n]
                for k in range(K):
                    kernel_column(g, t[k], T, inv_2h2, N)
                    for n in range(N):
                        r[n] -= c[k] * g[n]

                s2 = sigma * sigma
                for k in range(K):
                    kernel_column(g, t[k], T, inv_2h2, N)
                    sg2 = 0.0
                    sgp = 0.0
                    for n in range(N):
                        partial[n] = r[n] + c[k] * g[n]
                        sg2 += g[n] * g[n]
                        sgp += g[n] * partial[n]
                    mean = sgp / sg2
                    var = s2 / sg2
                    ck = mean + sqrt(var) * random_standard_normal(bg)
                    for n in range(N):
                        r[n] = partial[n] - ck * g[n]
                    c[k] = ck

                for k in range(K):
                    kernel_column(g, t[k], T, inv_2h2, N)
                    ck = c[k]
                    for n in range(N):
                        partial[n] = r[n] + ck * g[n]
                        nu[n] = -2.0 * ck * partial[n]
                    tnew = draw_location(bg, grid, G, G2, ck * ck, nu, -1.0 / (2.0 * s2),
                                         T, inv_2h2, N, max_attempts, log_safety,
                                         uniform_weight, f,
                                         &attempts, &fallbacks)
                    kernel_column(g, tnew, T, inv_2h2, N)
                    for n in range(N):
                        r[n] = partial[n] - ck * g[n]
                    t[k] = tnew

                rss = 0.0
                for n in range(N):
                    rss += r[n] * r[n]
                lam = 0.5 * rss
                if lam < lambda_floor:
                    lam = lambda_floor
                gam = random_standard_gamma(bg, shape) / lam
                sigma = 1.0 / sqrt(gam)

                for kk in range(K):
                    c_hist[i, kk] = c[kk]
                    t_hist[i, kk] = t[kk]
                s_hist[i] = sigma
                nll[i] = (N + 1) * log(sigma) + rss / (2.0 * sigma * sigma)
    finally:
        free(c); free(t); free(r); free(g); free(partial); free(nu); free(f)

    return c_hist_np, t_hist_np, s_hist_np, nll_np, fallbacks, attempts
