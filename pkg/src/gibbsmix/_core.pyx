# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: subset partition sums, min-plus partition search and
collapsed Gibbs sweeps.

Every function here has a line-for-line twin in ``_pycore``; both must
consume inputs identically so that the two backends agree.
"""
import numpy as np

from libc.math cimport exp, log, lgamma, INFINITY, M_PI

cdef enum:
    FAM_GAUSSIAN = 0
    FAM_NORMAL_GAMMA = 1
    FAM_EXPONENTIAL = 2
    FAM_POISSON = 3
    FAM_GEOMETRIC = 4


cdef inline int _popcount(Py_ssize_t x) noexcept nogil:
    cdef int c = 0
    while x:
        x &= x - 1
        c += 1
    return c


cdef double _log_psi(int fam, const double* xi, double nu,
                     const double* params, int k) noexcept nogil:
    cdef double total, a, b
    cdef int i
    if fam == FAM_GAUSSIAN:
        total = 0.0
        for i in range(k):
            a = nu * params[i]
            total += xi[i] * xi[i] / (2.0 * a) + 0.5 * log(2.0 * M_PI / a)
        return total
    elif fam == FAM_NORMAL_GAMMA:
        b = 0.5 * (xi[1] - xi[0] * xi[0] / nu)
        a = 0.5 * (nu + 3.0)
        return (log(0.5) + 0.5 * log(2.0 * M_PI / nu) - 0.5 * nu * log(2.0 * M_PI)
                + lgamma(a) - a * log(b))
    elif fam == FAM_EXPONENTIAL:
        return lgamma(nu + 1.0) - (nu + 1.0) * log(xi[0])
    elif fam == FAM_POISSON:
        return lgamma(xi[0]) - xi[0] * log(nu)
    else:
        return lgamma(xi[0]) + lgamma(nu + 1.0) - lgamma(xi[0] + nu + 1.0)


def log_psi_scalar(int fam, double[::1] params, double[::1] xi, double nu):
    """Conjugate log-normalizer for one hyperparameter point (parity checks)."""
    return _log_psi(fam, &xi[0], nu, &params[0], xi.shape[0])


def partition_logsums(double[::1] log_h, int n):
    """Log of the sum over unordered partitions of {0..n-1} into t blocks of
    prod h(B), for t = 0..n.  ``log_h`` is indexed by block bitmask."""
    cdef Py_ssize_t size = 1 << n
    cdef Py_ssize_t S, rest, low, T, B
    cdef int t, tmax, pc
    cdef double x, m, s
    F_arr = np.full((size, n + 1), -INFINITY)
    cdef double[:, ::1] F = F_arr
    acc_m_arr = np.empty(n + 1)
    acc_s_arr = np.empty(n + 1)
    cdef double[::1] acc_m = acc_m_arr
    cdef double[::1] acc_s = acc_s_arr
    F[0, 0] = 0.0  # row = subset, column = block count
    with nogil:
        for S in range(1, size):
            low = S & (-S)
            rest = S ^ low
            tmax = _popcount(S)
            for t in range(tmax + 1):
                acc_m[t] = -INFINITY
                acc_s[t] = 0.0
            T = rest
            while True:
                B = S ^ T
                if log_h[B] != -INFINITY:
                    pc = _popcount(T)
                    for t in range(1, pc + 2):
                        x = F[T, t - 1]
                        if x == -INFINITY:
                            continue
                        x = x + log_h[B]
                        m = acc_m[t]
                        if x <= m:
                            acc_s[t] += exp(x - m)
                        else:
                            acc_s[t] = acc_s[t] * exp(m - x) + 1.0
                            acc_m[t] = x
                if T == 0:
                    break
                T = (T - 1) & rest
            for t in range(1, tmax + 1):
                if acc_s[t] > 0.0:
                    F[S, t] = acc_m[t] + log(acc_s[t])
    return np.asarray(F[size - 1, :]).copy()


def partition_minplus(long[::1] cost, int n, int t):
    """Minimum over unordered partitions of {0..n-1} into exactly t blocks of
    sum cost(B).  Returns (value, list of block bitmasks) or (-1, [])."""
    cdef Py_ssize_t size = 1 << n
    cdef Py_ssize_t S, rest, low, T, B
    cdef int k, pc
    cdef long big = 1 << 60
    cdef long cand, best
    G_arr = np.full((t + 1, size), big, dtype=np.int64)
    arg_arr = np.zeros((t + 1, size), dtype=np.int64)
    cdef long[:, ::1] G = G_arr
    cdef long[:, ::1] arg = arg_arr
    G[0, 0] = 0
    with nogil:
        for S in range(1, size):
            low = S & (-S)
            rest = S ^ low
            pc = _popcount(S)
            for k in range(1, (t if t < pc else pc) + 1):
                best = big
                T = rest
                while True:
                    B = S ^ T
                    if G[k - 1, T] < big:
                        cand = cost[B] + G[k - 1, T]
                        if cand < best:
                            best = cand
                            arg[k, S] = B
                    if T == 0:
                        break
                    T = (T - 1) & rest
                G[k, S] = best
    if G[t, size - 1] >= big:
        return -1, []
    blocks = []
    S = size - 1
    k = t
    while k > 0:
        B = arg[k, S]
        blocks.append(int(B))
        S = S ^ B
        k -= 1
    return int(G[t, size - 1]), blocks


def gibbs_sweeps(int fam, double[::1] params, double[::1] xi, double nu,
                 double psi0, double[:, ::1] stats, double[::1] logm_single,
                 double[::1] log_tv, double[::1] log_w,
                 long[::1] labels, long[::1] sizes, double[:, ::1] bstats,
                 double[::1] blogm, long[::1] active, long[::1] pos,
                 long[::1] free_ids, long[::1] counters,
                 double[:, ::1] uniforms, long[:, ::1] order,
                 long census_threshold, long[::1] t_out, long[::1] census_out):
    """Run ``uniforms.shape[0]`` systematic (or ``order``-driven) sweeps.

    ``counters`` holds (number of active blocks, number of free ids).  All
    state arrays are updated in place.  Returns 0, or j+1 if element j hit a
    state where every candidate weight is zero.
    """
    cdef int n = stats.shape[0]
    cdef int k = stats.shape[1]
    cdef int sweeps = uniforms.shape[0]
    cdef bint use_order = order.shape[0] > 0
    cdef int sw, step, j, i, b, bid, t, nb, nf, choice, c
    cdef int status = 0
    cdef double m, s, u, acc, x
    cand_arr = np.empty(n + 1)
    cand_logm_arr = np.empty(n + 1)
    work_arr = np.empty(k)
    cdef double[::1] cand = cand_arr
    cdef double[::1] cand_logm = cand_logm_arr
    cdef double[::1] work = work_arr
    nb = counters[0]
    nf = counters[1]
    with nogil:
        for sw in range(sweeps):
            for step in range(n):
                if use_order:
                    j = order[sw, step]
                else:
                    j = step
                # remove j from its block
                b = labels[j]
                sizes[b] -= 1
                if sizes[b] == 0:
                    for i in range(k):
                        bstats[b, i] = 0.0
                    blogm[b] = 0.0
                    c = pos[b]
                    nb -= 1
                    active[c] = active[nb]
                    pos[active[c]] = c
                    free_ids[nf] = b
                    nf += 1
                else:
                    for i in range(k):
                        bstats[b, i] -= stats[j, i]
                    for i in range(k):
                        work[i] = xi[i] + bstats[b, i]
                    blogm[b] = _log_psi(fam, &work[0], nu + sizes[b], &params[0], k) - psi0
                t = nb
                m = -INFINITY
                for c in range(nb):
                    bid = active[c]
                    if log_w[sizes[bid] + 1] == -INFINITY:
                        cand[c] = -INFINITY
                        continue
                    for i in range(k):
                        work[i] = xi[i] + bstats[bid, i] + stats[j, i]
                    cand_logm[c] = _log_psi(fam, &work[0], nu + sizes[bid] + 1,
                                            &params[0], k) - psi0
                    x = (log_tv[t] + (log_w[sizes[bid] + 1] - log_w[sizes[bid]])
                         + (cand_logm[c] - blogm[bid]))
                    cand[c] = x
                    if x > m:
                        m = x
                x = log_tv[t + 1] + log_w[1] + logm_single[j]
                cand[nb] = x
                if x > m:
                    m = x
                if m == -INFINITY:
                    status = j + 1
                    break
                s = 0.0
                for c in range(nb + 1):
                    s += exp(cand[c] - m)
                u = uniforms[sw, step] * s
                acc = 0.0
                choice = nb
                for c in range(nb + 1):
                    acc += exp(cand[c] - m)
                    if u < acc:
                        choice = c
                        break
                if choice == nb and cand[nb] == -INFINITY:
                    # roundoff pushed u past the last positive weight
                    choice = nb - 1
                    while cand[choice] == -INFINITY:
                        choice -= 1
                if choice < nb:
                    bid = active[choice]
                    sizes[bid] += 1
                    for i in range(k):
                        bstats[bid, i] += stats[j, i]
                    blogm[bid] = cand_logm[choice]
                else:
                    nf -= 1
                    bid = free_ids[nf]
                    sizes[bid] = 1
                    for i in range(k):
                        bstats[bid, i] = stats[j, i]
                    blogm[bid] = logm_single[j]
                    active[nb] = bid
                    pos[bid] = nb
                    nb += 1
                labels[j] = bid
            if status:
                break
            t_out[sw] = nb
            if census_threshold > 0:
                c = 0
                for i in range(nb):
                    if sizes[active[i]] <= census_threshold:
                        c += 1
                census_out[sw] = c
    counters[0] = nb
    counters[1] = nf
    return status
