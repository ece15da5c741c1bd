"""Pure-Python kernels, selected when the compiled ``_core`` is unavailable.

Mirrors ``_core.pyx`` operation for operation.  Expect it to be one to three
orders of magnitude slower; ``benchmarks/bench_kernels.py`` measures the gap.
"""
import math

import numpy as np

FAM_GAUSSIAN = 0
FAM_NORMAL_GAMMA = 1
FAM_EXPONENTIAL = 2
FAM_POISSON = 3
FAM_GEOMETRIC = 4

_NEG_INF = -math.inf
_LOG_2PI = math.log(2.0 * math.pi)


def _log_psi(fam, xi, nu, params, k):
    log = math.log
    if fam == FAM_GAUSSIAN:
        total = 0.0
        for i in range(k):
            a = nu * params[i]
            total += xi[i] * xi[i] / (2.0 * a) + 0.5 * log(2.0 * math.pi / a)
        return total
    if fam == FAM_NORMAL_GAMMA:
        b = 0.5 * (xi[1] - xi[0] * xi[0] / nu)
        a = 0.5 * (nu + 3.0)
        return (log(0.5) + 0.5 * log(2.0 * math.pi / nu) - 0.5 * nu * _LOG_2PI
                + math.lgamma(a) - a * log(b))
    if fam == FAM_EXPONENTIAL:
        return math.lgamma(nu + 1.0) - (nu + 1.0) * log(xi[0])
    if fam == FAM_POISSON:
        return math.lgamma(xi[0]) - xi[0] * log(nu)
    return math.lgamma(xi[0]) + math.lgamma(nu + 1.0) - math.lgamma(xi[0] + nu + 1.0)


def log_psi_scalar(fam, params, xi, nu):
    return _log_psi(fam, list(xi), float(nu), list(params), len(xi))


def partition_logsums(log_h, n):
    size = 1 << n
    log_h = [float(v) for v in log_h]
    F = [[_NEG_INF] * size for _ in range(n + 1)]
    F[0][0] = 0.0
    popcount = [bin(i).count("1") for i in range(size)]
    exp = math.exp
    for S in range(1, size):
        low = S & -S
        rest = S ^ low
        tmax = popcount[S]
        acc_m = [_NEG_INF] * (tmax + 1)
        acc_s = [0.0] * (tmax + 1)
        T = rest
        while True:
            B = S ^ T
            lh = log_h[B]
            if lh != _NEG_INF:
                for t in range(1, popcount[T] + 2):
                    x = F[t - 1][T]
                    if x == _NEG_INF:
                        continue
                    x = x + lh
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
                F[t][S] = acc_m[t] + math.log(acc_s[t])
    return np.array([F[t][size - 1] for t in range(n + 1)])


def partition_minplus(cost, n, t):
    size = 1 << n
    big = 1 << 60
    cost = [int(c) for c in cost]
    G = [[big] * size for _ in range(t + 1)]
    arg = [[0] * size for _ in range(t + 1)]
    G[0][0] = 0
    for S in range(1, size):
        low = S & -S
        rest = S ^ low
        pc = bin(S).count("1")
        for k in range(1, min(t, pc) + 1):
            best = big
            prev = G[k - 1]
            T = rest
            while True:
                if prev[T] < big:
                    B = S ^ T
                    cand = cost[B] + prev[T]
                    if cand < best:
                        best = cand
                        arg[k][S] = B
                if T == 0:
                    break
                T = (T - 1) & rest
            G[k][S] = best
    if G[t][size - 1] >= big:
        return -1, []
    blocks = []
    S = size - 1
    for k in range(t, 0, -1):
        B = arg[k][S]
        blocks.append(B)
        S ^= B
    return G[t][size - 1], blocks


def gibbs_sweeps(fam, params, xi, nu, psi0, stats, logm_single, log_tv, log_w,
                 labels, sizes, bstats, blogm, active, pos, free_ids, counters,
                 uniforms, order, census_threshold, t_out, census_out):
    n, k = stats.shape
    params_l = [float(v) for v in params]
    xi_l = [float(v) for v in xi]
    stats_l = stats.tolist()
    logm_l = logm_single.tolist()
    log_tv_l = log_tv.tolist()
    log_w_l = log_w.tolist()
    lab = labels.tolist()
    sz = sizes.tolist()
    bst = bstats.tolist()
    blm = blogm.tolist()
    act = active.tolist()
    ps = pos.tolist()
    fr = free_ids.tolist()
    nb, nf = int(counters[0]), int(counters[1])
    use_order = order.shape[0] > 0
    exp = math.exp
    cand = [0.0] * (n + 1)
    cand_logm = [0.0] * (n + 1)
    status = 0

    for sw in range(uniforms.shape[0]):
        urow = uniforms[sw].tolist()
        orow = order[sw].tolist() if use_order else range(n)
        for step in range(n):
            j = orow[step]
            sj = stats_l[j]
            b = lab[j]
            sz[b] -= 1
            if sz[b] == 0:
                bst[b] = [0.0] * k
                blm[b] = 0.0
                c = ps[b]
                nb -= 1
                act[c] = act[nb]
                ps[act[c]] = c
                fr[nf] = b
                nf += 1
            else:
                row = bst[b]
                for i in range(k):
                    row[i] -= sj[i]
                work = [xi_l[i] + row[i] for i in range(k)]
                blm[b] = _log_psi(fam, work, nu + sz[b], params_l, k) - psi0
            t = nb
            m = _NEG_INF
            for c in range(nb):
                bid = act[c]
                a = sz[bid]
                if log_w_l[a + 1] == _NEG_INF:
                    cand[c] = _NEG_INF
                    continue
                row = bst[bid]
                work = [xi_l[i] + row[i] + sj[i] for i in range(k)]
                lm = _log_psi(fam, work, nu + a + 1, params_l, k) - psi0
                cand_logm[c] = lm
                x = log_tv_l[t] + (log_w_l[a + 1] - log_w_l[a]) + (lm - blm[bid])
                cand[c] = x
                if x > m:
                    m = x
            x = log_tv_l[t + 1] + log_w_l[1] + logm_l[j]
            cand[nb] = x
            if x > m:
                m = x
            if m == _NEG_INF:
                status = j + 1
                break
            s = 0.0
            for c in range(nb + 1):
                s += exp(cand[c] - m)
            u = urow[step] * s
            acc = 0.0
            choice = nb
            for c in range(nb + 1):
                acc += exp(cand[c] - m)
                if u < acc:
                    choice = c
                    break
            if choice == nb and cand[nb] == _NEG_INF:
                choice = nb - 1
                while cand[choice] == _NEG_INF:
                    choice -= 1
            if choice < nb:
                bid = act[choice]
                sz[bid] += 1
                row = bst[bid]
                for i in range(k):
                    row[i] += sj[i]
                blm[bid] = cand_logm[choice]
            else:
                nf -= 1
                bid = fr[nf]
                sz[bid] = 1
                bst[bid] = list(sj)
                blm[bid] = logm_l[j]
                act[nb] = bid
                ps[bid] = nb
                nb += 1
            lab[j] = bid
        if status:
            break
        t_out[sw] = nb
        if census_threshold > 0:
            census_out[sw] = sum(1 for i in range(nb) if sz[act[i]] <= census_threshold)

    labels[:] = lab
    sizes[:] = sz
    bstats[:] = bst
    blogm[:] = blm
    active[:] = act
    pos[:] = ps
    free_ids[:] = fr
    counters[0] = nb
    counters[1] = nf
    return status
