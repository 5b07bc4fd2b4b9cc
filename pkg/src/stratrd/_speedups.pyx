# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``stratrd._kernels``.

Same functions, same semantics; see the pure module for contracts.  Counts
are held as a C-contiguous (S, 10) float64 array.
"""

from libc.math cimport INFINITY, acos, copysign, cos, fabs, log, sqrt

import numpy as np

cdef double CLAMP = 1e-10
cdef double M_PI = 3.141592653589793


def prepare_counts(rows):
    arr = np.ascontiguousarray(rows, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 10:
        raise ValueError("counts must form an (S, 10) table")
    return arr


cdef inline int _isfin(double x) nogil:
    return x == x and x != INFINITY and x != -INFINITY


# ---------------------------------------------------------------------------
# per-group pieces


cdef double _glik(double n0, double n1, double n2, double m0, double m1,
                  double p, double g) nogil:
    cdef double acc = 0.0
    cdef double pb
    if n0 != 0.0:
        pb = 1.0 + (g - 2.0) * p
        if pb <= 0.0:
            return -INFINITY
        acc += n0 * log(pb)
    if n1 != 0.0:
        pb = 2.0 * p * (1.0 - g)
        if pb <= 0.0:
            return -INFINITY
        acc += n1 * log(pb)
    if n2 != 0.0:
        pb = p * g
        if pb <= 0.0:
            return -INFINITY
        acc += n2 * log(pb)
    if m0 != 0.0:
        if p >= 1.0:
            return -INFINITY
        acc += m0 * log(1.0 - p)
    if m1 != 0.0:
        if p <= 0.0:
            return -INFINITY
        acc += m1 * log(p)
    return acc


cdef double _gdpi(double n0, double n1, double n2, double m0, double m1,
                  double p, double g) nogil:
    cdef double acc = 0.0
    cdef double pos = n1 + n2 + m1
    if n0 != 0.0:
        acc += n0 * (g - 2.0) / (1.0 + (g - 2.0) * p)
    if pos != 0.0:
        acc += pos / p
    if m0 != 0.0:
        acc -= m0 / (1.0 - p)
    return acc


cdef double _gdg(double n0, double n1, double n2, double p, double g) nogil:
    cdef double acc = 0.0
    if n2 != 0.0:
        acc += n2 / g
    if n1 != 0.0:
        acc -= n1 / (1.0 - g)
    if n0 != 0.0:
        acc += n0 * p / (1.0 + (g - 2.0) * p)
    return acc


cdef double _gd2pi(double n0, double n1, double n2, double m0, double m1,
                   double p, double g) nogil:
    cdef double acc = 0.0
    cdef double pos = n1 + n2 + m1
    cdef double pb
    if n0 != 0.0:
        pb = 1.0 + (g - 2.0) * p
        acc -= n0 * (g - 2.0) * (g - 2.0) / (pb * pb)
    if pos != 0.0:
        acc -= pos / (p * p)
    if m0 != 0.0:
        acc -= m0 / ((1.0 - p) * (1.0 - p))
    return acc


cdef double _gd2g(double n0, double n1, double n2, double p, double g) nogil:
    cdef double acc = 0.0
    cdef double pb
    if n2 != 0.0:
        acc -= n2 / (g * g)
    if n1 != 0.0:
        acc -= n1 / ((1.0 - g) * (1.0 - g))
    if n0 != 0.0:
        pb = 1.0 + (g - 2.0) * p
        acc -= n0 * p * p / (pb * pb)
    return acc


cdef double _gdpig(double n0, double p, double g) nogil:
    cdef double pb
    if n0 != 0.0:
        pb = 1.0 + (g - 2.0) * p
        return n0 / (pb * pb)
    return 0.0


cdef void _ginfo(double n, double m, double p, double g,
                 double* e11, double* e13, double* e33) nogil:
    cdef double pb
    e11[0] = 0.0
    e13[0] = 0.0
    e33[0] = 0.0
    if n != 0.0:
        pb = 1.0 + (g - 2.0) * p
        e11[0] = n * (2.0 - g) * (2.0 - g) / pb + n * (2.0 - g) / p
        e13[0] = -n / pb
        e33[0] = n * p * p / pb + 2.0 * n * p / (1.0 - g) + n * p / g
    if m != 0.0:
        e11[0] += m / (p * (1.0 - p))


def group_expected_info(double n, double m, double p, double g):
    """Expected information pieces (E11, E13, E33) for one group."""
    cdef double e11, e13, e33
    _ginfo(n, m, p, g, &e11, &e13, &e33)
    return e11, e13, e33


cdef double _stratum_lik(double[:, ::1] h, Py_ssize_t s,
                         double p1, double p2, double g) nogil:
    cdef double a = _glik(h[s, 0], h[s, 1], h[s, 2], h[s, 3], h[s, 4], p1, g)
    if a == -INFINITY:
        return -INFINITY
    cdef double b = _glik(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, g)
    if b == -INFINITY:
        return -INFINITY
    return a + b


# ---------------------------------------------------------------------------
# likelihood / scores over a whole study


cdef double _loglik_all(double[:, ::1] h, double[::1] pi1, double[::1] pi2,
                        double[::1] gamma) nogil:
    cdef double total = 0.0
    cdef double v
    cdef Py_ssize_t s
    for s in range(h.shape[0]):
        v = _stratum_lik(h, s, pi1[s], pi2[s], gamma[s])
        if v == -INFINITY:
            return -INFINITY
        total += v
    return total


cdef double[::1] _vec(obj):
    return np.ascontiguousarray(obj, dtype=np.float64)


def loglik(h, pi1, pi2, gamma):
    cdef double[:, ::1] hv = h
    return _loglik_all(hv, _vec(pi1), _vec(pi2), _vec(gamma))


def score(h, pi1, pi2, gamma):
    cdef double[:, ::1] hv = h
    cdef double[::1] p1 = _vec(pi1)
    cdef double[::1] p2 = _vec(pi2)
    cdef double[::1] g = _vec(gamma)
    cdef Py_ssize_t s
    out = []
    for s in range(hv.shape[0]):
        out.append(_gdpi(hv[s, 0], hv[s, 1], hv[s, 2], hv[s, 3], hv[s, 4], p1[s], g[s]))
        out.append(_gdpi(hv[s, 5], hv[s, 6], hv[s, 7], hv[s, 8], hv[s, 9], p2[s], g[s]))
        out.append(
            _gdg(hv[s, 0], hv[s, 1], hv[s, 2], p1[s], g[s])
            + _gdg(hv[s, 5], hv[s, 6], hv[s, 7], p2[s], g[s])
        )
    return out


def score_wrt_d(h, double d, pi1, gamma):
    cdef double[:, ::1] hv = h
    cdef double[::1] p1 = _vec(pi1)
    cdef double[::1] g = _vec(gamma)
    cdef double acc = 0.0
    cdef Py_ssize_t s
    for s in range(hv.shape[0]):
        acc -= _gdpi(hv[s, 5], hv[s, 6], hv[s, 7], hv[s, 8], hv[s, 9],
                     p1[s] - d, g[s])
    return acc


# ---------------------------------------------------------------------------
# single-parameter updates


cdef double _solve_pi_quad(double n0, double n1, double n2, double m0,
                           double m1, double g, int* interior) nogil:
    cdef double total = n0 + n1 + n2 + m0 + m1
    cdef double hi = 1.0 / (2.0 - g)
    cdef double a = (g - 2.0) * total
    cdef double b = m0 + 3.0 * m1 + 2.0 * n0 + 3.0 * (n1 + n2) - g * (m1 + n0 + n1 + n2)
    cdef double c = -(m1 + n1 + n2)
    cdef double r0 = 0.0
    cdef double r1 = 0.0
    cdef int have_r0 = 0
    cdef int have_r1 = 0
    cdef double disc, sq, q, l0, l1, llo, lhi, r
    cdef int n_cand = 0
    cdef double cand0 = 0.0, cand1 = 0.0
    if a != 0.0:
        disc = b * b - 4.0 * a * c
        if disc >= 0.0:
            sq = sqrt(disc)
            if b != 0.0:
                q = -0.5 * (b + copysign(sq, b))
            else:
                q = -0.5 * sq
            if q == 0.0:
                r0 = 0.0
                have_r0 = 1
            else:
                r0 = q / a
                r1 = c / q
                have_r0 = 1
                have_r1 = 1
    elif b != 0.0:
        r0 = -c / b
        have_r0 = 1
    if have_r0 and 0.0 < r0 < hi:
        cand0 = r0
        n_cand += 1
    if have_r1 and 0.0 < r1 < hi:
        if n_cand == 0:
            cand0 = r1
        else:
            cand1 = r1
        n_cand += 1
    if n_cand > 0:
        if n_cand == 2 and cand0 != cand1:
            l0 = _glik(n0, n1, n2, m0, m1, cand0, g)
            l1 = _glik(n0, n1, n2, m0, m1, cand1, g)
            r = cand0 if l0 >= l1 else cand1
        else:
            r = cand0
        if r < CLAMP:
            interior[0] = 0
            return CLAMP
        if r > hi - CLAMP:
            interior[0] = 0
            return hi - CLAMP
        interior[0] = 1
        return r
    llo = _glik(n0, n1, n2, m0, m1, CLAMP, g)
    lhi = _glik(n0, n1, n2, m0, m1, hi - CLAMP, g)
    interior[0] = 0
    return CLAMP if llo >= lhi else hi - CLAMP


def solve_pi_quadratic(double n0, double n1, double n2, double m0, double m1,
                       double g):
    cdef int interior = 0
    cdef double r = _solve_pi_quad(n0, n1, n2, m0, m1, g, &interior)
    return r, bool(interior)


def newton_gamma_step(c, double p1, double p2, double g):
    cdef double[::1] cv = _vec(c)
    cdef double d1 = _gdg(cv[0], cv[1], cv[2], p1, g) + _gdg(cv[5], cv[6], cv[7], p2, g)
    cdef double d2 = _gd2g(cv[0], cv[1], cv[2], p1, g) + _gd2g(cv[5], cv[6], cv[7], p2, g)
    cdef double g_new
    if d2 == 0.0:
        return g, False
    g_new = g - d1 / d2
    if g_new < CLAMP:
        g_new = CLAMP
    elif g_new > 1.0 - CLAMP:
        g_new = 1.0 - CLAMP
    return g_new, True


cdef double _gamma_feas_lo(double p1, double p2) nogil:
    cdef double lo = CLAMP
    cdef double v
    if p1 > 0.5:
        v = 2.0 - 1.0 / p1 + 1e-12
        if v > lo:
            lo = v
    if p2 > 0.5:
        v = 2.0 - 1.0 / p2 + 1e-12
        if v > lo:
            lo = v
    return lo


cdef double _gamma_update_damped(double[:, ::1] h, Py_ssize_t s, double p1,
                                 double p2, double g, double* ll_io) nogil:
    cdef double d1 = _gdg(h[s, 0], h[s, 1], h[s, 2], p1, g) + _gdg(
        h[s, 5], h[s, 6], h[s, 7], p2, g)
    cdef double d2 = _gd2g(h[s, 0], h[s, 1], h[s, 2], p1, g) + _gd2g(
        h[s, 5], h[s, 6], h[s, 7], p2, g)
    cdef double step, glo, ghi, slack, cand, ll
    cdef int k
    if d2 == 0.0 or not _isfin(d2):
        return g
    step = -d1 / d2
    glo = _gamma_feas_lo(p1, p2)
    ghi = 1.0 - CLAMP
    slack = 1e-12 * (1.0 + fabs(ll_io[0]))
    for k in range(31):
        cand = g + step
        if cand < glo:
            cand = glo
        elif cand > ghi:
            cand = ghi
        ll = _stratum_lik(h, s, p1, p2, cand)
        if ll >= ll_io[0] - slack:
            ll_io[0] = ll
            return cand
        step *= 0.5
    return g


# ---------------------------------------------------------------------------
# unconstrained fit


cdef void _moment_init(double[:, ::1] h, Py_ssize_t s, double* p1, double* p2,
                       double* g) nogil:
    cdef double t1 = h[s, 0] + h[s, 1] + h[s, 2] + h[s, 3] + h[s, 4]
    cdef double t2 = h[s, 5] + h[s, 6] + h[s, 7] + h[s, 8] + h[s, 9]
    cdef double gden = h[s, 1] + h[s, 6] + 2.0 * (h[s, 2] + h[s, 7])
    cdef double hi
    p1[0] = (h[s, 1] + 2.0 * h[s, 2] + 2.0 * h[s, 4]) / (2.0 * t1) if t1 > 0.0 else 0.5
    p2[0] = (h[s, 6] + 2.0 * h[s, 7] + 2.0 * h[s, 9]) / (2.0 * t2) if t2 > 0.0 else 0.5
    g[0] = 2.0 * (h[s, 2] + h[s, 7]) / gden if gden > 0.0 else 0.5
    if p1[0] < 0.01:
        p1[0] = 0.01
    elif p1[0] > 0.99:
        p1[0] = 0.99
    if p2[0] < 0.01:
        p2[0] = 0.01
    elif p2[0] > 0.99:
        p2[0] = 0.99
    if g[0] < 0.01:
        g[0] = 0.01
    elif g[0] > 0.99:
        g[0] = 0.99
    hi = 1.0 / (2.0 - g[0])
    if p1[0] > hi - 1e-6:
        p1[0] = hi - 1e-6
    if p2[0] > hi - 1e-6:
        p2[0] = hi - 1e-6


cdef int _fit_stratum_unc(double[:, ::1] h, Py_ssize_t s, long max_iter,
                          double xtol, double gtol, double* out_p1,
                          double* out_p2, double* out_g, long* out_it,
                          int* out_interior) nogil:
    cdef double p1, p2, g, p1n, p2n, gn, ll, delta, gmax, v
    cdef int i1 = 1
    cdef int i2 = 1
    cdef int converged = 0
    cdef long it = 0
    _moment_init(h, s, &p1, &p2, &g)
    while it < max_iter:
        it += 1
        p1n = _solve_pi_quad(h[s, 0], h[s, 1], h[s, 2], h[s, 3], h[s, 4], g, &i1)
        p2n = _solve_pi_quad(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], g, &i2)
        ll = _stratum_lik(h, s, p1n, p2n, g)
        gn = _gamma_update_damped(h, s, p1n, p2n, g, &ll)
        delta = fabs(p1n - p1)
        if fabs(p2n - p2) > delta:
            delta = fabs(p2n - p2)
        if fabs(gn - g) > delta:
            delta = fabs(gn - g)
        p1 = p1n
        p2 = p2n
        g = gn
        if delta < xtol:
            converged = 1
            break
        gmax = 0.0
        if i1:
            gmax = fabs(_gdpi(h[s, 0], h[s, 1], h[s, 2], h[s, 3], h[s, 4], p1, g))
        if i2:
            v = fabs(_gdpi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, g))
            if v > gmax:
                gmax = v
        if CLAMP < g < 1.0 - CLAMP:
            v = fabs(_gdg(h[s, 0], h[s, 1], h[s, 2], p1, g)
                     + _gdg(h[s, 5], h[s, 6], h[s, 7], p2, g))
            if v > gmax:
                gmax = v
        if gmax < gtol:
            converged = 1
            break
    out_p1[0] = p1
    out_p2[0] = p2
    out_g[0] = g
    out_it[0] = it
    out_interior[0] = i1 and i2 and (1.5 * CLAMP < g < 1.0 - 1.5 * CLAMP)
    return converged


def fit_unconstrained(h, long max_iter, double xtol, double gtol):
    cdef double[:, ::1] hv = h
    cdef Py_ssize_t S = hv.shape[0]
    cdef Py_ssize_t s
    cdef double p1, p2, g
    cdef long it, iters = 0
    cdef int inter, conv
    cdef int converged = 1
    cdef int interior = 1
    pi1 = []
    pi2 = []
    gamma = []
    for s in range(S):
        conv = _fit_stratum_unc(hv, s, max_iter, xtol, gtol, &p1, &p2, &g, &it, &inter)
        pi1.append(p1)
        pi2.append(p2)
        gamma.append(g)
        if it > iters:
            iters = it
        converged = converged and conv
        interior = interior and inter
    return pi1, pi2, gamma, iters, bool(converged), bool(interior)


# ---------------------------------------------------------------------------
# constrained fit (common risk difference)


cdef void _project_pair(double* p1, double* g, double d) nogil:
    cdef double ad = fabs(d)
    cdef double glo_d, hi, lo_p, hi_p
    if ad > 0.5 - 3.0 * CLAMP:
        glo_d = 2.0 - 1.0 / (ad + 3.0 * CLAMP)
        if g[0] < glo_d:
            g[0] = glo_d
    if g[0] > 1.0 - CLAMP:
        g[0] = 1.0 - CLAMP
    elif g[0] < CLAMP:
        g[0] = CLAMP
    hi = 1.0 / (2.0 - g[0])
    lo_p = CLAMP if d <= 0.0 else d + CLAMP
    hi_p = (hi if d >= 0.0 else hi + d) - CLAMP
    if p1[0] < lo_p:
        p1[0] = lo_p
    elif p1[0] > hi_p:
        p1[0] = hi_p


cdef void _con_stratum_step(double[:, ::1] h, Py_ssize_t s, double* p1_io,
                            double* g_io, double d, double ll_cur) nogil:
    cdef double p1 = p1_io[0]
    cdef double g = g_io[0]
    cdef double p2 = p1 - d
    cdef double gp = _gdpi(h[s, 0], h[s, 1], h[s, 2], h[s, 3], h[s, 4], p1, g) + \
        _gdpi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, g)
    cdef double gg = _gdg(h[s, 0], h[s, 1], h[s, 2], p1, g) + \
        _gdg(h[s, 5], h[s, 6], h[s, 7], p2, g)
    cdef double hpp = _gd2pi(h[s, 0], h[s, 1], h[s, 2], h[s, 3], h[s, 4], p1, g) + \
        _gd2pi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, g)
    cdef double hpg = _gdpig(h[s, 0], p1, g) + _gdpig(h[s, 5], p2, g)
    cdef double hgg = _gd2g(h[s, 0], h[s, 1], h[s, 2], p1, g) + \
        _gd2g(h[s, 5], h[s, 6], h[s, 7], p2, g)
    cdef double det = hpp * hgg - hpg * hpg
    cdef double sp, sg, slack, c1, c2, ll
    cdef int k
    if det == 0.0 or not _isfin(det):
        return
    sp = -(hgg * gp - hpg * gg) / det
    sg = -(hpp * gg - hpg * gp) / det
    slack = 1e-12 * (1.0 + fabs(ll_cur))
    for k in range(31):
        c1 = p1 + sp
        c2 = g + sg
        _project_pair(&c1, &c2, d)
        ll = _stratum_lik(h, s, c1, c1 - d, c2)
        if ll >= ll_cur - slack:
            p1_io[0] = c1
            g_io[0] = c2
            return
        sp *= 0.5
        sg *= 0.5


cdef double _con_d_step(double[:, ::1] h, double[::1] p1s, double[::1] gs,
                        double d, double* ll_io) nogil:
    cdef Py_ssize_t S = h.shape[0]
    cdef double num = 0.0
    cdef double den = 0.0
    cdef double dlo = -1.0
    cdef double dhi = 1.0
    cdef double p2, hi, v, step, slack, cand, ll
    cdef Py_ssize_t s
    cdef int k
    for s in range(S):
        p2 = p1s[s] - d
        num -= _gdpi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, gs[s])
        den += _gd2pi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, gs[s])
    if den == 0.0 or not _isfin(den):
        return d
    step = -num / den
    for s in range(S):
        hi = 1.0 / (2.0 - gs[s])
        v = p1s[s] - hi + CLAMP
        if v > dlo:
            dlo = v
        v = p1s[s] - CLAMP
        if v < dhi:
            dhi = v
    slack = 1e-12 * (1.0 + fabs(ll_io[0]))
    for k in range(31):
        cand = d + step
        if cand < dlo:
            cand = dlo
        elif cand > dhi:
            cand = dhi
        ll = 0.0
        for s in range(S):
            v = _stratum_lik(h, s, p1s[s], p1s[s] - cand, gs[s])
            if v == -INFINITY:
                ll = -INFINITY
                break
            ll += v
        if ll >= ll_io[0] - slack:
            ll_io[0] = ll
            return cand
        step *= 0.5
    return d


cdef double _con_score_norm(double[:, ::1] h, double[::1] p1s, double[::1] gs,
                            double d) nogil:
    cdef double gmax = 0.0
    cdef double dd = 0.0
    cdef double p1, p2, g, v
    cdef Py_ssize_t s
    for s in range(h.shape[0]):
        p1 = p1s[s]
        p2 = p1 - d
        g = gs[s]
        v = fabs(_gdpi(h[s, 0], h[s, 1], h[s, 2], h[s, 3], h[s, 4], p1, g)
                 + _gdpi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, g))
        if v > gmax:
            gmax = v
        v = fabs(_gdg(h[s, 0], h[s, 1], h[s, 2], p1, g)
                 + _gdg(h[s, 5], h[s, 6], h[s, 7], p2, g))
        if v > gmax:
            gmax = v
        dd -= _gdpi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, g)
    if fabs(dd) > gmax:
        gmax = fabs(dd)
    return gmax


def fit_constrained(h, pi1_init, pi2_init, gamma_init, long max_iter,
                    double xtol, double gtol):
    cdef double[:, ::1] hv = h
    cdef Py_ssize_t S = hv.shape[0]
    cdef double[::1] p1i = _vec(pi1_init)
    cdef double[::1] p2i = _vec(pi2_init)
    cdef double[::1] gi = _vec(gamma_init)
    p1_arr = np.empty(S)
    g_arr = np.empty(S)
    cdef double[::1] p1s = p1_arr
    cdef double[::1] gs = g_arr
    cdef double d = 0.0
    cdef double ll, lls, delta, dn, p1n, gn, hi, lo_p, hi_p
    cdef Py_ssize_t s
    cdef long it = 0
    cdef int converged = 0
    cdef int interior = 1
    for s in range(S):
        d += p1i[s] - p2i[s]
    d /= S
    if d > 1.0 - 1e-9:
        d = 1.0 - 1e-9
    elif d < -1.0 + 1e-9:
        d = -1.0 + 1e-9
    for s in range(S):
        p1n = p1i[s]
        gn = gi[s]
        _project_pair(&p1n, &gn, d)
        p1s[s] = p1n
        gs[s] = gn
    while it < max_iter:
        it += 1
        delta = 0.0
        for s in range(S):
            lls = _stratum_lik(hv, s, p1s[s], p1s[s] - d, gs[s])
            p1n = p1s[s]
            gn = gs[s]
            _con_stratum_step(hv, s, &p1n, &gn, d, lls)
            if fabs(p1n - p1s[s]) > delta:
                delta = fabs(p1n - p1s[s])
            if fabs(gn - gs[s]) > delta:
                delta = fabs(gn - gs[s])
            p1s[s] = p1n
            gs[s] = gn
        ll = 0.0
        for s in range(S):
            ll += _stratum_lik(hv, s, p1s[s], p1s[s] - d, gs[s])
        dn = _con_d_step(hv, p1s, gs, d, &ll)
        if fabs(dn - d) > delta:
            delta = fabs(dn - d)
        d = dn
        if delta < xtol:
            converged = 1
            break
        if _con_score_norm(hv, p1s, gs, d) < gtol:
            converged = 1
            break
    for s in range(S):
        hi = 1.0 / (2.0 - gs[s])
        lo_p = CLAMP if d <= 0.0 else d + CLAMP
        hi_p = (hi if d >= 0.0 else hi + d) - CLAMP
        if p1s[s] - lo_p < 0.5 * CLAMP or hi_p - p1s[s] < 0.5 * CLAMP:
            interior = 0
        if not (1.5 * CLAMP < gs[s] < 1.0 - 1.5 * CLAMP):
            interior = 0
    return d, list(p1_arr), list(g_arr), it, bool(converged), bool(interior)


# ---------------------------------------------------------------------------
# cubic roots (for the conditional fit's gamma step)


cdef double _poly3(double c3, double c2, double c1, double c0, double x) nogil:
    return ((c3 * x + c2) * x + c1) * x + c0


cdef double _polish3(double c3, double c2, double c1, double c0, double x) nogil:
    cdef double f, fp, step
    cdef int k
    for k in range(3):
        f = _poly3(c3, c2, c1, c0, x)
        fp = (3.0 * c3 * x + 2.0 * c2) * x + c1
        if fp == 0.0:
            break
        step = f / fp
        if not _isfin(step):
            break
        x -= step
        if fabs(step) < 1e-16 * (1.0 + fabs(x)):
            break
    return x


cdef double _cbrt(double x) nogil:
    if x >= 0.0:
        return x ** (1.0 / 3.0)
    return -((-x) ** (1.0 / 3.0))


cdef int _cubic_roots(double c3, double c2, double c1, double c0,
                      double* out) nogil:
    cdef double scale = fabs(c3)
    cdef double p, q, r, a, b, shift, disc, sq, u, v, m, arg, theta, tmp
    cdef int n = 0
    cdef int i, j
    if fabs(c2) > scale:
        scale = fabs(c2)
    if fabs(c1) > scale:
        scale = fabs(c1)
    if fabs(c0) > scale:
        scale = fabs(c0)
    if scale == 0.0:
        return 0
    if fabs(c3) <= 1e-14 * scale:
        if fabs(c2) <= 1e-14 * scale:
            if c1 == 0.0:
                return 0
            out[0] = -c0 / c1
            return 1
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc < 0.0:
            return 0
        sq = sqrt(disc)
        if c1 != 0.0:
            q = -0.5 * (c1 + copysign(sq, c1))
        else:
            q = 0.5 * sq
        if q == 0.0:
            out[0] = _polish3(c3, c2, c1, c0, 0.0)
            if disc == 0.0:
                out[1] = out[0]
                return 2
            return 1
        out[0] = _polish3(c3, c2, c1, c0, q / c2)
        out[1] = _polish3(c3, c2, c1, c0, c0 / q)
        n = 2
    else:
        p = c2 / c3
        q = c1 / c3
        r = c0 / c3
        a = q - p * p / 3.0
        b = (2.0 * p * p * p - 9.0 * p * q + 27.0 * r) / 27.0
        shift = p / 3.0
        disc = 0.25 * b * b + a * a * a / 27.0
        if disc > 0.0:
            sq = sqrt(disc)
            if b >= 0.0:
                u = _cbrt(-0.5 * b - sq)
            else:
                u = _cbrt(-0.5 * b + sq)
            v = 0.0 if u == 0.0 else -a / (3.0 * u)
            out[0] = _polish3(c3, c2, c1, c0, u + v - shift)
            n = 1
        elif a == 0.0 and b == 0.0:
            out[0] = -shift
            out[1] = -shift
            out[2] = -shift
            n = 3
        else:
            m = 2.0 * sqrt(-a / 3.0)
            arg = 3.0 * b / (a * m)
            if arg > 1.0:
                arg = 1.0
            elif arg < -1.0:
                arg = -1.0
            theta = acos(arg) / 3.0
            out[0] = _polish3(c3, c2, c1, c0, m * cos(theta) - shift)
            out[1] = _polish3(c3, c2, c1, c0,
                              m * cos(theta - 2.0 * M_PI / 3.0) - shift)
            out[2] = _polish3(c3, c2, c1, c0,
                              m * cos(theta - 4.0 * M_PI / 3.0) - shift)
            n = 3
    # insertion sort (n <= 3)
    for i in range(1, n):
        tmp = out[i]
        j = i
        while j > 0 and out[j - 1] > tmp:
            out[j] = out[j - 1]
            j -= 1
        out[j] = tmp
    return n


def cubic_roots(double c3, double c2, double c1, double c0):
    """Real roots, ascending; mirrors ``stratrd.numkit.cubic_roots``."""
    cdef double out[3]
    cdef int n = _cubic_roots(c3, c2, c1, c0, out)
    if max(fabs(c3), fabs(c2), fabs(c1), fabs(c0)) == 0.0:
        raise ValueError("all-zero polynomial has no well-defined roots")
    return tuple(out[i] for i in range(n))


# ---------------------------------------------------------------------------
# conditional fit (fixed common difference)


cdef int _cond_gamma_update(double[:, ::1] h, Py_ssize_t s, double p1,
                            double p2, double* g_io) nogil:
    cdef double A = h[s, 2] + h[s, 7]
    cdef double B = h[s, 1] + h[s, 6]
    cdef double c1n = h[s, 0]
    cdef double c2n = h[s, 5]
    cdef double a1 = 1.0 - 2.0 * p1
    cdef double b1 = p1
    cdef double a2 = 1.0 - 2.0 * p2
    cdef double b2 = p2
    cdef double p0 = a1 * a2
    cdef double p1c = a1 * b2 + a2 * b1
    cdef double p2c = b1 * b2
    cdef double k0 = -A * p0
    cdef double k1 = A * (p0 - p1c) + B * p0 - c1n * p1 * a2 - c2n * p2 * a1
    cdef double k2 = A * (p1c - p2c) + B * p1c + c1n * p1 * (a2 - b2) + c2n * p2 * (a1 - b1)
    cdef double k3 = A * p2c + B * p2c + c1n * p1 * b2 + c2n * p2 * b1
    cdef double roots[3]
    cdef double cands[5]
    cdef double glo, ghi, best_g, best_ll, ll_cur, r, ll
    cdef int nr, nc, i, found
    if fabs(k3) == 0.0 and fabs(k2) == 0.0 and fabs(k1) == 0.0 and fabs(k0) == 0.0:
        return 1
    glo = _gamma_feas_lo(p1, p2)
    ghi = 1.0 - CLAMP
    found = 0
    nc = 0
    nr = _cubic_roots(k3, k2, k1, k0, roots)
    for i in range(nr):
        r = roots[i]
        if r < glo:
            r = glo
        elif r > ghi:
            r = ghi
        else:
            found = 1
        cands[nc] = r
        nc += 1
    if not found:
        cands[nc] = glo
        cands[nc + 1] = ghi
        nc += 2
    best_g = g_io[0]
    best_ll = -INFINITY
    for i in range(nc):
        ll = _stratum_lik(h, s, p1, p2, cands[i])
        if ll > best_ll:
            best_ll = ll
            best_g = cands[i]
    # a likelihood tie still moves to the candidate: stationary roots beat a
    # merely likelihood-equivalent current point
    ll_cur = _stratum_lik(h, s, p1, p2, g_io[0])
    if best_ll < ll_cur - 1e-12 * (1.0 + fabs(ll_cur)):
        return found
    g_io[0] = best_g
    return found


cdef int _fit_stratum_cond(double[:, ::1] h, Py_ssize_t s, double d0,
                           double* p1_io, double* g_io, long max_iter,
                           double xtol, double gtol, long* out_it,
                           int* out_gok) nogil:
    cdef double p1 = p1_io[0]
    cdef double g = g_io[0]
    cdef double p2, gp, hpp, p1n, gn, step, ll_cur, slack, cand, ll, delta, gmax, v, gq
    cdef long it = 0
    cdef int converged = 0
    cdef int g_ok = 1
    cdef int k
    _project_pair(&p1, &g, d0)
    while it < max_iter:
        it += 1
        p2 = p1 - d0
        gp = _gdpi(h[s, 0], h[s, 1], h[s, 2], h[s, 3], h[s, 4], p1, g) + \
            _gdpi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, g)
        hpp = _gd2pi(h[s, 0], h[s, 1], h[s, 2], h[s, 3], h[s, 4], p1, g) + \
            _gd2pi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, g)
        p1n = p1
        if hpp != 0.0 and _isfin(hpp):
            step = -gp / hpp
            ll_cur = _stratum_lik(h, s, p1, p2, g)
            slack = 1e-12 * (1.0 + fabs(ll_cur))
            for k in range(31):
                cand = p1 + step
                gq = g
                _project_pair(&cand, &gq, d0)
                ll = _stratum_lik(h, s, cand, cand - d0, g)
                if ll >= ll_cur - slack:
                    p1n = cand
                    break
                step *= 0.5
        gn = g
        g_ok = _cond_gamma_update(h, s, p1n, p1n - d0, &gn)
        _project_pair(&p1n, &gn, d0)
        delta = fabs(p1n - p1)
        if fabs(gn - g) > delta:
            delta = fabs(gn - g)
        p1 = p1n
        g = gn
        if delta < xtol:
            converged = 1
            break
        p2 = p1 - d0
        gmax = fabs(_gdpi(h[s, 0], h[s, 1], h[s, 2], h[s, 3], h[s, 4], p1, g)
                    + _gdpi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9], p2, g))
        v = fabs(_gdg(h[s, 0], h[s, 1], h[s, 2], p1, g)
                 + _gdg(h[s, 5], h[s, 6], h[s, 7], p2, g))
        if v > gmax:
            gmax = v
        if gmax < gtol:
            converged = 1
            break
    p1_io[0] = p1
    g_io[0] = g
    out_it[0] = it
    out_gok[0] = g_ok
    return converged


def fit_conditional(h, double d0, pi1_init, gamma_init, long max_iter,
                    double xtol, double gtol):
    cdef double[:, ::1] hv = h
    cdef Py_ssize_t S = hv.shape[0]
    cdef double[::1] p1i = _vec(pi1_init)
    cdef double[::1] gi = _vec(gamma_init)
    cdef double p1, g, hi, lo_p, hi_p
    cdef Py_ssize_t s
    cdef long it, iters = 0
    cdef int conv, g_ok
    cdef int converged = 1
    cdef int interior = 1
    if fabs(d0) >= 1.0 - 1e-9:
        return list(pi1_init), list(gamma_init), 0, False, False
    p1s = []
    gs = []
    for s in range(S):
        p1 = p1i[s]
        g = gi[s]
        conv = _fit_stratum_cond(hv, s, d0, &p1, &g, max_iter, xtol, gtol,
                                 &it, &g_ok)
        p1s.append(p1)
        gs.append(g)
        if it > iters:
            iters = it
        converged = converged and conv
        hi = 1.0 / (2.0 - g)
        lo_p = CLAMP if d0 <= 0.0 else d0 + CLAMP
        hi_p = (hi if d0 >= 0.0 else hi + d0) - CLAMP
        if not g_ok or p1 - lo_p < 0.5 * CLAMP or hi_p - p1 < 0.5 * CLAMP:
            interior = 0
        if not (1.5 * CLAMP < g < 1.0 - 1.5 * CLAMP):
            interior = 0
    return p1s, gs, iters, bool(converged), bool(interior)


# ---------------------------------------------------------------------------
# information blocks and test statistics


def score_stat(h, pi1, pi2, gamma):
    cdef double[:, ::1] hv = h
    cdef double[::1] p1 = _vec(pi1)
    cdef double[::1] p2 = _vec(pi2)
    cdef double[::1] gv = _vec(gamma)
    cdef double total = 0.0
    cdef double u1, u2, u3, n1, m1, n2, m2, a, b, cc, dd, e1, e2, e, det, q, ridge
    cdef Py_ssize_t s
    cdef int ok = 1
    for s in range(hv.shape[0]):
        u1 = _gdpi(hv[s, 0], hv[s, 1], hv[s, 2], hv[s, 3], hv[s, 4], p1[s], gv[s])
        u2 = _gdpi(hv[s, 5], hv[s, 6], hv[s, 7], hv[s, 8], hv[s, 9], p2[s], gv[s])
        u3 = _gdg(hv[s, 0], hv[s, 1], hv[s, 2], p1[s], gv[s]) + \
            _gdg(hv[s, 5], hv[s, 6], hv[s, 7], p2[s], gv[s])
        n1 = hv[s, 0] + hv[s, 1] + hv[s, 2]
        m1 = hv[s, 3] + hv[s, 4]
        n2 = hv[s, 5] + hv[s, 6] + hv[s, 7]
        m2 = hv[s, 8] + hv[s, 9]
        _ginfo(n1, m1, p1[s], gv[s], &a, &cc, &e1)
        _ginfo(n2, m2, p2[s], gv[s], &b, &dd, &e2)
        e = e1 + e2
        det = a * b * e - a * dd * dd - b * cc * cc
        if det == 0.0 or not _isfin(det):
            ridge = 1e-10 * (a + b + e)
            a += ridge
            b += ridge
            e += ridge
            det = a * b * e - a * dd * dd - b * cc * cc
            if det == 0.0 or not _isfin(det):
                ok = 0
                continue
        q = (u1 * u1 * (b * e - dd * dd)
             + u2 * u2 * (a * e - cc * cc)
             + u3 * u3 * a * b
             + 2.0 * u1 * u2 * cc * dd
             - 2.0 * u1 * u3 * b * cc
             - 2.0 * u2 * u3 * a * dd) / det
        total += q
    return total, bool(ok)


def stratum_dvar(h, pi1, pi2, gamma):
    cdef double[:, ::1] hv = h
    cdef double[::1] p1 = _vec(pi1)
    cdef double[::1] p2 = _vec(pi2)
    cdef double[::1] gv = _vec(gamma)
    cdef double n1, m1, n2, m2, a, b, cc, dd, e1, e2, e, det, ridge, q
    cdef Py_ssize_t s
    cdef int ok = 1
    out = []
    for s in range(hv.shape[0]):
        n1 = hv[s, 0] + hv[s, 1] + hv[s, 2]
        m1 = hv[s, 3] + hv[s, 4]
        n2 = hv[s, 5] + hv[s, 6] + hv[s, 7]
        m2 = hv[s, 8] + hv[s, 9]
        _ginfo(n1, m1, p1[s], gv[s], &a, &cc, &e1)
        _ginfo(n2, m2, p2[s], gv[s], &b, &dd, &e2)
        e = e1 + e2
        det = a * b * e - a * dd * dd - b * cc * cc
        if det == 0.0 or not _isfin(det):
            ridge = 1e-10 * (a + b + e)
            a += ridge
            b += ridge
            e += ridge
            det = a * b * e - a * dd * dd - b * cc * cc
            ok = 0
        q = (b * e - dd * dd - 2.0 * cc * dd + a * e - cc * cc) / det
        out.append(q)
    return out, bool(ok)


def tridiag_inverse(a, b):
    cdef double[::1] av = _vec(a)
    cdef double[::1] bv = _vec(b)
    cdef Py_ssize_t n = av.shape[0]
    theta_arr = np.zeros(n + 1)
    phi_arr = np.zeros(n + 2)
    cdef double[::1] theta = theta_arr
    cdef double[::1] phi = phi_arr
    cdef Py_ssize_t i, j
    cdef double prod, sign, v
    theta[0] = 1.0
    theta[1] = av[0]
    for i in range(2, n + 1):
        theta[i] = av[i - 1] * theta[i - 1] - bv[i - 2] * bv[i - 2] * theta[i - 2]
    if theta[n] == 0.0 or not _isfin(theta[n]):
        return None
    phi[n + 1] = 1.0
    phi[n] = av[n - 1]
    for i in range(n - 1, 0, -1):
        phi[i] = av[i - 1] * phi[i + 1] - bv[i - 1] * bv[i - 1] * phi[i + 2]
    inv_arr = np.zeros(n * n)
    cdef double[::1] inv = inv_arr
    for i in range(1, n + 1):
        inv[(i - 1) * n + (i - 1)] = theta[i - 1] * phi[i + 1] / theta[n]
        prod = 1.0
        for j in range(i + 1, n + 1):
            prod *= bv[j - 2]
            sign = -1.0 if (i + j) % 2 else 1.0
            v = sign * prod * theta[i - 1] * phi[j + 1] / theta[n]
            inv[(i - 1) * n + (j - 1)] = v
            inv[(j - 1) * n + (i - 1)] = v
    return inv_arr


def wald_stat(h, pi1, pi2, gamma):
    cdef double[:, ::1] hv = h
    cdef Py_ssize_t S = hv.shape[0]
    q, _ = stratum_dvar(h, pi1, pi2, gamma)
    cdef double[::1] p1 = _vec(pi1)
    cdef double[::1] p2 = _vec(pi2)
    cdef double[::1] qv = _vec(q)
    a_arr = np.empty(S - 1)
    b_arr = np.empty(max(S - 2, 0))
    v_arr = np.empty(S - 1)
    cdef double[::1] av = a_arr
    cdef double[::1] bv = b_arr
    cdef double[::1] vv = v_arr
    cdef Py_ssize_t s, i, j
    for s in range(S - 1):
        av[s] = qv[s] + qv[s + 1]
        vv[s] = (p1[s] - p2[s]) - (p1[s + 1] - p2[s + 1])
    for s in range(S - 2):
        bv[s] = -qv[s + 1]
    inv = tridiag_inverse(a_arr, b_arr)
    if inv is None:
        return 0.0, False
    cdef double[::1] iv = inv
    cdef Py_ssize_t n = S - 1
    cdef double total = 0.0
    cdef double row
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += iv[i * n + j] * vv[j]
        total += vv[i] * row
    return total, True


cdef double _info00_inv(double[:, ::1] h, double d, double[::1] pi1,
                        double[::1] gamma) nogil:
    cdef double id_total = 0.0
    cdef double acc = 0.0
    cdef double p1, p2, g, n1, m1, n2, m2
    cdef double e11a, e13a, e33a, e11b, e13b, e33b
    cdef double v1, v2, k11, k12, k22, det2
    cdef Py_ssize_t s
    for s in range(h.shape[0]):
        p1 = pi1[s]
        p2 = p1 - d
        g = gamma[s]
        n1 = h[s, 0] + h[s, 1] + h[s, 2]
        m1 = h[s, 3] + h[s, 4]
        n2 = h[s, 5] + h[s, 6] + h[s, 7]
        m2 = h[s, 8] + h[s, 9]
        _ginfo(n1, m1, p1, g, &e11a, &e13a, &e33a)
        _ginfo(n2, m2, p2, g, &e11b, &e13b, &e33b)
        id_total += e11b
        v1 = -e11b
        v2 = -e13b
        k11 = e11a + e11b
        k12 = e13a + e13b
        k22 = e33a + e33b
        det2 = k11 * k22 - k12 * k12
        acc += (v1 * v1 * k22 - 2.0 * v1 * v2 * k12 + v2 * v2 * k11) / det2
    return 1.0 / (id_total - acc)


def info00_inv(h, double d, pi1, gamma):
    cdef double[:, ::1] hv = h
    return _info00_inv(hv, d, _vec(pi1), _vec(gamma))


cdef double _score_wrt_d_c(double[:, ::1] h, double d, double[::1] pi1,
                           double[::1] gamma) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t s
    for s in range(h.shape[0]):
        acc -= _gdpi(h[s, 5], h[s, 6], h[s, 7], h[s, 8], h[s, 9],
                     pi1[s] - d, gamma[s])
    return acc


# ---------------------------------------------------------------------------
# confidence-bound searches


cdef double _cond_fit_inplace(double[:, ::1] h, double d0, double[::1] p1w,
                              double[::1] gw, double[::1] p1t, double[::1] gt,
                              long max_iter, double xtol, double gtol) nogil:
    # conditional fit into work arrays; returns the fitted log-likelihood
    cdef Py_ssize_t s
    cdef double p1, g, ll, v
    cdef long it
    cdef int g_ok
    for s in range(h.shape[0]):
        p1 = p1t[s]
        g = gt[s]
        _fit_stratum_cond(h, s, d0, &p1, &g, max_iter, xtol, gtol, &it, &g_ok)
        p1w[s] = p1
        gw[s] = g
    ll = 0.0
    for s in range(h.shape[0]):
        v = _stratum_lik(h, s, p1w[s], p1w[s] - d0, gw[s])
        if v == -INFINITY:
            return -INFINITY
        ll += v
    return ll


def ci_bound_search(h, int kind, int direction, double d_t, p1t, gt,
                    double ll0, double crit, double steptol, long max_iter,
                    double xtol, double gtol):
    cdef double[:, ::1] hv = h
    cdef Py_ssize_t S = hv.shape[0]
    cdef double[::1] p1tv = _vec(p1t)
    cdef double[::1] gtv = _vec(gt)
    p1w_arr = np.empty(S)
    gw_arr = np.empty(S)
    cdef double[::1] p1w = p1w_arr
    cdef double[::1] gw = gw_arr
    cdef double d = d_t
    cdef double step = 0.1
    cdef double inside = d_t
    cdef int outside_prev = 0
    cdef int outside
    cdef int flag
    cdef long probes = 0
    cdef double cand, stat, ll, ud, v
    while step >= steptol and probes < 1000:
        probes += 1
        flag = -direction if outside_prev else direction
        cand = d + flag * step
        if fabs(cand) >= 1.0 - 1e-9:
            stat = INFINITY
        else:
            ll = _cond_fit_inplace(hv, cand, p1w, gw, p1tv, gtv,
                                   max_iter, xtol, gtol)
            if ll == -INFINITY:
                stat = INFINITY
            elif kind == 0:
                stat = 2.0 * (ll0 - ll)
                if stat < 0.0:
                    stat = 0.0
            else:
                ud = _score_wrt_d_c(hv, cand, p1w, gw)
                v = _info00_inv(hv, cand, p1w, gw)
                if not _isfin(v) or v < 0.0:
                    stat = INFINITY
                else:
                    stat = ud * ud * v
        outside = stat >= crit
        if outside != outside_prev:
            step *= 1.0 / M_PI
        if not outside and (cand - inside) * direction > 0.0:
            inside = cand
        d = cand
        outside_prev = outside
    return inside
