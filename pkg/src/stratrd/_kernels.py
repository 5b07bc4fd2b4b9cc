"""Pure-Python numerical kernels.

Hot-path scalar math for the intraclass model: per-group likelihood pieces,
the three iterative fits, test statistics, and the confidence-bound searches.
``_speedups.pyx`` is the compiled twin of this module, function for function;
``stratrd._backend`` selects whichever is importable.

A study is handled as S rows of ten counts,
``(n10, n11, n12, m10, m11, n20, n21, n22, m20, m21)``:
bilateral 0/1/2-response counts plus unilateral 0/1-response counts for
group 1, then the same five for group 2.  Counts are nonnegative reals.
"""

from __future__ import annotations

import math

from .numkit import cubic_roots

INF = float("inf")
CLAMP = 1e-10
_PI = math.pi


def prepare_counts(rows):
    """Normalize an (S, 10) table of counts into the backend's layout."""
    return tuple(tuple(float(x) for x in row) for row in rows)


# ---------------------------------------------------------------------------
# per-group pieces


def _glik(n0, n1, n2, m0, m1, p, g):
    acc = 0.0
    if n0:
        pb0 = 1.0 + (g - 2.0) * p
        if pb0 <= 0.0:
            return -INF
        acc += n0 * math.log(pb0)
    if n1:
        pb1 = 2.0 * p * (1.0 - g)
        if pb1 <= 0.0:
            return -INF
        acc += n1 * math.log(pb1)
    if n2:
        pb2 = p * g
        if pb2 <= 0.0:
            return -INF
        acc += n2 * math.log(pb2)
    if m0:
        if p >= 1.0:
            return -INF
        acc += m0 * math.log(1.0 - p)
    if m1:
        if p <= 0.0:
            return -INF
        acc += m1 * math.log(p)
    return acc


def _gdpi(n0, n1, n2, m0, m1, p, g):
    acc = 0.0
    if n0:
        acc += n0 * (g - 2.0) / (1.0 + (g - 2.0) * p)
    pos = n1 + n2 + m1
    if pos:
        acc += pos / p
    if m0:
        acc -= m0 / (1.0 - p)
    return acc


def _gdg(n0, n1, n2, p, g):
    acc = 0.0
    if n2:
        acc += n2 / g
    if n1:
        acc -= n1 / (1.0 - g)
    if n0:
        acc += n0 * p / (1.0 + (g - 2.0) * p)
    return acc


def _gd2pi(n0, n1, n2, m0, m1, p, g):
    acc = 0.0
    if n0:
        pb0 = 1.0 + (g - 2.0) * p
        acc -= n0 * (g - 2.0) * (g - 2.0) / (pb0 * pb0)
    pos = n1 + n2 + m1
    if pos:
        acc -= pos / (p * p)
    if m0:
        acc -= m0 / ((1.0 - p) * (1.0 - p))
    return acc


def _gd2g(n0, n1, n2, p, g):
    acc = 0.0
    if n2:
        acc -= n2 / (g * g)
    if n1:
        acc -= n1 / ((1.0 - g) * (1.0 - g))
    if n0:
        pb0 = 1.0 + (g - 2.0) * p
        acc -= n0 * p * p / (pb0 * pb0)
    return acc


def _gdpig(n0, p, g):
    if n0:
        pb0 = 1.0 + (g - 2.0) * p
        return n0 / (pb0 * pb0)
    return 0.0


def group_expected_info(n, m, p, g):
    """Expected information pieces (E11, E13, E33) for one group.

    ``n``/``m`` are the bilateral/unilateral group sizes; entries are the
    expectations of minus the second derivatives wrt (pi, pi x gamma,
    gamma x gamma).
    """
    e11 = 0.0
    e13 = 0.0
    e33 = 0.0
    if n:
        pb0 = 1.0 + (g - 2.0) * p
        e11 = n * (2.0 - g) * (2.0 - g) / pb0 + n * (2.0 - g) / p
        e13 = -n / pb0
        e33 = n * p * p / pb0 + 2.0 * n * p / (1.0 - g) + n * p / g
    if m:
        e11 += m / (p * (1.0 - p))
    return e11, e13, e33


def _stratum_lik(c, p1, p2, g):
    a = _glik(c[0], c[1], c[2], c[3], c[4], p1, g)
    if a == -INF:
        return -INF
    b = _glik(c[5], c[6], c[7], c[8], c[9], p2, g)
    if b == -INF:
        return -INF
    return a + b


# ---------------------------------------------------------------------------
# likelihood / scores over a whole study


def loglik(h, pi1, pi2, gamma):
    total = 0.0
    for s, c in enumerate(h):
        v = _stratum_lik(c, pi1[s], pi2[s], gamma[s])
        if v == -INF:
            return -INF
        total += v
    return total


def score(h, pi1, pi2, gamma):
    out = []
    for s, c in enumerate(h):
        p1, p2, g = pi1[s], pi2[s], gamma[s]
        out.append(_gdpi(c[0], c[1], c[2], c[3], c[4], p1, g))
        out.append(_gdpi(c[5], c[6], c[7], c[8], c[9], p2, g))
        out.append(
            _gdg(c[0], c[1], c[2], p1, g) + _gdg(c[5], c[6], c[7], p2, g)
        )
    return out


def score_wrt_d(h, d, pi1, gamma):
    acc = 0.0
    for s, c in enumerate(h):
        acc -= _gdpi(c[5], c[6], c[7], c[8], c[9], pi1[s] - d, gamma[s])
    return acc


# ---------------------------------------------------------------------------
# single-parameter updates


def solve_pi_quadratic(n0, n1, n2, m0, m1, g):
    """Root of the stationarity quadratic in pi, restricted to (0, 1/(2-g)).

    Returns ``(pi, interior)``; when no root lies inside, the better
    endpoint (by group likelihood) is returned clamped inward by 1e-10 and
    flagged.
    """
    total = n0 + n1 + n2 + m0 + m1
    hi = 1.0 / (2.0 - g)
    a = (g - 2.0) * total
    b = m0 + 3.0 * m1 + 2.0 * n0 + 3.0 * (n1 + n2) - g * (m1 + n0 + n1 + n2)
    c = -(m1 + n1 + n2)
    roots = ()
    if a != 0.0:
        disc = b * b - 4.0 * a * c
        if disc >= 0.0:
            sq = math.sqrt(disc)
            q = -0.5 * (b + math.copysign(sq, b)) if b != 0.0 else -0.5 * sq
            roots = (0.0,) if q == 0.0 else (q / a, c / q)
    elif b != 0.0:
        roots = (-c / b,)
    cands = [r for r in roots if 0.0 < r < hi]
    if cands:
        if len(cands) == 2 and cands[0] != cands[1]:
            l0 = _glik(n0, n1, n2, m0, m1, cands[0], g)
            l1 = _glik(n0, n1, n2, m0, m1, cands[1], g)
            r = cands[0] if l0 >= l1 else cands[1]
        else:
            r = cands[0]
        if r < CLAMP:
            return CLAMP, False
        if r > hi - CLAMP:
            return hi - CLAMP, False
        return r, True
    llo = _glik(n0, n1, n2, m0, m1, CLAMP, g)
    lhi = _glik(n0, n1, n2, m0, m1, hi - CLAMP, g)
    return (CLAMP, False) if llo >= lhi else (hi - CLAMP, False)


def newton_gamma_step(c, p1, p2, g):
    """One Newton-Raphson update of gamma, clamped into [1e-10, 1 - 1e-10].

    Returns ``(gamma, ok)``; ``ok`` is False when the second derivative
    vanishes and the input is returned unchanged.
    """
    d1 = _gdg(c[0], c[1], c[2], p1, g) + _gdg(c[5], c[6], c[7], p2, g)
    d2 = _gd2g(c[0], c[1], c[2], p1, g) + _gd2g(c[5], c[6], c[7], p2, g)
    if d2 == 0.0:
        return g, False
    g_new = g - d1 / d2
    if g_new < CLAMP:
        g_new = CLAMP
    elif g_new > 1.0 - CLAMP:
        g_new = 1.0 - CLAMP
    return g_new, True


def _gamma_feas_lo(p1, p2):
    lo = CLAMP
    if p1 > 0.5:
        v = 2.0 - 1.0 / p1 + 1e-12
        if v > lo:
            lo = v
    if p2 > 0.5:
        v = 2.0 - 1.0 / p2 + 1e-12
        if v > lo:
            lo = v
    return lo


def _gamma_update_damped(c, p1, p2, g, ll_cur):
    d1 = _gdg(c[0], c[1], c[2], p1, g) + _gdg(c[5], c[6], c[7], p2, g)
    d2 = _gd2g(c[0], c[1], c[2], p1, g) + _gd2g(c[5], c[6], c[7], p2, g)
    if d2 == 0.0 or not math.isfinite(d2):
        return g, ll_cur
    step = -d1 / d2
    glo = _gamma_feas_lo(p1, p2)
    ghi = 1.0 - CLAMP
    slack = 1e-12 * (1.0 + abs(ll_cur))
    for _ in range(31):
        cand = g + step
        if cand < glo:
            cand = glo
        elif cand > ghi:
            cand = ghi
        ll = _stratum_lik(c, p1, p2, cand)
        if ll >= ll_cur - slack:
            return cand, ll
        step *= 0.5
    return g, ll_cur


# ---------------------------------------------------------------------------
# unconstrained fit


def _moment_init(c):
    n0, n1, n2, m0, m1, q0, q1, q2, r0, r1 = c
    t1 = n0 + n1 + n2 + m0 + m1
    t2 = q0 + q1 + q2 + r0 + r1
    p1 = (n1 + 2.0 * n2 + 2.0 * m1) / (2.0 * t1) if t1 > 0.0 else 0.5
    p2 = (q1 + 2.0 * q2 + 2.0 * r1) / (2.0 * t2) if t2 > 0.0 else 0.5
    gden = n1 + q1 + 2.0 * (n2 + q2)
    g = 2.0 * (n2 + q2) / gden if gden > 0.0 else 0.5
    p1 = min(0.99, max(0.01, p1))
    p2 = min(0.99, max(0.01, p2))
    g = min(0.99, max(0.01, g))
    # keep the start inside the joint region
    hi = 1.0 / (2.0 - g)
    p1 = min(p1, hi - 1e-6)
    p2 = min(p2, hi - 1e-6)
    return p1, p2, g


def _project_triple(p1, p2, g):
    if g < CLAMP:
        g = CLAMP
    elif g > 1.0 - CLAMP:
        g = 1.0 - CLAMP
    hi = 1.0 / (2.0 - g) - CLAMP
    if p1 < CLAMP:
        p1 = CLAMP
    elif p1 > hi:
        p1 = hi
    if p2 < CLAMP:
        p2 = CLAMP
    elif p2 > hi:
        p2 = hi
    return p1, p2, g


def _joint_newton_unc(c, p1, p2, g, ll_cur):
    # damped full Newton on (pi1, pi2, gamma); accelerates the endgame when
    # the cyclic updates crawl along a flat diagonal valley
    g1 = _gdpi(c[0], c[1], c[2], c[3], c[4], p1, g)
    g2 = _gdpi(c[5], c[6], c[7], c[8], c[9], p2, g)
    g3 = _gdg(c[0], c[1], c[2], p1, g) + _gdg(c[5], c[6], c[7], p2, g)
    a = _gd2pi(c[0], c[1], c[2], c[3], c[4], p1, g)
    b = _gd2pi(c[5], c[6], c[7], c[8], c[9], p2, g)
    cc = _gdpig(c[0], p1, g)
    dd = _gdpig(c[5], p2, g)
    e = _gd2g(c[0], c[1], c[2], p1, g) + _gd2g(c[5], c[6], c[7], p2, g)
    det = a * b * e - a * dd * dd - b * cc * cc
    if det == 0.0 or not math.isfinite(det):
        return p1, p2, g, ll_cur
    s1 = -((b * e - dd * dd) * g1 + cc * dd * g2 - b * cc * g3) / det
    s2 = -(cc * dd * g1 + (a * e - cc * cc) * g2 - a * dd * g3) / det
    s3 = -(-b * cc * g1 - a * dd * g2 + a * b * g3) / det
    slack = 1e-12 * (1.0 + abs(ll_cur))
    for _ in range(31):
        c1, c2, c3 = _project_triple(p1 + s1, p2 + s2, g + s3)
        ll = _stratum_lik(c, c1, c2, c3)
        if ll >= ll_cur - slack:
            return c1, c2, c3, ll
        s1 *= 0.5
        s2 *= 0.5
        s3 *= 0.5
    return p1, p2, g, ll_cur


def _fit_stratum_unc(c, max_iter, xtol, gtol):
    p1, p2, g = _moment_init(c)
    i1 = i2 = True
    converged = False
    it = 0
    delta = INF
    pp1 = pp2 = ppg = INF  # state two cycles back, for ping-pong detection
    while it < max_iter:
        it += 1
        p1n, i1 = solve_pi_quadratic(c[0], c[1], c[2], c[3], c[4], g)
        p2n, i2 = solve_pi_quadratic(c[5], c[6], c[7], c[8], c[9], g)
        ll = _stratum_lik(c, p1n, p2n, g)
        gn, ll = _gamma_update_damped(c, p1n, p2n, g, ll)
        # joint Newton rescues slow diagonal-valley crawls; keep it away
        # from the boundary-projected endgame, where it can cycle
        if it > 20 and delta > 1e-7 and i1 and i2:
            p1n, p2n, gn, ll = _joint_newton_unc(c, p1n, p2n, gn, ll)
        delta = max(abs(p1n - p1), abs(p2n - p2), abs(gn - g))
        delta2 = max(abs(p1n - pp1), abs(p2n - pp2), abs(gn - ppg))
        pp1, pp2, ppg = p1, p2, g
        p1, p2, g = p1n, p2n, gn
        if delta < xtol or delta2 < xtol:
            converged = True
            break
        gmax = 0.0
        if i1:
            gmax = abs(_gdpi(c[0], c[1], c[2], c[3], c[4], p1, g))
        if i2:
            v = abs(_gdpi(c[5], c[6], c[7], c[8], c[9], p2, g))
            if v > gmax:
                gmax = v
        if CLAMP < g < 1.0 - CLAMP:
            v = abs(_gdg(c[0], c[1], c[2], p1, g) + _gdg(c[5], c[6], c[7], p2, g))
            if v > gmax:
                gmax = v
        if gmax < gtol:
            converged = True
            break
    interior = i1 and i2 and (100.0 * CLAMP < g < 1.0 - 100.0 * CLAMP)
    return p1, p2, g, it, converged, interior


def fit_unconstrained(h, max_iter, xtol, gtol):
    pi1 = []
    pi2 = []
    gamma = []
    iters = 0
    converged = True
    interior = True
    for c in h:
        p1, p2, g, it, conv, inter = _fit_stratum_unc(c, max_iter, xtol, gtol)
        pi1.append(p1)
        pi2.append(p2)
        gamma.append(g)
        iters = max(iters, it)
        converged = converged and conv
        interior = interior and inter
    return pi1, pi2, gamma, iters, converged, interior


# ---------------------------------------------------------------------------
# constrained fit (common risk difference)


def _project_pair(p1, g, d):
    # minimally adjust (pi1, gamma) so both groups' cell probabilities are
    # valid for the given common difference
    ad = abs(d)
    if ad > 0.5 - 3.0 * CLAMP:
        glo_d = 2.0 - 1.0 / (ad + 3.0 * CLAMP)
        if g < glo_d:
            g = glo_d
    if g > 1.0 - CLAMP:
        g = 1.0 - CLAMP
    elif g < CLAMP:
        g = CLAMP
    hi = 1.0 / (2.0 - g)
    lo_p = CLAMP if d <= 0.0 else d + CLAMP
    hi_p = (hi if d >= 0.0 else hi + d) - CLAMP
    if p1 < lo_p:
        p1 = lo_p
    elif p1 > hi_p:
        p1 = hi_p
    return p1, g


def _con_stratum_step(c, p1, g, d, ll_cur):
    p2 = p1 - d
    gp = _gdpi(c[0], c[1], c[2], c[3], c[4], p1, g) + _gdpi(
        c[5], c[6], c[7], c[8], c[9], p2, g
    )
    gg = _gdg(c[0], c[1], c[2], p1, g) + _gdg(c[5], c[6], c[7], p2, g)
    hpp = _gd2pi(c[0], c[1], c[2], c[3], c[4], p1, g) + _gd2pi(
        c[5], c[6], c[7], c[8], c[9], p2, g
    )
    hpg = _gdpig(c[0], p1, g) + _gdpig(c[5], p2, g)
    hgg = _gd2g(c[0], c[1], c[2], p1, g) + _gd2g(c[5], c[6], c[7], p2, g)
    det = hpp * hgg - hpg * hpg
    if det == 0.0 or not math.isfinite(det):
        return p1, g, ll_cur
    sp = -(hgg * gp - hpg * gg) / det
    sg = -(hpp * gg - hpg * gp) / det
    slack = 1e-12 * (1.0 + abs(ll_cur))
    for _ in range(31):
        c1, c2 = _project_pair(p1 + sp, g + sg, d)
        ll = _stratum_lik(c, c1, c1 - d, c2)
        if ll >= ll_cur - slack:
            return c1, c2, ll
        sp *= 0.5
        sg *= 0.5
    return p1, g, ll_cur


def _con_d_step(h, p1s, gs, d, ll_cur):
    num = 0.0
    den = 0.0
    for s, c in enumerate(h):
        p2 = p1s[s] - d
        num -= _gdpi(c[5], c[6], c[7], c[8], c[9], p2, gs[s])
        den += _gd2pi(c[5], c[6], c[7], c[8], c[9], p2, gs[s])
    if den == 0.0 or not math.isfinite(den):
        return d, ll_cur
    step = -num / den
    # the current point is feasible, so the admissible d interval is nonempty
    dlo = -1.0
    dhi = 1.0
    for s in range(len(h)):
        hi = 1.0 / (2.0 - gs[s])
        v = p1s[s] - hi + CLAMP
        if v > dlo:
            dlo = v
        v = p1s[s] - CLAMP
        if v < dhi:
            dhi = v
    slack = 1e-12 * (1.0 + abs(ll_cur))
    for _ in range(31):
        cand = d + step
        if cand < dlo:
            cand = dlo
        elif cand > dhi:
            cand = dhi
        ll = loglik(h, p1s, [p1s[s] - cand for s in range(len(h))], gs)
        if ll >= ll_cur - slack:
            return cand, ll
        step *= 0.5
    return d, ll_cur


def _joint_newton_con(h, p1s, gs, d, ll_cur):
    # damped Newton on the full (d, pi_11, gamma_1, ...) system; the arrow
    # Hessian is solved by a Schur complement on d
    S = len(h)
    b11 = [0.0] * S
    b12 = [0.0] * S
    b22 = [0.0] * S
    gp = [0.0] * S
    gg = [0.0] * S
    v1 = [0.0] * S
    v2 = [0.0] * S
    iv = [(0.0, 0.0, 0.0)] * S
    gd = 0.0
    hdd = 0.0
    for s, c in enumerate(h):
        p1 = p1s[s]
        p2 = p1 - d
        g = gs[s]
        h11 = _gd2pi(c[0], c[1], c[2], c[3], c[4], p1, g)
        h22 = _gd2pi(c[5], c[6], c[7], c[8], c[9], p2, g)
        h13 = _gdpig(c[0], p1, g)
        h23 = _gdpig(c[5], p2, g)
        h33 = _gd2g(c[0], c[1], c[2], p1, g) + _gd2g(c[5], c[6], c[7], p2, g)
        d2 = _gdpi(c[5], c[6], c[7], c[8], c[9], p2, g)
        gp[s] = _gdpi(c[0], c[1], c[2], c[3], c[4], p1, g) + d2
        gg[s] = _gdg(c[0], c[1], c[2], p1, g) + _gdg(c[5], c[6], c[7], p2, g)
        gd -= d2
        hdd += h22
        b11[s] = h11 + h22
        b12[s] = h13 + h23
        b22[s] = h33
        v1[s] = -h22
        v2[s] = -h23
    schur = hdd
    rhs = -gd
    for s in range(S):
        det = b11[s] * b22[s] - b12[s] * b12[s]
        if det == 0.0 or not math.isfinite(det):
            return p1s, gs, d, ll_cur
        iv11 = b22[s] / det
        iv12 = -b12[s] / det
        iv22 = b11[s] / det
        iv[s] = (iv11, iv12, iv22)
        schur -= v1[s] * (iv11 * v1[s] + iv12 * v2[s]) + v2[s] * (
            iv12 * v1[s] + iv22 * v2[s]
        )
        rhs += v1[s] * (iv11 * gp[s] + iv12 * gg[s]) + v2[s] * (
            iv12 * gp[s] + iv22 * gg[s]
        )
    if schur == 0.0 or not math.isfinite(schur):
        return p1s, gs, d, ll_cur
    sd = rhs / schur
    sp = [0.0] * S
    sg = [0.0] * S
    for s in range(S):
        iv11, iv12, iv22 = iv[s]
        r1 = gp[s] + v1[s] * sd
        r2 = gg[s] + v2[s] * sd
        sp[s] = -(iv11 * r1 + iv12 * r2)
        sg[s] = -(iv12 * r1 + iv22 * r2)
    slack = 1e-12 * (1.0 + abs(ll_cur))
    for _ in range(31):
        d_c = d + sd
        if d_c > 1.0 - 1e-9:
            d_c = 1.0 - 1e-9
        elif d_c < -1.0 + 1e-9:
            d_c = -1.0 + 1e-9
        p1_c = [0.0] * S
        g_c = [0.0] * S
        ll = 0.0
        for s, c in enumerate(h):
            a, b = _project_pair(p1s[s] + sp[s], gs[s] + sg[s], d_c)
            p1_c[s] = a
            g_c[s] = b
            v = _stratum_lik(c, a, a - d_c, b)
            if v == -INF:
                ll = -INF
                break
            ll += v
        if ll >= ll_cur - slack:
            return p1_c, g_c, d_c, ll
        sd *= 0.5
        for s in range(S):
            sp[s] *= 0.5
            sg[s] *= 0.5
    return p1s, gs, d, ll_cur


def fit_constrained(h, pi1_init, pi2_init, gamma_init, max_iter, xtol, gtol):
    S = len(h)
    d = sum(pi1_init[s] - pi2_init[s] for s in range(S)) / S
    if d > 1.0 - 1e-9:
        d = 1.0 - 1e-9
    elif d < -1.0 + 1e-9:
        d = -1.0 + 1e-9
    p1s = []
    gs = []
    for s in range(S):
        p1, g = _project_pair(pi1_init[s], gamma_init[s], d)
        p1s.append(p1)
        gs.append(g)
    ll = loglik(h, p1s, [p1s[s] - d for s in range(S)], gs)
    converged = False
    it = 0
    delta = INF
    prev = None
    prev2 = None  # state two cycles back, for ping-pong detection
    while it < max_iter:
        it += 1
        fire_joint = it > 20 and delta > 1e-7
        delta = 0.0
        for s, c in enumerate(h):
            lls = _stratum_lik(c, p1s[s], p1s[s] - d, gs[s])
            p1n, gn, _ = _con_stratum_step(c, p1s[s], gs[s], d, lls)
            delta = max(delta, abs(p1n - p1s[s]), abs(gn - gs[s]))
            p1s[s] = p1n
            gs[s] = gn
        ll = loglik(h, p1s, [p1s[s] - d for s in range(S)], gs)
        dn, ll = _con_d_step(h, p1s, gs, d, ll)
        delta = max(delta, abs(dn - d))
        d = dn
        if fire_joint and delta > 1e-7:
            p1n, gn, dn, ll = _joint_newton_con(h, p1s, gs, d, ll)
            delta = max(delta, abs(dn - d))
            for s in range(S):
                delta = max(delta, abs(p1n[s] - p1s[s]), abs(gn[s] - gs[s]))
            p1s, gs, d = list(p1n), list(gn), dn
        if prev2 is not None:
            delta2 = abs(d - prev2[0])
            for s in range(S):
                delta2 = max(
                    delta2, abs(p1s[s] - prev2[1][s]), abs(gs[s] - prev2[2][s])
                )
            if delta2 < xtol:
                converged = True
                break
        prev2 = prev
        prev = (d, list(p1s), list(gs))
        if delta < xtol:
            converged = True
            break
        if _con_score_norm(h, p1s, gs, d) < gtol:
            converged = True
            break
    interior = True
    margin = 100.0 * CLAMP
    for s in range(S):
        hi = 1.0 / (2.0 - gs[s])
        lo_p = CLAMP if d <= 0.0 else d + CLAMP
        hi_p = (hi if d >= 0.0 else hi + d) - CLAMP
        if p1s[s] - lo_p < margin or hi_p - p1s[s] < margin:
            interior = False
        if not (margin < gs[s] < 1.0 - margin):
            interior = False
    return d, p1s, gs, it, converged, interior


def _con_score_norm(h, p1s, gs, d):
    gmax = 0.0
    dd = 0.0
    for s, c in enumerate(h):
        p1 = p1s[s]
        p2 = p1 - d
        g = gs[s]
        v = abs(
            _gdpi(c[0], c[1], c[2], c[3], c[4], p1, g)
            + _gdpi(c[5], c[6], c[7], c[8], c[9], p2, g)
        )
        if v > gmax:
            gmax = v
        v = abs(_gdg(c[0], c[1], c[2], p1, g) + _gdg(c[5], c[6], c[7], p2, g))
        if v > gmax:
            gmax = v
        dd -= _gdpi(c[5], c[6], c[7], c[8], c[9], p2, g)
    return max(gmax, abs(dd))


# ---------------------------------------------------------------------------
# conditional fit (fixed common difference)


def _gamma_cubic(c, p1, p2):
    # polynomialized stationarity equation for gamma at fixed (pi1, pi2)
    A = c[2] + c[7]
    B = c[1] + c[6]
    c1n = c[0]
    c2n = c[5]
    a1 = 1.0 - 2.0 * p1
    b1 = p1
    a2 = 1.0 - 2.0 * p2
    b2 = p2
    p0 = a1 * a2
    p1c = a1 * b2 + a2 * b1
    p2c = b1 * b2
    k0 = -A * p0
    k1 = A * (p0 - p1c) + B * p0 - c1n * p1 * a2 - c2n * p2 * a1
    k2 = A * (p1c - p2c) + B * p1c + c1n * p1 * (a2 - b2) + c2n * p2 * (a1 - b1)
    k3 = A * p2c + B * p2c + c1n * p1 * b2 + c2n * p2 * b1
    return k3, k2, k1, k0


def _cond_gamma_update(c, p1, p2, g):
    k3, k2, k1, k0 = _gamma_cubic(c, p1, p2)
    if max(abs(k3), abs(k2), abs(k1), abs(k0)) == 0.0:
        return g, True  # no bilateral information: gamma is free
    glo = _gamma_feas_lo(p1, p2)
    ghi = 1.0 - CLAMP
    cands = []
    found = False
    for r in cubic_roots(k3, k2, k1, k0):
        if r < glo:
            r = glo
        elif r > ghi:
            r = ghi
        else:
            found = True
        cands.append(r)
    if not found:
        # no interior root: compare the feasible endpoints as well
        cands.extend((glo, ghi))
    best_g = g
    best_ll = -INF
    for r in cands:
        ll = _stratum_lik(c, p1, p2, r)
        if ll > best_ll:
            best_ll = ll
            best_g = r
    # a likelihood tie still moves to the candidate: stationary roots beat a
    # merely likelihood-equivalent current point
    ll_cur = _stratum_lik(c, p1, p2, g)
    if best_ll < ll_cur - 1e-12 * (1.0 + abs(ll_cur)):
        return g, found
    return best_g, found


def _fit_stratum_cond(c, d0, p1, g, max_iter, xtol, gtol):
    p1, g = _project_pair(p1, g, d0)
    converged = False
    it = 0
    g_ok = True
    delta = INF
    pp1 = ppg = INF  # state two cycles back, for ping-pong detection
    while it < max_iter:
        it += 1
        delta_prev = delta
        p2 = p1 - d0
        gp = _gdpi(c[0], c[1], c[2], c[3], c[4], p1, g) + _gdpi(
            c[5], c[6], c[7], c[8], c[9], p2, g
        )
        hpp = _gd2pi(c[0], c[1], c[2], c[3], c[4], p1, g) + _gd2pi(
            c[5], c[6], c[7], c[8], c[9], p2, g
        )
        p1n = p1
        if hpp != 0.0 and math.isfinite(hpp):
            step = -gp / hpp
            ll_cur = _stratum_lik(c, p1, p2, g)
            slack = 1e-12 * (1.0 + abs(ll_cur))
            for _ in range(31):
                cand, _gq = _project_pair(p1 + step, g, d0)
                ll = _stratum_lik(c, cand, cand - d0, g)
                if ll >= ll_cur - slack:
                    p1n = cand
                    break
                step *= 0.5
        gn, g_ok = _cond_gamma_update(c, p1n, p1n - d0, g)
        p1n, gn = _project_pair(p1n, gn, d0)
        if it > 20 and delta_prev > 1e-7:
            lls = _stratum_lik(c, p1n, p1n - d0, gn)
            p1n, gn, _ = _con_stratum_step(c, p1n, gn, d0, lls)
        delta = max(abs(p1n - p1), abs(gn - g))
        delta2 = max(abs(p1n - pp1), abs(gn - ppg))
        pp1, ppg = p1, g
        p1, g = p1n, gn
        if delta < xtol or delta2 < xtol:
            converged = True
            break
        p2 = p1 - d0
        gmax = abs(
            _gdpi(c[0], c[1], c[2], c[3], c[4], p1, g)
            + _gdpi(c[5], c[6], c[7], c[8], c[9], p2, g)
        )
        v = abs(_gdg(c[0], c[1], c[2], p1, g) + _gdg(c[5], c[6], c[7], p2, g))
        if v > gmax:
            gmax = v
        if gmax < gtol:
            converged = True
            break
    return p1, g, it, converged, g_ok


def fit_conditional(h, d0, pi1_init, gamma_init, max_iter, xtol, gtol):
    if abs(d0) >= 1.0 - 1e-9:
        return list(pi1_init), list(gamma_init), 0, False, False
    p1s = []
    gs = []
    iters = 0
    converged = True
    interior = True
    for s, c in enumerate(h):
        p1, g, it, conv, g_ok = _fit_stratum_cond(
            c, d0, pi1_init[s], gamma_init[s], max_iter, xtol, gtol
        )
        p1s.append(p1)
        gs.append(g)
        iters = max(iters, it)
        converged = converged and conv
        hi = 1.0 / (2.0 - g)
        lo_p = CLAMP if d0 <= 0.0 else d0 + CLAMP
        hi_p = (hi if d0 >= 0.0 else hi + d0) - CLAMP
        margin = 100.0 * CLAMP
        if not g_ok or p1 - lo_p < margin or hi_p - p1 < margin:
            interior = False
        if not (margin < g < 1.0 - margin):
            interior = False
    return p1s, gs, iters, converged, interior


# ---------------------------------------------------------------------------
# information blocks and test statistics


def _block_quad(c, p1, p2, g, u1, u2, u3):
    # u^T M^{-1} u for the per-stratum expected-information block M
    n1 = c[0] + c[1] + c[2]
    m1 = c[3] + c[4]
    n2 = c[5] + c[6] + c[7]
    m2 = c[8] + c[9]
    a, cc, e1 = group_expected_info(n1, m1, p1, g)
    b, dd, e2 = group_expected_info(n2, m2, p2, g)
    e = e1 + e2
    det = a * b * e - a * dd * dd - b * cc * cc
    if det == 0.0 or not math.isfinite(det):
        ridge = 1e-10 * (a + b + e)
        a += ridge
        b += ridge
        e += ridge
        det = a * b * e - a * dd * dd - b * cc * cc
        if det == 0.0 or not math.isfinite(det):
            return 0.0, False
    q = (
        u1 * u1 * (b * e - dd * dd)
        + u2 * u2 * (a * e - cc * cc)
        + u3 * u3 * a * b
        + 2.0 * u1 * u2 * cc * dd
        - 2.0 * u1 * u3 * b * cc
        - 2.0 * u2 * u3 * a * dd
    ) / det
    return q, True


def score_stat(h, pi1, pi2, gamma):
    """Per-stratum block form of the score statistic at the supplied point."""
    total = 0.0
    ok = True
    for s, c in enumerate(h):
        p1, p2, g = pi1[s], pi2[s], gamma[s]
        u1 = _gdpi(c[0], c[1], c[2], c[3], c[4], p1, g)
        u2 = _gdpi(c[5], c[6], c[7], c[8], c[9], p2, g)
        u3 = _gdg(c[0], c[1], c[2], p1, g) + _gdg(c[5], c[6], c[7], p2, g)
        q, oks = _block_quad(c, p1, p2, g, u1, u2, u3)
        total += q
        ok = ok and oks
    return total, ok


def stratum_dvar(h, pi1, pi2, gamma):
    """Per-stratum variance of the fitted difference, (1,-1,0) I_s^{-1} (1,-1,0)^T."""
    out = []
    ok = True
    for s, c in enumerate(h):
        p1, p2, g = pi1[s], pi2[s], gamma[s]
        n1 = c[0] + c[1] + c[2]
        m1 = c[3] + c[4]
        n2 = c[5] + c[6] + c[7]
        m2 = c[8] + c[9]
        a, cc, e1 = group_expected_info(n1, m1, p1, g)
        b, dd, e2 = group_expected_info(n2, m2, p2, g)
        e = e1 + e2
        det = a * b * e - a * dd * dd - b * cc * cc
        if det == 0.0 or not math.isfinite(det):
            ridge = 1e-10 * (a + b + e)
            a += ridge
            b += ridge
            e += ridge
            det = a * b * e - a * dd * dd - b * cc * cc
            ok = False
        # inv11 - 2*inv12 + inv22
        q = (b * e - dd * dd - 2.0 * cc * dd + a * e - cc * cc) / det
        out.append(q)
    return out, ok


def tridiag_inverse(a, b):
    """Inverse of a symmetric tridiagonal matrix by the theta/phi recurrences.

    ``a`` is the diagonal (length n), ``b`` the off-diagonal (length n-1).
    Returns the inverse as a flat row-major list, or None when the
    determinant recurrence hits zero.
    """
    n = len(a)
    theta = [0.0] * (n + 1)
    theta[0] = 1.0
    theta[1] = a[0]
    for i in range(2, n + 1):
        theta[i] = a[i - 1] * theta[i - 1] - b[i - 2] * b[i - 2] * theta[i - 2]
    if theta[n] == 0.0 or not math.isfinite(theta[n]):
        return None
    phi = [0.0] * (n + 2)
    phi[n + 1] = 1.0
    phi[n] = a[n - 1]
    for i in range(n - 1, 0, -1):
        phi[i] = a[i - 1] * phi[i + 1] - b[i - 1] * b[i - 1] * phi[i + 2]
    inv = [0.0] * (n * n)
    for i in range(1, n + 1):
        inv[(i - 1) * n + (i - 1)] = theta[i - 1] * phi[i + 1] / theta[n]
        prod = 1.0
        for j in range(i + 1, n + 1):
            prod *= b[j - 2]
            sign = -1.0 if (i + j) % 2 else 1.0
            v = sign * prod * theta[i - 1] * phi[j + 1] / theta[n]
            inv[(i - 1) * n + (j - 1)] = v
            inv[(j - 1) * n + (i - 1)] = v
    return inv


def wald_stat(h, pi1, pi2, gamma):
    """Wald statistic for equal differences; ``ok`` False on singular tridiagonal."""
    S = len(h)
    q, _ = stratum_dvar(h, pi1, pi2, gamma)
    a = [q[s] + q[s + 1] for s in range(S - 1)]
    b = [-q[s + 1] for s in range(S - 2)]
    v = [
        (pi1[s] - pi2[s]) - (pi1[s + 1] - pi2[s + 1]) for s in range(S - 1)
    ]
    inv = tridiag_inverse(a, b)
    if inv is None:
        return 0.0, False
    n = S - 1
    total = 0.0
    for i in range(n):
        row = 0.0
        for j in range(n):
            row += inv[i * n + j] * v[j]
        total += v[i] * row
    return total, True


def info00_inv(h, d, pi1, gamma):
    """(1,1) element of the inverse common-difference information matrix.

    Schur-complement form of the arrow matrix; algebraically equal to the
    cofactor-ratio fast path.
    """
    id_total = 0.0
    acc = 0.0
    for s, c in enumerate(h):
        p1 = pi1[s]
        p2 = p1 - d
        g = gamma[s]
        n1 = c[0] + c[1] + c[2]
        m1 = c[3] + c[4]
        n2 = c[5] + c[6] + c[7]
        m2 = c[8] + c[9]
        e11a, e13a, e33a = group_expected_info(n1, m1, p1, g)
        e11b, e13b, e33b = group_expected_info(n2, m2, p2, g)
        id_total += e11b
        v1 = -e11b
        v2 = -e13b
        k11 = e11a + e11b
        k12 = e13a + e13b
        k22 = e33a + e33b
        det2 = k11 * k22 - k12 * k12
        acc += (v1 * v1 * k22 - 2.0 * v1 * v2 * k12 + v2 * v2 * k11) / det2
    return 1.0 / (id_total - acc)


# ---------------------------------------------------------------------------
# confidence-bound searches


def _cond_stat_profile(h, d0, p1t, gt, ll0, max_iter, xtol, gtol):
    if abs(d0) >= 1.0 - 1e-9:
        return INF
    p1s, gs, _, _, _ = fit_conditional(h, d0, p1t, gt, max_iter, xtol, gtol)
    ll = loglik(h, p1s, [p1s[s] - d0 for s in range(len(h))], gs)
    if ll == -INF:
        return INF
    stat = 2.0 * (ll0 - ll)
    return 0.0 if stat < 0.0 else stat


def _cond_stat_score(h, d0, p1t, gt, max_iter, xtol, gtol):
    if abs(d0) >= 1.0 - 1e-9:
        return INF
    p1s, gs, _, _, _ = fit_conditional(h, d0, p1t, gt, max_iter, xtol, gtol)
    ud = score_wrt_d(h, d0, p1s, gs)
    v = info00_inv(h, d0, p1s, gs)
    if not math.isfinite(v) or v < 0.0:
        return INF
    return ud * ud * v


def ci_bound_search(
    h, kind, direction, d_t, p1t, gt, ll0, crit, steptol, max_iter, xtol, gtol
):
    """Step-and-shrink search for one confidence bound.

    ``kind`` 0 compares the profile likelihood-ratio statistic, 1 the score
    statistic, against ``crit``; ``direction`` +1/-1 walks toward the
    upper/lower bound.  Walks outward while accepted and inward while
    rejected; the step shrinks by 1/pi at each boundary crossing.  Returns
    the outermost accepted probe (``d_t`` itself when every probe rejects).
    """
    d = d_t
    step = 0.1
    outside_prev = False
    inside = d_t
    probes = 0
    while step >= steptol and probes < 1000:
        probes += 1
        flag = -direction if outside_prev else direction
        cand = d + flag * step
        if kind == 0:
            stat = _cond_stat_profile(h, cand, p1t, gt, ll0, max_iter, xtol, gtol)
        else:
            stat = _cond_stat_score(h, cand, p1t, gt, max_iter, xtol, gtol)
        outside = stat >= crit
        if outside != outside_prev:
            step *= 1.0 / _PI
        if not outside and (cand - inside) * direction > 0.0:
            inside = cand
        d = cand
        outside_prev = outside
    return inside
