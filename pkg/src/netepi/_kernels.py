"""Compiled inner loops of the sampler.

Every kernel takes its random numbers as pre-drawn arrays so a single
numpy Generator drives the whole chain.  Arrays are modified in place.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _softplus(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def _log_gamma_kernel(d, shape, scale):
    # Gamma log-density without the normalising constant.
    return (shape - 1.0) * math.log(d) - d / scale


@njit(cache=True)
def pressure_on(j, e_j, infected, I, R, Y):
    """Infectious pressure received by ``j`` if it were exposed at ``e_j``."""
    total = 0.0
    for i in range(infected.shape[0]):
        if i == j or not infected[i] or Y[i, j] == 0:
            continue
        v = min(e_j, R[i]) - I[i]
        if v > 0.0:
            total += v
    return total


@njit(cache=True)
def pressure_from(j, i_j, r_j, E, Y):
    """Infectious pressure exerted by ``j`` over ``[i_j, r_j)``; ``E`` is +inf for the never infected."""
    total = 0.0
    for c in range(E.shape[0]):
        if c == j or Y[j, c] == 0:
            continue
        v = min(E[c], r_j) - i_j
        if v > 0.0:
            total += v
    return total


@njit(cache=True)
def total_pressure(infected, E, I, R, Y):
    total = 0.0
    for i in range(infected.shape[0]):
        if infected[i]:
            total += pressure_from(i, I[i], R[i], E, Y)
    return total


@njit(cache=True)
def _gammainc_lower(s, x):
    """Regularised lower incomplete gamma ``P(s, x)`` (series / continued fraction)."""
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    log_front = s * math.log(x) - x - math.lgamma(s)
    if x < s + 1.0:
        term = 1.0 / s
        total = term
        k = s
        for _ in range(10000):
            k += 1.0
            term *= x / k
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        return min(1.0, total * math.exp(log_front))
    # modified Lentz for the upper tail
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return max(0.0, 1.0 - math.exp(log_front) * h)


@njit(cache=True)
def _gammainc_upper(s, x):
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < s + 1.0:
        return 1.0 - _gammainc_lower(s, x)
    log_front = s * math.log(x) - x - math.lgamma(s)
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(log_front) * h


@njit(cache=True)
def pressure_term(a, beta, m, lo, hi, collapsed):
    """Log-target contribution of the total pressure ``a``.

    Conditional on ``beta`` it is ``-beta * a``.  With beta integrated
    against its uniform prior on ``(lo, hi)`` it is
    ``log int_lo^hi b^(m-1) exp(-b a) db`` up to a constant.
    """
    if not collapsed:
        return -beta * a
    if a <= 0.0:
        if math.isinf(hi):
            return 0.0
        return math.log(hi - lo)
    lower = _gammainc_lower(m, lo * a)
    if lower < 0.5:
        mass = _gammainc_lower(m, hi * a) - lower
    else:
        mass = _gammainc_upper(m, lo * a) - _gammainc_upper(m, hi * a)
    if mass <= 0.0:
        return -np.inf
    return -m * math.log(a) + math.log(mass)


@njit(cache=True)
def _exposure_logtarget(j, e, a_rest, E, I, R, T, infected, Y, kE, sE, beta, m, lo, hi, collapsed):
    if not e < I[j]:
        return -np.inf
    src = T[j]
    if src >= 0 and not (I[src] < e and e < R[src]):
        return -np.inf
    a = a_rest + pressure_on(j, e, infected, I, R, Y)
    return _log_gamma_kernel(I[j] - e, kE, sE) + pressure_term(a, beta, m, lo, hi, collapsed)


@njit(cache=True)
def update_exposures(members, E, I, R, T, infected, Y, kE, sE, step, normals, indep, log_u,
                     a_box, beta, m, lo, hi, collapsed):
    """Two MH moves per latent exposure time: a random walk and an
    independence proposal ``E' = I - D`` with ``D`` the supplied Gamma draws.

    ``a_box[0]`` holds the total pressure and is kept current.
    """
    accepted = 0
    for k in range(members.shape[0]):
        j = members[k]
        a_rest = a_box[0] - pressure_on(j, E[j], infected, I, R, Y)
        cur = _exposure_logtarget(j, E[j], a_rest, E, I, R, T, infected, Y, kE, sE, beta, m, lo, hi, collapsed)
        prop = E[j] + step * normals[k]
        new = _exposure_logtarget(j, prop, a_rest, E, I, R, T, infected, Y, kE, sE, beta, m, lo, hi, collapsed)
        if log_u[2 * k] < new - cur:
            E[j] = prop
            cur = new
            accepted += 1
        prop = I[j] - indep[k]
        new = _exposure_logtarget(j, prop, a_rest, E, I, R, T, infected, Y, kE, sE, beta, m, lo, hi, collapsed)
        # proposal density equals the Gamma kernel of the target
        ratio = (new - _log_gamma_kernel(indep[k], kE, sE)) - (cur - _log_gamma_kernel(I[j] - E[j], kE, sE))
        if log_u[2 * k + 1] < ratio:
            E[j] = prop
            accepted += 1
        a_box[0] = a_rest + pressure_on(j, E[j], infected, I, R, Y)
    return accepted


@njit(cache=True)
def _removal_logtarget(j, r, a_rest, E, I, T, Y, kI, sI, beta, m, lo, hi, collapsed):
    if not r > I[j]:
        return -np.inf
    for c in range(T.shape[0]):
        if T[c] == j and not E[c] < r:
            return -np.inf
    a = a_rest + pressure_from(j, I[j], r, E, Y)
    return _log_gamma_kernel(r - I[j], kI, sI) + pressure_term(a, beta, m, lo, hi, collapsed)


@njit(cache=True)
def update_removals(members, E, I, R, T, Y, kI, sI, step, normals, indep, log_u,
                    a_box, beta, m, lo, hi, collapsed):
    accepted = 0
    for k in range(members.shape[0]):
        j = members[k]
        a_rest = a_box[0] - pressure_from(j, I[j], R[j], E, Y)
        cur = _removal_logtarget(j, R[j], a_rest, E, I, T, Y, kI, sI, beta, m, lo, hi, collapsed)
        prop = R[j] + step * normals[k]
        new = _removal_logtarget(j, prop, a_rest, E, I, T, Y, kI, sI, beta, m, lo, hi, collapsed)
        if log_u[2 * k] < new - cur:
            R[j] = prop
            cur = new
            accepted += 1
        prop = I[j] + indep[k]
        new = _removal_logtarget(j, prop, a_rest, E, I, T, Y, kI, sI, beta, m, lo, hi, collapsed)
        ratio = (new - _log_gamma_kernel(indep[k], kI, sI)) - (cur - _log_gamma_kernel(R[j] - I[j], kI, sI))
        if log_u[2 * k + 1] < ratio:
            R[j] = prop
            accepted += 1
        a_box[0] = a_rest + pressure_from(j, I[j], R[j], E, Y)
    return accepted


@njit(cache=True)
def _onset_logtarget(j, t, a_rest, E, I, R, T, Y, kE, sE, kI, sI, beta, m, lo, hi, collapsed):
    if not (E[j] < t and t < R[j]):
        return -np.inf
    for c in range(T.shape[0]):
        if T[c] == j and not t < E[c]:
            return -np.inf
    a = a_rest + pressure_from(j, t, R[j], E, Y)
    return (_log_gamma_kernel(t - E[j], kE, sE) + _log_gamma_kernel(R[j] - t, kI, sI)
            + pressure_term(a, beta, m, lo, hi, collapsed))


@njit(cache=True)
def update_onsets(members, E, I, R, T, Y, kE, sE, kI, sI, step, normals, log_u,
                  a_box, beta, m, lo, hi, collapsed):
    accepted = 0
    for k in range(members.shape[0]):
        j = members[k]
        a_rest = a_box[0] - pressure_from(j, I[j], R[j], E, Y)
        cur = _onset_logtarget(j, I[j], a_rest, E, I, R, T, Y, kE, sE, kI, sI, beta, m, lo, hi, collapsed)
        prop = I[j] + step * normals[k]
        new = _onset_logtarget(j, prop, a_rest, E, I, R, T, Y, kE, sE, kI, sI, beta, m, lo, hi, collapsed)
        if log_u[k] < new - cur:
            I[j] = prop
            accepted += 1
        a_box[0] = a_rest + pressure_from(j, I[j], R[j], E, Y)
    return accepted


@njit(cache=True)
def _contact_slope(j, e, infected, I, R, Y):
    """Number of infectious contacts of ``j`` at time ``e``: the slope of ``pressure_on``."""
    k = 0
    for i in range(infected.shape[0]):
        if i != j and infected[i] and Y[i, j] != 0 and I[i] < e and e < R[i]:
            k += 1
    return k


@njit(cache=True)
def pressure_inverse(j, w, infected, I, R, Y):
    """Earliest time at which ``pressure_on(j, .)`` reaches ``w > 0``; NaN when it never does."""
    times = []
    steps = []
    for i in range(infected.shape[0]):
        if i != j and infected[i] and Y[i, j] != 0:
            times.append(I[i])
            steps.append(1)
            times.append(R[i])
            steps.append(-1)
    if len(times) == 0:
        return np.nan
    t = np.array(times)
    d = np.array(steps)
    order = np.argsort(t, kind="mergesort")
    cum = 0.0
    k = 0
    prev = t[order[0]]
    for q in range(order.shape[0]):
        cur = t[order[q]]
        if cur > prev:
            seg = k * (cur - prev)
            if k > 0 and cum + seg >= w:
                return prev + (w - cum) / k
            cum += seg
            prev = cur
        k += d[order[q]]
    return np.nan


@njit(cache=True)
def rescale_exposures(members, E, I, R, T, infected, Y, beta, log_c, lo, hi, kE, sE, m, log_u):
    """Joint move ``beta -> c beta`` with every listed exposure moved so the
    pressure it received is divided by ``c``.

    Returns the (possibly new) beta and whether the move was accepted.
    """
    c = math.exp(log_c)
    beta_new = beta * c
    if not (lo < beta_new and beta_new < hi):
        return beta, 0
    e_new = E.copy()
    log_r = (m - 1.0) * log_c + log_c
    for q in range(members.shape[0]):
        j = members[q]
        w = pressure_on(j, E[j], infected, I, R, Y)
        if w <= 0.0:
            continue
        e = pressure_inverse(j, w / c, infected, I, R, Y)
        if np.isnan(e) or not e < I[j]:
            return beta, 0
        src = T[j]
        if src >= 0 and not (I[src] < e and e < R[src]):
            return beta, 0
        k_old = _contact_slope(j, E[j], infected, I, R, Y)
        k_new = _contact_slope(j, e, infected, I, R, Y)
        if k_old == 0 or k_new == 0:
            return beta, 0
        log_r += (_log_gamma_kernel(I[j] - e, kE, sE) - _log_gamma_kernel(I[j] - E[j], kE, sE)
                  + math.log(k_old) - math.log(k_new) - log_c)
        e_new[j] = e
    a_old = total_pressure(infected, E, I, R, Y)
    a_new = total_pressure(infected, e_new, I, R, Y)
    log_r -= beta_new * a_new - beta * a_old
    if log_u < log_r:
        for q in range(members.shape[0]):
            E[members[q]] = e_new[members[q]]
        return beta_new, 1
    return beta, 0


@njit(cache=True)
def sample_sources(members, T, E, I, R, Y, allowed, candidates, uniforms):
    """Redraw the infector of each listed member uniformly among candidates
    that are allowed by the prior, in contact, and infectious at its exposure.

    Returns the first member without any candidate, or -1.
    """
    weights = np.empty(candidates.shape[0])
    for m in range(members.shape[0]):
        j = members[m]
        total = 0.0
        for c in range(candidates.shape[0]):
            i = candidates[c]
            w = 0.0
            if i != j and allowed[i, j] and Y[i, j] != 0 and I[i] < E[j] and E[j] < R[i]:
                w = 1.0
            weights[c] = w
            total += w
        if total == 0.0:
            return j
        target = uniforms[m] * total
        acc = 0.0
        chosen = -1
        for c in range(candidates.shape[0]):
            if weights[c] > 0.0:
                acc += weights[c]
                chosen = candidates[c]
                if target < acc:
                    break
        T[j] = chosen
    return -1


@njit(cache=True)
def sweep_assignments(Z, Y, mat, gamma, log_pi, uniforms):
    """Sequential Gibbs sweep over cluster labels using materialised dyads only."""
    n = Z.shape[0]
    k_max = gamma.shape[0]
    s = np.empty(k_max)
    d = np.empty(k_max)
    logw = np.empty(k_max)
    sp = np.empty((k_max, k_max))
    for k in range(k_max):
        for l in range(k_max):
            sp[k, l] = _softplus(gamma[k] + gamma[l])
    for i in range(n):
        s[:] = 0.0
        d[:] = 0.0
        for j in range(n):
            if j != i and mat[i, j]:
                d[Z[j]] += 1.0
                s[Z[j]] += Y[i, j]
        top = -np.inf
        for k in range(k_max):
            v = log_pi[k]
            for l in range(k_max):
                v += (gamma[k] + gamma[l]) * s[l] - d[l] * sp[k, l]
            logw[k] = v
            if v > top:
                top = v
        total = 0.0
        for k in range(k_max):
            logw[k] = math.exp(logw[k] - top)
            total += logw[k]
        target = uniforms[i] * total
        acc = 0.0
        for k in range(k_max):
            acc += logw[k]
            if target < acc or k == k_max - 1:
                Z[i] = k
                break
    return Z


@njit(cache=True)
def cluster_dyad_counts(Z, Y, mat, k_max):
    """Ordered-pair counts of materialised dyads and contacts between clusters."""
    n = Z.shape[0]
    S = np.zeros((k_max, k_max))
    D = np.zeros((k_max, k_max))
    for i in range(n):
        zi = Z[i]
        for j in range(n):
            if j != i and mat[i, j]:
                D[zi, Z[j]] += 1.0
                S[zi, Z[j]] += Y[i, j]
    return S, D
