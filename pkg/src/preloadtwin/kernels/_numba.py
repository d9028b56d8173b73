"""Numba kernel backend.

Scalar per-particle loops under @njit (no fastmath, single-threaded, so
results are reproducible run to run). Public functions carry the same
names, signatures, and semantics as _numpy.py; parity is covered by
tests/test_kernels.py.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .common import (
    BISECT_ITERS,
    G_CLAY,
    G_CRUST,
    G_DE2,
    G_DRAIN,
    G_EMB_H,
    G_GAMMA_W,
    G_GW,
    G_LAYER_THK,
    G_MU,
    G_NLAYERS,
    MAX_SERIES_TERMS,
    P_CH,
    P_CV,
    P_GAMMA_CL,
    P_GAMMA_EMB,
    P_M0,
    P_ML,
    P_SIGMA_C,
    P_SIGMA_L,
    ROLLOUT_DEGENERATE,
    ROLLOUT_OK,
    ROLLOUT_STRESS_BELIEF,
    ROLLOUT_STRESS_TRUTH,
    SMALL_TV,
)

NAME = "numba"


@njit(cache=True)
def _u_vertical(tv, tol):
    if tv < SMALL_TV:
        if tv <= 0.0:
            return 0.0
        return math.sqrt(4.0 * tv / math.pi)
    s = 0.0
    m = 0
    while m < MAX_SERIES_TERMS:
        big_m = (2 * m + 1) * math.pi / 2.0
        term = (2.0 / (big_m * big_m)) * math.exp(-(big_m * big_m) * tv)
        if term < tol:
            break
        s += term
        m += 1
    return 1.0 - s


@njit(cache=True)
def _u_at(cvw, chw, drain, de2, mu, t, tol):
    if t <= 0.0:
        return 0.0
    uv = _u_vertical(cvw * t / (drain * drain), tol)
    uh = -math.expm1(-8.0 * (chw * t / de2) / mu)
    return 1.0 - (1.0 - uv) * (1.0 - uh)


@njit(cache=True)
def _sigma0_at(gamma_cl, geom, depth):
    gw = geom[G_GW]
    gamma_w = geom[G_GAMMA_W]
    above = min(depth, gw)
    below = max(depth - gw, 0.0)
    return gamma_cl * above + (gamma_cl - gamma_w) * below


@njit(cache=True)
def _s_inf_one(prow, geom, total_height):
    n_layers = int(geom[G_NLAYERS])
    thk = geom[G_LAYER_THK]
    crust = geom[G_CRUST]
    load = prow[P_GAMMA_EMB] * total_height
    value = 0.0
    err = -1
    for i_layer in range(n_layers):
        zmid = crust + (i_layer + 0.5) * thk
        s0 = _sigma0_at(prow[P_GAMMA_CL], geom, zmid)
        sf = s0 + load
        if sf > prow[P_SIGMA_L] and err < 0:
            err = i_layer
        e1 = max(min(sf, prow[P_SIGMA_C]) - s0, 0.0) / prow[P_M0]
        e2 = max(sf - max(s0, prow[P_SIGMA_C]), 0.0) / prow[P_ML]
        value += thk * (e1 + e2)
    if err >= 0:
        value = math.nan
    return value, err


@njit(cache=True)
def _t_shift_one(cvw, chw, drain, de2, mu, s_old, s_new, t_add, tol):
    if s_new <= s_old:
        return 0.0
    target = _u_at(cvw, chw, drain, de2, mu, t_add, tol) * s_old / s_new
    lo = 0.0
    hi = t_add
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if _u_at(cvw, chw, drain, de2, mu, mid, tol) < target:
            lo = mid
        else:
            hi = mid
    return t_add - 0.5 * (lo + hi)


def u_vertical(tv, tol):
    tv = np.atleast_1d(np.asarray(tv, dtype=float))
    return _u_vertical_batch(tv, tol)


@njit(cache=True)
def _u_vertical_batch(tv, tol):
    out = np.empty(tv.shape[0])
    for i in range(tv.shape[0]):
        out[i] = _u_vertical(tv[i], tol)
    return out


def u_horizontal(th, mu):
    th = np.asarray(th, dtype=float)
    return -np.expm1(-8.0 * th / mu)


def u_each(cvw, chw, drain, de2, mu, times, tol):
    cvw = np.atleast_1d(np.asarray(cvw, dtype=float))
    chw = np.atleast_1d(np.asarray(chw, dtype=float))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    return _u_each(cvw, chw, drain, de2, mu, times, tol)


@njit(cache=True)
def _u_each(cvw, chw, drain, de2, mu, times, tol):
    out = np.empty(cvw.shape[0])
    for i in range(cvw.shape[0]):
        out[i] = _u_at(cvw[i], chw[i], drain, de2, mu, max(times[i], 0.0), tol)
    return out


def u_at(cvw, chw, drain, de2, mu, t, tol):
    cvw = np.atleast_1d(np.asarray(cvw, dtype=float))
    chw = np.atleast_1d(np.asarray(chw, dtype=float))
    times = np.full(cvw.shape, float(t))
    return _u_each(cvw, chw, drain, de2, mu, times, tol)


def u_curve(cvw, chw, drain, de2, mu, ts, tol):
    cvw = np.atleast_1d(np.asarray(cvw, dtype=float))
    chw = np.atleast_1d(np.asarray(chw, dtype=float))
    ts = np.asarray(ts, dtype=float)
    return _u_curve(cvw, chw, drain, de2, mu, ts, tol)


@njit(cache=True)
def _u_curve(cvw, chw, drain, de2, mu, ts, tol):
    out = np.empty((cvw.shape[0], ts.shape[0]))
    for i in range(cvw.shape[0]):
        for j in range(ts.shape[0]):
            out[i, j] = _u_at(cvw[i], chw[i], drain, de2, mu, max(ts[j], 0.0), tol)
    return out


def sigma0_at(gamma_cl, geom, depth):
    gamma_cl = np.asarray(gamma_cl, dtype=float)
    gw = geom[G_GW]
    gamma_w = geom[G_GAMMA_W]
    above = min(depth, gw)
    below = max(depth - gw, 0.0)
    return gamma_cl * above + (gamma_cl - gamma_w) * below


def s_inf_batch(P, geom, total_height):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return _s_inf_batch(P, geom, float(total_height))


@njit(cache=True)
def _s_inf_batch(P, geom, total_height):
    n = P.shape[0]
    values = np.empty(n)
    errs = np.empty(n, dtype=np.int64)
    for i in range(n):
        v, e = _s_inf_one(P[i], geom, total_height)
        values[i] = v
        errs[i] = e
    return values, errs


def t_shift_batch(cvw, chw, drain, de2, mu, s_old, s_new, t_add, tol):
    cvw = np.atleast_1d(np.asarray(cvw, dtype=float))
    chw = np.atleast_1d(np.asarray(chw, dtype=float))
    s_old = np.atleast_1d(np.asarray(s_old, dtype=float))
    s_new = np.atleast_1d(np.asarray(s_new, dtype=float))
    return _t_shift_batch(cvw, chw, drain, de2, mu, s_old, s_new, float(t_add), tol)


@njit(cache=True)
def _t_shift_batch(cvw, chw, drain, de2, mu, s_old, s_new, t_add, tol):
    n = cvw.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = _t_shift_one(cvw[i], chw[i], drain, de2, mu, s_old[i], s_new[i], t_add, tol)
    return out


def trajectory_batch(P, geom, h0, t_add, h_add, t_hi, tol):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return _trajectory_batch(P, geom, float(h0), float(t_add), float(h_add), int(t_hi), tol)


@njit(cache=True)
def _trajectory_batch(P, geom, h0, t_add, h_add, t_hi, tol):
    n = P.shape[0]
    drain = geom[G_DRAIN]
    de2 = geom[G_DE2]
    mu = geom[G_MU]
    emb_h = geom[G_EMB_H]

    s_old, err = _s_inf_batch(P, geom, emb_h + h0)
    has_inc = math.isfinite(t_add) and h_add > 0.0
    s_new = s_old.copy()
    tsh = np.zeros(n)
    if has_inc:
        s_new, err2 = _s_inf_batch(P, geom, emb_h + h0 + h_add)
        for i in range(n):
            if err[i] < 0:
                err[i] = err2[i]
            tsh[i] = _t_shift_one(
                P[i, P_CV], P[i, P_CH], drain, de2, mu, s_old[i], s_new[i], t_add, tol
            )

    zc = geom[G_CRUST] + geom[G_CLAY] / 2.0
    T = t_hi + 1
    S = np.empty((n, T))
    OCR = np.empty((n, T))
    U_eff = np.empty((n, T))
    for i in range(n):
        sigma0 = _sigma0_at(P[i, P_GAMMA_CL], geom, zc)
        preload = P[i, P_GAMMA_EMB] * (emb_h + h0)
        perm = P[i, P_GAMMA_EMB] * emb_h
        inc = P[i, P_GAMMA_EMB] * (h_add if has_inc else 0.0)
        for t in range(T):
            ft = float(t)
            u_base = _u_at(P[i, P_CV], P[i, P_CH], drain, de2, mu, ft, tol)
            if has_inc and ft >= t_add:
                ue = _u_at(P[i, P_CV], P[i, P_CH], drain, de2, mu, max(ft - tsh[i], 0.0), tol)
                du = _u_at(P[i, P_CV], P[i, P_CH], drain, de2, mu, ft - t_add, tol)
                s_t = ue * s_new[i]
            else:
                ue = u_base
                du = 0.0
                s_t = ue * s_old[i]
            U_eff[i, t] = ue
            S[i, t] = s_t
            OCR[i, t] = (sigma0 + u_base * preload + du * inc) / (sigma0 + u_base * perm)
    return S, OCR, U_eff, s_old, s_new, tsh, err


@njit(cache=True)
def _s_tmax_cand_one(prow, geom, h0, t_add, h_add, t_eval, tol):
    drain = geom[G_DRAIN]
    de2 = geom[G_DE2]
    mu = geom[G_MU]
    emb_h = geom[G_EMB_H]
    s_old, err = _s_inf_one(prow, geom, emb_h + h0)
    if h_add <= 0.0 or not math.isfinite(t_add) or t_eval < t_add:
        return _u_at(prow[P_CV], prow[P_CH], drain, de2, mu, t_eval, tol) * s_old, err
    s_new, err2 = _s_inf_one(prow, geom, emb_h + h0 + h_add)
    if err < 0:
        err = err2
    tsh = _t_shift_one(prow[P_CV], prow[P_CH], drain, de2, mu, s_old, s_new, t_add, tol)
    val = _u_at(prow[P_CV], prow[P_CH], drain, de2, mu, max(t_eval - tsh, 0.0), tol) * s_new
    return val, err


def s_tmax_candidates(P, geom, h0, t_add, h_add, t_eval, tol):
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return _s_tmax_candidates(P, geom, float(h0), float(t_add), float(h_add), float(t_eval), tol)


@njit(cache=True)
def _s_tmax_candidates(P, geom, h0, t_add, h_add, t_eval, tol):
    n = P.shape[0]
    vals = np.empty(n)
    errs = np.empty(n, dtype=np.int64)
    for i in range(n):
        v, e = _s_tmax_cand_one(P[i], geom, h0, t_add, h_add, t_eval, tol)
        vals[i] = v
        errs[i] = e
    return vals, errs


def resample_indices(weights, uniforms):
    weights = np.asarray(weights, dtype=float)
    uniforms = np.asarray(uniforms, dtype=float)
    return _resample_indices(weights, uniforms)


@njit(cache=True)
def _resample_indices(weights, uniforms):
    n = weights.shape[0]
    cum = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc += weights[i]
        cum[i] = acc
    total = cum[n - 1]
    out = np.empty(uniforms.shape[0], dtype=np.int64)
    for j in range(uniforms.shape[0]):
        out[j] = np.searchsorted(cum, uniforms[j] * total, side="right")
    return out


@njit(cache=True)
def _systematic_indices(weights, u0):
    n = weights.shape[0]
    cum = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc += weights[i]
        cum[i] = acc
    total = cum[n - 1]
    out = np.empty(n, dtype=np.int64)
    for j in range(n):
        out[j] = np.searchsorted(cum, (u0 + j) / n * total, side="right")
    return out


def systematic_indices(weights, u0):
    weights = np.asarray(weights, dtype=float)
    return _systematic_indices(weights, float(u0))


def truth_summary(p_row, geom, h0, t_add, h_add, t_max, delay_cap, tol, s_target, cmp_residual):
    p_row = np.asarray(p_row, dtype=float).reshape(-1)
    return _truth_summary(
        p_row, geom, float(h0), float(t_add), float(h_add),
        int(t_max), int(delay_cap), tol, float(s_target), int(cmp_residual),
    )


@njit(cache=True)
def _truth_summary(p_row, geom, h0, t_add, h_add, t_max, delay_cap, tol, s_target, cmp_residual):
    drain = geom[G_DRAIN]
    de2 = geom[G_DE2]
    mu = geom[G_MU]
    emb_h = geom[G_EMB_H]
    cvw = p_row[P_CV]
    chw = p_row[P_CH]

    s_old, err = _s_inf_one(p_row, geom, emb_h + h0)
    if err >= 0:
        return ROLLOUT_STRESS_TRUTH, math.nan, math.nan, 0, 0
    has_inc = math.isfinite(t_add) and h_add > 0.0
    s_new = s_old
    tsh = 0.0
    inc = 0.0
    if has_inc:
        s_new, err2 = _s_inf_one(p_row, geom, emb_h + h0 + h_add)
        if err2 >= 0:
            return ROLLOUT_STRESS_TRUTH, math.nan, math.nan, 0, 0
        tsh = _t_shift_one(cvw, chw, drain, de2, mu, s_old, s_new, t_add, tol)
        inc = p_row[P_GAMMA_EMB] * h_add

    ftm = float(t_max)
    if has_inc and ftm >= t_add:
        s_tmax = _u_at(cvw, chw, drain, de2, mu, max(ftm - tsh, 0.0), tol) * s_new
        du = _u_at(cvw, chw, drain, de2, mu, ftm - t_add, tol)
    else:
        s_tmax = _u_at(cvw, chw, drain, de2, mu, ftm, tol) * s_old
        du = 0.0
    zc = geom[G_CRUST] + geom[G_CLAY] / 2.0
    sigma0 = _sigma0_at(p_row[P_GAMMA_CL], geom, zc)
    preload = p_row[P_GAMMA_EMB] * (emb_h + h0)
    perm = p_row[P_GAMMA_EMB] * emb_h
    u_base = _u_at(cvw, chw, drain, de2, mu, ftm, tol)
    ocr_tmax = (sigma0 + u_base * preload + du * inc) / (sigma0 + u_base * perm)

    compliant = (s_tmax <= s_target) if cmp_residual else (s_tmax >= s_target)
    delay = 0
    never = 0
    if not compliant:
        delay = delay_cap
        never = 1
        if cmp_residual == 0:
            for w in range(t_max, t_max + delay_cap + 1):
                fw = float(w)
                if has_inc and fw >= t_add:
                    s_w = _u_at(cvw, chw, drain, de2, mu, max(fw - tsh, 0.0), tol) * s_new
                else:
                    s_w = _u_at(cvw, chw, drain, de2, mu, fw, tol) * s_old
                if s_w >= s_target:
                    delay = w - t_max
                    never = 0
                    break
    return ROLLOUT_OK, s_tmax, ocr_tmax, delay, never


def bu_rollout(
    pt, P, geom, xi, us, sigma_eps, h0, cov_th, p_th, grid,
    s_target, ocr_target, t_max, delay_cap, tol, gate_std, cmp_residual, prob_printed,
    resample_mode, ess_threshold,
):
    """One belief-updated rollout under the threshold heuristic.

    pt: (9,) ground-truth particle pack; P: (n, 9) belief particle packs;
    xi: (t_max,) standard-normal measurement noise; us: (t_max, n)
    resampling uniforms (row t-1 is consumed by week t whether or not a
    resample happens, mirroring the Belief.update stream discipline).
    resample_mode: 0 multinomial, 1 systematic, 2 ess_multinomial,
    3 ess_systematic. Belief updates stop once the decision is made
    (nothing downstream reads them).

    Returns (status, decision_week, h_add, grid_exhausted, s_true_tmax,
    ocr_true_tmax, delay_weeks, never_reached, gate_value_at_decision,
    prob_at_decision).
    """
    pt = np.asarray(pt, dtype=float).reshape(-1)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    return _bu_rollout(
        pt, P, geom,
        np.asarray(xi, dtype=float), np.asarray(us, dtype=float),
        float(sigma_eps), float(h0), float(cov_th), float(p_th),
        np.asarray(grid, dtype=float), float(s_target), float(ocr_target),
        int(t_max), int(delay_cap), tol,
        int(gate_std), int(cmp_residual), int(prob_printed),
        int(resample_mode), float(ess_threshold),
    )


@njit(cache=True)
def _bu_rollout(
    pt, P, geom, xi, us, sigma_eps, h0, cov_th, p_th, grid,
    s_target, ocr_target, t_max, delay_cap, tol, gate_std, cmp_residual, prob_printed,
    resample_mode, ess_threshold,
):
    n = P.shape[0]
    drain = geom[G_DRAIN]
    de2 = geom[G_DE2]
    mu = geom[G_MU]
    emb_h = geom[G_EMB_H]

    st_old, err_t = _s_inf_one(pt, geom, emb_h + h0)
    if err_t >= 0:
        return (ROLLOUT_STRESS_TRUTH, -1, 0.0, 0, math.nan, math.nan, 0, 0, math.nan, math.nan)

    s_old_c = np.empty(n)
    s_tmax_c = np.empty(n)
    for i in range(n):
        v, e = _s_inf_one(P[i], geom, emb_h + h0)
        if e >= 0:
            return (
                ROLLOUT_STRESS_BELIEF, -1, 0.0, 0, math.nan, math.nan, 0, 0, math.nan, math.nan,
            )
        s_old_c[i] = v
        s_tmax_c[i] = _u_at(P[i, P_CV], P[i, P_CH], drain, de2, mu, float(t_max), tol) * v
    Pc = P.copy()

    ll = np.empty(n)
    w = np.full(n, 1.0 / n)
    P_buf = np.empty_like(Pc)
    so_buf = np.empty(n)
    st_buf = np.empty(n)

    decision_week = -1
    h_add = 0.0
    t_add = math.inf
    grid_flag = 0
    cov_at_dec = math.nan
    prob_at_dec = math.nan

    for t in range(1, t_max + 1):
        ft = float(t)
        u_true = _u_at(pt[P_CV], pt[P_CH], drain, de2, mu, ft, tol)
        z = u_true * st_old + sigma_eps * xi[t - 1]

        mx = -math.inf
        for i in range(n):
            s_pred = _u_at(Pc[i, P_CV], Pc[i, P_CH], drain, de2, mu, ft, tol) * s_old_c[i]
            d = (z - s_pred) / sigma_eps
            ll[i] = -0.5 * d * d
            if ll[i] > mx:
                mx = ll[i]
        if not math.isfinite(mx):
            return (ROLLOUT_DEGENERATE, -1, 0.0, 0, math.nan, math.nan, 0, 0, math.nan, mx)
        total = 0.0
        for i in range(n):
            w[i] = w[i] * math.exp(ll[i] - mx)
            total += w[i]
        if total <= 0.0 or not math.isfinite(total):
            return (ROLLOUT_DEGENERATE, -1, 0.0, 0, math.nan, math.nan, 0, 0, math.nan, mx)
        sum_sq = 0.0
        for i in range(n):
            w[i] /= total
            sum_sq += w[i] * w[i]
        ess = 1.0 / sum_sq

        do_resample = resample_mode <= 1 or ess < ess_threshold * n
        if do_resample:
            if resample_mode == 1 or resample_mode == 3:
                idx = _systematic_indices(w, us[t - 1][0])
            else:
                idx = _resample_indices(w, us[t - 1])
            for j in range(n):
                k = idx[j]
                for c in range(P.shape[1]):
                    P_buf[j, c] = Pc[k, c]
                so_buf[j] = s_old_c[k]
                st_buf[j] = s_tmax_c[k]
            Pc, P_buf = P_buf, Pc
            s_old_c, so_buf = so_buf, s_old_c
            s_tmax_c, st_buf = st_buf, s_tmax_c
            for i in range(n):
                w[i] = 1.0 / n

        mean = 0.0
        for i in range(n):
            mean += w[i] * s_tmax_c[i]
        var = 0.0
        for i in range(n):
            dv = s_tmax_c[i] - mean
            var += w[i] * dv * dv
        sd = math.sqrt(var)
        gate_val = sd if gate_std == 1 else sd / mean
        if gate_val < cov_th:
            decision_week = t
            cov_at_dec = gate_val
            p = 0.0
            for i in range(n):
                if prob_printed == 1 or cmp_residual == 1:
                    if s_tmax_c[i] > s_target:
                        p += w[i]
                else:
                    if s_tmax_c[i] < s_target:
                        p += w[i]
            prob_at_dec = p
            if p > p_th:
                chosen = grid[grid.shape[0] - 1]
                grid_flag = 1
                for gi in range(grid.shape[0]):
                    a = grid[gi]
                    p_a = 0.0
                    failed = False
                    for i in range(n):
                        cand, e = _s_tmax_cand_one(Pc[i], geom, h0, ft, a, float(t_max), tol)
                        if e >= 0:
                            failed = True
                            break
                        if prob_printed == 1 or cmp_residual == 1:
                            if cand > s_target:
                                p_a += w[i]
                        else:
                            if cand < s_target:
                                p_a += w[i]
                    if failed:
                        return (
                            ROLLOUT_STRESS_BELIEF, t, a, 0,
                            math.nan, math.nan, 0, 0, gate_val, p,
                        )
                    if p_a <= p_th:
                        chosen = a
                        grid_flag = 0
                        break
                h_add = chosen
                t_add = ft
            break

    status, s_true_tmax, ocr_true_tmax, delay, never = _truth_summary(
        pt, geom, h0, t_add, h_add, t_max, delay_cap, tol, s_target, cmp_residual
    )
    return (
        status, decision_week, h_add, grid_flag,
        s_true_tmax, ocr_true_tmax, delay, never, cov_at_dec, prob_at_dec,
    )
