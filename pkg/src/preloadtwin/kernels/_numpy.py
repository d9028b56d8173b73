"""Pure-numpy kernel backend.

Vectorized over particles; the reference implementation the numba backend
is parity-tested against. Each public function mirrors a function of the
same name in _numba.py.
"""

from __future__ import annotations

import math

import numpy as np

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

NAME = "numpy"


def u_vertical(tv, tol):
    """Average vertical degree of consolidation for time factor(s) tv."""
    tv = np.atleast_1d(np.asarray(tv, dtype=float))
    out = np.zeros_like(tv)
    small = tv < SMALL_TV
    out[small] = np.sqrt(4.0 * np.maximum(tv[small], 0.0) / math.pi)
    rest = np.where(~small)[0]
    if rest.size:
        t = tv[rest]
        s = np.zeros_like(t)
        active = np.ones(t.shape, dtype=bool)
        m = 0
        while np.any(active) and m < MAX_SERIES_TERMS:
            big_m = (2 * m + 1) * math.pi / 2.0
            term = (2.0 / (big_m * big_m)) * np.exp(-(big_m * big_m) * t)
            active &= term >= tol
            s = np.where(active, s + term, s)
            m += 1
        out[rest] = 1.0 - s
    return out


def u_horizontal(th, mu):
    """Radial (drain) degree of consolidation for time factor(s) th."""
    th = np.asarray(th, dtype=float)
    return -np.expm1(-8.0 * th / mu)


def u_each(cvw, chw, drain, de2, mu, times, tol):
    """Combined degree, one (possibly different) time per particle."""
    cvw = np.atleast_1d(np.asarray(cvw, dtype=float))
    chw = np.atleast_1d(np.asarray(chw, dtype=float))
    times = np.maximum(np.atleast_1d(np.asarray(times, dtype=float)), 0.0)
    uv = u_vertical(cvw * times / (drain * drain), tol)
    uh = u_horizontal(chw * times / de2, mu)
    u = 1.0 - (1.0 - uv) * (1.0 - uh)
    u[times == 0.0] = 0.0
    return u


def u_at(cvw, chw, drain, de2, mu, t, tol):
    """Combined degree at a single week t for per-particle cv/ch."""
    cvw = np.atleast_1d(np.asarray(cvw, dtype=float))
    times = np.full(cvw.shape, float(t))
    return u_each(cvw, chw, drain, de2, mu, times, tol)


def u_curve(cvw, chw, drain, de2, mu, ts, tol):
    """Combined degree on a shared time grid: (n_particles, n_times)."""
    cvw = np.atleast_1d(np.asarray(cvw, dtype=float))
    ts = np.asarray(ts, dtype=float)
    out = np.empty((cvw.shape[0], ts.shape[0]))
    for j in range(ts.shape[0]):
        out[:, j] = u_at(cvw, chw, drain, de2, mu, float(ts[j]), tol)
    return out


def sigma0_at(gamma_cl, geom, depth):
    """Initial vertical effective stress at a depth below ground surface."""
    gamma_cl = np.asarray(gamma_cl, dtype=float)
    gw = geom[G_GW]
    gamma_w = geom[G_GAMMA_W]
    above = min(depth, gw)
    below = max(depth - gw, 0.0)
    return gamma_cl * above + (gamma_cl - gamma_w) * below


def s_inf_batch(P, geom, total_height):
    """Ultimate settlement per particle for fill of total_height meters.

    Returns (values, err_layer): err_layer[i] is the first sublayer whose
    final stress exceeds sigma_L (value then NaN), or -1.
    """
    P = np.atleast_2d(P)
    n = P.shape[0]
    n_layers = int(geom[G_NLAYERS])
    thk = geom[G_LAYER_THK]
    crust = geom[G_CRUST]

    load = P[:, P_GAMMA_EMB] * total_height
    values = np.zeros(n)
    err_layer = np.full(n, -1, dtype=np.int64)
    for i_layer in range(n_layers):
        zmid = crust + (i_layer + 0.5) * thk
        s0 = sigma0_at(P[:, P_GAMMA_CL], geom, zmid)
        sf = s0 + load
        bad = (sf > P[:, P_SIGMA_L]) & (err_layer < 0)
        err_layer[bad] = i_layer
        e1 = np.maximum(np.minimum(sf, P[:, P_SIGMA_C]) - s0, 0.0) / P[:, P_M0]
        e2 = np.maximum(sf - np.maximum(s0, P[:, P_SIGMA_C]), 0.0) / P[:, P_ML]
        values += thk * (e1 + e2)
    values[err_layer >= 0] = np.nan
    return values, err_layer


def t_shift_batch(cvw, chw, drain, de2, mu, s_old, s_new, t_add, tol):
    """Clock shift making settlement continuous across a load increment.

    Solves U(t_add - t_shift) * s_new = U(t_add) * s_old per particle by
    bisection on x = t_add - t_shift in [0, t_add].
    """
    cvw = np.atleast_1d(np.asarray(cvw, dtype=float))
    chw = np.atleast_1d(np.asarray(chw, dtype=float))
    s_old = np.atleast_1d(np.asarray(s_old, dtype=float))
    s_new = np.atleast_1d(np.asarray(s_new, dtype=float))
    target = u_at(cvw, chw, drain, de2, mu, t_add, tol) * s_old / s_new
    lo = np.zeros_like(target)
    hi = np.full_like(target, float(t_add))
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        u_mid = u_each(cvw, chw, drain, de2, mu, mid, tol)
        go_up = u_mid < target
        lo = np.where(go_up, mid, lo)
        hi = np.where(go_up, hi, mid)
    out = float(t_add) - 0.5 * (lo + hi)
    out[s_new <= s_old] = 0.0
    return out


def trajectory_batch(P, geom, h0, t_add, h_add, t_hi, tol):
    """Weekly settlement/OCR series per particle from week 0 through t_hi.

    t_add is np.inf when no increment is scheduled. Returns
    (S, OCR, U_eff, s_inf_old, s_inf_new, t_shift, err_layer) where the
    matrices are (n, t_hi + 1).
    """
    P = np.atleast_2d(P)
    n = P.shape[0]
    drain = geom[G_DRAIN]
    de2 = geom[G_DE2]
    mu = geom[G_MU]
    emb_h = geom[G_EMB_H]
    cvw = P[:, P_CV]
    chw = P[:, P_CH]

    s_old, err = s_inf_batch(P, geom, emb_h + h0)
    has_inc = math.isfinite(t_add) and h_add > 0.0
    if has_inc:
        s_new, err2 = s_inf_batch(P, geom, emb_h + h0 + h_add)
        err = np.where(err >= 0, err, err2)
        tsh = t_shift_batch(cvw, chw, drain, de2, mu, s_old, s_new, t_add, tol)
    else:
        s_new = s_old.copy()
        tsh = np.zeros(n)

    zc = geom[G_CRUST] + geom[G_CLAY] / 2.0
    sigma0 = sigma0_at(P[:, P_GAMMA_CL], geom, zc)
    preload = P[:, P_GAMMA_EMB] * (emb_h + h0)
    perm = P[:, P_GAMMA_EMB] * emb_h
    inc = P[:, P_GAMMA_EMB] * (h_add if has_inc else 0.0)

    T = int(t_hi) + 1
    S = np.empty((n, T))
    OCR = np.empty((n, T))
    U_eff = np.empty((n, T))
    for t in range(T):
        u_base = u_at(cvw, chw, drain, de2, mu, float(t), tol)
        if has_inc and t >= t_add:
            ue = u_each(cvw, chw, drain, de2, mu, float(t) - tsh, tol)
            du = u_at(cvw, chw, drain, de2, mu, float(t) - t_add, tol)
            s_t = ue * s_new
        else:
            ue = u_base
            du = np.zeros(n)
            s_t = ue * s_old
        U_eff[:, t] = ue
        S[:, t] = s_t
        OCR[:, t] = (sigma0 + u_base * preload + du * inc) / (sigma0 + u_base * perm)
    return S, OCR, U_eff, s_old, s_new, tsh, err


def s_tmax_candidates(P, geom, h0, t_add, h_add, t_eval, tol):
    """Settlement at t_eval per particle under an increment at t_add.

    Used by the decision sweep and what-if queries; avoids building the
    full weekly series.
    """
    P = np.atleast_2d(P)
    drain = geom[G_DRAIN]
    de2 = geom[G_DE2]
    mu = geom[G_MU]
    emb_h = geom[G_EMB_H]
    cvw = P[:, P_CV]
    chw = P[:, P_CH]
    s_old, err = s_inf_batch(P, geom, emb_h + h0)
    if h_add <= 0.0 or not math.isfinite(t_add) or t_eval < t_add:
        vals = u_at(cvw, chw, drain, de2, mu, float(t_eval), tol) * s_old
        return vals, err
    s_new, err2 = s_inf_batch(P, geom, emb_h + h0 + h_add)
    err = np.where(err >= 0, err, err2)
    tsh = t_shift_batch(cvw, chw, drain, de2, mu, s_old, s_new, t_add, tol)
    vals = u_each(cvw, chw, drain, de2, mu, float(t_eval) - tsh, tol) * s_new
    return vals, err


def resample_indices(weights, uniforms):
    """Multinomial resampling: inverse-CDF lookup of pre-drawn uniforms."""
    cum = np.cumsum(weights)
    total = cum[-1]
    return np.searchsorted(cum, uniforms * total, side="right").astype(np.int64)


def systematic_indices(weights, u0):
    """Systematic resampling from one uniform offset."""
    n = weights.shape[0]
    cum = np.cumsum(weights)
    positions = (u0 + np.arange(n)) / n * cum[-1]
    return np.searchsorted(cum, positions, side="right").astype(np.int64)


def truth_summary(p_row, geom, h0, t_add, h_add, t_max, delay_cap, tol, s_target, cmp_residual):
    """Final-state summary of one ground-truth trajectory.

    Returns (status, s_tmax, ocr_tmax, delay_weeks, never_reached).
    delay_weeks counts full weeks past t_max until the settlement target is
    achieved (capped at delay_cap; never_reached set when capped).
    """
    P = np.atleast_2d(np.asarray(p_row, dtype=float))
    t_max = int(t_max)
    delay_cap = int(delay_cap)
    S, OCR, _, _, _, _, err = trajectory_batch(P, geom, h0, t_add, h_add, t_max + delay_cap, tol)
    if err[0] >= 0:
        return ROLLOUT_STRESS_TRUTH, math.nan, math.nan, 0, 0
    s_tmax = float(S[0, t_max])
    ocr_tmax = float(OCR[0, t_max])
    compliant = (s_tmax <= s_target) if cmp_residual else (s_tmax >= s_target)
    delay = 0
    never = 0
    if not compliant:
        delay = delay_cap
        never = 1
        if not cmp_residual:
            for w in range(t_max, t_max + delay_cap + 1):
                if S[0, w] >= s_target:
                    delay = w - t_max
                    never = 0
                    break
    return ROLLOUT_OK, s_tmax, ocr_tmax, delay, never


def bu_rollout(
    pt,
    P,
    geom,
    xi,
    us,
    sigma_eps,
    h0,
    cov_th,
    p_th,
    grid,
    s_target,
    ocr_target,
    t_max,
    delay_cap,
    tol,
    gate_std,
    cmp_residual,
    prob_printed,
    resample_mode,
    ess_threshold,
):
    """One belief-updated rollout; see _numba.bu_rollout for the contract."""
    t_max = int(t_max)
    n = P.shape[0]
    drain = geom[G_DRAIN]
    de2 = geom[G_DE2]
    mu = geom[G_MU]
    emb_h = geom[G_EMB_H]

    st_old, err_t = s_inf_batch(pt.reshape(1, -1), geom, emb_h + h0)
    if err_t[0] >= 0:
        return (ROLLOUT_STRESS_TRUTH, -1, 0.0, 0, math.nan, math.nan, 0, 0, math.nan, math.nan)
    st_old = float(st_old[0])

    s_old_c, err_b = s_inf_batch(P, geom, emb_h + h0)
    if np.any(err_b >= 0):
        return (ROLLOUT_STRESS_BELIEF, -1, 0.0, 0, math.nan, math.nan, 0, 0, math.nan, math.nan)
    s_tmax_c = u_at(P[:, P_CV], P[:, P_CH], drain, de2, mu, float(t_max), tol) * s_old_c

    Pc = P.copy()
    s_old_c = s_old_c.copy()
    s_tmax_c = s_tmax_c.copy()
    w = np.full(n, 1.0 / n)

    decision_week = -1
    h_add = 0.0
    t_add = math.inf
    grid_flag = 0
    cov_at_dec = math.nan
    prob_at_dec = math.nan

    for t in range(1, t_max + 1):
        u_true = u_at(pt[P_CV : P_CV + 1], pt[P_CH : P_CH + 1], drain, de2, mu, float(t), tol)[0]
        z = u_true * st_old + sigma_eps * xi[t - 1]

        s_pred = u_at(Pc[:, P_CV], Pc[:, P_CH], drain, de2, mu, float(t), tol) * s_old_c
        d = (z - s_pred) / sigma_eps
        ll = -0.5 * d * d
        mx = np.max(ll)
        if not math.isfinite(mx):
            return (ROLLOUT_DEGENERATE, -1, 0.0, 0, math.nan, math.nan, 0, 0, math.nan, float(mx))
        w = w * np.exp(ll - mx)
        total = float(np.sum(w))
        if total <= 0.0 or not math.isfinite(total):
            return (ROLLOUT_DEGENERATE, -1, 0.0, 0, math.nan, math.nan, 0, 0, math.nan, float(mx))
        w = w / total

        ess = 1.0 / float(np.sum(w * w))
        do_resample = resample_mode in (0, 1) or ess < ess_threshold * n
        if do_resample:
            if resample_mode in (1, 3):
                idx = systematic_indices(w, float(us[t - 1][0]))
            else:
                idx = resample_indices(w, us[t - 1])
            Pc = Pc[idx]
            s_old_c = s_old_c[idx]
            s_tmax_c = s_tmax_c[idx]
            w = np.full(n, 1.0 / n)

        mean = float(np.sum(w * s_tmax_c))
        var = float(np.sum(w * (s_tmax_c - mean) ** 2))
        sd = math.sqrt(var)
        gate_val = sd if gate_std else sd / mean
        if gate_val < cov_th:
            decision_week = t
            cov_at_dec = gate_val
            if prob_printed or cmp_residual:
                p = float(np.sum(w[s_tmax_c > s_target]))
            else:
                p = float(np.sum(w[s_tmax_c < s_target]))
            prob_at_dec = p
            if p > p_th:
                chosen = grid[-1]
                grid_flag = 1
                for a in grid:
                    cand, err_c = s_tmax_candidates(
                        Pc, geom, h0, float(t), float(a), float(t_max), tol
                    )
                    if np.any(err_c >= 0):
                        return (
                            ROLLOUT_STRESS_BELIEF, t, float(a), 0,
                            math.nan, math.nan, 0, 0, gate_val, p,
                        )
                    if prob_printed or cmp_residual:
                        p_a = float(np.sum(w[cand > s_target]))
                    else:
                        p_a = float(np.sum(w[cand < s_target]))
                    if p_a <= p_th:
                        chosen = a
                        grid_flag = 0
                        break
                h_add = float(chosen)
                t_add = float(t)
            break

    status, s_true_tmax, ocr_true_tmax, delay, never = truth_summary(
        pt, geom, h0, t_add, h_add, t_max, delay_cap, tol, s_target, cmp_residual
    )
    return (
        status,
        decision_week,
        h_add,
        grid_flag,
        s_true_tmax,
        ocr_true_tmax,
        delay,
        never,
        cov_at_dec,
        prob_at_dec,
    )
