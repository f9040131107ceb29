"""1D Sod prototype: componentwise vs characteristic-wise split-flux interpolation."""
import json
import time

import numpy as np

from wcnsflow.riemann import RiemannState, solve_riemann
from wcnsflow.state import GasModel, conserved_from_primitive, inviscid_flux, primitive_from_conserved
from wcnsflow.wcns import _edge_value, edge_to_node_derivative, interpolate_line_edges

GAS = GasModel()
G = GAS.gamma
H = 5  # halo width
N = 200
HX = 1.0 / N
T_END = 0.2
CFL = 0.4


def matvec5(m, x):
    out = np.empty_like(x)
    for i in range(5):
        acc = m[i, 0] * x[0]
        for j in range(1, 5):
            acc = acc + m[i, j] * x[j]
        out[i] = acc
    return out


def roe_frame(wl, wr, axis=0):
    """Left/right eigenvector matrices (5,5,...) at edges from flanking primitives."""
    n = axis
    t1 = (axis + 1) % 3
    t2 = (axis + 2) % 3
    sl = np.sqrt(wl[0])
    sr = np.sqrt(wr[0])
    inv = 1.0 / (sl + sr)
    vel = [(sl * wl[1 + a] + sr * wr[1 + a]) * inv for a in range(3)]
    gg = G / (G - 1.0)
    hl = gg * wl[4] / wl[0] + 0.5 * (wl[1] ** 2 + wl[2] ** 2 + wl[3] ** 2)
    hr = gg * wr[4] / wr[0] + 0.5 * (wr[1] ** 2 + wr[2] ** 2 + wr[3] ** 2)
    hm = (sl * hl + sr * hr) * inv
    q2 = vel[0] ** 2 + vel[1] ** 2 + vel[2] ** 2
    a2 = (G - 1.0) * (hm - 0.5 * q2)
    a = np.sqrt(a2)
    ia = 1.0 / a
    un = vel[n]
    ut1 = vel[t1]
    ut2 = vel[t2]
    b1 = (G - 1.0) / a2
    b2 = 0.5 * b1 * q2

    shape = (5, 5) + un.shape
    R = np.zeros(shape)
    L = np.zeros(shape)

    # right eigenvectors, columns: un-a, entropy, shear t1, shear t2, un+a
    R[0, 0] = 1.0
    R[1 + n, 0] = un - a
    R[1 + t1, 0] = ut1
    R[1 + t2, 0] = ut2
    R[4, 0] = hm - un * a
    R[0, 1] = 1.0
    R[1 + n, 1] = un
    R[1 + t1, 1] = ut1
    R[1 + t2, 1] = ut2
    R[4, 1] = 0.5 * q2
    R[1 + t1, 2] = 1.0
    R[4, 2] = ut1
    R[1 + t2, 3] = 1.0
    R[4, 3] = ut2
    R[0, 4] = 1.0
    R[1 + n, 4] = un + a
    R[1 + t1, 4] = ut1
    R[1 + t2, 4] = ut2
    R[4, 4] = hm + un * a

    L[0, 0] = 0.5 * (b2 + un * ia)
    L[0, 1 + n] = -0.5 * (b1 * un + ia)
    L[0, 1 + t1] = -0.5 * b1 * ut1
    L[0, 1 + t2] = -0.5 * b1 * ut2
    L[0, 4] = 0.5 * b1
    L[1, 0] = 1.0 - b2
    L[1, 1 + n] = b1 * un
    L[1, 1 + t1] = b1 * ut1
    L[1, 1 + t2] = b1 * ut2
    L[1, 4] = -b1
    L[2, 0] = -ut1
    L[2, 1 + t1] = 1.0
    L[3, 0] = -ut2
    L[3, 1 + t2] = 1.0
    L[4, 0] = 0.5 * (b2 - un * ia)
    L[4, 1 + n] = -0.5 * (b1 * un - ia)
    L[4, 1 + t1] = -0.5 * b1 * ut1
    L[4, 1 + t2] = -0.5 * b1 * ut2
    L[4, 4] = 0.5 * b1
    return L, R


def fill_ghosts(q):
    q[:, :H] = q[:, H:H + 1]
    q[:, -H:] = q[:, -H - 1:-H]


def residual(q, mode):
    w = primitive_from_conserved(q, GAS)
    lam = float(np.max(np.abs(w[1, H:-H]) + np.sqrt(G * w[4, H:-H] / w[0, H:-H])))
    f = inviscid_flux(w, 0, q=q)
    fp = 0.5 * (f + lam * q)
    fm = 0.5 * (f - lam * q)
    if mode == "component":
        plus = interpolate_line_edges(fp, side="left")
        minus = interpolate_line_edges(fm, side="right")
        fhat = plus + minus
    else:
        ne = q.shape[-1] - 5
        wl = w[:, 2:2 + ne]
        wr = w[:, 3:3 + ne]
        Lm, Rm = roe_frame(wl, wr)
        ctr_p = fp[:, 2:2 + ne]
        dwin_p = [fp[:, k:k + ne] - ctr_p for k in range(5)]
        pp = [matvec5(Lm, d) for d in dwin_p]
        chp = _edge_value(pp[0], pp[1], pp[2], pp[3], pp[4], 1e-6, True)
        ctr_m = fm[:, 3:3 + ne]
        dwin_m = [fm[:, 5 - k:5 - k + ne] - ctr_m for k in range(5)]
        pm = [matvec5(Lm, d) for d in dwin_m]
        chm = _edge_value(pm[0], pm[1], pm[2], pm[3], pm[4], 1e-6, True)
        fhat = ctr_p + ctr_m + matvec5(Rm, chp + chm)
    d = edge_to_node_derivative(fhat, HX)
    r = np.zeros_like(q)
    r[:, H:-H] = -d
    return r, lam


def run(mode):
    x = (np.arange(N) + 0.5) * HX
    wint = np.zeros((5, N))
    wint[0] = np.where(x < 0.5, 1.0, 0.125)
    wint[4] = np.where(x < 0.5, 1.0, 0.1)
    q = np.zeros((5, N + 2 * H))
    q[:, H:-H] = conserved_from_primitive(wint, GAS)
    fill_ghosts(q)
    t = 0.0
    steps = 0
    t0 = time.perf_counter()
    while t < T_END - 1e-14:
        r, lam = residual(q, mode)
        dt = min(CFL * HX / lam, T_END - t)
        q1 = q + dt * r
        fill_ghosts(q1)
        r1, _ = residual(q1, mode)
        q2 = 0.75 * q + 0.25 * (q1 + dt * r1)
        fill_ghosts(q2)
        r2, _ = residual(q2, mode)
        q = q / 3.0 + (2.0 / 3.0) * (q2 + dt * r2)
        fill_ghosts(q)
        t += dt
        steps += 1
    wall = time.perf_counter() - t0
    return x, q[:, H:-H], steps, wall


def analyze(x, qint):
    w = primitive_from_conserved(qint, GAS)
    rho = w[0]
    sol = solve_riemann(RiemannState(1.0, 0.0, 1.0), RiemannState(0.125, 0.0, 0.1), GAS.gamma)
    exact = sol.sample((x - 0.5) / T_END)[0]
    l1 = float(np.mean(np.abs(rho - exact)))
    ustar = sol.u_star
    mu2 = (G - 1.0) / (G + 1.0)
    pr = sol.p_star / 0.1
    rho2 = 0.125 * (pr + mu2) / (mu2 * pr + 1.0)
    ar = np.sqrt(G * 0.1 / 0.125)
    shock = ar * np.sqrt((G + 1.0) / (2.0 * G) * pr + (G - 1.0) / (2.0 * G))
    xc = 0.5 + ustar * T_END
    xs = 0.5 + shock * T_END
    jump = rho2 - 0.125
    win = (x >= xc + 5 * HX) & (x <= xs + 5 * HX)
    over = float(np.max(rho[win]) - rho2)
    peak = int(np.argmax(np.where(win, rho, -1.0)))
    return {
        "l1": l1,
        "overshoot": over,
        "overshoot_frac": over / jump,
        "peak_cell": peak,
        "rho2": rho2,
        "jump": jump,
    }


def main():
    out = {}
    for mode in ("component", "characteristic"):
        x, qint, steps, wall = run(mode)
        stats = analyze(x, qint)
        stats["steps"] = steps
        stats["wall"] = wall
        out[mode] = stats
        print(mode, json.dumps(stats, indent=1))
    with open("/tmp/char1d.json", "w") as fh:
        json.dump(out, fh, indent=1)


if __name__ == "__main__":
    main()
