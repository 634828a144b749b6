#!/usr/bin/env python3
"""Builds the shipped reference layout and its control-voltage table.

Outputs (default: data/):
  reference_layout.json    electrode patches in micrometres
  reference_voltages.csv   phi_H, phi_0, phi_1, phi_2, phi_HL, phi_pyramid and the
                           intermediate transport configurations phi_H<k>_<i>

The RF electrode is a square with a stack of trapezoidal openings plus four
islands; its parameters were fitted so that the pseudopotential has a raised hub
minimum over three lower satellites. Control electrodes tile the openings.

Transport configurations are solved waypoint by waypoint along the
pseudopotential valley from the hub to each satellite: the control voltages
cancel the net force at the waypoint and add the traceless curvature needed to
keep every mode above a floor frequency. Consecutive waypoint configurations
are joined by linear ramps; a continuation check follows the minimum through
every ramp and fails loudly if it ever loses positive curvature or jumps.

Requires numpy only.
"""

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

E = 1.602176634e-19
AMU = 1.66053906660e-27
MASS = 23.985042 * AMU
OMEGA_RF = 2 * math.pi * 52.4e6
U_RF = 200.0
C_PS = E * E * U_RF**2 / (4 * MASS * OMEGA_RF**2)
SHEET_HEIGHT = 7e-3
SHEET_V = -3.5
SHEET_V_LOADING = -2.7

# y_bot, y_top, w_bot, w_top, d0, a0, d1, a1, ah (um)
RF_PARAMS = [-114.87868316, 82.9337165, 36.81898488, 135.0, 30.76106816, 10.06163564,
             30.22267728, 9.95900439, 6.15037142]
RF_HALF = 140.0  # um, half side of the RF square
ROWS = 6
X_BREAKS = [-200, -60, -30, -10, 10, 30, 60, 200]
OUTER = 400.0
C30, S30 = math.cos(math.pi / 6), math.sin(math.pi / 6)
RT = 40.0 / math.sqrt(3.0)
TARGETS = {
    "H": np.array([0.0, 0.0, 53.0]),
    "0": np.array([0.0, -RT, 40.0]),
    "1": np.array([RT * C30, RT * S30, 40.0]),
    "2": np.array([-RT * C30, RT * S30, 40.0]),
}


# ---------------------------------------------------------------- geometry

def decompose(outer, holes):
    """Rectangles covering `outer` minus `holes`, merged along x."""
    xs = sorted({outer[0], outer[1], *[h[0] for h in holes], *[h[1] for h in holes]})
    ys = sorted({outer[2], outer[3], *[h[2] for h in holes], *[h[3] for h in holes]})
    xs = [v for v in xs if outer[0] <= v <= outer[1]]
    ys = [v for v in ys if outer[2] <= v <= outer[3]]
    out = []
    for j in range(len(ys) - 1):
        row = []
        for i in range(len(xs) - 1):
            cx, cy = (xs[i] + xs[i + 1]) / 2, (ys[j] + ys[j + 1]) / 2
            if any(h[0] < cx < h[1] and h[2] < cy < h[3] for h in holes):
                continue
            if row and row[-1][1] == xs[i]:
                row[-1][1] = xs[i + 1]
            else:
                row.append([xs[i], xs[i + 1], ys[j], ys[j + 1]])
        out += row
    return [tuple(r) for r in out]


def build_layout():
    y_bot, y_top, w_bot, w_top, d0, a0, d1, a1, ah = RF_PARAMS
    ys = np.linspace(y_bot, y_top, ROWS + 1)
    openings = []
    for k in range(ROWS):
        yc = (ys[k] + ys[k + 1]) / 2
        w = w_bot + (w_top - w_bot) * (yc - y_bot) / (y_top - y_bot)
        openings.append((-w, w, ys[k], ys[k + 1]))
    islands = [(-a0, a0, -d0 - a0, -d0 + a0),
               (d1 * C30 - a1, d1 * C30 + a1, d1 * S30 - a1, d1 * S30 + a1),
               (-d1 * C30 - a1, -d1 * C30 + a1, d1 * S30 - a1, d1 * S30 + a1),
               (-ah, ah, -ah, ah)]
    rf = decompose((-RF_HALF, RF_HALF, -RF_HALF, RF_HALF), openings) + islands

    cells = []
    for (xl, xh, yl, yh) in openings:
        for i in range(len(X_BREAKS) - 1):
            a, b = max(xl, X_BREAKS[i]), min(xh, X_BREAKS[i + 1])
            if b - a > 1e-9:
                cells.append(decompose((a, b, yl, yh), islands))

    def area(ps):
        return sum((q[1] - q[0]) * (q[3] - q[2]) for q in ps)

    def centroid(ps):
        return np.mean([[(q[0] + q[1]) / 2, (q[2] + q[3]) / 2] for q in ps], axis=0)

    # Merge the smallest cell into its nearest neighbour until 24 remain.
    while len(cells) > 24:
        i = int(np.argmin([area(c) for c in cells]))
        cen = [centroid(c) for c in cells]
        d = [np.linalg.norm(cen[i] - cen[j]) if j != i else np.inf for j in range(len(cells))]
        j = int(np.argmin(d))
        cells[j] = cells[j] + cells[i]
        del cells[i]
    L = RF_HALF
    outer = [(-OUTER, -L, -OUTER, 0), (-OUTER, -L, 0, OUTER), (L, OUTER, -OUTER, 0), (L, OUTER, 0, OUTER),
             (-L, L, L, OUTER), (-L, L, -OUTER, -L)]
    cells += [[q] for q in outer]
    assert len(cells) == 30
    return rf, cells


# ---------------------------------------------------------------- fields (um in, SI out)

def _corners(R, r):
    x, y, _ = r
    for ci, sx in ((0, 1), (1, -1)):
        for cj, sy in ((2, 1), (3, -1)):
            yield x - R[:, ci], y - R[:, cj], sx * sy


def basis_grad(R, r):
    """Gradient of the unit-voltage potential summed over patches, 1/m."""
    z = r[2]
    g = np.zeros(3)
    for X, Y, s in _corners(R, r):
        Rr = np.sqrt(X * X + Y * Y + z * z)
        A, B = X * X + z * z, Y * Y + z * z
        g += np.array([np.sum(s * z * Y / (Rr * A)), np.sum(s * z * X / (Rr * B)),
                       np.sum(-s * X * Y * (Rr * Rr + z * z) / (Rr * A * B))])
    return g / (2 * math.pi) * 1e6


def basis_hess(R, r):
    """Hessian of the unit-voltage potential summed over patches, 1/m^2."""
    z = r[2]
    H = np.zeros((3, 3))
    for X, Y, s in _corners(R, r):
        Rr = np.sqrt(X * X + Y * Y + z * z)
        A, B = X * X + z * z, Y * Y + z * z
        R2, R3 = Rr * Rr, Rr**3
        xx = np.sum(-s * z * X * Y * (A + 2 * R2) / (R3 * A * A))
        yy = np.sum(-s * z * X * Y * (B + 2 * R2) / (R3 * B * B))
        xy = np.sum(s * z / R3)
        xz = np.sum(s * Y * (R2 * A - z * z * (A + 2 * R2)) / (R3 * A * A))
        yz = np.sum(s * X * (R2 * B - z * z * (B + 2 * R2)) / (R3 * B * B))
        H += np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, -(xx + yy)]])
    return H / (2 * math.pi) * 1e12


class Model:
    def __init__(self, rf, cells):
        self.rf = np.array(rf, float)
        self.cells = [np.array(c, float) for c in cells]

    def rf_value(self, r):
        g = basis_grad(self.rf, r)
        return C_PS * g @ g

    def rf_grad(self, r):
        return 2 * C_PS * basis_hess(self.rf, r) @ basis_grad(self.rf, r)

    def rf_hess(self, r, h=1e-2):
        K = np.array([(self.rf_grad(r + d) - self.rf_grad(r - d)) / (2 * h * 1e-6) for d in np.eye(3) * h])
        return 0.5 * (K + K.T)

    def ctrl_grad(self, r):  # (30, 3) J/m per volt
        return np.array([basis_grad(c, r) for c in self.cells]) * E

    def ctrl_hess(self, r):  # (30, 3, 3)
        return np.array([basis_hess(c, r) for c in self.cells]) * E

    @staticmethod
    def sheet_grad(v_sheet):
        return np.array([0.0, 0.0, E * v_sheet / SHEET_HEIGHT])

    def grad(self, r, V, v_sheet):
        return self.rf_grad(r) + self.ctrl_grad(r).T @ V + self.sheet_grad(v_sheet)

    def hess(self, r, V):
        return self.rf_hess(r) + np.einsum("n,nij->ij", V, self.ctrl_hess(r))


def newton(model, r, V, v_sheet, iters=60, max_step=0.5):
    """Saddle-free Newton to a stationary point; r in um."""
    for _ in range(iters):
        g = model.grad(r, V, v_sheet)
        w, U = np.linalg.eigh(model.hess(r, V))
        step = -U @ ((U.T @ g) / np.maximum(np.abs(w), 1e-16)) * 1e6
        n = np.linalg.norm(step)
        if n > max_step:
            step *= max_step / n
        r = r + step
        if n < 1e-9:
            break
    return r, np.linalg.eigvalsh(model.hess(r, V))


def rf_minimum(model, seed):
    r, w = newton(model, seed.copy(), np.zeros(30), 0.0)
    assert w.min() > 0, "RF stationary point is not a minimum"
    return r


def valley(model, a, b, nodes=41, iters=600):
    """Minimum-energy path of the pseudopotential between two minima (string method)."""
    path = np.array([a + (b - a) * s for s in np.linspace(0, 1, nodes)])
    for _ in range(iters):
        for i in range(1, nodes - 1):
            g = model.rf_grad(path[i]) / E * 1e-3 * 1e-6  # meV/um
            path[i] -= 0.5 * g / max(1.0, np.linalg.norm(g) / 0.5)
        d = np.r_[0, np.cumsum(np.linalg.norm(np.diff(path, axis=0), axis=1))]
        s = np.linspace(0, d[-1], nodes)
        path = np.array([np.interp(s, d, path[:, k]) for k in range(3)]).T
    return path


def resample(path, n):
    d = np.r_[0, np.cumsum(np.linalg.norm(np.diff(path, axis=0), axis=1))]
    s = np.linspace(0, d[-1], n)
    return np.array([np.interp(s, d, path[:, k]) for k in range(3)]).T


# ---------------------------------------------------------------- voltage solves

def lifted_curvature(K, k_floor):
    """Spectral lift of K with unchanged trace; smallest eigenvalue raised toward k_floor (at most trace/3)."""
    w, U = np.linalg.eigh(K)
    if w.min() >= k_floor:
        return K

    def smallest(level):
        deficit = np.sum(np.maximum(level - w, 0.0))
        return np.maximum(w, level).min() - deficit / 3.0

    lo, hi = k_floor, k_floor + 10 * (k_floor - w.min()) + abs(w).max()
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        (lo, hi) = (mid, hi) if smallest(mid) < k_floor else (lo, mid)
    level = hi
    deficit = np.sum(np.maximum(level - w, 0.0))
    wn = np.maximum(w, level) - deficit / 3.0
    return U @ np.diag(wn) @ U.T


HESS_IDX = [(0, 0), (1, 1), (0, 1), (0, 2), (1, 2)]


def solve_waypoint(model, r, k_floor, v_sheet):
    """Minimum-norm control voltages: zero net force at r and curvature lifted to k_floor."""
    G = model.ctrl_grad(r)
    Hs = model.ctrl_hess(r)
    Krf = model.rf_hess(r)
    D = lifted_curvature(Krf, k_floor) - Krf
    f_scale, k_scale = 1e17, 1e12
    rows = [G[:, a] * f_scale for a in range(3)] + [Hs[:, i, j] * k_scale for (i, j) in HESS_IDX]
    rhs = list(-(model.rf_grad(r) + model.sheet_grad(v_sheet)) * f_scale) + [D[i, j] * k_scale for (i, j) in HESS_IDX]
    V, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    return V


def solve_multi(model, points, v_sheet):
    """Minimum-norm voltages with zero net force at several points."""
    rows, rhs = [], []
    for r in points:
        G = model.ctrl_grad(r)
        rows += [G[:, a] * 1e17 for a in range(3)]
        rhs += list(-(model.rf_grad(r) + model.sheet_grad(v_sheet)) * 1e17)
    V, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    return V


def follow(model, configs, start, v_sheet, substeps=40):
    """Track the minimum through linear ramps between consecutive configurations."""
    r = start.copy()
    worst, max_jump, trace = np.inf, 0.0, [r.copy()]
    for a, b in zip(configs[:-1], configs[1:]):
        for t in np.linspace(0, 1, substeps + 1)[1:]:
            prev = r
            r, w = newton(model, r, (1 - t) * a + t * b, v_sheet)
            worst = min(worst, w.min())
            max_jump = max(max_jump, np.linalg.norm(r - prev))
            trace.append(r.copy())
    return r, worst, max_jump, np.array(trace)


def mode_mhz(k):
    return math.sqrt(max(k, 0.0) / MASS) / (2 * math.pi * 1e6)


# ---------------------------------------------------------------- main

def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data"))
    ap.add_argument("--legs", type=int, default=20, help="ramps per hub-satellite transport")
    ap.add_argument("--floor-mhz", type=float, default=3.0,
                    help="target lowest mode along transport; capped at the isotropic limit")
    ap.add_argument("--check-substeps", type=int, default=40)
    args = ap.parse_args()

    rf, cells = build_layout()
    model = Model(rf, cells)
    k_floor = MASS * (2 * math.pi * args.floor_mhz * 1e6) ** 2

    sites = {k: rf_minimum(model, v) for k, v in TARGETS.items()}
    for k, r in sites.items():
        f = [mode_mhz(x) for x in np.linalg.eigvalsh(model.rf_hess(r))]
        print(f"rf minimum {k}: {np.round(r, 3)} um, modes {np.round(f, 3)} MHz", file=sys.stderr)

    table = {}
    for s in ("0", "1", "2"):
        P = resample(valley(model, sites["H"], sites[s]), args.legs + 1)
        hump = max(model.rf_value(p) for p in P) - model.rf_value(sites["H"])
        configs = [solve_waypoint(model, p, k_floor, SHEET_V) for p in P]
        end, worst, jump, _ = follow(model, configs, P[0], SHEET_V, args.check_substeps)
        print(f"H->{s}: rf hump {hump / E * 1e3:.3f} meV, |V|max {max(np.abs(c).max() for c in configs):.3f} V, "
              f"lowest mode {mode_mhz(worst):.3f} MHz, largest step {jump:.3f} um, "
              f"end offset {np.linalg.norm(end - P[-1]):.4f} um", file=sys.stderr)
        if worst <= 0 or jump > 1.0 or np.linalg.norm(end - P[-1]) > 0.5:
            sys.exit(f"transport H->{s} is not continuous")
        table["phi_H"] = configs[0]
        table["phi_" + s] = configs[-1]
        for i in range(1, args.legs):
            table[f"phi_H{s}_{i:02d}"] = configs[i]

    table["phi_HL"] = solve_waypoint(model, sites["H"], k_floor, SHEET_V_LOADING)
    pyr = solve_multi(model, list(sites.values()), SHEET_V)
    table["phi_pyramid"] = pyr
    for k, r in sites.items():
        rr, w = newton(model, r, pyr, SHEET_V)
        print(f"pyramid {k}: {np.round(rr, 3)} um, lowest mode {mode_mhz(w.min()):.3f} MHz", file=sys.stderr)
        if w.min() <= 0:
            sys.exit("pyramid configuration lost a site")

    for name, V in table.items():
        if np.abs(V).max() > 10.0:
            sys.exit(f"{name} exceeds the 10 V range")

    os.makedirs(args.out, exist_ok=True)
    names = ["rf"] + [f"el{i}" for i in range(1, 31)]
    layout = {"sheet_height_mm": SHEET_HEIGHT * 1e3, "electrodes": []}
    for name, patches in zip(names, [rf] + cells):
        layout["electrodes"].append({"name": name, "patches": [[round(float(v), 6) for v in p] for p in patches]})
    with open(os.path.join(args.out, "reference_layout.json"), "w") as f:
        json.dump(layout, f, indent=1)
        f.write("\n")

    order = ["phi_0", "phi_1", "phi_2", "phi_H", "phi_HL", "phi_pyramid"]
    order += sorted(k for k in table if k not in order)
    sheet = {k: SHEET_V for k in order}
    sheet["phi_HL"] = SHEET_V_LOADING
    with open(os.path.join(args.out, "reference_voltages.csv"), "w", newline="") as f:
        f.write("# Control voltages (V) for the reference layout; generated by tools/design_reference_layout.py\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["electrode"] + order)
        for i in range(30):
            w.writerow([f"el{i + 1}"] + [f"{table[k][i]:.4f}" for k in order])
        w.writerow(["metal_sheet"] + [f"{sheet[k]:.4f}" for k in order])
    print("wrote", os.path.abspath(args.out), file=sys.stderr)


if __name__ == "__main__":
    main()
