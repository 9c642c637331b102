"""Pair quadrature tables for radial double integrals over Q.

A radial function u(|x|) turns the double integral

    int int_Q F(|u(x) - u(y)|, |x - y|) dx dy,   Q = R^2N minus (B_1^c)^2

into a triple integral over (r, rho, theta).  Only pairs with r < rho are
stored (the integrand is symmetric), so every pair weight carries a factor 2
and the smaller radius is always interior.

Interior-interior pairs integrate the piecewise-linear interpolant cell by
cell: tensor Gauss for separated cells, a Duffy split for cells sharing a node
and a graded rule in the separation for a cell paired with itself.  Exterior
nodes are themselves the quadrature points in rho, so the interior-exterior
part is nodal in the exterior values.

The angular integral uses the map theta = delta (exp(lam x) - 1), which
clusters Gauss points near theta = 0 at the scale delta = |rho - r| / sqrt(r rho)
where the kernel peaks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

N_GL = 4
GRADE_LEVELS = 4
GRADE_RATIO = 4.0


def gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def graded01(levels: int = GRADE_LEVELS, ratio: float = GRADE_RATIO, n: int = N_GL):
    """Composite Gauss rule on (0, 1) with panels shrinking geometrically toward 0."""
    xg, wg = gauss01(n)
    edges = np.concatenate([[0.0], ratio ** -np.arange(levels, -1, -1.0)])
    lo, hi = edges[:-1], edges[1:]
    x = (lo[:, None] + (hi - lo)[:, None] * xg).ravel()
    w = ((hi - lo)[:, None] * wg).ravel()
    return x, w


@dataclass
class PairTable:
    """Flat quadrature over (r, rho) pairs with per-pair angular nodes."""

    r: np.ndarray
    rho: np.ndarray
    weight: np.ndarray  # includes 2 * gamma_{N-1} r^{N-1} rho^{N-1} dr drho
    diff: sp.csr_matrix  # (pairs x nodes) -> u(rho) - u(r)
    ang_w: np.ndarray  # (pairs x K) angular weights incl. gamma_{N-2} sin^{N-2}
    ang_d: np.ndarray  # (pairs x K) distances |x - y|
    cross_start: np.ndarray  # exterior node j owns pairs [start_j, stop_j)
    cross_stop: np.ndarray
    cross_interp: sp.csr_matrix  # (cross pairs x interior nodes) -> u(r)
    n_cross_offset: int
    s: float
    N: int
    _kernel_cache: dict = field(default_factory=dict, repr=False)
    _dpow_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_pairs(self) -> int:
        return len(self.r)

    def power_kernel(self, q: float) -> np.ndarray:
        """sum_k a_k d_k^(-N - s q) per pair."""
        key = float(q)
        if key not in self._kernel_cache:
            self._kernel_cache[key] = np.einsum(
                "pk,pk->p", self.ang_w, self.ang_d ** (-self.N - self.s * q)
            )
        return self._kernel_cache[key]

    def dpow(self, e: float) -> np.ndarray:
        key = float(e)
        if key not in self._dpow_cache:
            self._dpow_cache[key] = self.ang_d ** (-e)
        return self._dpow_cache[key]

    # -- per-pair reductions ---------------------------------------------

    def values(self, fam, delta: np.ndarray, rows=slice(None)) -> np.ndarray:
        """sum_k a_k G(|delta| d^-s) d^-N for the selected pairs."""
        a = np.abs(delta)
        terms = fam.power_terms
        if terms is not None:
            return sum(c * self.power_kernel(q)[rows] * a**q for c, q in terms)
        t = a[:, None] * self.dpow(self.s)[rows]
        return np.einsum("pk,pk->p", self.ang_w[rows], fam.G(t) * self.dpow(self.N)[rows])

    def derivs(self, fam, delta: np.ndarray, rows=slice(None)) -> np.ndarray:
        """sum_k a_k g(|delta| d^-s) sign(delta) d^(-N-s): derivative of values()."""
        a = np.abs(delta)
        sgn = np.sign(delta)
        terms = fam.power_terms
        if terms is not None:
            out = sum(c * q * self.power_kernel(q)[rows] * a ** (q - 1) for c, q in terms)
            return sgn * out
        t = a[:, None] * self.dpow(self.s)[rows]
        out = np.einsum(
            "pk,pk->p", self.ang_w[rows], fam.g(t) * self.dpow(self.N + self.s)[rows]
        )
        return sgn * out

    def hessians(self, fam, delta: np.ndarray, rows=slice(None)) -> np.ndarray:
        """sum_k a_k g'(|delta| d^-s) d^(-N-2s): second derivative of values()."""
        a = np.abs(delta)
        terms = fam.power_terms
        if terms is not None:
            out = np.zeros_like(a)
            for c, q in terms:
                k = self.power_kernel(q)[rows]
                if q == 2:
                    out = out + 2 * c * k
                else:
                    with np.errstate(divide="ignore", invalid="ignore"):
                        out = out + c * q * (q - 1) * k * np.where(a > 0, a ** (q - 2), 0.0 if q > 2 else np.inf)
            return out
        t = a[:, None] * self.dpow(self.s)[rows]
        return np.einsum(
            "pk,pk->p", self.ang_w[rows], fam.dg(t) * self.dpow(self.N + 2 * self.s)[rows]
        )


def _interp_cols(x: np.ndarray, z_int: np.ndarray):
    """Linear interpolation stencil on the interior nodes: (i0, i1, t)."""
    M = len(z_int) - 1
    i0 = np.clip(np.searchsorted(z_int, x, side="right") - 1, 0, M - 1)
    t = (x - z_int[i0]) / (z_int[i0 + 1] - z_int[i0])
    return i0, i0 + 1, t


def _interp_matrix(x: np.ndarray, z_int: np.ndarray, n_cols: int) -> sp.csr_matrix:
    i0, i1, t = _interp_cols(x, z_int)
    rows = np.arange(len(x))
    data = np.concatenate([1 - t, t])
    return sp.csr_matrix(
        (data, (np.concatenate([rows, rows]), np.concatenate([i0, i1]))),
        shape=(len(x), n_cols),
    )


def angular_nodes(r, rho, N: int, K: int, gamma_nm2: float):
    """Per-pair clustered Gauss nodes on (0, pi); returns (weights, distances)."""
    xg, wg = gauss01(K)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.abs(rho - r) / np.sqrt(r * rho)
    delta = np.where(np.isfinite(delta), delta, np.pi)
    delta = np.clip(delta, 1e-14, np.pi)[:, None]
    lam = np.log1p(np.pi / delta)
    theta = delta * np.expm1(lam * xg[None, :])
    dtheta = delta * lam * np.exp(lam * xg[None, :]) * wg[None, :]
    weights = gamma_nm2 * dtheta * np.sin(theta) ** (N - 2) if N > 2 else gamma_nm2 * dtheta
    dist = np.sqrt((rho - r)[:, None] ** 2 + 4 * (r * rho)[:, None] * np.sin(theta / 2) ** 2)
    return weights, dist


def build_pair_table(
    z_int: np.ndarray,
    z_ext: np.ndarray,
    ext_weights: np.ndarray,
    N: int,
    s: float,
    K: int,
    gamma_nm1: float,
    gamma_nm2: float,
) -> PairTable:
    M = len(z_int) - 1
    n_int, n_ext = M + 1, len(z_ext)
    n_nodes = n_int + n_ext
    xg, wg = gauss01(N_GL)
    xu, wu = graded01()

    rs, ps, ws = [], [], []

    # separated interior cells: a < b - 1
    a_idx, b_idx = np.triu_indices(M, k=2)
    if len(a_idx):
        ha = z_int[a_idx + 1] - z_int[a_idx]
        hb = z_int[b_idx + 1] - z_int[b_idx]
        r = z_int[a_idx][:, None, None] + ha[:, None, None] * xg[None, :, None]
        p = z_int[b_idx][:, None, None] + hb[:, None, None] * xg[None, None, :]
        w = (ha * hb)[:, None, None] * wg[None, :, None] * wg[None, None, :]
        r, p = np.broadcast_arrays(r, p)
        rs.append(r.ravel())
        ps.append(p.ravel())
        ws.append(np.broadcast_to(w, r.shape).ravel())

    # adjacent cells sharing node P: alpha = P - r, beta = rho - P, Duffy split
    for a in range(M - 1):
        P = z_int[a + 1]
        ha, hb = P - z_int[a], z_int[a + 2] - P
        H = ha  # uniform interior mesh
        u = H * xu
        wu_ = H * wu
        v, wv = xg, wg
        U, V = np.meshgrid(u, v, indexing="ij")
        W = np.outer(wu_, wv) * U
        # triangle beta <= alpha and its mirror; the strip beyond H is separated
        for al, be in ((U, U * V), (U * V, U)):
            rs.append((P - al).ravel())
            ps.append((P + be).ravel())
            ws.append(W.ravel())

    # a cell with itself: rho = r + h, h graded toward 0
    for a in range(M):
        lo, H = z_int[a], z_int[a + 1] - z_int[a]
        h = H * xu
        wh = H * wu
        span = H - h
        r = lo + span[:, None] * xg[None, :]
        w = (wh * span)[:, None] * wg[None, :]
        rs.append(r.ravel())
        ps.append((r + h[:, None]).ravel())
        ws.append(w.ravel())

    r_ii = np.concatenate(rs)
    p_ii = np.concatenate(ps)
    w_ii = np.concatenate(ws)
    n_ii = len(r_ii)

    # interior r against each exterior node, last cell graded toward r = 1
    h_last = z_int[-1] - z_int[-2]
    base_r = (z_int[:-2, None] + np.diff(z_int)[:-1, None] * xg[None, :]).ravel()
    base_w = (np.diff(z_int)[:-1, None] * wg[None, :]).ravel()
    cr, cp, cw, starts, stops = [], [], [], [], []
    offset = n_ii
    for j, rho in enumerate(z_ext):
        dist = rho - 1.0
        levels = max(1, int(np.ceil(np.log2(max(h_last / dist, 1.0)))) + 1)
        edges = np.concatenate([[0.0], h_last * 2.0 ** -np.arange(levels, -1, -1.0)])
        lo, hi = edges[:-1], edges[1:]
        gap = (lo[:, None] + (hi - lo)[:, None] * xg[None, :]).ravel()
        gw = ((hi - lo)[:, None] * wg[None, :]).ravel()
        r = np.concatenate([base_r, 1.0 - gap])
        w = np.concatenate([base_w, gw]) * ext_weights[j]
        cr.append(r)
        cp.append(np.full_like(r, rho))
        cw.append(w)
        starts.append(offset)
        offset += len(r)
        stops.append(offset)
    r_x = np.concatenate(cr) if cr else np.zeros(0)
    p_x = np.concatenate(cp) if cp else np.zeros(0)
    w_x = np.concatenate(cw) if cw else np.zeros(0)

    r_all = np.concatenate([r_ii, r_x])
    p_all = np.concatenate([p_ii, p_x])
    weight = 2.0 * gamma_nm1 * r_all ** (N - 1) * p_all ** (N - 1) * np.concatenate([w_ii, w_x])

    # difference operator u(rho) - u(r)
    rows_ii = np.arange(n_ii)
    i0, i1, t = _interp_cols(r_ii, z_int)
    j0, j1, tp = _interp_cols(p_ii, z_int)
    data = [-(1 - t), -t, 1 - tp, tp]
    cols = [i0, i1, j0, j1]
    rows = [rows_ii] * 4
    if len(r_x):
        rows_x = n_ii + np.arange(len(r_x))
        k0, k1, tx = _interp_cols(r_x, z_int)
        ext_col = np.repeat(n_int + np.arange(n_ext), [b - a for a, b in zip(starts, stops)])
        data += [-(1 - tx), -tx, np.ones_like(tx)]
        cols += [k0, k1, ext_col]
        rows += [rows_x] * 3
    diff = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(r_all), n_nodes),
    )
    diff.sum_duplicates()

    ang_w, ang_d = angular_nodes(r_all, p_all, N, K, gamma_nm2)
    cross_interp = _interp_matrix(r_x, z_int, n_int)
    return PairTable(
        r=r_all,
        rho=p_all,
        weight=weight,
        diff=diff,
        ang_w=ang_w,
        ang_d=ang_d,
        cross_start=np.array(starts, dtype=int),
        cross_stop=np.array(stops, dtype=int),
        cross_interp=cross_interp,
        n_cross_offset=n_ii,
        s=s,
        N=N,
    )
