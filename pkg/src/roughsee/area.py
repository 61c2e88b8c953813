"""Second-level objects of a piecewise-linear driving path.

A ``GridPath`` is linear between grid points, so every iterated integral
below is evaluated in closed form per grid segment and then composed.
For a segment of length ``h`` and ``z = lambda_a h``::

    S_omega[a, c] = dw_c  phi1(z)          omega_S[a, b] = dw_b  phi1(z)
    A[a, c, b]    = dw_c dw_b phi2(z)

with ``phi1(z) = (1 - e^-z)/z``, ``phi2(z) = (z - 1 + e^-z)/z^2`` and
``phi3(z) = (1/2 - phi2(z))/z``.  ``A`` acts on a matrix ``E`` by
``(A.E)[a, b] = sum_c E[a, c] A[a, c, b]``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DomainError, StructuralError
from .hilbert import AreaField, GridPath, SpectralOperator, TimeGrid, _check_grid, _spectrum, chen_extend
from .noise import NoisePath, as_path

# ---------------------------------------------------------------- phi functions


def _series(z: np.ndarray, offset: int, terms: int = 24) -> np.ndarray:
    """sum_k (-z)^k / (k + offset)!"""
    out = np.zeros_like(z)
    fact = float(np.prod(np.arange(1, offset + 1)))
    term = np.ones_like(z) / fact
    for k in range(terms):
        out += term
        term = term * (-z) / (k + offset + 1)
    return out


def phi1(z: np.ndarray | float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        big = -np.expm1(-z) / z
    return np.where(small, _series(z, 1), big)


def phi2(z: np.ndarray | float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        big = (z + np.expm1(-z)) / (z * z)
    return np.where(small, _series(z, 2), big)


def phi3(z: np.ndarray | float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        big = (0.5 - phi2(z)) / z
    return np.where(small, _series(z, 3), big)


# ---------------------------------------------------------------- per-segment objects


def _linear_path(omega) -> GridPath:
    if isinstance(omega, (GridPath, NoisePath)):
        return as_path(omega)
    raise ContractError("the driving path must be a grid path (piecewise linear between nodes)")


@dataclass(frozen=True)
class Segments:
    """Closed-form one-step objects on every grid segment."""

    h: float
    lam: np.ndarray
    dw: np.ndarray          # (n, d)
    p1: np.ndarray          # (d,) phi1(lambda h)
    p2: np.ndarray
    p3: np.ndarray
    decay: np.ndarray       # (d,) exp(-lambda h)

    @classmethod
    def build(cls, omega, op: SpectralOperator | np.ndarray) -> "Segments":
        p = _linear_path(omega)
        lam = _spectrum(op)
        if lam.size != p.dim:
            raise StructuralError(f"spectrum has {lam.size} modes, path has {p.dim}")
        h = p.grid.dt
        z = lam * h
        return cls(h, lam, np.diff(p.values, axis=0), phi1(z), phi2(z), phi3(z), np.exp(-z))

    @property
    def n(self) -> int:
        return self.dw.shape[0]

    def s_omega(self) -> np.ndarray:
        """(n, a, c)"""
        return self.p1[None, :, None] * self.dw[:, None, :]

    def omega_s(self) -> np.ndarray:
        """(n, a, b)"""
        return self.p1[None, :, None] * self.dw[:, None, :]

    def area(self) -> np.ndarray:
        """(n, a, c, b)"""
        return self.p2[None, :, None, None] * self.dw[:, None, :, None] * self.dw[:, None, None, :]


# ---------------------------------------------------------------- direct evaluation


@dataclass(frozen=True)
class TwistOps:
    """``S_omega(s, t)[a, c]`` and ``omega_S(s, t)[a, b]`` for one pair."""

    s_omega: np.ndarray
    omega_s: np.ndarray


def _pair_indices(p: GridPath, s: float, t: float) -> tuple[int, int]:
    j, k = p.grid.index_of(s), p.grid.index_of(t)
    if k < j:
        raise DomainError("need s <= t")
    return j, k


def twist_ops(omega, op, s: float, t: float) -> TwistOps:
    """Both twisted first-level operators over ``[s, t]`` by direct summation over segments."""
    p = _linear_path(omega)
    seg = Segments.build(p, op)
    j, k = _pair_indices(p, s, t)
    d = seg.lam.size
    if j == k:
        return TwistOps(np.zeros((d, d)), np.zeros((d, d)))
    m = np.arange(j, k)
    left = np.exp(-np.outer((k - m - 1) * seg.h, seg.lam))        # e^{-lambda (t - t_{m+1})}
    right = np.exp(-np.outer((m - j) * seg.h, seg.lam))           # e^{-lambda (t_m - s)}
    so = np.einsum("ma,a,mc->ac", left, seg.p1, seg.dw[j:k])
    os_ = np.einsum("ma,a,mb->ab", right, seg.p1, seg.dw[j:k])
    return TwistOps(so, os_)


def smooth_area(omega, op, s: float, t: float) -> np.ndarray:
    """``A[a, c, b](s, t) = int_s^t int_s^xi e^{-lambda_a (xi - r)} domega_c(r) domega_b(xi)``.

    Evaluated as a direct double sum over segment pairs: diagonal segments
    use the closed form, off-diagonal pairs factorise through the decay
    between them.
    """
    p = _linear_path(omega)
    seg = Segments.build(p, op)
    j, k = _pair_indices(p, s, t)
    d = seg.lam.size
    if j == k:
        return np.zeros((d, d, d))
    dw = seg.dw[j:k]
    out = np.einsum("a,mc,mb->acb", seg.p2, dw, dw)
    n = k - j
    idx = np.arange(n)
    gap = idx[None, :] - idx[:, None] - 1                          # m - i - 1 for i < m
    mask = gap >= 0
    dec = np.where(mask[..., None], np.exp(-np.clip(gap, 0, None)[..., None] * seg.h * seg.lam), 0.0)
    # sum_{i<m} p1 dw_i[c] e^{..} p1 dw_m[b]
    out += np.einsum("ima,a,ic,mb->acb", dec, seg.p1 * seg.p1, dw, dw)
    return out


def apply_area(A: np.ndarray, E: np.ndarray) -> np.ndarray:
    """``(A.E)[a, b] = sum_c E[a, c] A[a, c, b]``."""
    return np.einsum("ac,acb->ab", E, A)


def _probes(d: int, count: int = 8, seed: int = 0) -> list[np.ndarray]:
    out = []
    for a in range(d):
        for c in range(d):
            E = np.zeros((d, d))
            E[a, c] = 1.0
            out.append(E)
    rng = np.random.default_rng(seed)
    out.extend(rng.standard_normal((count, d, d)))
    return out


def area_chen_residual(A, tw, s: float, r: float, t: float,
                       probes: list[np.ndarray] | None = None) -> float:
    """Worst relative Chen defect of the twisted area over probe matrices.

    ``A`` and ``tw`` are callables ``(s, t) -> tensor`` and ``(s, t) -> TwistOps``
    (for example ``partial(smooth_area, omega, op)``).  The identity checked is
    ``A(s,r)E + A(r,t)E + omega_S(r,t) o S_omega(s,r) E = A(s,t)E`` where the
    composition is ``[.]_{ab} = (sum_c E_ac S_omega(s,r)_ac) omega_S(r,t)_ab``.
    """
    if not s <= r <= t:
        raise DomainError("need s <= r <= t")
    Asr, Art, Ast = A(s, r), A(r, t), A(s, t)
    Tsr, Trt = tw(s, r), tw(r, t)
    d = Ast.shape[0]
    probes = _probes(d) if probes is None else probes
    worst = 0.0
    for E in probes:
        comp = np.sum(E * Tsr.s_omega, axis=1)[:, None] * Trt.omega_s
        res = apply_area(Asr, E) + apply_area(Art, E) + comp - apply_area(Ast, E)
        worst = max(worst, float(np.linalg.norm(res) / np.linalg.norm(E)))
    return worst


# ---------------------------------------------------------------- operator area


@dataclass
class OperatorArea:
    """Twisted area of a grid path, built lazily row by row.

    Row ``j`` (all pairs ``(j, k)``) is produced by the Chen recursion
    ``A(j, k+1) = A(j, k) + A_k + S_omega(j, k) (x) omega_S_k`` in one
    sweep and memoised.  Concurrent fills of the same row are harmless:
    entries are deterministic.
    """

    grid: TimeGrid
    seg: Segments
    level: int | None = None
    _rows: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, omega, op) -> "OperatorArea":
        p = _linear_path(omega)
        level = omega.level if isinstance(omega, NoisePath) else None
        return cls(p.grid, Segments.build(p, op), level)

    @property
    def dim(self) -> int:
        return int(self.seg.lam.size)

    def _row(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if j not in self._rows:
            seg, n, d = self.seg, self.seg.n, self.dim
            A = np.zeros((n + 1 - j, d, d, d))
            so = np.zeros((n + 1 - j, d, d))
            os_ = np.zeros((n + 1 - j, d, d))
            Aseg, Sseg, Oseg = seg.area(), seg.s_omega(), seg.omega_s()
            for k in range(j, n):
                i = k - j
                A[i + 1] = A[i] + Aseg[k] + so[i][:, :, None] * Oseg[k][:, None, :]
                so[i + 1] = seg.decay[:, None] * so[i] + Sseg[k]
                os_[i + 1] = os_[i] + np.exp(-seg.lam * i * seg.h)[:, None] * Oseg[k]
            self._rows[j] = (A, so, os_)
        return self._rows[j]

    def __call__(self, j: int, k: int) -> np.ndarray:
        if not 0 <= j <= k <= self.seg.n:
            raise DomainError(f"bad pair ({j}, {k})")
        return self._row(j)[0][k - j]

    def twist(self, j: int, k: int) -> TwistOps:
        _, so, os_ = self._row(j)
        return TwistOps(so[k - j], os_[k - j])

    def at(self, s: float, t: float) -> np.ndarray:
        return self(self.grid.index_of(s), self.grid.index_of(t))

    def twist_at(self, s: float, t: float) -> TwistOps:
        return self.twist(self.grid.index_of(s), self.grid.index_of(t))

    def pairs(self, kind: str = "all", stride: int | None = None) -> list[tuple[int, int]]:
        n = self.seg.n
        if kind == "all":
            return [(j, k) for j in range(n + 1) for k in range(j + 1, n + 1)]
        if kind == "coarse":
            st = stride or max(1, n // 16)
            nodes = list(range(0, n + 1, st))
            if nodes[-1] != n:
                nodes.append(n)
            return [(j, k) for j in nodes for k in nodes if k > j]
        raise DomainError(f"unknown pair set {kind!r}")


def level_distances(omega, op, levels: list[int], beta_p: float,
                    stride: int | None = None) -> list[dict]:
    """Weighted distances between twisted areas of successive dyadic linearisations.

    For each consecutive pair of levels ``(n, m)``: the maximum over coarse
    grid pairs of ``|A_n(s,t) - A_m(s,t)|_F / (t-s)^(2 beta')`` together with
    the path distance in the ``beta'`` seminorm.
    """
    from .hilbert import holder_seminorm
    from .noise import dyadic_linearize

    p = as_path(omega)
    paths = {n: dyadic_linearize(p, n) for n in levels}
    areas = {n: OperatorArea.build(paths[n], op) for n in levels}
    pairs = areas[levels[0]].pairs("coarse", stride)
    times = p.grid.points
    out = []
    for a, b in zip(levels, levels[1:]):
        worst = 0.0
        for j, k in pairs:
            diff = np.linalg.norm(areas[a](j, k) - areas[b](j, k))
            worst = max(worst, diff / (times[k] - times[j]) ** (2.0 * beta_p))
        dpath = holder_seminorm(paths[a].path - paths[b].path, beta_p)
        out.append({"levels": [a, b], "area": worst, "path": dpath})
    return out


# ---------------------------------------------------------------- path areas


def u_tensor_omega_field(u: GridPath, omega) -> AreaField:
    """``v(s, t) = int_s^t (u(r) - u(s)) (x) domega(r)`` for every grid pair, segment-exact."""
    p = _linear_path(omega)
    _check_grid(u.grid, p.grid)
    du = np.diff(u.values, axis=0)
    dw = np.diff(p.values, axis=0)
    local = 0.5 * du[:, :, None] * dw[:, None, :]
    return AreaField(u.grid, chen_extend(local, u.values, p.values))


def u_tensor_omega(u: GridPath, omega, s: float, t: float) -> np.ndarray:
    """Single entry of ``u_tensor_omega_field``."""
    p = _linear_path(omega)
    _check_grid(u.grid, p.grid)
    j, k = _pair_indices(p, s, t)
    x, w = u.values[j : k + 1], p.values[j : k + 1]
    dw = np.diff(w, axis=0)
    mid = 0.5 * (x[1:] + x[:-1]) - x[0]
    return np.einsum("mi,mj->ij", mid, dw)


def omega_s_to(seg: Segments, j: int, k: int) -> np.ndarray:
    """``omega_S(t_m, t_k)`` for m = j..k, by the backward recursion."""
    d = seg.lam.size
    out = np.zeros((k - j + 1, d, d))
    O = seg.omega_s()
    for m in range(k - 1, j - 1, -1):
        out[m - j] = O[m] + seg.decay[:, None] * out[m - j + 1]
    return out


def w_direct(u: GridPath, omega, op, t: float, j0: int | None = None) -> np.ndarray:
    """``X[r, q, a, b, k, c] = int_r^q (u_k - u_k(r)) omega_S(., t)_ab domega_c`` for all pairs.

    Pairs range over grid nodes ``j0..index(t)`` (default: from the grid start).
    Segment-exact for piecewise-linear ``u`` and ``omega``.  The w element is
    ``-X``.
    """
    p = _linear_path(omega)
    _check_grid(u.grid, p.grid)
    seg = Segments.build(p, op)
    k = p.grid.index_of(t)
    j = 0 if j0 is None else j0
    n = k - j
    Om = omega_s_to(seg, j, k)                         # (n+1, a, b)
    dw = seg.dw[j:k]
    x = u.values[j : k + 1]
    du = np.diff(x, axis=0)
    P = (seg.p2[None, :, None] * dw[:, None, :] + seg.p1[None, :, None] * Om[1:])   # (n, a, b)
    P = np.einsum("mab,mc->mabc", P, dw)
    Q = (seg.p3[None, :, None] * dw[:, None, :] + seg.p2[None, :, None] * Om[1:])
    Q = np.einsum("mab,mk,mc->mabkc", Q, du, dw)
    d = x.shape[1]
    CP = np.zeros((n + 1, d, d, d))
    CuP = np.zeros((n + 1, d, d, d, d))
    CQ = np.zeros((n + 1, d, d, d, d))
    CP[1:] = np.cumsum(P, axis=0)
    CuP[1:] = np.cumsum(np.einsum("mk,mabc->mabkc", x[:-1], P), axis=0)
    CQ[1:] = np.cumsum(Q, axis=0)
    out = (CuP[None] - CuP[:, None]) + (CQ[None] - CQ[:, None])
    out -= np.einsum("rk,rqabc->rqabkc", x, CP[None] - CP[:, None])
    out[np.tril_indices(n + 1, 0)] = 0.0
    return out


def w_element(u: GridPath, v: AreaField, omega, op, alpha: float, t: float, s: float,
              q: float) -> np.ndarray:
    """``w(t)(s, q)[a, b, k, c] = -int_s^q (u_k - u_k(s)) omega_S(., t)_ab domega_c``.

    Evaluated as a compensated fractional integral with two controlling
    paths: ``u`` (area ``v``) and ``omega_S(., t)`` (whose area against
    omega is computed segment-exactly).  Meant for validation on small grids.
    """
    from .fracint import hn_samples

    p = _linear_path(omega)
    _check_grid(u.grid, p.grid)
    _check_grid(u.grid, v.grid)
    seg = Segments.build(p, op)
    j, m = _pair_indices(p, s, q)
    kt = p.grid.index_of(t)
    if not m <= kt:
        raise DomainError("need q <= t")
    d = seg.lam.size
    if j == m:
        return np.zeros((d, d, d, d))
    Om = omega_s_to(seg, j, kt)[: m - j + 1].reshape(m - j + 1, d * d)   # controller path
    x = u.values[j : m + 1]
    w = p.values[j : m + 1]
    du = x - x[0]
    h = seg.h
    n = m - j
    # area of the omega_S controller against omega, via linear interpolation on the grid
    dOm = np.diff(Om, axis=0)
    dwin = np.diff(w, axis=0)
    XO = chen_extend(0.5 * dOm[:, :, None] * dwin[:, None, :], Om, w)     # (n+1, n+1, d*d, d)
    Xu = v.values[j : m + 1, j : m + 1]                                    # (n+1, n+1, d, d)
    out = np.zeros((d, d, d, d))
    eye = np.eye(d)
    for c in range(d):
        Y = np.einsum("rz,rk->rzk", Om, du).reshape(n + 1, d * d * d, 1)
        # derivative in the u direction: delta_{k k'} Om_z
        Yu = np.einsum("rz,kl->rzkl", Om, eye).reshape(n + 1, d * d * d, 1, d)
        # derivative in the omega_S direction: delta_{z z'} du_k
        Yo = np.einsum("zy,rk->rzky", np.eye(d * d), du).reshape(n + 1, d * d * d, 1, d * d)
        res = hn_samples(Y, w[:, [c]], alpha, h,
                         [(Yu, x, Xu[:, :, :, [c]]), (Yo, Om, XO[:, :, :, [c]])])
        out[:, :, :, c] = -res.reshape(d, d, d)
    return out


# ---------------------------------------------------------------- binary format

_MAGIC = b"RSAREA01"


def write_area_blob(A: OperatorArea, target: str | Path, pairs: str = "all",
                    stride: int | None = None) -> dict:
    """Write stored pairs of ``A`` to ``target`` and a JSON sidecar ``target.json``.

    Layout (little endian): magic, int64 d, N, level (-1 if none), pair count;
    then per pair int64 j, k followed by the d^3 float64 entries of
    ``A[a, c, b]`` in row-major order.
    """
    plist = A.pairs(pairs, stride)
    d, n = A.dim, A.seg.n
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<4q", d, n, -1 if A.level is None else A.level, len(plist))
    for j, k in plist:
        buf += struct.pack("<2q", j, k)
        buf += np.ascontiguousarray(A(j, k), dtype="<f8").tobytes()
    data = bytes(buf)
    Path(target).write_bytes(data)
    meta = {
        "format": "roughsee-area-v1",
        "d": d,
        "N": n,
        "level": A.level,
        "pairs": pairs,
        "count": len(plist),
        "grid": A.grid.to_dict(),
        "eigenvalues": [float(x) for x in A.seg.lam],
        "sha256": hashlib.sha256(data).hexdigest(),
    }
    Path(str(target) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


@dataclass(frozen=True)
class StoredArea:
    """Twisted-area entries read back from disk."""

    grid: TimeGrid | None
    d: int
    N: int
    level: int | None
    entries: dict

    def __call__(self, j: int, k: int) -> np.ndarray:
        if j == k:
            return np.zeros((self.d,) * 3)
        try:
            return self.entries[(j, k)]
        except KeyError:
            raise DomainError(f"pair ({j}, {k}) is not stored") from None


def read_area_blob(source: str | Path, verify: bool = True) -> StoredArea:
    data = Path(source).read_bytes()
    side = Path(str(source) + ".json")
    meta = json.loads(side.read_text()) if side.exists() else None
    if verify and meta is not None:
        digest = hashlib.sha256(data).hexdigest()
        if digest != meta["sha256"]:
            raise StructuralError(f"{source}: checksum mismatch")
    if data[:8] != _MAGIC:
        raise StructuralError(f"{source}: not an area file")
    d, n, level, count = struct.unpack_from("<4q", data, 8)
    off = 8 + 32
    size = d**3 * 8
    entries = {}
    for _ in range(count):
        j, k = struct.unpack_from("<2q", data, off)
        off += 16
        entries[(j, k)] = np.frombuffer(data, dtype="<f8", count=d**3, offset=off).reshape(d, d, d).copy()
        off += size
    if off != len(data):
        raise StructuralError(f"{source}: trailing bytes")
    grid = TimeGrid.from_dict(meta["grid"]) if meta is not None else None
    return StoredArea(grid, d, n, None if level < 0 else level, entries)
