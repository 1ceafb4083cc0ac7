"""Small conic problems for the SCA subproblems.

A :class:`ConicProblem` collects real scalar variables (optionally grouped as
complex Hermitian matrices), an objective made of ``log2`` terms of affine
expressions plus an affine term, and linear, second-order-cone and PSD
constraints. :func:`solve` compiles it for the Clarabel interior-point solver.

Hermitian ``M x M`` matrices use ``M^2`` reals: the diagonal, then the real
and imaginary parts of the strict upper triangle. PSD-ness is imposed on the
real embedding ``[[Re W, -Im W], [Im W, Re W]]``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

DUMP_HEADER = "# covert_isac conic problem v1"
STATIC_REG = 1e-7
LOG2E = 1.0 / np.log(2.0)


class RankOneError(ValueError):
    """The dominant eigenvalue does not carry enough of the trace."""

    def __init__(self, ratio: float, min_ratio: float):
        super().__init__(f"rank-one extraction failed: ratio {ratio:.6f} < {min_ratio}")
        self.ratio = ratio


class Affine:
    """Sparse affine expression ``sum val[i] * x[idx[i]] + const``.

    Duplicate indices are allowed and are summed on compilation.
    """

    __slots__ = ("idx", "val", "const")

    def __init__(self, idx=(), val=(), const=0.0):
        self.idx = np.asarray(idx, dtype=np.int64).ravel()
        self.val = np.asarray(val, dtype=float).ravel()
        self.const = float(const)

    @classmethod
    def constant(cls, c):
        return cls(const=c)

    def _coerce(self, other):
        return other if isinstance(other, Affine) else Affine.constant(other)

    def __add__(self, other):
        o = self._coerce(other)
        return Affine(np.concatenate([self.idx, o.idx]), np.concatenate([self.val, o.val]),
                      self.const + o.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine(self.idx, -self.val, -self.const)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, c):
        c = float(c)
        return Affine(self.idx, c * self.val, c * self.const)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / float(c))

    def value(self, x):
        return float(np.dot(self.val, np.asarray(x)[self.idx]) + self.const)

    def dense(self, n):
        row = np.zeros(n)
        np.add.at(row, self.idx, self.val)
        return row


@dataclass
class VectorVar:
    name: str
    idx: np.ndarray

    def __len__(self):
        return len(self.idx)

    def __getitem__(self, k) -> Affine:
        return Affine([self.idx[k]], [1.0])

    def dot(self, c) -> Affine:
        return Affine(self.idx, np.asarray(c, dtype=float))


@dataclass
class HermitianVar:
    name: str
    m: int
    diag: np.ndarray
    re: np.ndarray
    im: np.ndarray
    psd: bool = True

    @property
    def idx(self):
        return np.concatenate([self.diag, self.re, self.im])

    def trace(self) -> Affine:
        return Affine(self.diag, np.ones(self.m))

    def trace_with(self, C) -> Affine:
        """``tr(C W)`` for Hermitian ``C`` (real-valued)."""
        C = np.asarray(C)
        k, l = np.triu_indices(self.m, 1)
        vals = np.concatenate([np.real(np.diag(C)), 2.0 * np.real(C[k, l]), 2.0 * np.imag(C[k, l])])
        return Affine(self.idx, vals)

    def assemble(self, x) -> np.ndarray:
        x = np.asarray(x)
        W = np.zeros((self.m, self.m), dtype=complex)
        k, l = np.triu_indices(self.m, 1)
        W[np.arange(self.m), np.arange(self.m)] = x[self.diag]
        W[k, l] = x[self.re] + 1j * x[self.im]
        W[l, k] = x[self.re] - 1j * x[self.im]
        return W

    def flatten(self, W) -> np.ndarray:
        """Inverse of :meth:`assemble` (values in variable order)."""
        W = np.asarray(W)
        k, l = np.triu_indices(self.m, 1)
        return np.concatenate([np.real(np.diag(W)), np.real(W[k, l]), np.imag(W[k, l])])


@dataclass
class ConicSolution:
    values: dict
    objective: float
    status: str
    kkt_residual: float
    x: np.ndarray
    iterations: int = 0


@dataclass
class ConicProblem:
    """Maximise ``sum c_i log2(f_i) + g - 0.5 sum w_k (x_k - z_k)^2``."""

    n: int = 0
    variables: dict = field(default_factory=dict)
    log_terms: list = field(default_factory=list)
    linear: Affine = field(default_factory=Affine)
    prox: list = field(default_factory=list)
    constraints: list = field(default_factory=list)

    def _alloc(self, k):
        idx = np.arange(self.n, self.n + k)
        self.n += k
        return idx

    def _check_name(self, name):
        if name in self.variables:
            raise ValueError(f"duplicate variable {name!r}")

    def add_vector(self, name, dim) -> VectorVar:
        self._check_name(name)
        v = VectorVar(name, self._alloc(dim))
        self.variables[name] = v
        return v

    def add_hermitian(self, name, m, psd=True) -> HermitianVar:
        self._check_name(name)
        t = m * (m - 1) // 2
        idx = self._alloc(m * m)
        v = HermitianVar(name, m, idx[:m], idx[m:m + t], idx[m + t:], psd)
        self.variables[name] = v
        if psd:
            self.constraints.append(("psd", name))
        return v

    # objective -----------------------------------------------------------
    def add_log2(self, expr: Affine, coef=1.0):
        if coef < 0:
            raise ValueError("log coefficients must be non-negative for concavity")
        self.log_terms.append((float(coef), expr))

    def add_linear(self, expr: Affine):
        self.linear = self.linear + expr

    def add_prox(self, var, center, weight):
        """Subtract ``0.5 * weight * ||var - center||^2`` from the objective."""
        if weight < 0:
            raise ValueError("prox weight must be non-negative")
        idx = np.asarray(var.idx)
        self.prox.append((idx, np.asarray(center, dtype=float).ravel(), float(weight)))

    # constraints ---------------------------------------------------------
    def add_le(self, expr: Affine, rhs=0.0):
        self.constraints.append(("le", expr - rhs))

    def add_ge(self, expr: Affine, rhs=0.0):
        self.constraints.append(("le", rhs - expr))

    def add_eq(self, expr: Affine, rhs=0.0):
        self.constraints.append(("eq", expr - rhs))

    def add_soc(self, t: Affine, xs):
        """``||xs|| <= t``."""
        self.constraints.append(("soc", [t] + list(xs)))

    # evaluation ----------------------------------------------------------
    def objective_value(self, x) -> float:
        x = np.asarray(x)
        val = self.linear.value(x)
        for c, e in self.log_terms:
            arg = e.value(x)
            val += c * (np.log2(arg) if arg > 0 else -np.inf)
        for idx, z, w in self.prox:
            val -= 0.5 * w * float(np.sum((x[idx] - z) ** 2))
        return float(val)


def _psd_embedding_rows(var: HermitianVar):
    """Rows of the svec of the real embedding, in Clarabel's order
    (upper triangle, column major, off-diagonals scaled by sqrt 2)."""
    m = var.m
    n2 = 2 * m
    re_of, im_of = {}, {}
    k, l = np.triu_indices(m, 1)
    for t, (a, b) in enumerate(zip(k, l)):
        re_of[(a, b)] = var.re[t]
        im_of[(a, b)] = var.im[t]
    rows = []
    r2 = np.sqrt(2.0)
    for j in range(n2):
        for i in range(j + 1):
            s = 1.0 if i == j else r2
            if i < m and j < m or i >= m and j >= m:
                a, b = i % m, j % m
                if a == b:
                    rows.append(([var.diag[a]], [s]))
                else:
                    rows.append(([re_of[(a, b)]], [s]))
            else:
                # upper-right block holds -Im W[a, b]
                a, b = i, j - m
                if a == b:
                    rows.append(([], []))
                elif a < b:
                    rows.append(([im_of[(a, b)]], [-s]))
                else:
                    rows.append(([im_of[(b, a)]], [s]))
    return rows


def _log_scale(e: Affine) -> float:
    s = max(float(np.max(np.abs(e.val))) if len(e.val) else 0.0, abs(e.const))
    return s if s > 0 else 1.0


def _compile(p: ConicProblem):
    n_log = len(p.log_terms)
    n = p.n + n_log
    t_idx = np.arange(p.n, n)
    rows_i, rows_j, rows_v, b = [], [], [], []
    cones = []
    r = 0

    def push(expr: Affine, sign=1.0):
        # one row of s = b - A x with s = sign * expr
        nonlocal r
        rows_i.extend([r] * len(expr.idx))
        rows_j.extend(expr.idx.tolist())
        rows_v.extend((-sign * expr.val).tolist())
        b.append(sign * expr.const)
        r += 1

    def unit(expr: Affine):
        # rows are scaled to unit max-coefficient; this is what keeps
        # Clarabel's termination criteria meaningful on raw channel gains
        s = float(np.max(np.abs(expr.val))) if len(expr.val) else abs(expr.const)
        return expr if s == 0 else expr / s

    eqs = [unit(c[1]) for c in p.constraints if c[0] == "eq"]
    for e in eqs:
        push(e)
    if eqs:
        cones.append(clarabel.ZeroConeT(len(eqs)))
    les = [unit(c[1]) for c in p.constraints if c[0] == "le"]
    for e in les:
        push(e, -1.0)
    if les:
        cones.append(clarabel.NonnegativeConeT(len(les)))
    for kind, item in p.constraints:
        if kind == "soc":
            for e in item:
                push(e)
            cones.append(clarabel.SecondOrderConeT(len(item)))
        elif kind == "psd":
            var = p.variables[item]
            for idx, val in _psd_embedding_rows(var):
                push(Affine(idx, val))
            cones.append(clarabel.PSDTriangleConeT(2 * var.m))
    scales = [_log_scale(e) for _, e in p.log_terms]
    for (c, e), t, scale in zip(p.log_terms, t_idx, scales):
        # (t, 1, e / scale) in the exponential cone  <=>  t <= ln e - ln scale
        push(Affine([t], [1.0]))
        push(Affine.constant(1.0))
        push(e / scale)
        cones.append(clarabel.ExponentialConeT())

    A = sp.csc_matrix((rows_v, (rows_i, rows_j)), shape=(r, n))
    q = -p.linear.dense(n)
    for (c, _), t in zip(p.log_terms, t_idx):
        q[t] -= c * LOG2E
    pdiag = np.zeros(n)
    for idx, z, w in p.prox:
        np.add.at(pdiag, idx, w)
        np.add.at(q, idx, -w * z)
    P = sp.diags(pdiag, format="csc") if np.any(pdiag) else sp.csc_matrix((n, n))
    return P, q, A, np.asarray(b, dtype=float), cones


def solve(p: ConicProblem, tolerance=1e-8, max_iter=200) -> ConicSolution:
    """Solve ``p`` with Clarabel. Deterministic for identical inputs."""
    P, q, A, b, cones = _compile(p)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_feas = tolerance
    settings.tol_gap_abs = tolerance
    settings.tol_gap_rel = tolerance
    settings.max_threads = 1
    # the default (1e-8) lets nearly rank-deficient SDR iterates stall the
    # factorisation; a slightly larger shift keeps them solvable
    settings.static_regularization_constant = STATIC_REG
    sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    status = str(sol.status)
    if status == "Solved":
        label = "optimal"
    elif "PrimalInfeasible" in status:
        label = "infeasible"
    else:
        label = "max_iter"
    x = np.asarray(sol.x, dtype=float)
    xv = x[:p.n]
    gap = abs(sol.obj_val - sol.obj_val_dual) / max(1.0, abs(sol.obj_val))
    kkt = float(max(sol.r_prim, sol.r_dual, gap)) if np.all(np.isfinite(x)) else np.inf
    values = {}
    for name, v in p.variables.items():
        values[name] = v.assemble(xv) if isinstance(v, HermitianVar) else xv[v.idx].copy()
    obj = p.objective_value(xv) if label != "infeasible" else -np.inf
    return ConicSolution(values, obj, label, kkt, xv, int(sol.iterations))


def _spectral_ratio(lam, floor):
    """``lmax / tr`` with eigenvalues of magnitude at most ``floor`` (solver
    noise) left out of the trace."""
    kept = lam[np.abs(lam) > floor]
    tr = float(np.sum(kept))
    if tr <= 0:
        return 1.0
    return float(lam[-1] / tr)


def extract_rank_one(W, min_ratio=0.999, floor=0.0):
    """Return ``(sqrt(lmax) q_max, ratio)``; raise :class:`RankOneError` when
    ``lmax / tr(W)`` is below ``min_ratio``. Eigenvalues no larger than
    ``floor`` in magnitude do not count towards the trace."""
    W = 0.5 * (np.asarray(W) + np.conj(np.asarray(W).T))
    lam, vec = np.linalg.eigh(W)
    tr = float(np.real(np.trace(W)))
    if tr <= 0:
        return np.zeros(W.shape[0], dtype=complex), 1.0
    ratio = _spectral_ratio(lam, floor)
    if ratio < min_ratio:
        raise RankOneError(ratio, min_ratio)
    q = vec[:, -1]
    # fix the global phase so the first nonzero entry is real positive
    k = int(np.argmax(np.abs(q) > 1e-12))
    q = q * np.exp(-1j * np.angle(q[k]))
    return np.sqrt(max(lam[-1], 0.0)) * q, ratio


def rank_ratio(W, floor=0.0) -> float:
    W = np.asarray(W)
    tr = float(np.real(np.trace(W)))
    if tr <= 0:
        return 1.0
    return _spectral_ratio(np.linalg.eigvalsh(0.5 * (W + np.conj(W.T))), floor)


def spectral_linearization(W_ref):
    """Spectral norm of PSD ``W_ref`` and its supporting subgradient
    ``q q^H``: ``||W||_2 >= value + tr(G (W - W_ref))`` for all PSD ``W``."""
    W_ref = 0.5 * (np.asarray(W_ref) + np.conj(np.asarray(W_ref).T))
    lam, vec = np.linalg.eigh(W_ref)
    q = vec[:, -1]
    return float(lam[-1]), np.outer(q, np.conj(q))


# -- text dump -----------------------------------------------------------

def _fmt_affine(e: Affine) -> str:
    terms = " ".join(f"{i}:{v!r}" for i, v in zip(e.idx.tolist(), e.val.tolist()))
    return f"{e.const!r} | {terms}".rstrip()


def _parse_affine(s: str) -> Affine:
    const, _, terms = s.partition("|")
    idx, val = [], []
    for tok in terms.split():
        i, v = tok.split(":")
        idx.append(int(i))
        val.append(float(v))
    return Affine(idx, val, float(const))


def dumps(p: ConicProblem) -> str:
    """Plain-text serialisation for debugging; :func:`loads` reverses it."""
    out = io.StringIO()
    out.write(DUMP_HEADER + "\n")
    for name, v in p.variables.items():
        if isinstance(v, HermitianVar):
            out.write(f"var hermitian {name} {v.m} {int(v.psd)}\n")
        else:
            out.write(f"var vector {name} {len(v)}\n")
    for c, e in p.log_terms:
        out.write(f"obj log2 {c!r} {_fmt_affine(e)}\n")
    out.write(f"obj linear {_fmt_affine(p.linear)}\n")
    for idx, z, w in p.prox:
        out.write(f"obj prox {w!r} {' '.join(map(str, idx.tolist()))} ; {' '.join(repr(float(t)) for t in z)}\n")
    for kind, item in p.constraints:
        if kind in ("le", "eq"):
            out.write(f"con {kind} {_fmt_affine(item)}\n")
        elif kind == "soc":
            out.write(f"con soc {len(item)}\n")
            for e in item:
                out.write(f"  {_fmt_affine(e)}\n")
    return out.getvalue()


def loads(text: str) -> ConicProblem:
    lines = text.splitlines()
    if not lines or lines[0].strip() != DUMP_HEADER:
        raise ValueError("not a conic problem dump (bad header)")
    p = ConicProblem()
    it = iter(lines[1:])
    for line in it:
        if not line.strip():
            continue
        parts = line.split(maxsplit=2)
        if parts[0] == "var":
            fields = parts[2].split()
            if parts[1] == "hermitian":
                p.add_hermitian(fields[0], int(fields[1]), psd=bool(int(fields[2])))
            else:
                p.add_vector(fields[0], int(fields[1]))
        elif parts[0] == "obj":
            if parts[1] == "log2":
                c, rest = parts[2].split(maxsplit=1)
                p.add_log2(_parse_affine(rest), float(c))
            elif parts[1] == "linear":
                p.linear = _parse_affine(parts[2])
            elif parts[1] == "prox":
                w, rest = parts[2].split(maxsplit=1)
                idx_s, _, z_s = rest.partition(";")
                p.prox.append((np.array([int(t) for t in idx_s.split()], dtype=np.int64),
                               np.array([float(t) for t in z_s.split()]), float(w)))
        elif parts[0] == "con":
            if parts[1] in ("le", "eq"):
                p.constraints.append((parts[1], _parse_affine(parts[2])))
            elif parts[1] == "soc":
                k = int(parts[2])
                p.constraints.append(("soc", [_parse_affine(next(it).strip()) for _ in range(k)]))
        else:
            raise ValueError(f"unrecognised dump line: {line!r}")
    return p
