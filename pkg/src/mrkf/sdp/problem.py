"""Block LMI problems over matrix decision variables.

An :class:`SdpProblem` collects :class:`MatrixVariable` declarations, a list
of :class:`LmiBlock` constraints and a linear objective.  :func:`canonicalize`
turns it into the standard form

    minimize    c^T x
    subject to  F0_b + sum_i x_i F_i,b  >= 0   for every block b

with every matrix variable scalarized (upper triangle for symmetric ones).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import UnassignedVariable, UndeclaredVariable


@dataclass(frozen=True)
class MatrixVariable:
    """A named matrix-valued decision variable."""

    name: str
    shape: tuple[int, int]
    symmetric: bool = False

    def __post_init__(self):
        rows, cols = self.shape
        if rows < 1 or cols < 1:
            raise ValueError(f"variable {self.name!r} needs a positive shape")
        if self.symmetric and rows != cols:
            raise ValueError(f"symmetric variable {self.name!r} must be square")

    @property
    def n_scalars(self) -> int:
        r, c = self.shape
        return r * (r + 1) // 2 if self.symmetric else r * c

    def vec_map(self) -> sp.csr_matrix:
        """Sparse map from scalar unknowns to the row-major entries of the matrix."""
        r, c = self.shape
        if not self.symmetric:
            return sp.identity(r * c, format="csr")
        iu, ju = np.triu_indices(r)
        k = np.arange(iu.size)
        rows = np.concatenate([iu * r + ju, ju * r + iu])
        cols = np.concatenate([k, k])
        # diagonal entries were listed twice
        keep = np.ones(rows.size, dtype=bool)
        keep[iu.size:][iu == ju] = False
        return sp.csr_matrix(
            (np.ones(keep.sum()), (rows[keep], cols[keep])), shape=(r * r, iu.size)
        )

    def unpack(self, x: np.ndarray) -> np.ndarray:
        r, c = self.shape
        if not self.symmetric:
            return np.asarray(x, dtype=float).reshape(r, c).copy()
        M = np.zeros((r, r))
        iu, ju = np.triu_indices(r)
        M[iu, ju] = x
        M[ju, iu] = x
        return M

    def pack(self, M: np.ndarray) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        if M.shape != self.shape:
            raise ValueError(f"value for {self.name!r} has shape {M.shape}, expected {self.shape}")
        if not self.symmetric:
            return M.reshape(-1).copy()
        iu, ju = np.triu_indices(self.shape[0])
        return 0.5 * (M[iu, ju] + M[ju, iu])


def _as_matrix(coef, size: int) -> np.ndarray:
    if coef is None:
        return np.eye(size)
    coef = np.asarray(coef, dtype=float)
    if coef.ndim == 0:
        return float(coef) * np.eye(size)
    return np.atleast_2d(coef)


@dataclass(frozen=True)
class _Term:
    row: int
    col: int
    var: MatrixVariable
    left: np.ndarray
    right: np.ndarray
    # scalar variable times the identity of a diagonal block
    identity: bool = False


class LmiBlock:
    """Affine symmetric block matrix constrained to be PSD.

    The block is partitioned into ``len(sizes)`` row/column groups.  A term
    ``left @ V @ right`` placed at block position ``(row, col)`` with
    ``row != col`` also places its transpose at ``(col, row)``; diagonal
    placements are symmetrized.  The constraint is ``M >= margin * I``.
    """

    def __init__(self, sizes, margin: float = 0.0, name: str = ""):
        self.sizes = [int(s) for s in sizes]
        if any(s < 1 for s in self.sizes):
            raise ValueError("block sizes must be positive")
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.margin = float(margin)
        self.name = name
        self.terms: list[_Term] = []
        self.constants: list[tuple[int, int, np.ndarray]] = []

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    def add(self, row, col, var: MatrixVariable, left=None, right=None, scale=1.0):
        """Place ``scale * left @ var @ right`` at block position (row, col)."""
        a, b = var.shape
        L = scale * _as_matrix(left, a)
        R = _as_matrix(right, b)
        if L.shape != (self.sizes[row], a) or R.shape != (b, self.sizes[col]):
            raise ValueError(
                f"term {var.name!r} at ({row}, {col}) in block {self.name!r}: "
                f"left {L.shape} @ {var.shape} @ right {R.shape} does not fit "
                f"{(self.sizes[row], self.sizes[col])}"
            )
        self.terms.append(_Term(row, col, var, L, R))
        return self

    def add_identity(self, row, var: MatrixVariable, scale=1.0):
        """Place ``scale * var * I`` on diagonal block ``row`` (``var`` is 1 x 1)."""
        if var.shape != (1, 1):
            raise ValueError(f"add_identity needs a 1 x 1 variable, got {var.shape}")
        s = self.sizes[row]
        self.terms.append(_Term(row, row, var, scale * np.eye(s), np.eye(s), identity=True))
        return self

    def constant(self, row, col, M):
        M = _as_matrix(M, self.sizes[row]) if np.ndim(M) == 0 else np.atleast_2d(np.asarray(M, float))
        if M.shape != (self.sizes[row], self.sizes[col]):
            raise ValueError(f"constant at ({row}, {col}) has shape {M.shape}")
        self.constants.append((row, col, M))
        return self

    def variables(self) -> list[MatrixVariable]:
        seen = {}
        for t in self.terms:
            seen.setdefault(t.var.name, t.var)
        return list(seen.values())

    def _place(self, out, row, col, M):
        r0, c0 = self.offsets[row], self.offsets[col]
        if row == col:
            out[r0:r0 + M.shape[0], c0:c0 + M.shape[1]] += 0.5 * (M + M.T)
        else:
            out[r0:r0 + M.shape[0], c0:c0 + M.shape[1]] += M
            out[c0:c0 + M.shape[1], r0:r0 + M.shape[0]] += M.T

    def constant_matrix(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        for row, col, M in self.constants:
            self._place(out, row, col, M)
        return out

    def assemble(self, values) -> np.ndarray:
        """Numeric value of the block (without the margin) at ``values``."""
        out = self.constant_matrix()
        for t in self.terms:
            if t.var.name not in values:
                raise UnassignedVariable(t.var.name)
            V = np.asarray(values[t.var.name], float)
            if t.identity:
                self._place(out, t.row, t.col, float(V.reshape(-1)[0]) * t.left)
            else:
                self._place(out, t.row, t.col, t.left @ V @ t.right)
        return out

    def coefficient_triplets(self, var_offset: dict[str, int]):
        """COO pieces (vec index, unknown index, value) of the linear part."""
        s = self.dim
        buf_r, buf_c, buf_v = [], [], []
        for t in self.terms:
            if t.identity:
                K = sp.csr_matrix(t.left.reshape(-1, 1)).tocoo()
            else:
                K = sp.kron(sp.csr_matrix(t.left), sp.csr_matrix(t.right.T), format="csr")
                K = (K @ t.var.vec_map()).tocoo()
            i, j = np.divmod(K.row, t.right.shape[1])
            gi = self.offsets[t.row] + i
            gj = self.offsets[t.col] + j
            unk = K.col + var_offset[t.var.name]
            if t.row == t.col:
                vals = 0.5 * K.data
            else:
                vals = K.data
            buf_r += [gi * s + gj, gj * s + gi]
            buf_c += [unk, unk]
            buf_v += [vals, vals]
        if not buf_r:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        return np.concatenate(buf_r), np.concatenate(buf_c), np.concatenate(buf_v)


@dataclass
class SdpProblem:
    """Minimize a linear objective over matrix variables subject to LMI blocks."""

    variables: list[MatrixVariable] = field(default_factory=list)
    blocks: list[LmiBlock] = field(default_factory=list)
    objective: list[tuple[MatrixVariable, object]] = field(default_factory=list)

    def variable(self, name, shape, symmetric=False) -> MatrixVariable:
        if any(v.name == name for v in self.variables):
            raise ValueError(f"variable {name!r} declared twice")
        v = MatrixVariable(name, tuple(shape), symmetric)
        self.variables.append(v)
        return v

    def constrain(self, block: LmiBlock) -> LmiBlock:
        self.blocks.append(block)
        return block

    def minimize_trace(self, var: MatrixVariable, weight=1.0):
        """Add ``trace(weight @ var)`` to the objective."""
        self.objective.append((var, weight))
        return self


@dataclass
class CanonicalForm:
    """Standard-form data: objective vector and per-block affine maps.

    ``F[b]`` is a sparse ``(s_b**2, m)`` matrix whose column i is the
    row-major vectorization of ``F_i`` for block b.
    """

    c: np.ndarray
    F0: list[np.ndarray]
    F: list[sp.csc_matrix]
    sizes: list[int]
    variables: list[MatrixVariable]
    offsets: dict[str, int]

    @property
    def n_unknowns(self) -> int:
        return self.c.size

    def unpack(self, x) -> dict[str, np.ndarray]:
        return {
            v.name: v.unpack(x[self.offsets[v.name]:self.offsets[v.name] + v.n_scalars])
            for v in self.variables
        }

    def pack(self, values) -> np.ndarray:
        x = np.zeros(self.n_unknowns)
        for v in self.variables:
            o = self.offsets[v.name]
            x[o:o + v.n_scalars] = v.pack(values[v.name])
        return x

    def block_value(self, b: int, x) -> np.ndarray:
        """F0_b + sum_i x_i F_i,b as a dense matrix."""
        s = self.sizes[b]
        return self.F0[b] + (self.F[b] @ x).reshape(s, s)

    def write_sdpa(self, path):
        """Dump in SDPA sparse format (``.dat-s``) for external cross-checks.

        SDPA reads ``sum_i x_i F_i - F_0 >= 0``, so the constant is negated;
        block margins are already folded into the constant.
        """
        lines = [f'"mrkf canonical problem, {self.n_unknowns} unknowns"',
                 str(self.n_unknowns), str(len(self.sizes)),
                 " ".join(str(s) for s in self.sizes),
                 " ".join(repr(float(v)) for v in self.c)]
        for b, s in enumerate(self.sizes):
            iu, ju = np.triu_indices(s)
            F0u = -self.F0[b][iu, ju]
            for r, cc, v in zip(iu[F0u != 0], ju[F0u != 0], F0u[F0u != 0]):
                lines.append(f"0 {b + 1} {r + 1} {cc + 1} {float(v)!r}")
            Fc = self.F[b].tocoo()
            r, cc = np.divmod(Fc.row, s)
            up = r <= cc
            for i, rr, c2, v in sorted(zip(Fc.col[up], r[up], cc[up], Fc.data[up])):
                lines.append(f"{i + 1} {b + 1} {rr + 1} {c2 + 1} {float(v)!r}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def canonicalize(p: SdpProblem) -> CanonicalForm:
    declared = {v.name: v for v in p.variables}
    for blk in p.blocks:
        for v in blk.variables():
            if declared.get(v.name) is not v:
                raise UndeclaredVariable(v.name)
    for v, _ in p.objective:
        if declared.get(v.name) is not v:
            raise UndeclaredVariable(v.name)

    offsets, m = {}, 0
    for v in p.variables:
        offsets[v.name] = m
        m += v.n_scalars

    c = np.zeros(m)
    for v, weight in p.objective:
        r, cc = v.shape
        Wt = np.asarray(weight, dtype=float)
        if Wt.ndim == 0:
            if r != cc:
                raise ValueError(f"trace objective on non-square {v.name!r}")
            Wt = float(Wt) * np.eye(r)
        # trace(Wt @ V) = sum_ij Wt[j, i] V[i, j]
        c[offsets[v.name]:offsets[v.name] + v.n_scalars] += v.vec_map().T @ Wt.T.reshape(-1)

    F0, F, sizes = [], [], []
    for blk in p.blocks:
        s = blk.dim
        rows, cols, vals = blk.coefficient_triplets(offsets)
        Fb = sp.csc_matrix((vals, (rows, cols)), shape=(s * s, m))
        Fb.sum_duplicates()
        Fb.eliminate_zeros()
        F.append(Fb)
        F0.append(blk.constant_matrix() - blk.margin * np.eye(s))
        sizes.append(s)
    return CanonicalForm(c, F0, F, sizes, list(p.variables), offsets)


def evaluate_block(block: LmiBlock, values) -> tuple[np.ndarray, float]:
    """Symmetrized block value and its minimum eigenvalue."""
    M = block.assemble(values)
    M = 0.5 * (M + M.T)
    return M, float(np.linalg.eigvalsh(M)[0])
