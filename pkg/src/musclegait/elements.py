"""Element-based sparse NLP assembly.

A *family* is a small residual function applied to many variable
slices of the flat decision vector (one *instance* per slice), plus a
per-instance constant block.  Residuals, Jacobians, and exact
Lagrangian Hessians are evaluated with vmapped JAX transforms and
scattered into global sparse structures.  This keeps every derivative
exact while the per-family work stays dense and tiny.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np
import scipy.sparse as sp

jax.config.update("jax_enable_x64", True)

__all__ = ["Family", "Assembly"]


@dataclass
class Family:
    """One constraint (or cost-term) family.

    ``fn(w, c) -> r`` maps an instance's variable slice ``w`` (length
    k) and constant block ``c`` to a residual vector of fixed length.
    ``vidx`` has shape (n_inst, k); ``consts`` has shape (n_inst, kc).
    """

    name: str
    tag: str
    fn: Callable
    vidx: np.ndarray
    consts: np.ndarray
    out_dim: int
    row_offset: int = -1   # assigned by Assembly
    _res: Callable | None = field(default=None, repr=False)
    _jac: Callable | None = field(default=None, repr=False)
    _hess: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vidx = np.asarray(self.vidx, dtype=np.int64)
        if self.vidx.ndim != 2:
            raise ValueError(f"family {self.name}: vidx must be 2-D")
        self.consts = np.asarray(self.consts, dtype=np.float64)
        if self.consts.ndim == 1:
            self.consts = self.consts[:, None] if self.consts.size else \
                np.zeros((self.n_inst, 0))
        if self.consts.shape[0] != self.n_inst:
            raise ValueError(f"family {self.name}: consts rows mismatch")
        fn = self.fn
        self._res = jax.jit(jax.vmap(fn))
        self._jac = jax.jit(jax.vmap(jax.jacfwd(fn, argnums=0)))

        def lag(w, c, lm):
            return jnp.dot(lm, fn(w, c))

        self._hess = jax.jit(jax.vmap(jax.hessian(lag, argnums=0)))

    @property
    def n_inst(self) -> int:
        return self.vidx.shape[0]

    @property
    def n_rows(self) -> int:
        return self.n_inst * self.out_dim

    def gather(self, x: np.ndarray) -> jnp.ndarray:
        return jnp.asarray(x[self.vidx])

    def residual(self, x: np.ndarray) -> np.ndarray:
        r = self._res(self.gather(x), jnp.asarray(self.consts))
        return np.asarray(r).ravel()

    def jac_coo(self, x: np.ndarray):
        """(rows, cols, vals) triplets in global numbering."""
        J = np.asarray(self._jac(self.gather(x), jnp.asarray(self.consts)))
        n, r, k = J.shape
        rows = (self.row_offset + np.arange(n)[:, None, None] * r
                + np.arange(r)[None, :, None])
        rows = np.broadcast_to(rows, (n, r, k)).ravel()
        cols = np.broadcast_to(self.vidx[:, None, :], (n, r, k)).ravel()
        return rows, cols, J.ravel()

    def hess_coo(self, x: np.ndarray, lam: np.ndarray):
        """Lagrangian Hessian triplets for this family's rows."""
        lm = lam[self.row_offset:self.row_offset + self.n_rows]
        lm = jnp.asarray(lm.reshape(self.n_inst, self.out_dim))
        H = np.asarray(self._hess(self.gather(x), jnp.asarray(self.consts), lm))
        n, k, _ = H.shape
        rows = np.broadcast_to(self.vidx[:, :, None], (n, k, k)).ravel()
        cols = np.broadcast_to(self.vidx[:, None, :], (n, k, k)).ravel()
        return rows, cols, H.ravel()


class Assembly:
    """Ordered family collection exposing solver callbacks."""

    def __init__(self, n_vars: int):
        self.n = n_vars
        self.families: list[Family] = []
        self.cl_parts: list[np.ndarray] = []
        self.cu_parts: list[np.ndarray] = []
        self._m = 0
        self._jac_cache: tuple | None = None

    def add(self, fam: Family, cl=0.0, cu=0.0) -> None:
        if np.max(fam.vidx, initial=0) >= self.n:
            raise ValueError(f"family {fam.name}: index out of range")
        fam.row_offset = self._m
        self.families.append(fam)
        self.cl_parts.append(np.full(fam.n_rows, cl)
                             if np.isscalar(cl) else np.asarray(cl, float))
        self.cu_parts.append(np.full(fam.n_rows, cu)
                             if np.isscalar(cu) else np.asarray(cu, float))
        if self.cl_parts[-1].shape != (fam.n_rows,) \
                or self.cu_parts[-1].shape != (fam.n_rows,):
            raise ValueError(f"family {fam.name}: bound shape mismatch")
        self._m += fam.n_rows

    @property
    def m(self) -> int:
        return self._m

    def bounds(self):
        if not self.families:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(self.cl_parts), np.concatenate(self.cu_parts)

    def row_names(self) -> list[str]:
        names = []
        for f in self.families:
            for i in range(f.n_inst):
                for r in range(f.out_dim):
                    names.append(f"{f.tag}:{f.name}[{i}][{r}]")
        return names

    def row_tags(self) -> list[str]:
        tags = []
        for f in self.families:
            tags.extend([f.tag] * f.n_rows)
        return tags

    def constraints(self, x: np.ndarray) -> np.ndarray:
        if not self.families:
            return np.zeros(0)
        return np.concatenate([f.residual(x) for f in self.families])

    def jacobian(self, x: np.ndarray) -> sp.csc_matrix:
        rows, cols, vals = [], [], []
        for f in self.families:
            r, c, v = f.jac_coo(x)
            rows.append(r); cols.append(c); vals.append(v)
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self._m, self.n)).tocsc()

    def hessian(self, x: np.ndarray, lam: np.ndarray) -> sp.coo_matrix:
        rows, cols, vals = [], [], []
        for f in self.families:
            r, c, v = f.hess_coo(x, lam)
            rows.append(r); cols.append(c); vals.append(v)
        if not rows:
            return sp.coo_matrix((self.n, self.n))
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n))
