"""A small reverse-mode autodiff tape over numpy arrays.

Only the operations the CoED forward pass needs are provided. Each op computes
its value eagerly and, when any input requires a gradient, appends a closure
that maps the output gradient to input gradients.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp


class TapeError(RuntimeError):
    pass


class Tensor:
    """An array plus the bookkeeping the tape needs."""

    __slots__ = ("value", "requires_grad", "tape_id", "name", "__weakref__")

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.tape_id: Optional[int] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, name={self.name!r})"


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class SparsePattern:
    """Fixed COO pattern (rows, cols) with a cached CSR layout.

    Values arrive in the COO order of ``rows``/``cols``; ``perm`` reorders
    them into CSR order, so building a matrix for new values is O(nnz).
    """

    def __init__(self, rows, cols, n: int):
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.n = n
        self.perm = np.lexsort((self.cols, self.rows))
        self.indices = self.cols[self.perm].astype(np.int32)
        counts = np.bincount(self.rows, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)

    def matrix(self, values: np.ndarray) -> sp.csr_matrix:
        return sp.csr_matrix((values[self.perm], self.indices, self.indptr),
                             shape=(self.n, self.n))


class Tape:
    """Records differentiable operations for one forward pass.

    A disabled tape evaluates the same ops without recording anything.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._nodes: List[Tuple[Tensor, Sequence[Tensor], Callable]] = []
        self._leaves: Dict[str, Tensor] = {}

    # -- bookkeeping -------------------------------------------------------

    def leaf(self, value, name: Optional[str] = None, requires_grad: bool = True) -> Tensor:
        t = Tensor(value, requires_grad=requires_grad and self.enabled, name=name)
        if name is not None and t.requires_grad:
            if name in self._leaves:
                raise TapeError(f"duplicate leaf name {name!r}")
            self._leaves[name] = t
        return t

    def const(self, value) -> Tensor:
        return Tensor(value, requires_grad=False)

    def _emit(self, value, parents: Sequence[Tensor], backward: Callable) -> Tensor:
        out = Tensor(value)
        if self.enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.tape_id = len(self._nodes)
            self._nodes.append((out, parents, backward))
        return out

    def __len__(self):
        return len(self._nodes)

    # -- elementwise -------------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        sa, sb = a.shape, b.shape
        return self._emit(a.value + b.value, (a, b),
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    def sum_all(self, terms: Sequence[Tensor]) -> Tensor:
        out = terms[0]
        for t in terms[1:]:
            out = self.add(out, t)
        return out

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        av, bv = a.value, b.value
        return self._emit(av * bv, (a, b),
                          lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))

    def scale(self, a: Tensor, c: float) -> Tensor:
        return self._emit(a.value * c, (a,), lambda g: (g * c,))

    def affine(self, a: Tensor, c: float, d: float) -> Tensor:
        return self._emit(a.value * c + d, (a,), lambda g: (g * c,))

    def cos(self, a: Tensor) -> Tensor:
        # sin(pi/2 - x) keeps cos and sin bitwise equal at pi/4, as in fuzzy_weights
        s = np.sin(a.value)
        return self._emit(np.sin(0.5 * np.pi - a.value), (a,), lambda g: (-g * s,))

    def sin(self, a: Tensor) -> Tensor:
        c = np.cos(a.value)
        return self._emit(np.sin(a.value), (a,), lambda g: (g * c,))

    def tanh(self, a: Tensor) -> Tensor:
        y = np.tanh(a.value)
        return self._emit(y, (a,), lambda g: (g * (1.0 - y * y),))

    def rsqrt_floor(self, a: Tensor, eps: float) -> Tensor:
        """``max(a, eps) ** -0.5``; zero gradient where the floor is active."""
        x = a.value
        active = x > eps
        y = 1.0 / np.sqrt(np.maximum(x, eps))
        dy = np.where(active, -0.5 * y * y * y, 0.0)
        return self._emit(y, (a,), lambda g: (g * dy,))

    def relu(self, a: Tensor) -> Tensor:
        m = a.value > 0
        return self._emit(np.where(m, a.value, 0.0), (a,), lambda g: (g * m,))

    def row_normalize(self, a: Tensor, floor: float = 1e-300) -> Tensor:
        """Unit L2 norm along the last axis."""
        x = a.value
        n = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
        n = np.maximum(n, floor)
        y = x / n

        def back(g):
            return ((g - y * np.sum(g * y, axis=-1, keepdims=True)) / n,)

        return self._emit(y, (a,), back)

    # -- indexing and reductions ---------------------------------------------

    def concat(self, parts: Sequence[Tensor]) -> Tensor:
        sizes = [p.shape[0] for p in parts]
        splits = np.cumsum(sizes)[:-1]
        return self._emit(np.concatenate([p.value for p in parts]), tuple(parts),
                          lambda g: tuple(np.split(g, splits)))

    def gather(self, a: Tensor, index: np.ndarray) -> Tensor:
        """``a[index]`` for a 1-D tensor."""
        n = a.shape[0]
        return self._emit(a.value[index], (a,),
                          lambda g: (np.bincount(index, weights=g, minlength=n),))

    def segment_sum(self, a: Tensor, index: np.ndarray, n: int) -> Tensor:
        """``out[k] = sum(a[index == k])`` for a 1-D tensor (row reduction)."""
        return self._emit(np.bincount(index, weights=a.value, minlength=n), (a,),
                          lambda g: (g[index],))

    def sum(self, a: Tensor) -> Tensor:
        shape = a.shape
        return self._emit(np.array(a.value.sum()), (a,),
                          lambda g: (np.full(shape, float(g)),))

    # -- products ----------------------------------------------------------

    def matmul(self, x: Tensor, w: Tensor) -> Tensor:
        """``x @ w`` contracting the last axis of ``x`` with a 2-D ``w``."""
        xv, wv = x.value, w.value

        def back(g):
            gx = g @ wv.T if x.requires_grad else None
            gw = xv.reshape(-1, xv.shape[-1]).T @ g.reshape(-1, g.shape[-1]) if w.requires_grad else None
            return gx, gw

        return self._emit(xv @ wv, (x, w), back)

    def spmm(self, values: Tensor, pattern: SparsePattern, x: Tensor) -> Tensor:
        """Sparse ``P @ x`` where ``P`` has ``pattern`` and trainable ``values``.

        ``x`` has the node axis first; trailing axes are flattened.
        """
        xv = np.ascontiguousarray(x.value)
        shape = xv.shape
        x2 = xv.reshape(shape[0], -1)
        P = pattern.matrix(values.value)
        out = (P @ x2).reshape(shape)

        need_v = values.requires_grad
        # small graphs: one GEMM then sampling beats gathering 2E feature rows
        dense = pattern.n * pattern.n <= 64 * len(pattern.rows)

        def back(g):
            g2 = np.ascontiguousarray(g).reshape(shape[0], -1)
            gx = (P.T @ g2).reshape(shape) if x.requires_grad else None
            gv = None
            if need_v:
                if dense:
                    gv = (g2 @ x2.T)[pattern.rows, pattern.cols]
                else:
                    gv = np.einsum("kx,kx->k", np.take(g2, pattern.rows, 0), np.take(x2, pattern.cols, 0))
            return gv, gx

        return self._emit(out, (values, x), back)

    # -- losses ------------------------------------------------------------

    def masked_mse(self, pred: Tensor, target: np.ndarray, mask: Optional[np.ndarray] = None) -> Tensor:
        """Mean squared error over kept entries.

        ``mask`` covers the leading axes of ``pred`` (e.g. (N, B)) and is
        broadcast over the feature axis; ``True`` means the entry counts.
        """
        p = pred.value
        t = np.asarray(target, dtype=np.float64)
        if p.shape != t.shape:
            raise ValueError(f"pred shape {p.shape} != target shape {t.shape}")
        if mask is None:
            w = np.ones(p.shape[:-1] + (1,))
        else:
            w = np.asarray(mask, dtype=np.float64).reshape(p.shape[:-1] + (1,))
        count = float(w.sum()) * p.shape[-1]
        if count == 0:
            raise ValueError("every entry is masked out")
        d = (p - t) * w
        loss = float(np.sum(d * d) / count)
        return self._emit(np.array(loss), (pred,), lambda g: (2.0 * float(g) * d / count,))

    # -- reverse pass ----------------------------------------------------------

    def backward(self, loss: Tensor) -> Dict[str, np.ndarray]:
        """Gradients of a scalar ``loss`` for every named leaf.

        Returns:
            Mapping from leaf name to gradient (same shape as the leaf). Leaves
            the loss does not depend on get zero gradients.

        Raises:
            TapeError: if ``loss`` is not a scalar recorded on this tape.
        """
        if loss.value.size != 1:
            raise TapeError("backward needs a scalar loss")
        if not loss.requires_grad or loss.tape_id is None:
            raise TapeError("loss is detached from the tape")
        if loss.tape_id >= len(self._nodes) or self._nodes[loss.tape_id][0] is not loss:
            raise TapeError("loss was recorded on a different tape")
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for out, parents, back in reversed(self._nodes[: loss.tape_id + 1]):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for p, gp in zip(parents, back(g)):
                if not p.requires_grad:
                    continue
                k = id(p)
                if k in grads:
                    grads[k] = grads[k] + gp
                else:
                    grads[k] = gp
        return {name: grads.get(id(t), np.zeros_like(t.value)).reshape(t.shape)
                for name, t in self._leaves.items()}
