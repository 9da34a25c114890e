"""Truncated Taylor jets and scalar-field plumbing.

A :class:`Jet` stores the Taylor coefficients of an array-valued function of
``dim`` real variables around a point, truncated at total degree ``order``.
Coefficients are kept on the monomial basis ``delta**alpha`` (so the partial
derivative ``d^alpha f`` equals ``alpha! * coef[alpha]``), with the value axes
trailing the monomial axis.  Arithmetic is exact up to roundoff at the stored
order, which makes derivatives of connection coefficients, curvature and the
quantities built from them exact to machine precision.

The public scalar interface (:func:`jet_eval`, :class:`JetScalar`) is capped at
order 3.  The engine itself is order-generic because some constructions chain
several differentiations (see the induction module).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

PUBLIC_MAX_ORDER = 3
ENGINE_MAX_ORDER = 8


class JetError(Exception):
    pass


class UnsupportedOrderError(JetError):
    pass


class NumericDomainError(JetError, ValueError):
    pass


# ---------------------------------------------------------------------------
# monomial tables


class _Tables:
    """Index bookkeeping for monomials of degree <= order in dim variables."""

    def __init__(self, dim: int, order: int):
        self.dim = dim
        self.order = order
        monos: list[tuple[int, ...]] = []
        for deg in range(order + 1):
            block = [
                a for a in itertools.product(range(deg + 1), repeat=dim) if sum(a) == deg
            ]
            block.sort(reverse=True)
            monos.extend(block)
        self.monos = monos
        self.index = {a: i for i, a in enumerate(monos)}
        self.size = len(monos)
        self.degree = np.array([sum(a) for a in monos])
        self.factorial = np.array([math.prod(math.factorial(k) for k in a) for a in monos], float)

        pi, pj, pl = [], [], []
        for i, a in enumerate(monos):
            for j, b in enumerate(monos):
                if sum(a) + sum(b) <= order:
                    pi.append(i)
                    pj.append(j)
                    pl.append(self.index[tuple(x + y for x, y in zip(a, b))])
        perm = np.argsort(pl, kind="stable")
        self.pi = np.array(pi)[perm]
        self.pj = np.array(pj)[perm]
        pl_sorted = np.array(pl)[perm]
        self.starts = np.searchsorted(pl_sorted, np.arange(self.size))

        # d/dx_v maps coefficient alpha+e_v (times alpha_v+1) onto alpha
        lower = _tables(dim, order - 1) if order > 0 else None
        self.diff_src = []
        self.diff_fac = []
        if lower is not None:
            for v in range(dim):
                src, fac = [], []
                for a in lower.monos:
                    b = list(a)
                    b[v] += 1
                    src.append(self.index[tuple(b)])
                    fac.append(b[v])
                self.diff_src.append(np.array(src))
                self.diff_fac.append(np.array(fac, float))
        # first nonzero variable of each monomial, for building powers
        self.first_var = [next((v for v in range(dim) if a[v]), -1) for a in monos]
        self.parent = [
            self.index[tuple(x - (1 if k == v else 0) for k, x in enumerate(a))] if v >= 0 else -1
            for a, v in zip(monos, self.first_var)
        ]


@lru_cache(maxsize=None)
def _tables(dim: int, order: int) -> _Tables:
    return _Tables(dim, order)


def n_monomials(dim: int, order: int) -> int:
    return math.comb(dim + order, order)


# ---------------------------------------------------------------------------
# the jet type


def _pad(coef: np.ndarray, ndim: int) -> np.ndarray:
    """Insert singleton value axes so ``coef`` has ``ndim`` value axes."""
    extra = ndim - (coef.ndim - 1)
    if extra <= 0:
        return coef
    return coef.reshape(coef.shape[:1] + (1,) * extra + coef.shape[1:])


class Jet:
    """Array-valued truncated Taylor polynomial.

    ``coef`` has shape ``(n_monomials(dim, order),) + value_shape``.
    """

    __slots__ = ("coef", "dim", "order")
    __array_ufunc__ = None  # keep numpy from swallowing mixed expressions

    def __init__(self, coef: np.ndarray, dim: int, order: int):
        self.coef = coef
        self.dim = dim
        self.order = order

    # -- construction -----------------------------------------------------
    @classmethod
    def variables(cls, x: Sequence[float], order: int) -> "Jet":
        """Coordinate functions ``x_i`` expanded at the point ``x``."""
        x = np.asarray(x, dtype=float)
        d = x.shape[0]
        _check_order(order)
        coef = np.zeros((n_monomials(d, order), d))
        coef[0] = x
        if order >= 1:
            coef[1 : d + 1] = np.eye(d)
        return cls(coef, d, order)

    @classmethod
    def constant(cls, value, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        coef = np.zeros((n_monomials(dim, order),) + value.shape)
        coef[0] = value
        return cls(coef, dim, order)

    def like(self, value) -> "Jet":
        return Jet.constant(value, self.dim, self.order)

    # -- basic properties ---------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.coef[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.coef.shape[1:]

    @property
    def ndim(self) -> int:
        return self.coef.ndim - 1

    def __len__(self) -> int:
        return self.shape[0]

    def __repr__(self) -> str:
        return f"Jet(dim={self.dim}, order={self.order}, shape={self.shape})"

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.coef[(slice(None),) + key], self.dim, self.order)

    def __iter__(self):
        for i in range(self.shape[0]):
            yield self[i]

    def transpose(self, *axes) -> "Jet":
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        elif len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Jet(self.coef.transpose((0,) + tuple(a + 1 for a in axes)), self.dim, self.order)

    @property
    def T(self) -> "Jet":
        return self.transpose()

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Jet(self.coef.reshape((self.coef.shape[0],) + tuple(shape)), self.dim, self.order)

    def sum(self, axis=None) -> "Jet":
        if axis is None:
            axis = tuple(range(self.ndim))
        elif isinstance(axis, int):
            axis = (axis,)
        axis = tuple((a % self.ndim) + 1 for a in axis)
        return Jet(self.coef.sum(axis=axis), self.dim, self.order)

    def trace(self, axis1=0, axis2=1) -> "Jet":
        return Jet(np.trace(self.coef, axis1=axis1 + 1, axis2=axis2 + 1), self.dim, self.order)

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise UnsupportedOrderError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.coef[: n_monomials(self.dim, order)], self.dim, order)

    def copy(self) -> "Jet":
        return Jet(self.coef.copy(), self.dim, self.order)

    # -- derivatives --------------------------------------------------------
    def grad(self) -> "Jet":
        """Jet (one order lower) of the gradient; new axis is last."""
        if self.order == 0:
            raise UnsupportedOrderError("order-0 jet carries no derivative information")
        tab = _tables(self.dim, self.order)
        parts = [self.coef[tab.diff_src[v]] * _bcast(tab.diff_fac[v], self.coef.ndim) for v in range(self.dim)]
        return Jet(np.stack(parts, axis=-1), self.dim, self.order - 1)

    def derivative(self, alpha: Sequence[int]) -> np.ndarray:
        """Partial derivative ``d^alpha`` at the expansion point."""
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) > self.order:
            raise UnsupportedOrderError(f"derivative of degree {sum(alpha)} exceeds order {self.order}")
        tab = _tables(self.dim, self.order)
        i = tab.index[alpha]
        return self.coef[i] * tab.factorial[i]

    def derivative_tensor(self, k: int) -> np.ndarray:
        """Full symmetric array of k-th partial derivatives, value axes first."""
        if k > self.order:
            raise UnsupportedOrderError(f"derivative of degree {k} exceeds order {self.order}")
        d = self.dim
        out = np.zeros(self.shape + (d,) * k)
        for idx in itertools.product(range(d), repeat=k):
            alpha = [0] * d
            for v in idx:
                alpha[v] += 1
            out[(Ellipsis,) + idx] = self.derivative(alpha)
        return out

    # -- composition ------------------------------------------------------
    def compose(self, inner: "Jet") -> "Jet":
        """Substitute ``inner`` (a jet vector of length ``self.dim``) for the variables.

        ``inner.value`` must coincide with the expansion point of ``self``; the
        result is a jet in the variables of ``inner`` at order
        ``min(self.order, inner.order)``.
        """
        if inner.shape != (self.dim,):
            raise JetError(f"compose needs an inner vector of length {self.dim}, got {inner.shape}")
        order = min(self.order, inner.order)
        outer = self.truncate(order)
        inner = inner.truncate(order)
        tab = _tables(self.dim, order)
        delta = inner.coef.copy()
        delta[0] = 0.0
        m_new = delta.shape[0]
        mons = np.zeros((tab.size, m_new))
        mons[0, 0] = 1.0
        dj = [Jet(delta[:, v], inner.dim, order) for v in range(self.dim)]
        for i in range(1, tab.size):
            v = tab.first_var[i]
            parent = Jet(mons[tab.parent[i]], inner.dim, order)
            mons[i] = (parent * dj[v]).coef
        coef = np.tensordot(mons.T, outer.coef, axes=(1, 0))
        return Jet(coef, inner.dim, order)

    def is_identity(self) -> bool:
        """True if this is exactly the coordinate jet of its own variables."""
        if self.shape != (self.dim,):
            return False
        if self.order == 0:
            return True
        c = self.coef
        d = self.dim
        return bool(np.array_equal(c[1 : d + 1], np.eye(d)) and not np.any(c[d + 1 :]))

    # -- arithmetic -------------------------------------------------------
    def _binary_const(self, other, op):
        other = np.asarray(other, dtype=float)
        c = _pad(self.coef, other.ndim)
        return Jet(op(c, other), self.dim, self.order)

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = _match(self, other)
            nd = max(a.ndim, b.ndim)
            return Jet(_pad(a.coef, nd) + _pad(b.coef, nd), a.dim, a.order)
        other = np.asarray(other, dtype=float)
        c = _pad(self.coef, other.ndim)
        shape = np.broadcast_shapes(c.shape[1:], other.shape)
        coef = np.broadcast_to(c, c.shape[:1] + shape).copy()
        coef[0] = coef[0] + other
        return Jet(coef, self.dim, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coef, self.dim, self.order)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return _bilinear(self, other, np.multiply)
        return self._binary_const(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return self._binary_const(1.0 / np.asarray(other, dtype=float), np.multiply)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, Jet):
            return exp(log(self) * p)
        if float(p) == int(p) and int(p) >= 0:
            p = int(p)
            result = self.like(np.ones(self.shape))
            base = self
            while p:
                if p & 1:
                    result = result * base
                base = base * base if p > 1 else base
                p >>= 1
            return result
        return power(self, float(p))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def _bcast(v: np.ndarray, ndim: int) -> np.ndarray:
    return v.reshape((-1,) + (1,) * (ndim - 1))


def _check_order(order: int) -> None:
    if order < 0 or order > ENGINE_MAX_ORDER:
        raise UnsupportedOrderError(f"jet order {order} outside 0..{ENGINE_MAX_ORDER}")


def _match(a: Jet, b: Jet) -> tuple[Jet, Jet]:
    if a.dim != b.dim:
        raise JetError(f"jets over different variable counts: {a.dim} vs {b.dim}")
    if a.order != b.order:
        k = min(a.order, b.order)
        a, b = a.truncate(k), b.truncate(k)
    return a, b


def _bilinear(a: Jet, b: Jet, op: Callable, pad: bool = True) -> Jet:
    """Leibniz rule for a bilinear operation acting on a leading batch axis."""
    a, b = _match(a, b)
    tab = _tables(a.dim, a.order)
    ac, bc = a.coef, b.coef
    if pad:
        nd = max(a.ndim, b.ndim)
        ac, bc = _pad(ac, nd), _pad(bc, nd)
    if a.order == 0:
        return Jet(op(ac, bc), a.dim, 0)
    prod = op(ac[tab.pi], bc[tab.pj])
    return Jet(np.add.reduceat(prod, tab.starts, axis=0), a.dim, a.order)


# ---------------------------------------------------------------------------
# tensor algebra on jets and arrays

_LETTERS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _parse(subscripts: str, n: int) -> tuple[list[str], str]:
    subscripts = subscripts.replace(" ", "")
    if "->" not in subscripts:
        raise ValueError("einsum subscripts must contain an explicit output")
    lhs, out = subscripts.split("->")
    ins = lhs.split(",")
    if len(ins) != n:
        raise ValueError(f"einsum expects {len(ins)} operands, got {n}")
    return ins, out


def einsum(subscripts: str, *operands):
    """``numpy.einsum`` lifted to jets (explicit ``->`` output required)."""
    ins, out = _parse(subscripts, len(operands))
    jets = [i for i, op in enumerate(operands) if isinstance(op, Jet)]
    if not jets:
        return np.einsum(subscripts, *operands)
    used = set("".join(ins) + out)
    z = next(c for c in _LETTERS if c not in used)
    if len(jets) == 1:
        k = jets[0]
        j = operands[k]
        ops = [op.coef if i == k else op for i, op in enumerate(operands)]
        sub = ",".join(z + s if i == k else s for i, s in enumerate(ins)) + "->" + z + out
        return Jet(np.einsum(sub, *ops, optimize=True), j.dim, j.order)
    if len(jets) == 2:
        k1, k2 = jets
        consts = [(i, op) for i, op in enumerate(operands) if i not in jets]
        sub_pair = z + ins[k1] + "," + z + ins[k2]
        extra = "".join("," + ins[i] for i, _ in consts)
        sub = sub_pair + extra + "->" + z + out

        def op(a, b):
            return np.einsum(sub, a, b, *[c for _, c in consts], optimize=True)

        return _bilinear(operands[k1], operands[k2], op, pad=False)
    # fold the first two operands, keeping indices still needed downstream
    a, b = operands[0], operands[1]
    rest = ins[2:]
    keep = set("".join(rest) + out)
    mid = "".join(sorted(set(ins[0] + ins[1]) & keep, key=(ins[0] + ins[1]).index))
    first = einsum(f"{ins[0]},{ins[1]}->{mid}", a, b)
    return einsum(",".join([mid] + rest) + "->" + out, first, *operands[2:])


def matmul(a, b):
    """Matrix/vector product for jets and arrays (value ndim <= 2)."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        return np.asarray(a) @ np.asarray(b)
    na = a.ndim if isinstance(a, Jet) else np.ndim(a)
    nb = b.ndim if isinstance(b, Jet) else np.ndim(b)
    sub = {
        (1, 1): "i,i->",
        (2, 1): "ij,j->i",
        (1, 2): "i,ij->j",
        (2, 2): "ij,jk->ik",
    }.get((na, nb))
    if sub is None:
        raise ValueError(f"matmul supports value ndim <= 2, got {na} and {nb}")
    return einsum(sub, a, b)


def stack(items: Sequence, axis: int = 0):
    """Stack jets (or a mix of jets and constants) along a new value axis."""
    ref = next((x for x in items if isinstance(x, Jet)), None)
    if ref is None:
        return np.stack([np.asarray(x, float) for x in items], axis=axis)
    dim, order = ref.dim, min(x.order for x in items if isinstance(x, Jet))
    coefs = []
    for x in items:
        if isinstance(x, Jet):
            if x.dim != dim:
                raise JetError("stack over jets with different variable counts")
            coefs.append(x.truncate(order).coef)
        else:
            coefs.append(Jet.constant(x, dim, order).coef)
    shape = np.broadcast_shapes(*(c.shape for c in coefs))
    coefs = [np.broadcast_to(c, shape) for c in coefs]
    nd = len(shape) - 1
    ax = axis if axis >= 0 else axis + nd + 1
    return Jet(np.stack(coefs, axis=ax + 1), dim, order)


def concatenate(items: Sequence, axis: int = 0):
    ref = next((x for x in items if isinstance(x, Jet)), None)
    if ref is None:
        return np.concatenate([np.asarray(x, float) for x in items], axis=axis)
    order = min(x.order for x in items if isinstance(x, Jet))
    coefs = [
        (x.truncate(order) if isinstance(x, Jet) else Jet.constant(x, ref.dim, order)).coef for x in items
    ]
    return Jet(np.concatenate(coefs, axis=axis + 1), ref.dim, order)


def value(x):
    """Plain value of a jet (arrays pass through)."""
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)


def inv(m):
    """Matrix inverse; for jets via the truncated Neumann series."""
    if not isinstance(m, Jet):
        return np.linalg.inv(m)
    m0 = m.value
    with np.errstate(all="raise"):
        try:
            i0 = np.linalg.inv(m0)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise NumericDomainError(f"singular matrix in jet inverse: {exc}") from exc
    if m.order == 0:
        return Jet(i0[None], m.dim, 0)
    delta = m.copy()
    delta.coef[0] = 0.0
    n = -einsum("...ij,...jk->...ik".replace("...", ""), i0, delta) if m.ndim == 2 else None
    if n is None:
        raise ValueError("jet inverse needs a square matrix value")
    ident = np.eye(m0.shape[-1])
    acc = m.like(ident)
    term = acc
    for _ in range(m.order):
        term = matmul(term, n)
        acc = acc + term
    return matmul(acc, i0)


def solve(a, b):
    return matmul(inv(a), b)


# ---------------------------------------------------------------------------
# univariate analytic functions


def _univariate(a: Jet, derivs: list[np.ndarray]) -> Jet:
    """Compose an analytic univariate with ``a`` given its derivatives at a(x0)."""
    k = a.order
    delta = a.copy()
    delta.coef[0] = 0.0
    res = a.like(derivs[k] / math.factorial(k))
    for j in range(k - 1, -1, -1):
        res = res * delta + derivs[j] / math.factorial(j)
    if not np.all(np.isfinite(res.coef)):
        raise NumericDomainError("non-finite value in jet evaluation")
    return res


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise NumericDomainError("non-finite value in evaluation")
    return x


def exp(x):
    if isinstance(x, Jet):
        e = np.exp(x.value)
        return _univariate(x, [e] * (x.order + 1))
    return _check_finite(np.exp(x))


def sinh(x):
    if isinstance(x, Jet):
        s, c = np.sinh(x.value), np.cosh(x.value)
        return _univariate(x, [s if k % 2 == 0 else c for k in range(x.order + 1)])
    return np.sinh(x)


def cosh(x):
    if isinstance(x, Jet):
        s, c = np.sinh(x.value), np.cosh(x.value)
        return _univariate(x, [c if k % 2 == 0 else s for k in range(x.order + 1)])
    return np.cosh(x)


def sin(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.value), np.cos(x.value)
        cyc = [s, c, -s, -c]
        return _univariate(x, [cyc[k % 4] for k in range(x.order + 1)])
    return np.sin(x)


def cos(x):
    if isinstance(x, Jet):
        s, c = np.sin(x.value), np.cos(x.value)
        cyc = [c, -s, -c, s]
        return _univariate(x, [cyc[k % 4] for k in range(x.order + 1)])
    return np.cos(x)


def power(x, p: float):
    """x**p for real p (x > 0 unless p is a non-negative integer)."""
    if isinstance(x, Jet):
        v = x.value
        if float(p) != int(p) and np.any(v <= 0):
            raise NumericDomainError(f"non-integer power {p} of a non-positive value")
        if p < 0 and np.any(v == 0):
            raise NumericDomainError("negative power of zero")
        derivs = []
        coeff = 1.0
        for k in range(x.order + 1):
            derivs.append(coeff * np.power(v, p - k) if coeff != 0.0 else np.zeros_like(v))
            coeff *= p - k
        return _univariate(x, derivs)
    x = np.asarray(x, dtype=float)
    if float(p) != int(p) and np.any(x < 0):
        raise NumericDomainError(f"non-integer power {p} of a negative value")
    return _check_finite(np.power(x, p))


def sqrt(x):
    if isinstance(x, Jet):
        return power(x, 0.5)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise NumericDomainError("square root of a negative value")
    return np.sqrt(x)


def reciprocal(x):
    if isinstance(x, Jet):
        return power(x, -1.0)
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise NumericDomainError("division by zero")
    return 1.0 / x


def log(x):
    if isinstance(x, Jet):
        v = x.value
        if np.any(v <= 0):
            raise NumericDomainError("log of a non-positive value")
        derivs = [np.log(v)]
        for k in range(1, x.order + 1):
            derivs.append((-1) ** (k + 1) * math.factorial(k - 1) / v**k)
        return _univariate(x, derivs)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise NumericDomainError("log of a non-positive value")
    return np.log(x)


FUNCTIONS: dict[str, Callable] = {
    "exp": exp,
    "sinh": sinh,
    "cosh": cosh,
    "sqrt": sqrt,
    "sin": sin,
    "cos": cos,
    "log": log,
}


# ---------------------------------------------------------------------------
# expression trees


class Expr:
    """Composable closed-form scalar expression in chart coordinates."""

    def evaluate(self, x):
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError

    def max_var(self) -> int:
        return -1

    def __add__(self, other):
        return Add(self, as_expr(other))

    def __radd__(self, other):
        return Add(as_expr(other), self)

    def __sub__(self, other):
        return Sub(self, as_expr(other))

    def __rsub__(self, other):
        return Sub(as_expr(other), self)

    def __mul__(self, other):
        return Mul(self, as_expr(other))

    def __rmul__(self, other):
        return Mul(as_expr(other), self)

    def __truediv__(self, other):
        return Div(self, as_expr(other))

    def __rtruediv__(self, other):
        return Div(as_expr(other), self)

    def __neg__(self):
        return Neg(self)

    def __pow__(self, p):
        return Pow(self, float(p))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return Const(float(x))


@dataclass(frozen=True, eq=False)
class Const(Expr):
    c: float

    def evaluate(self, x):
        if isinstance(x, Jet):
            return Jet.constant(self.c, x.dim, x.order)
        return np.full(np.shape(x)[1:], self.c)

    def to_json(self):
        return {"const": self.c}


@dataclass(frozen=True, eq=False)
class Var(Expr):
    i: int

    def evaluate(self, x):
        return x[self.i]

    def to_json(self):
        return {"var": self.i}

    def max_var(self):
        return self.i


@dataclass(frozen=True, eq=False)
class _Bin(Expr):
    a: Expr
    b: Expr

    def max_var(self):
        return max(self.a.max_var(), self.b.max_var())


class Add(_Bin):
    def evaluate(self, x):
        return self.a.evaluate(x) + self.b.evaluate(x)

    def to_json(self):
        return {"op": "add", "args": [self.a.to_json(), self.b.to_json()]}


class Sub(_Bin):
    def evaluate(self, x):
        return self.a.evaluate(x) - self.b.evaluate(x)

    def to_json(self):
        return {"op": "sub", "args": [self.a.to_json(), self.b.to_json()]}


class Mul(_Bin):
    def evaluate(self, x):
        return self.a.evaluate(x) * self.b.evaluate(x)

    def to_json(self):
        return {"op": "mul", "args": [self.a.to_json(), self.b.to_json()]}


class Div(_Bin):
    def evaluate(self, x):
        den = self.b.evaluate(x)
        return self.a.evaluate(x) * reciprocal(den)

    def to_json(self):
        return {"op": "div", "args": [self.a.to_json(), self.b.to_json()]}


@dataclass(frozen=True, eq=False)
class Neg(Expr):
    a: Expr

    def evaluate(self, x):
        return -self.a.evaluate(x)

    def to_json(self):
        return {"op": "neg", "args": [self.a.to_json()]}

    def max_var(self):
        return self.a.max_var()


@dataclass(frozen=True, eq=False)
class Pow(Expr):
    a: Expr
    p: float

    def evaluate(self, x):
        base = self.a.evaluate(x)
        if float(self.p) == int(self.p) and self.p >= 0:
            if isinstance(base, Jet):
                return base ** int(self.p)
            return np.power(base, int(self.p))
        return power(base, self.p)

    def to_json(self):
        return {"op": "pow", "args": [self.a.to_json()], "exponent": self.p}

    def max_var(self):
        return self.a.max_var()


@dataclass(frozen=True, eq=False)
class Func(Expr):
    name: str
    a: Expr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")

    def evaluate(self, x):
        return FUNCTIONS[self.name](self.a.evaluate(x))

    def to_json(self):
        return {"fn": self.name, "arg": self.a.to_json()}

    def max_var(self):
        return self.a.max_var()


def variables(dim: int) -> list[Var]:
    return [Var(i) for i in range(dim)]


def fn(name: str, a) -> Func:
    return Func(name, as_expr(a))


# ---------------------------------------------------------------------------
# scalar fields


@dataclass(frozen=True)
class ChartPoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise NumericDomainError("chart point has non-finite coordinates")
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.shape[0]


def _coords(x) -> np.ndarray:
    if isinstance(x, ChartPoint):
        return x.coords
    c = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(c)):
        raise NumericDomainError("chart point has non-finite coordinates")
    return c


class ScalarField:
    """Scalar field on a chart, given by an expression or a jet-aware callable.

    ``domain`` is an optional predicate on plain coordinates.
    """

    def __init__(self, dim: int, expr, domain: Callable[[np.ndarray], bool] | None = None):
        self.dim = dim
        if isinstance(expr, (int, float)):
            expr = Const(float(expr))
        self.expr = expr
        self.domain = domain
        if isinstance(expr, Expr) and expr.max_var() >= dim:
            raise ValueError(f"expression uses coordinate {expr.max_var()} in a {dim}-dim chart")

    def __call__(self, x):
        out = self.expr.evaluate(x) if isinstance(self.expr, Expr) else self.expr(x)
        if not isinstance(out, Jet):
            out = np.asarray(out, dtype=float)
        return out

    def jet(self, x, order: int) -> Jet:
        c = _coords(x)
        if c.shape[0] != self.dim:
            raise ValueError(f"point of dimension {c.shape[0]} for a {self.dim}-dim field")
        if self.domain is not None and not self.domain(c):
            raise NumericDomainError(f"point {c} outside the field's domain")
        out = self(Jet.variables(c, order))
        if not isinstance(out, Jet):
            out = Jet.constant(out, self.dim, order)
        if not np.all(np.isfinite(out.coef)):
            raise NumericDomainError("non-finite jet coefficients")
        return out

    def value(self, x) -> float:
        return float(self.jet(x, 0).value)


@dataclass(frozen=True)
class JetScalar:
    """Value and symmetric derivative arrays of a scalar at a point."""

    order: int
    dim: int
    value: float
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None
    third: np.ndarray | None = None

    @property
    def coeffs(self) -> list:
        out = [self.value, self.gradient, self.hessian, self.third]
        return out[: self.order + 1]

    def max_abs_diff(self, other: "JetScalar", rel: bool = False, floor: float = 1e-8) -> float:
        worst = 0.0
        for a, b in zip(self.coeffs, other.coeffs):
            a, b = np.asarray(a, float), np.asarray(b, float)
            diff = np.abs(a - b)
            if rel:
                diff = diff / np.maximum(np.abs(b), floor)
            worst = max(worst, float(np.max(diff)))
        return worst


def _to_jetscalar(j: Jet) -> JetScalar:
    parts = [float(j.value)] + [j.derivative_tensor(k) for k in range(1, j.order + 1)]
    parts += [None] * (4 - len(parts))
    return JetScalar(j.order, j.dim, *parts)


def jet_eval(field: ScalarField, x, order: int) -> JetScalar:
    """Exact Taylor data of ``field`` at ``x`` up to ``order`` (<= 3)."""
    if order > PUBLIC_MAX_ORDER or order < 0:
        raise UnsupportedOrderError(f"jet_eval supports orders 0..{PUBLIC_MAX_ORDER}, got {order}")
    return _to_jetscalar(field.jet(x, order))


FD_STEPS = {1: 1e-4, 2: 1e-3, 3: 1e-3}


def fd_derivatives(func: Callable[[np.ndarray], np.ndarray], x, order: int, step: float | None = None) -> list[np.ndarray]:
    """Central-difference derivative arrays of an array-valued function.

    Returns ``[value, D1, D2, ...]`` where ``Dk`` has the value axes first and
    ``k`` trailing derivative axes.  Each ``Dk`` applies ``k`` central
    difference operators, using ``step`` or the default per-order schedule.
    """
    x = _coords(x)
    d = x.shape[0]
    if step is not None and step <= 0:
        raise ValueError("step must be positive")
    f0 = np.asarray(func(x), dtype=float)
    out = [f0]
    for k in range(1, order + 1):
        h = step if step is not None else FD_STEPS[k]
        arr = np.zeros(f0.shape + (d,) * k)
        for idx in itertools.combinations_with_replacement(range(d), k):
            acc = np.zeros_like(f0)
            for signs in itertools.product((1.0, -1.0), repeat=k):
                shift = np.zeros(d)
                for s, v in zip(signs, idx):
                    shift[v] += s * h
                acc = acc + math.prod(signs) * np.asarray(func(x + shift), dtype=float)
            est = acc / (2 * h) ** k
            for perm in set(itertools.permutations(idx)):
                arr[(Ellipsis,) + perm] = est
        out.append(_check_finite(arr))
    return out


def fd_oracle(field: ScalarField, x, order: int, step: float | None = None) -> JetScalar:
    """Central finite-difference estimate of the same data as :func:`jet_eval`."""
    if order > PUBLIC_MAX_ORDER or order < 0:
        raise UnsupportedOrderError(f"fd_oracle supports orders 0..{PUBLIC_MAX_ORDER}, got {order}")
    if step is not None and step <= 0:
        raise ValueError("step must be positive")
    parts = fd_derivatives(lambda p: field.jet(p, 0).value, x, order, step)
    parts = [float(parts[0])] + parts[1:]
    parts += [None] * (4 - len(parts))
    return JetScalar(order, _coords(x).shape[0], *parts)


def local(fn_at_point: Callable[[np.ndarray, int], Jet], x) -> Jet:
    """Evaluate a pointwise jet construction and re-express it in the variables of ``x``.

    ``fn_at_point(x0, k)`` must return a jet in fresh coordinate variables at
    ``x0`` of order at least ``k``.  This is how derived fields (whose
    construction takes derivatives internally) stay composable with arbitrary
    input jets.
    """
    if isinstance(x, Jet):
        x0 = np.asarray(x.value, dtype=float)
        out = fn_at_point(x0, x.order).truncate(x.order)
        if x.is_identity():
            return out
        return out.compose(x)
    x0 = _coords(x)
    return Jet(fn_at_point(x0, 0).coef[:1], x0.shape[0], 0).value
