"""Forward-mode dual numbers carrying a vector of partial derivatives.

A :class:`Dual` holds a real value and a fixed-length numpy array of
partials. Arithmetic and the math helpers below work on plain floats and on
duals alike, so the dynamics can be written once and evaluated either way.
"""

from __future__ import annotations

import math

import numpy as np


class Dual:
    """Real value plus a vector of first-order partials."""

    __slots__ = ("val", "der")
    __array_priority__ = 1000  # let numpy defer to our reflected operators

    def __init__(self, val, der):
        self.val = float(val)
        self.der = der

    @classmethod
    def variable(cls, val, index, size):
        der = np.zeros(size)
        der[index] = 1.0
        return cls(val, der)

    def __repr__(self):
        return f"Dual({self.val!r}, {self.der!r})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        return Dual(self.val + other, self.der)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.der - other.der)
        return Dual(self.val - other, self.der)

    def __rsub__(self, other):
        return Dual(other - self.val, -self.der)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val * other.val, self.der * other.val + other.der * self.val)
        return Dual(self.val * other, self.der * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            val = self.val / other.val
            return Dual(val, (self.der - other.der * val) / other.val)
        return Dual(self.val / other, self.der / other)

    def __rtruediv__(self, other):
        val = other / self.val
        return Dual(val, self.der * (-val / self.val))

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Dual):
            return exp(p * log(self))
        if p == 2:
            return Dual(self.val * self.val, self.der * (2.0 * self.val))
        return Dual(self.val**p, self.der * (p * self.val ** (p - 1)))

    def __abs__(self):
        return -self if self.val < 0.0 else self

    # comparisons act on the value so control flow is shared with floats
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)

    def __float__(self):
        return self.val


def value(x):
    """Primal value of a float or dual."""
    return x.val if isinstance(x, Dual) else float(x)


def is_dual(x):
    return isinstance(x, Dual)


def sqrt(x):
    if isinstance(x, Dual):
        r = math.sqrt(x.val)
        return Dual(r, x.der * (0.5 / r))
    return math.sqrt(x)


def exp(x):
    if isinstance(x, Dual):
        e = math.exp(x.val)
        return Dual(e, x.der * e)
    return math.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(math.log(x.val), x.der / x.val)
    return math.log(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(math.sin(x.val), x.der * math.cos(x.val))
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(math.cos(x.val), x.der * -math.sin(x.val))
    return math.cos(x)


def acos(x):
    if isinstance(x, Dual):
        return Dual(math.acos(x.val), x.der * (-1.0 / math.sqrt(1.0 - x.val * x.val)))
    return math.acos(x)


def atan2(y, x):
    yv, xv = value(y), value(x)
    out = math.atan2(yv, xv)
    if not (isinstance(y, Dual) or isinstance(x, Dual)):
        return out
    r2 = xv * xv + yv * yv
    der = 0.0
    if isinstance(y, Dual):
        der = y.der * (xv / r2)
    if isinstance(x, Dual):
        der = der + x.der * (-yv / r2)
    return Dual(out, der)


def maximum(a, b):
    """Max with the first argument winning ties (derivative included)."""
    return a if value(a) >= value(b) else b


def minimum(a, b):
    """Min with the first argument winning ties (derivative included)."""
    return a if value(a) <= value(b) else b


def seed(values, offset, size):
    """Turn a float vector into duals occupying partial slots ``offset...``."""
    return [Dual.variable(x, offset + i, size) for i, x in enumerate(values)]


def split(xs, size):
    """Split a sequence of floats/duals into (values, partials[len, size])."""
    vals = np.empty(len(xs))
    ders = np.zeros((len(xs), size))
    for i, x in enumerate(xs):
        if isinstance(x, Dual):
            vals[i] = x.val
            ders[i] = x.der
        else:
            vals[i] = x
    return vals, ders


def _dual_size(rows):
    for row in rows:
        for x in row:
            if isinstance(x, Dual):
                return x.der.shape[0]
    return 0


def solve(A, b):
    """Solve ``A x = b`` for a square nested list ``A`` of floats or duals.

    With dual entries the primal solve is done once and the partials follow
    from differentiating ``A x = b``: ``A0 dx = db - dA x0``.
    """
    size = _dual_size(A) or _dual_size([b])
    if size == 0:
        return np.linalg.solve(np.array(A, dtype=float), np.array(b, dtype=float)).tolist()
    n = len(b)
    A0 = np.empty((n, n))
    dA = np.zeros((n, n, size))
    for i, row in enumerate(A):
        A0[i], dA[i] = split(row, size)
    b0, db = split(b, size)
    x0 = np.linalg.solve(A0, b0)
    dx = np.linalg.solve(A0, db - np.einsum("ijp,j->ip", dA, x0))
    return [Dual(x0[i], dx[i]) for i in range(n)]
