"""Function data for the solver: maps with exact derivative stacks.

Two concrete families are supported, polynomials and sine fields, because the
integrand assembly needs derivatives of every order up to the regularity
budget as arrays, not as autodiff closures.  Both families are closed under
the division trick f(x) - f(y) = h(x, y)(x - y), realized by Gauss-Legendre
quadrature along the segment (exact in the polynomial case).
"""
from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .tensor import DimensionMismatchError

__all__ = [
    "strict_floor",
    "SmoothMap",
    "PolyMap",
    "SineField",
    "SumMap",
    "ScaledMap",
    "ProductMap",
    "DividedMap",
    "LipFunction",
    "divide",
    "taylor_remainder_check",
    "FieldSpecError",
    "field_from_json",
]


def strict_floor(gamma: float) -> int:
    """Largest integer strictly less than gamma (so 4.0 -> 3, 2.5 -> 2)."""
    return math.ceil(gamma) - 1


def symmetrized(arr: np.ndarray, slots: int) -> np.ndarray:
    """Average over permutations of the last `slots` axes."""
    if slots < 2:
        return arr
    lead = arr.ndim - slots
    acc = np.zeros_like(arr)
    for perm in itertools.permutations(range(slots)):
        acc += arr.transpose(tuple(range(lead)) + tuple(lead + q for q in perm))
    return acc / math.factorial(slots)


def _as_batch(Y: np.ndarray, in_dim: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[None, :]
    if Y.ndim != 2 or Y.shape[1] != in_dim:
        raise DimensionMismatchError(f"expected points of dim {in_dim}, got {Y.shape}")
    return Y


class SmoothMap:
    """Map R^m -> R^{out_shape} with exact batched derivatives.

    Subclasses implement `apply` (batch of points -> batch of values) and
    `derivative` (batch -> batch of symmetric derivative tensors, the `order`
    input slots appended as trailing axes of length m).
    """

    in_dim: int
    out_shape: tuple[int, ...]

    def apply(self, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, Y: np.ndarray, order: int) -> np.ndarray:
        raise NotImplementedError

    def derivative_sup_bound(self, order: int, radius: float) -> float:
        """Certified bound on sup over the radius ball of ||D^order||_F."""
        raise NotImplementedError

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return self.apply(_as_batch(y, self.in_dim))[0]

    def derivative_at(self, y: np.ndarray, order: int) -> np.ndarray:
        return self.derivative(_as_batch(y, self.in_dim), order)[0]

    def scaled(self, c: float) -> "SmoothMap":
        return ScaledMap(float(c), self)

    @property
    def out_size(self) -> int:
        return int(np.prod(self.out_shape, dtype=int)) if self.out_shape else 1


def _contract_last(T: np.ndarray, Y: np.ndarray, times: int) -> np.ndarray:
    """Contract the last `times` axes of T with the batch Y, one per axis."""
    out = np.einsum("...i,ni->n...", T, Y) if times > 0 else np.broadcast_to(
        T, (Y.shape[0],) + T.shape
    )
    for _ in range(times - 1):
        out = np.einsum("n...i,ni->n...", out, Y)
    return out


@dataclass(frozen=True)
class PolyMap(SmoothMap):
    """f(y) = sum_l A_l[y, ..., y] with A_l symmetric in its l input slots.

    coeffs[l] has shape out_shape + (in_dim,) * l; blocks are symmetrized at
    construction so all derivative formulas are slot-order free.
    """

    in_dim: int
    out_shape: tuple[int, ...]
    coeffs: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        blocks = []
        for l, block in enumerate(self.coeffs):
            block = np.asarray(block, dtype=float)
            want = tuple(self.out_shape) + (self.in_dim,) * l
            if block.shape != want:
                raise DimensionMismatchError(
                    f"degree-{l} block has shape {block.shape}, expected {want}"
                )
            block = symmetrized(block, l)
            block.flags.writeable = False
            blocks.append(block)
        if not blocks:
            raise ValueError("need at least a constant block")
        object.__setattr__(self, "out_shape", tuple(self.out_shape))
        object.__setattr__(self, "coeffs", tuple(blocks))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @classmethod
    def constant(cls, value: np.ndarray, in_dim: int) -> "PolyMap":
        value = np.asarray(value, dtype=float)
        return cls(in_dim, value.shape, (value,))

    @classmethod
    def linear_vector_field(cls, mats: list[np.ndarray]) -> "PolyMap":
        """f(y)[:, j] = mats[j] @ y, the field of dy = sum_j A_j y dx^j."""
        mats = [np.asarray(A, dtype=float) for A in mats]
        m = mats[0].shape[0]
        d = len(mats)
        lin = np.zeros((m, d, m))
        for j, A in enumerate(mats):
            lin[:, j, :] = A
        return cls(m, (m, d), (np.zeros((m, d)), lin))

    def apply(self, Y: np.ndarray) -> np.ndarray:
        Y = _as_batch(Y, self.in_dim)
        out = np.zeros((Y.shape[0],) + self.out_shape)
        for l, block in enumerate(self.coeffs):
            out += _contract_last(block, Y, l)
        return out

    def derivative(self, Y: np.ndarray, order: int) -> np.ndarray:
        if order == 0:
            return self.apply(Y)
        Y = _as_batch(Y, self.in_dim)
        shape = (Y.shape[0],) + self.out_shape + (self.in_dim,) * order
        out = np.zeros(shape)
        for l in range(order, self.degree + 1):
            term = _contract_last(self.coeffs[l], Y, l - order)
            out += math.perm(l, order) * term
        return out

    def derivative_sup_bound(self, order: int, radius: float) -> float:
        total = 0.0
        for l in range(order, self.degree + 1):
            total += (
                math.perm(l, order)
                * float(np.linalg.norm(self.coeffs[l]))
                * radius ** (l - order)
            )
        return total

    def scaled(self, c: float) -> "PolyMap":
        return PolyMap(self.in_dim, self.out_shape, tuple(c * b for b in self.coeffs))


@dataclass(frozen=True)
class SineField(SmoothMap):
    """Componentwise f(y)[o] = amp[o] sin(freq[o] . y + phase[o]).

    Every derivative is again a sine field (shifted phase), so the stack is
    closed form at any order: D^k f[o, i_1..i_k] picks up one freq factor per
    slot and a quarter-period phase shift per derivative.
    """

    amp: np.ndarray
    freq: np.ndarray
    phase: np.ndarray

    def __post_init__(self) -> None:
        amp = np.asarray(self.amp, dtype=float)
        freq = np.asarray(self.freq, dtype=float)
        phase = np.asarray(self.phase, dtype=float)
        if freq.shape[:-1] != amp.shape or phase.shape != amp.shape:
            raise DimensionMismatchError("amp, freq, phase shapes inconsistent")
        for name, arr in (("amp", amp), ("freq", freq), ("phase", phase)):
            arr = np.ascontiguousarray(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def in_dim(self) -> int:
        return self.freq.shape[-1]

    @property
    def out_shape(self) -> tuple[int, ...]:
        return self.amp.shape

    def _angles(self, Y: np.ndarray) -> np.ndarray:
        return np.einsum("...i,ni->n...", self.freq, Y) + self.phase

    def apply(self, Y: np.ndarray) -> np.ndarray:
        Y = _as_batch(Y, self.in_dim)
        return self.amp * np.sin(self._angles(Y))

    def derivative(self, Y: np.ndarray, order: int) -> np.ndarray:
        Y = _as_batch(Y, self.in_dim)
        core = self.amp * np.sin(self._angles(Y) + order * np.pi / 2.0)
        if order == 0:
            return core
        out_letters = string.ascii_lowercase[: len(self.out_shape)]
        in_letters = string.ascii_lowercase[
            len(self.out_shape) : len(self.out_shape) + order
        ]
        parts = ["n" + out_letters]
        ops: list[np.ndarray] = [core]
        for q in range(order):
            parts.append(out_letters + in_letters[q])
            ops.append(self.freq)
        spec = ",".join(parts) + "->n" + out_letters + in_letters
        return np.einsum(spec, *ops)

    def derivative_sup_bound(self, order: int, radius: float) -> float:
        rates = np.linalg.norm(self.freq, axis=-1)
        return float(np.linalg.norm(self.amp * rates**order))

    def scaled(self, c: float) -> "SineField":
        return SineField(c * self.amp, self.freq, self.phase)


@dataclass(frozen=True)
class SumMap(SmoothMap):
    left: SmoothMap
    right: SmoothMap

    def __post_init__(self) -> None:
        if (
            self.left.in_dim != self.right.in_dim
            or self.left.out_shape != self.right.out_shape
        ):
            raise DimensionMismatchError("summands must share in_dim and out_shape")

    @property
    def in_dim(self) -> int:
        return self.left.in_dim

    @property
    def out_shape(self) -> tuple[int, ...]:
        return self.left.out_shape

    def apply(self, Y: np.ndarray) -> np.ndarray:
        return self.left.apply(Y) + self.right.apply(Y)

    def derivative(self, Y: np.ndarray, order: int) -> np.ndarray:
        return self.left.derivative(Y, order) + self.right.derivative(Y, order)

    def derivative_sup_bound(self, order: int, radius: float) -> float:
        return self.left.derivative_sup_bound(
            order, radius
        ) + self.right.derivative_sup_bound(order, radius)


@dataclass(frozen=True)
class ScaledMap(SmoothMap):
    factor: float
    base: SmoothMap

    @property
    def in_dim(self) -> int:
        return self.base.in_dim

    @property
    def out_shape(self) -> tuple[int, ...]:
        return self.base.out_shape

    def apply(self, Y: np.ndarray) -> np.ndarray:
        return self.factor * self.base.apply(Y)

    def derivative(self, Y: np.ndarray, order: int) -> np.ndarray:
        return self.factor * self.base.derivative(Y, order)

    def derivative_sup_bound(self, order: int, radius: float) -> float:
        return abs(self.factor) * self.base.derivative_sup_bound(order, radius)

    def scaled(self, c: float) -> "ScaledMap":
        return ScaledMap(c * self.factor, self.base)


@dataclass(frozen=True)
class ProductMap(SmoothMap):
    """Elementwise product; derivatives by the Leibniz subset sum."""

    left: SmoothMap
    right: SmoothMap

    def __post_init__(self) -> None:
        if (
            self.left.in_dim != self.right.in_dim
            or self.left.out_shape != self.right.out_shape
        ):
            raise DimensionMismatchError("factors must share in_dim and out_shape")

    @property
    def in_dim(self) -> int:
        return self.left.in_dim

    @property
    def out_shape(self) -> tuple[int, ...]:
        return self.left.out_shape

    def apply(self, Y: np.ndarray) -> np.ndarray:
        return self.left.apply(Y) * self.right.apply(Y)

    def derivative(self, Y: np.ndarray, order: int) -> np.ndarray:
        if order == 0:
            return self.apply(Y)
        Y = _as_batch(Y, self.in_dim)
        lead = 1 + len(self.out_shape)
        lefts = [self.left.derivative(Y, j) for j in range(order + 1)]
        rights = [self.right.derivative(Y, j) for j in range(order + 1)]
        out = np.zeros(
            (Y.shape[0],) + self.out_shape + (self.in_dim,) * order
        )
        for subset in itertools.product((0, 1), repeat=order):
            j = sum(subset)
            term = np.multiply(
                lefts[j][(...,) + (None,) * (order - j)],
                rights[order - j][
                    (slice(None),) * lead + (None,) * j + (slice(None),) * (order - j)
                ],
            )
            # slots owned by `left` sit first in `term`; route them to the
            # positions where subset[q] == 1
            src = list(range(lead)) + [0] * order
            li, ri = lead, lead + j
            ordering = []
            for flag in subset:
                if flag:
                    ordering.append(li)
                    li += 1
                else:
                    ordering.append(ri)
                    ri += 1
            src[lead:] = ordering
            out += term.transpose(src)
        return out

    def derivative_sup_bound(self, order: int, radius: float) -> float:
        total = 0.0
        for j in range(order + 1):
            total += (
                math.comb(order, j)
                * self.left.derivative_sup_bound(j, radius)
                * self.right.derivative_sup_bound(order - j, radius)
            )
        return total


@dataclass(frozen=True)
class DividedMap(SmoothMap):
    """h(x, y) = integral over t of Df(y + t(x - y)), on doubled input.

    The first `source.in_dim` coordinates are x, the rest y.  The identity
    f(x) - f(y) = h(x, y)(x - y) is exact up to the quadrature (which is exact
    for polynomial sources with enough nodes).  Derivatives pass under the
    integral: each doubled-slot direction (u, v) enters Df's extra slots as
    t u + (1 - t) v.
    """

    source: SmoothMap
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.ascontiguousarray(np.asarray(self.nodes, dtype=float))
        weights = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def in_dim(self) -> int:
        return 2 * self.source.in_dim

    @property
    def out_shape(self) -> tuple[int, ...]:
        return tuple(self.source.out_shape) + (self.source.in_dim,)

    def _segment_points(self, Z: np.ndarray) -> np.ndarray:
        m = self.source.in_dim
        X, Y = Z[:, :m], Z[:, m:]
        return Y[None, :, :] + self.nodes[:, None, None] * (X - Y)[None, :, :]

    def apply(self, Z: np.ndarray) -> np.ndarray:
        Z = _as_batch(Z, self.in_dim)
        P = self._segment_points(Z)
        q, n, m = P.shape
        D1 = self.source.derivative(P.reshape(q * n, m), 1).reshape(
            (q, n) + self.out_shape
        )
        return np.einsum("q,qn...->n...", self.weights, D1)

    def derivative(self, Z: np.ndarray, order: int) -> np.ndarray:
        if order == 0:
            return self.apply(Z)
        Z = _as_batch(Z, self.in_dim)
        m = self.source.in_dim
        P = self._segment_points(Z)
        q, n, _ = P.shape
        full = self.source.derivative(P.reshape(q * n, m), 1 + order).reshape(
            (q, n) + tuple(self.source.out_shape) + (m,) * (1 + order)
        )
        out = np.zeros(
            (n,) + self.out_shape + (self.in_dim,) * order
        )
        eye = np.eye(m)
        for k in range(q):
            t = self.nodes[k]
            sel = np.concatenate([t * eye, (1.0 - t) * eye], axis=1)
            arr = full[k]
            for _ in range(order):
                arr = np.moveaxis(arr @ sel, -1, -order)
            out += self.weights[k] * arr
        return out

    def derivative_sup_bound(self, order: int, radius: float) -> float:
        # segment points stay in the source's radius ball; the slot map
        # t u + (1 - t) v is a contraction
        return self.source.derivative_sup_bound(order + 1, radius)


def gauss_nodes(num: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(num)
    return 0.5 * (x + 1.0), 0.5 * w


def divide(f: "SmoothMap | LipFunction", num_nodes: int | None = None):
    """Division trick: h with f(x) - f(y) = h(x, y)(x - y).

    Polynomial sources get just enough nodes for exactness; other sources get
    a fixed 12-node rule.  A LipFunction argument returns the quotient
    wrapped at regularity gamma - 1.
    """
    if isinstance(f, LipFunction):
        inner = divide(f.map, num_nodes)
        if f.gamma - 1.0 <= 1.0:
            return inner
        return LipFunction(inner, f.gamma - 1.0, radius=f.radius)
    if num_nodes is None:
        if isinstance(f, PolyMap):
            num_nodes = max(1, math.ceil(f.degree / 2))
        else:
            num_nodes = 12
    nodes, weights = gauss_nodes(num_nodes)
    return DividedMap(f, nodes, weights)


@dataclass(frozen=True)
class LipFunction:
    """A map together with its regularity budget gamma > 1.

    Algorithms may use derivatives up to strict_floor(gamma) only; the norm
    bound is certified on the stated ball by coefficient propagation, with
    the top remainder quotient bounded through one extra derivative.
    """

    map: SmoothMap
    gamma: float
    radius: float = 1.0

    def __post_init__(self) -> None:
        if self.gamma <= 1.0:
            raise ValueError("gamma must exceed 1")
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")

    @property
    def smoothness(self) -> int:
        return strict_floor(self.gamma)

    @property
    def in_dim(self) -> int:
        return self.map.in_dim

    @property
    def out_shape(self) -> tuple[int, ...]:
        return self.map.out_shape

    def apply(self, Y: np.ndarray) -> np.ndarray:
        return self.map.apply(Y)

    def derivative(self, Y: np.ndarray, order: int) -> np.ndarray:
        if order > self.smoothness:
            raise ValueError(
                f"order {order} exceeds the Lip({self.gamma}) budget "
                f"(max {self.smoothness})"
            )
        return self.map.derivative(Y, order)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return self.map(y)

    @cached_property
    def lip_norm_bound(self) -> float:
        n = self.smoothness
        worst = 0.0
        for j in range(n + 1):
            worst = max(worst, self.map.derivative_sup_bound(j, self.radius))
        top = self.map.derivative_sup_bound(n + 1, self.radius)
        span = 2.0 * self.radius
        for j in range(n + 1):
            quot = top * span ** (n + 1 - self.gamma) / math.factorial(n + 1 - j)
            worst = max(worst, quot)
        return worst

    def scaled(self, c: float) -> "LipFunction":
        return LipFunction(self.map.scaled(c), self.gamma, radius=self.radius)


def taylor_remainder_check(f: LipFunction, x: np.ndarray, y: np.ndarray) -> float:
    """Max over orders j of ||D^j f(x) - Taylor_{n-j}(D^j f)(y)(x-y)|| / |x-y|^(gamma-j).

    The quantity every Lip(gamma) bound controls; property tests compare it
    against the certified norm.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    step = x - y
    dist = float(np.linalg.norm(step))
    if dist == 0.0:
        raise ValueError("points must differ")
    n = f.smoothness
    dx = [f.map.derivative_at(x, j) for j in range(n + 1)]
    dy = [f.map.derivative_at(y, j) for j in range(n + 1)]
    worst = 0.0
    for j in range(n + 1):
        pred = np.zeros_like(dx[j])
        for k in range(n - j + 1):
            pred += _contract_last(dy[j + k], step[None, :], k)[0] / math.factorial(k)
        quot = float(np.linalg.norm(dx[j] - pred)) / dist ** (f.gamma - j)
        worst = max(worst, quot)
    return worst


# -- JSON vector-field spec ---------------------------------------------------


class FieldSpecError(ValueError):
    """Malformed JSON vector-field description."""


def field_from_json(obj: dict) -> SmoothMap:
    """Build a map from its JSON description.

    Polynomial: {"type": "poly", "in_dim": m, "out_shape": [..], "degree": D,
    "coeffs": [A_0, .., A_D]} with A_l nested row-major lists of shape
    out_shape + (m,) * l (output indices first, then the l input slots).
    Builtin: {"type": "builtin", "name": "sine", "amp": [..], "freq": [..],
    "phase": [..]} with freq carrying one trailing input axis.
    """
    if not isinstance(obj, dict):
        raise FieldSpecError("field spec must be a JSON object")
    kind = obj.get("type")
    if kind == "poly":
        try:
            in_dim = int(obj["in_dim"])
            out_shape = tuple(int(s) for s in obj["out_shape"])
            degree = int(obj["degree"])
            raw = obj["coeffs"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FieldSpecError(f"bad poly spec: {exc}") from None
        if len(raw) != degree + 1:
            raise FieldSpecError(
                f"degree {degree} needs {degree + 1} blocks, got {len(raw)}"
            )
        coeffs = []
        for l, block in enumerate(raw):
            arr = np.asarray(block, dtype=float)
            want = out_shape + (in_dim,) * l
            if arr.shape != want:
                raise FieldSpecError(
                    f"degree-{l} block has shape {arr.shape}, expected {want}"
                )
            coeffs.append(arr)
        return PolyMap(in_dim, out_shape, tuple(coeffs))
    if kind == "builtin":
        name = obj.get("name")
        if name != "sine":
            raise FieldSpecError(f"unknown builtin {name!r}")
        try:
            amp = np.asarray(obj["amp"], dtype=float)
            freq = np.asarray(obj["freq"], dtype=float)
            phase = np.asarray(obj["phase"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise FieldSpecError(f"bad sine spec: {exc}") from None
        return SineField(amp, freq, phase)
    raise FieldSpecError(f"unknown field type {kind!r}")
