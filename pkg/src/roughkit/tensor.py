"""Graded truncated tensor algebra over R^d and its group of unital elements.

Everything here is dense and desk-scale: dimensions up to about four and
truncation levels up to about six, so a level block never exceeds a few
thousand floats.  Level-k blocks are stored flat with row-major letter
order, i.e. the word (i_1, ..., i_k) sits at index sum(i_j * d**(k-j)).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "DimensionMismatchError",
    "TruncatedTensor",
    "GroupElement",
    "tensor_exp",
    "tensor_log",
    "homogeneous_norm",
    "last_letter_split",
    "split_apply",
    "split_matrix",
    "compositions",
]


class DimensionMismatchError(ValueError):
    """Raised when operands live in different algebras (dim or level disagree)."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TruncatedTensor:
    """Element of the tensor algebra over R^dim, truncated beyond `level`.

    Parameters
    ----------
    dim:
        Dimension d of the underlying vector space.
    level:
        Truncation level L; blocks of degree > L are dropped by every operation.
    coeffs:
        Tuple of L+1 flat arrays, coeffs[k] of length d**k.  coeffs[0] is the
        scalar part as a length-1 array.
    """

    dim: int
    level: int
    coeffs: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.level < 0:
            raise ValueError(f"level must be >= 0, got {self.level}")
        if len(self.coeffs) != self.level + 1:
            raise ValueError(
                f"expected {self.level + 1} level blocks, got {len(self.coeffs)}"
            )
        blocks = []
        for k, block in enumerate(self.coeffs):
            arr = np.asarray(block, dtype=float).reshape(-1)
            if arr.size != self.dim**k:
                raise DimensionMismatchError(
                    f"level-{k} block has {arr.size} entries, expected {self.dim**k}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"level-{k} block contains non-finite entries")
            blocks.append(_frozen(arr))
        object.__setattr__(self, "coeffs", tuple(blocks))

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, dim: int, level: int) -> "TruncatedTensor":
        return cls(dim, level, tuple(np.zeros(dim**k) for k in range(level + 1)))

    @classmethod
    def unit(cls, dim: int, level: int) -> "TruncatedTensor":
        blocks = [np.zeros(dim**k) for k in range(level + 1)]
        blocks[0] = np.ones(1)
        return cls(dim, level, tuple(blocks))

    @classmethod
    def from_vector(cls, vec: np.ndarray, level: int) -> "TruncatedTensor":
        """Embed a vector of R^d as a pure level-1 element."""
        vec = np.asarray(vec, dtype=float).reshape(-1)
        dim = vec.size
        blocks = [np.zeros(dim**k) for k in range(level + 1)]
        if level >= 1:
            blocks[1] = vec
        return cls(dim, level, tuple(blocks))

    @classmethod
    def from_level_blocks(
        cls, dim: int, level: int, blocks: dict[int, np.ndarray]
    ) -> "TruncatedTensor":
        """Build from a sparse {degree: flat block} mapping."""
        full = [np.zeros(dim**k) for k in range(level + 1)]
        for k, b in blocks.items():
            if not 0 <= k <= level:
                raise ValueError(f"degree {k} outside [0, {level}]")
            full[k] = np.asarray(b, dtype=float).reshape(dim**k)
        return cls(dim, level, tuple(full))

    # -- accessors ---------------------------------------------------------

    @property
    def scalar(self) -> float:
        return float(self.coeffs[0][0])

    def level_block(self, k: int) -> np.ndarray:
        return self.coeffs[k]

    def level_norms(self) -> np.ndarray:
        """Euclidean norm of each block, degrees 0..L."""
        return np.array([float(np.linalg.norm(b)) for b in self.coeffs])

    def norm(self) -> float:
        """Algebra norm: sum over degrees of the Euclidean block norms.

        Euclidean block norms are cross norms, so this norm is
        submultiplicative with constant exactly one.
        """
        return float(sum(np.linalg.norm(b) for b in self.coeffs))

    # -- linear structure ----------------------------------------------------

    def _check_compatible(self, other: "TruncatedTensor") -> None:
        if self.dim != other.dim or self.level != other.level:
            raise DimensionMismatchError(
                f"cannot combine (dim={self.dim}, level={self.level}) with "
                f"(dim={other.dim}, level={other.level})"
            )

    def __add__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_compatible(other)
        return TruncatedTensor(
            self.dim,
            self.level,
            tuple(a + b for a, b in zip(self.coeffs, other.coeffs)),
        )

    def __sub__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        self._check_compatible(other)
        return TruncatedTensor(
            self.dim,
            self.level,
            tuple(a - b for a, b in zip(self.coeffs, other.coeffs)),
        )

    def __neg__(self) -> "TruncatedTensor":
        return TruncatedTensor(self.dim, self.level, tuple(-a for a in self.coeffs))

    def __mul__(self, c: float) -> "TruncatedTensor":
        c = float(c)
        return TruncatedTensor(self.dim, self.level, tuple(c * a for a in self.coeffs))

    __rmul__ = __mul__

    def __matmul__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        """Graded (truncated) tensor product."""
        self._check_compatible(other)
        d, L = self.dim, self.level
        out = [np.zeros(d**k) for k in range(L + 1)]
        for k in range(L + 1):
            acc = out[k]
            for j in range(k + 1):
                a = self.coeffs[j]
                b = other.coeffs[k - j]
                # outer() on flat blocks concatenates letter indices.
                acc += np.outer(a, b).reshape(-1)
        return TruncatedTensor(d, L, tuple(out))

    def without_scalar(self) -> "TruncatedTensor":
        blocks = list(self.coeffs)
        blocks[0] = np.zeros(1)
        return TruncatedTensor(self.dim, self.level, tuple(blocks))

    def dilate(self, c: float) -> "TruncatedTensor":
        """Degree-homogeneous dilation: level k is scaled by c**k."""
        c = float(c)
        return TruncatedTensor(
            self.dim,
            self.level,
            tuple((c**k) * b for k, b in enumerate(self.coeffs)),
        )

    def is_close(self, other: "TruncatedTensor", tol: float = 1e-12) -> bool:
        self._check_compatible(other)
        return all(
            np.max(np.abs(a - b), initial=0.0) <= tol
            for a, b in zip(self.coeffs, other.coeffs)
        )


def tensor_exp(v: TruncatedTensor, *, grouplike: bool = False) -> "GroupElement":
    """Exponential of an element with zero scalar part.

    Exact on the truncated algebra: powers beyond the level vanish, so the
    series is finite.  Set `grouplike=True` only when the argument is known
    to be a Lie element; the flag triggers the group-like certificate.
    """
    if abs(v.scalar) > 0:
        raise ValueError("tensor_exp requires a zero scalar part")
    acc = TruncatedTensor.unit(v.dim, v.level)
    power = TruncatedTensor.unit(v.dim, v.level)
    for n in range(1, v.level + 1):
        power = power @ v
        acc = acc + (1.0 / math.factorial(n)) * power
    return GroupElement(acc, grouplike=grouplike)


def tensor_log(a: "TruncatedTensor | GroupElement") -> TruncatedTensor:
    """Logarithm of a unital element; finite series by nilpotency."""
    t = a.tensor if isinstance(a, GroupElement) else a
    if abs(t.scalar - 1.0) > 1e-9:
        raise ValueError("tensor_log requires scalar part 1")
    u = t.without_scalar()
    acc = TruncatedTensor.zero(t.dim, t.level)
    power = TruncatedTensor.unit(t.dim, t.level)
    for n in range(1, t.level + 1):
        power = power @ u
        acc = acc + ((-1.0) ** (n + 1) / n) * power
    return acc


@dataclass(frozen=True)
class GroupElement:
    """Unital element of the truncated algebra, optionally certified group-like.

    The scalar part must be exactly 1.  With `grouplike=True` the level-2
    shuffle relation and the inverse identity are checked at construction,
    so the flag really is a certificate rather than a label.
    """

    tensor: TruncatedTensor
    grouplike: bool = False

    _GROUPLIKE_SHUFFLE_TOL = 1e-10
    _GROUPLIKE_INVERSE_TOL = 1e-12

    def __post_init__(self) -> None:
        if self.tensor.scalar != 1.0:
            raise ValueError("group elements must have scalar part exactly 1")
        if self.grouplike:
            self._check_grouplike()

    def _check_grouplike(self) -> None:
        t = self.tensor
        d = t.dim
        if t.level >= 2:
            x = t.level_block(1)
            two = t.level_block(2).reshape(d, d)
            sym_defect = 0.5 * (two + two.T) - 0.5 * np.outer(x, x)
            scale = 1.0 + np.linalg.norm(x) ** 2
            if np.max(np.abs(sym_defect), initial=0.0) > self._GROUPLIKE_SHUFFLE_TOL * scale:
                raise ValueError("group-like certificate failed: level-2 shuffle relation")
        prod = (self.tensor @ _inverse_tensor(self.tensor)).coeffs
        unit = TruncatedTensor.unit(t.dim, t.level).coeffs
        for a, b in zip(prod, unit):
            if np.max(np.abs(a - b), initial=0.0) > self._GROUPLIKE_INVERSE_TOL:
                raise ValueError("group-like certificate failed: inverse identity")

    # passthroughs
    @property
    def dim(self) -> int:
        return self.tensor.dim

    @property
    def level(self) -> int:
        return self.tensor.level

    def level_block(self, k: int) -> np.ndarray:
        return self.tensor.level_block(k)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(
            self.tensor @ other.tensor,
            grouplike=self.grouplike and other.grouplike,
        )

    def inverse(self) -> "GroupElement":
        return GroupElement(_inverse_tensor(self.tensor), grouplike=self.grouplike)

    def increment_to(self, other: "GroupElement") -> "GroupElement":
        """Group increment self^{-1} @ other."""
        return self.inverse() @ other

    def dilate(self, c: float) -> "GroupElement":
        # Dilation is an automorphism of the group, so the flag survives.
        return GroupElement(self.tensor.dilate(c), grouplike=self.grouplike)

    def norm(self) -> float:
        return self.tensor.norm()


def _inverse_tensor(t: TruncatedTensor) -> TruncatedTensor:
    # (1 + u)^{-1} = sum (-u)^n, exact by nilpotency of u.
    u = t.without_scalar()
    acc = TruncatedTensor.unit(t.dim, t.level)
    power = TruncatedTensor.unit(t.dim, t.level)
    for n in range(1, t.level + 1):
        power = power @ u
        acc = acc + ((-1.0) ** n) * power
    return acc


def homogeneous_norm(a: GroupElement) -> float:
    """Scaling-homogeneous size of a group element.

    Sum over degrees k >= 1 of the k-th root of the Euclidean block norm;
    homogeneous of degree one under dilation.
    """
    t = a.tensor
    total = 0.0
    for k in range(1, t.level + 1):
        nk = float(np.linalg.norm(t.coeffs[k]))
        total += nk ** (1.0 / k)
    return total


def last_letter_split(t: TruncatedTensor) -> tuple[np.ndarray, ...]:
    """Rebracket each level block as (prefix word) x (last letter).

    Returns blocks[j] of shape (d**j, d) for j = 1..L-1, where blocks[j]
    is the degree-(j+1) block of the input viewed as a matrix from prefix
    words of length j to the final letter.  Degrees 0 and 1 contribute
    nothing.  For a signature this is the tensor of iterated integrals
    "missing the final integration", which is what rough integration of a
    controlled integrand consumes.
    """
    d = t.dim
    return tuple(
        t.coeffs[j + 1].reshape(d**j, d) for j in range(1, t.level)
    )


@lru_cache(maxsize=None)
def _split_patterns(parts: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    labels = []
    for i, k in enumerate(parts):
        labels.extend([i] * k)
    return tuple(sorted(set(itertools.permutations(labels))))


@lru_cache(maxsize=None)
def split_matrix(dim: int, parts: tuple[int, ...]) -> np.ndarray:
    """Matrix of the level-splitting map for the given composition.

    The map sends the degree-K block (K = sum(parts)) to the tensor product
    of blocks of the given degrees.  It is pinned down by one property: on a
    group-like element the image of the degree-K block is the tensor product
    of the lower-degree blocks.  Concretely the (I_1,...,I_l) output entry
    sums the input over all interleavings of the part words, i.e. the map is
    adjoint to the shuffle product of coordinate functionals.
    """
    parts = tuple(int(k) for k in parts)
    if not parts or any(k < 1 for k in parts):
        raise ValueError(f"parts must be positive integers, got {parts}")
    K = sum(parts)
    n = dim**K
    indices = np.arange(n).reshape((dim,) * K)
    out = np.zeros((n, n))
    for pattern in _split_patterns(parts):
        # positions of each part's letters, in part order then slot order
        axes: list[int] = []
        for i in range(len(parts)):
            axes.extend(p for p, lab in enumerate(pattern) if lab == i)
        src = indices.transpose(axes).reshape(-1)
        out[np.arange(n), src] += 1.0
    out.flags.writeable = False
    return out


def split_apply(parts: tuple[int, ...], block: np.ndarray, dim: int) -> np.ndarray:
    """Apply the level-splitting map to a flat degree-sum(parts) block.

    Output is flat with the part indices concatenated in order.
    """
    block = np.asarray(block, dtype=float).reshape(-1)
    K = sum(parts)
    if block.size != dim**K:
        raise DimensionMismatchError(
            f"block has {block.size} entries, expected {dim**K} for parts {parts}"
        )
    return split_matrix(dim, tuple(parts)) @ block


def compositions(total: int, length: int) -> list[tuple[int, ...]]:
    """All ordered tuples of `length` positive integers summing to `total`."""
    if length < 1 or total < length:
        return []
    if length == 1:
        return [(total,)]
    out = []
    for first in range(1, total - length + 2):
        for rest in compositions(total - first, length - 1):
            out.append((first, *rest))
    return out
