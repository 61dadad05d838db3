"""Isometries of the model spaces, translation length and displacement profiles."""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .spaces import Euclidean, HyperbolicPlane, MetricTree, ModelSpace, Product, space_from_spec

PARABOLIC_TRACE_TOL = 1e-12


class Isometry(abc.ABC):
    space: ModelSpace

    @abc.abstractmethod
    def apply(self, P) -> np.ndarray:
        ...

    @abc.abstractmethod
    def inverse(self) -> "Isometry":
        ...

    @abc.abstractmethod
    def translation_length(self) -> float:
        ...

    @abc.abstractmethod
    def profile(self, **opts) -> "DisplacementProfile":
        ...

    @abc.abstractmethod
    def to_spec(self) -> dict:
        ...

    def displacement(self, P) -> np.ndarray:
        return self.space.distance(self.apply(P), P)

    def __call__(self, P):
        return self.apply(P)


@dataclass
class ConditionB:
    """Fitted decay of excess displacement along a ray.

    ``variant`` is ``"additive"`` (``d^2 <= delta^2 + b e^{-a t}``) or
    ``"multiplicative"`` (``d^2 <= delta^2 (1 + b e^{-a t})``).  The
    multiplicative form cannot hold with ``delta = 0`` unless the displacement
    vanishes identically, so both verdicts are kept.
    """

    a: float
    b: float
    variant: str
    additive_holds: bool
    multiplicative_holds: bool
    samples: np.ndarray = field(repr=False)

    def bound(self, t, delta):
        t = np.asarray(t, dtype=float)
        if self.variant == "multiplicative":
            return delta**2 * (1.0 + self.b * np.exp(-self.a * t))
        return delta**2 + self.b * np.exp(-self.a * t)


@dataclass
class DisplacementProfile:
    isometry: Isometry
    delta: float
    semisimple: bool
    kind: str
    witness: np.ndarray | None = None
    ray: Callable[[np.ndarray], np.ndarray] | None = None
    condition_b: ConditionB | None = None

    @property
    def e_rho(self) -> float:
        return self.delta**2 / (2.0 * math.pi)


def fit_condition_b(isometry: Isometry, ray, delta: float, t_max: float = 30.0, n: int = 301) -> ConditionB:
    """Fit ``(a, b)`` so the excess squared displacement along ``ray`` is bounded.

    ``a`` comes from a log-linear regression on the tail; ``b`` is then the
    smallest constant making the bound hold at every sample.
    """
    t = np.linspace(0.0, t_max, n)
    pts = ray(t)
    d2 = isometry.space.distance(isometry.apply(pts), pts) ** 2
    excess = d2 - delta**2
    positive = excess > 1e-300
    a = b = float("nan")
    additive = multiplicative = False
    if np.all(excess <= 1e-12 * max(1.0, delta**2)):
        a, b = 1.0, 0.0
        additive = multiplicative = True
    elif positive.sum() >= 3:
        tail = positive & (t >= 0.25 * t_max)
        if tail.sum() < 3:
            tail = positive
        slope = np.polyfit(t[tail], np.log(excess[tail]), 1)[0]
        if slope < 0:
            a = float(-slope)
            b = float(np.max(np.where(positive, excess, 0.0) * np.exp(a * t)))
            additive = True
            if delta > 0:
                multiplicative = True
                b = b / delta**2
    variant = "multiplicative" if multiplicative else "additive"
    return ConditionB(a, b, variant, additive, multiplicative, np.stack([t, d2], axis=-1))


# ---------------------------------------------------------------------------
# Euclidean


@dataclass(frozen=True, eq=False)
class EuclideanIsometry(Isometry):
    """``x -> A x + b`` with ``A`` orthogonal."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        n = b.shape[0]
        if A.shape != (n, n):
            raise DomainError("matrix and translation dimensions disagree")
        if not np.allclose(A.T @ A, np.eye(n), atol=1e-10):
            raise DomainError("Euclidean isometry needs an orthogonal matrix")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def translation(cls, vector):
        v = np.atleast_1d(np.asarray(vector, dtype=float))
        return cls(np.eye(v.shape[0]), v)

    @classmethod
    def rotation(cls, angle, center=(0.0, 0.0)):
        c, s = math.cos(angle), math.sin(angle)
        A = np.array([[c, -s], [s, c]])
        center = np.asarray(center, dtype=float)
        return cls(A, center - A @ center)

    @property
    def space(self):
        return Euclidean(self.b.shape[0])

    def apply(self, P):
        P = np.asarray(P, dtype=float)
        return P @ self.A.T + self.b

    def inverse(self):
        return EuclideanIsometry(self.A.T, -self.A.T @ self.b)

    def compose(self, other: "EuclideanIsometry"):
        """``self`` after ``other``."""
        return EuclideanIsometry(self.A @ other.A, self.A @ other.b + self.b)

    def _minimizer(self):
        n = self.b.shape[0]
        x, *_ = np.linalg.lstsq(self.A - np.eye(n), -self.b, rcond=None)
        return x

    def translation_length(self):
        x = self._minimizer()
        return float(np.linalg.norm(self.apply(x) - x))

    def profile(self, **opts):
        delta = self.translation_length()
        kind = "translation" if delta > 0 else "elliptic"
        return DisplacementProfile(self, delta, True, kind, witness=self._minimizer())

    def to_spec(self):
        return {"kind": "euclidean", "matrix": self.A.tolist(), "vector": self.b.tolist()}


# ---------------------------------------------------------------------------
# Hyperbolic plane


@dataclass(frozen=True, eq=False)
class MobiusIsometry(Isometry):
    """Orientation-preserving isometry ``z -> (a z + b)/(c z + d)`` of the half-plane."""

    M: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float).reshape(2, 2)
        det = float(np.linalg.det(M))
        if not det > 0:
            raise DomainError("Mobius matrix needs positive determinant")
        object.__setattr__(self, "M", M / math.sqrt(det))

    space = HyperbolicPlane()

    def apply(self, P):
        P = np.asarray(P, dtype=float)
        (a, b), (c, d) = self.M
        z = P[..., 0] + 1j * P[..., 1]
        den = c * z + d
        num = (a * z + b) * np.conj(den)
        mod2 = np.abs(den) ** 2
        # imaginary part from the determinant identity, exact sign
        return np.stack([num.real / mod2, P[..., 1] / mod2], axis=-1)

    def inverse(self):
        (a, b), (c, d) = self.M
        return MobiusIsometry(np.array([[d, -b], [-c, a]]))

    def compose(self, other: "MobiusIsometry"):
        return MobiusIsometry(self.M @ other.M)

    @property
    def trace(self) -> float:
        return float(abs(self.M[0, 0] + self.M[1, 1]))

    @property
    def kind(self) -> str:
        tr = self.trace
        if tr > 2.0 + PARABOLIC_TRACE_TOL:
            return "hyperbolic"
        if tr < 2.0 - PARABOLIC_TRACE_TOL:
            return "elliptic"
        if np.allclose(self.M, np.eye(2) * np.sign(self.M[0, 0]), atol=1e-14):
            return "elliptic"  # identity
        return "parabolic"

    def translation_length(self):
        if self.kind != "hyperbolic":
            return 0.0
        return 2.0 * math.acosh(self.trace / 2.0)

    def fixed_points(self):
        """Roots of ``c z^2 + (d - a) z - b = 0`` (``inf`` when ``c = 0``)."""
        (a, b), (c, d) = self.M
        if abs(c) < 1e-15:
            if abs(d - a) < 1e-15:
                return []
            return [complex(b / (d - a)), complex(math.inf)]
        return list(np.roots([c, d - a, -b]).astype(complex))

    def _parabolic_ray(self):
        (a, b), (c, d) = self.M
        if abs(c) < 1e-15:
            return lambda t: np.stack([np.zeros_like(np.asarray(t, float)), np.exp(t)], axis=-1)
        xi = (a - d) / (2.0 * c)
        # S : z -> xi - 1/z sends i e^t towards xi
        S = MobiusIsometry(np.array([[xi, -1.0], [1.0, 0.0]]))
        return lambda t: S.apply(np.stack([np.zeros_like(np.asarray(t, float)), np.exp(t)], axis=-1))

    def profile(self, t_max: float = 30.0, **opts):
        kind = self.kind
        delta = self.translation_length()
        if kind == "hyperbolic":
            fps = self.fixed_points()
            if any(math.isinf(abs(f)) for f in fps):
                x0 = next(f.real for f in fps if not math.isinf(abs(f)))
                witness = np.array([x0, 1.0])
            else:
                lo, hi = sorted(f.real for f in fps)
                witness = np.array([0.5 * (lo + hi), 0.5 * (hi - lo)])
            return DisplacementProfile(self, delta, True, kind, witness=witness)
        if kind == "elliptic":
            fps = [f for f in self.fixed_points() if f.imag > 0]
            witness = np.array([fps[0].real, fps[0].imag]) if fps else np.array([0.0, 1.0])
            return DisplacementProfile(self, 0.0, True, kind, witness=witness)
        ray = self._parabolic_ray()
        cond = fit_condition_b(self, ray, 0.0, t_max=t_max)
        return DisplacementProfile(self, 0.0, False, kind, ray=ray, condition_b=cond)

    def to_spec(self):
        return {"kind": "mobius", "matrix": self.M.tolist()}


# ---------------------------------------------------------------------------
# Trees


@dataclass(frozen=True, eq=False)
class TreeTranslation(Isometry):
    """Translation by ``length`` along the designated line of a periodic tree."""

    space: MetricTree
    length: float

    def __post_init__(self):
        tree = self.space
        if not tree.periodic:
            raise DomainError("translations need a tree with a designated line")
        if not tree.bare_line:
            m = self.length / tree.period
            if abs(m - round(m)) > 1e-12:
                raise DomainError("translation length must be a multiple of the tree period")

    def apply(self, P):
        tree = self.space
        P = np.asarray(P, dtype=float)
        if tree.bare_line:
            return tree.line_point(tree.line_coordinate(P) + self.length)
        shift = round(self.length / tree.period) * tree.n_edges
        out = P.copy()
        out[..., 0] += shift
        return tree.canonicalize(out)

    def inverse(self):
        return TreeTranslation(self.space, -self.length)

    def translation_length(self):
        return abs(float(self.length))

    def profile(self, **opts):
        kind = "translation" if self.length != 0 else "elliptic"
        return DisplacementProfile(self, self.translation_length(), True, kind, witness=self.space.line_point(0.0))

    def to_spec(self):
        return {"kind": "tree_translation", "length": self.length}


@dataclass(frozen=True, eq=False)
class TreeElliptic(Isometry):
    """Tree automorphism given by a vertex permutation fixing ``fixed``.

    On a periodic tree the permutation must fix the designated path pointwise
    and is applied in every copy.
    """

    space: MetricTree
    permutation: tuple
    fixed: int

    def __post_init__(self):
        tree = self.space
        shape = tree.shape
        perm = tuple(int(p) for p in self.permutation)
        V = tree.n_vertices
        if sorted(perm) != list(range(V)):
            raise DomainError("permutation must be a bijection of the vertices")
        if perm[self.fixed] != self.fixed:
            raise DomainError("permutation does not fix the named vertex")
        lookup = {}
        for e, (u, v, length) in enumerate(shape.edges):
            lookup[frozenset((u, v))] = (e, length)
        edge_map = np.zeros(tree.n_edges, dtype=np.int64)
        flip = np.zeros(tree.n_edges, dtype=bool)
        for e, (u, v, length) in enumerate(shape.edges):
            key = frozenset((perm[u], perm[v]))
            if key not in lookup or abs(lookup[key][1] - length) > 1e-12:
                raise DomainError("permutation is not a tree automorphism")
            e2 = lookup[key][0]
            edge_map[e] = e2
            flip[e] = perm[tree._start[e]] != tree._start[e2]
        if tree.periodic and any(perm[v] != v for v in shape.line_vertices()):
            raise DomainError("on a periodic tree the permutation must fix the line")
        object.__setattr__(self, "permutation", perm)
        object.__setattr__(self, "_edge_map", edge_map)
        object.__setattr__(self, "_flip", flip)

    def apply(self, P):
        tree = self.space
        k, e, s = tree._decode(P)
        e2 = self._edge_map[e]
        s2 = np.where(self._flip[e], tree._len[e2] - s, s)
        return tree.canonicalize(np.stack([(k * tree.n_edges + e2).astype(float), s2], axis=-1))

    def inverse(self):
        inv = [0] * len(self.permutation)
        for i, p in enumerate(self.permutation):
            inv[p] = i
        return TreeElliptic(self.space, tuple(inv), self.fixed)

    def translation_length(self):
        return 0.0

    def profile(self, **opts):
        return DisplacementProfile(self, 0.0, True, "elliptic", witness=self.space.vertex_point(self.fixed))

    def to_spec(self):
        return {"kind": "tree_elliptic", "permutation": list(self.permutation), "fixed": self.fixed}


# ---------------------------------------------------------------------------
# Products


@dataclass(frozen=True, eq=False)
class ProductIsometry(Isometry):
    left: Isometry
    right: Isometry

    @property
    def space(self):
        return Product(self.left.space, self.right.space)

    def apply(self, P):
        A, B = self.space.split(P)
        return np.concatenate([self.left.apply(A), self.right.apply(B)], axis=-1)

    def inverse(self):
        return ProductIsometry(self.left.inverse(), self.right.inverse())

    def compose(self, other: "ProductIsometry"):
        return ProductIsometry(self.left.compose(other.left), self.right.compose(other.right))

    def translation_length(self):
        return math.hypot(self.left.translation_length(), self.right.translation_length())

    def profile(self, **opts):
        pl, pr = self.left.profile(**opts), self.right.profile(**opts)
        delta = math.hypot(pl.delta, pr.delta)
        kind = f"{pl.kind}x{pr.kind}"
        if pl.semisimple and pr.semisimple:
            return DisplacementProfile(self, delta, True, kind, witness=np.concatenate([pl.witness, pr.witness]))

        def component_ray(p):
            if p.ray is not None:
                return p.ray
            w = p.witness
            return lambda t: np.broadcast_to(w, np.shape(t) + w.shape).copy()

        rl, rr = component_ray(pl), component_ray(pr)
        # moving along one factor's ray at unit speed keeps the product ray geodesic
        ray = lambda t: np.concatenate([rl(t), rr(t)], axis=-1)  # noqa: E731
        cond = fit_condition_b(self, ray, delta, t_max=opts.get("t_max", 30.0))
        return DisplacementProfile(self, delta, False, kind, ray=ray, condition_b=cond)

    def to_spec(self):
        return {"kind": "product", "left": self.left.to_spec(), "right": self.right.to_spec()}


class IdentityIsometry(Isometry):
    def __init__(self, space: ModelSpace):
        self.space = space

    def apply(self, P):
        return np.array(P, dtype=float, copy=True)

    def inverse(self):
        return self

    def translation_length(self):
        return 0.0

    def profile(self, **opts):
        witness = opts.get("witness")
        if witness is None:
            raise DomainError("identity profile needs an explicit witness point")
        return DisplacementProfile(self, 0.0, True, "identity", witness=np.asarray(witness, dtype=float))

    def to_spec(self):
        return {"kind": "identity", "space": self.space.to_spec()}


# ---------------------------------------------------------------------------
# Functional interface


def apply(I: Isometry, P) -> np.ndarray:
    return I.apply(I.space.validate(P))


def translation_length(I: Isometry) -> float:
    return I.translation_length()


def displacement_profile(I: Isometry, **opts) -> DisplacementProfile:
    return I.profile(**opts)


def e_rho(I: Isometry | float) -> float:
    """Optimal angular energy ``delta^2 / (2 pi)``; accepts an isometry or a length."""
    delta = I if isinstance(I, (int, float)) else I.translation_length()
    return float(delta) ** 2 / (2.0 * math.pi)


def isometry_from_spec(spec: dict, space: ModelSpace | None = None) -> Isometry:
    kind = str(spec.get("kind", "")).lower()
    if kind == "translation":
        return EuclideanIsometry.translation(spec["vector"])
    if kind == "rotation":
        return EuclideanIsometry.rotation(float(spec["angle"]), spec.get("center", (0.0, 0.0)))
    if kind == "euclidean":
        return EuclideanIsometry(np.asarray(spec["matrix"], float), np.asarray(spec["vector"], float))
    if kind == "mobius":
        return MobiusIsometry(np.asarray(spec["matrix"], float))
    if kind in ("tree_translation", "tree_elliptic"):
        if not isinstance(space, MetricTree):
            raise DomainError(f"{kind} needs a tree space")
        if kind == "tree_translation":
            return TreeTranslation(space, float(spec["length"]))
        perm = spec["permutation"]
        if perm and isinstance(perm[0], str):
            names = space.shape.vertices
            perm = [names.index(p) for p in perm]
        fixed = spec["fixed"]
        if isinstance(fixed, str):
            fixed = space.shape.vertices.index(fixed)
        return TreeElliptic(space, tuple(perm), int(fixed))
    if kind == "product":
        if space is not None and not isinstance(space, Product):
            raise DomainError("product isometry needs a product space")
        left_space = space.left if space is not None else None
        right_space = space.right if space is not None else None
        return ProductIsometry(isometry_from_spec(spec["left"], left_space), isometry_from_spec(spec["right"], right_space))
    if kind == "identity":
        return IdentityIsometry(space if space is not None else space_from_spec(spec["space"]))
    raise DomainError(f"unknown isometry kind {spec.get('kind')!r}")
