"""Model CAT(0) spaces with vectorized geometry.

Every space stores a point as a float vector of length ``coord_dim``; arrays of
points have shape ``(..., coord_dim)`` and all operations broadcast over the
leading axes.  The spaces provided are

* :class:`Euclidean` -- ``R^n`` with the standard metric,
* :class:`HyperbolicPlane` -- the upper half-plane, points ``(x, y)`` with ``y > 0``,
* :class:`MetricTree` -- a metric tree, either finite or periodic along a
  designated bi-infinite line; points are ``(edge id, offset)``,
* :class:`Product` -- the l2 product of two spaces.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError

DEFAULT_BARYCENTER_TOL = 1e-9


class ModelSpace(abc.ABC):
    """A complete CAT(0) space with exact distance and geodesic interpolation."""

    coord_dim: int

    @abc.abstractmethod
    def validate(self, P) -> np.ndarray:
        """Return ``P`` as a float array, raising :class:`DomainError` if invalid."""

    @abc.abstractmethod
    def distance(self, P, Q) -> np.ndarray:
        ...

    @abc.abstractmethod
    def interpolate(self, P, Q, t) -> np.ndarray:
        """Point at fraction ``t`` of the way from ``P`` to ``Q`` (no range check)."""

    @abc.abstractmethod
    def extend(self, P, Q, t) -> np.ndarray:
        """Continue the geodesic from ``P`` through ``Q`` to parameter ``t >= 1``.

        Spaces whose geodesics branch may stop short of ``t``; callers use this
        only for over-relaxation and check the objective afterwards.
        """

    @abc.abstractmethod
    def barycenter(self, points, weights, tol=DEFAULT_BARYCENTER_TOL, init=None) -> np.ndarray:
        """Minimizer of ``sum_k w_k d^2(x, p_k)``; ``points`` has shape ``(..., K, m)``."""

    @abc.abstractmethod
    def random_points(self, rng: np.random.Generator, n: int, scale: float = 1.0) -> np.ndarray:
        ...

    @abc.abstractmethod
    def to_spec(self) -> dict:
        ...

    def canonicalize(self, P) -> np.ndarray:
        return np.asarray(P, dtype=float)

    def objective(self, x, points, weights) -> np.ndarray:
        """``sum_k w_k d^2(x, p_k)`` with ``x`` of shape ``(..., m)``."""
        d = self.distance(np.asarray(x)[..., None, :], points)
        return np.sum(np.asarray(weights) * d**2, axis=-1)


def _as_points(P, m):
    P = np.asarray(P, dtype=float)
    if P.shape[-1:] != (m,):
        raise DomainError(f"expected points with trailing dimension {m}, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise DomainError("point coordinates must be finite")
    return P


def _normalized_weights(points, weights):
    w = np.asarray(weights, dtype=float)
    w = np.broadcast_to(w, points.shape[:-1])
    if np.any(w <= 0):
        raise DomainError("barycenter weights must be positive")
    return w


# ---------------------------------------------------------------------------
# Euclidean space


@dataclass(frozen=True)
class Euclidean(ModelSpace):
    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError("Euclidean dimension must be a positive integer")

    @property
    def coord_dim(self) -> int:
        return self.dim

    def validate(self, P):
        return _as_points(P, self.dim)

    def distance(self, P, Q):
        return np.linalg.norm(np.asarray(Q, dtype=float) - np.asarray(P, dtype=float), axis=-1)

    def interpolate(self, P, Q, t):
        t = np.asarray(t, dtype=float)[..., None]
        return (1.0 - t) * np.asarray(P, dtype=float) + t * np.asarray(Q, dtype=float)

    def extend(self, P, Q, t):
        return self.interpolate(P, Q, t)

    def barycenter(self, points, weights, tol=DEFAULT_BARYCENTER_TOL, init=None):
        points = np.asarray(points, dtype=float)
        w = _normalized_weights(points, weights)
        return np.sum(w[..., None] * points, axis=-2) / np.sum(w, axis=-1)[..., None]

    def random_points(self, rng, n, scale=1.0):
        return scale * rng.standard_normal((n, self.dim))

    def to_spec(self):
        return {"kind": "euclidean", "dim": self.dim}


# ---------------------------------------------------------------------------
# Hyperbolic plane, upper half-plane model


def _to_complex(P):
    P = np.asarray(P, dtype=float)
    return P[..., 0] + 1j * P[..., 1]


def _from_complex(z):
    return np.stack([z.real, z.imag], axis=-1)


@dataclass(frozen=True)
class HyperbolicPlane(ModelSpace):
    """Upper half-plane of curvature -1.

    Geodesics are computed by moving the start point to ``i`` with the affine
    isometry ``z -> (z - x)/y`` and passing to the Poincare disk through the
    Cayley transform, where geodesics from the centre are radial.
    """

    coord_dim: int = field(default=2, init=False)

    def validate(self, P):
        P = _as_points(P, 2)
        if np.any(P[..., 1] <= 0):
            raise DomainError("half-plane points need y > 0")
        return P

    def distance(self, P, Q):
        P = np.asarray(P, dtype=float)
        Q = np.asarray(Q, dtype=float)
        chord = np.hypot(Q[..., 0] - P[..., 0], Q[..., 1] - P[..., 1])
        return 2.0 * np.arcsinh(chord / (2.0 * np.sqrt(P[..., 1] * Q[..., 1])))

    def _direction(self, z1, z2):
        # unit direction at z1 towards z2 in the disk frame centred at z1
        w = (z2 - z1) / (z2 - np.conj(z1))
        a = np.abs(w)
        safe = np.where(a > 0, a, 1.0)
        return np.where(a > 0, w / safe, 0.0)

    def _shoot(self, z1, u, s):
        # point at hyperbolic distance s from z1 in disk-frame direction u
        w = np.tanh(np.asarray(s) / 2.0) * u
        zeta = 1j * (1.0 + w) / (1.0 - w)
        return z1.real + z1.imag * zeta

    def interpolate(self, P, Q, t):
        P, Q, t = np.broadcast_arrays(np.asarray(P, float), np.asarray(Q, float), np.asarray(t, float)[..., None])
        t = t[..., 0]
        z1, z2 = _to_complex(P), _to_complex(Q)
        d = self.distance(P, Q)
        # shoot from whichever endpoint is nearer to limit conditioning loss
        from_start = t <= 0.5
        zs = np.where(from_start, z1, z2)
        ze = np.where(from_start, z2, z1)
        s = np.where(from_start, t, 1.0 - t) * d
        z = self._shoot(zs, self._direction(zs, ze), s)
        out = _from_complex(z)
        out = np.where((t == 0.0)[..., None], P, out)
        out = np.where((t == 1.0)[..., None], Q, out)
        return out

    def extend(self, P, Q, t):
        P, Q = np.broadcast_arrays(np.asarray(P, float), np.asarray(Q, float))
        z1, z2 = _to_complex(P), _to_complex(Q)
        d = self.distance(P, Q)
        z = self._shoot(z1, self._direction(z1, z2), np.asarray(t, float) * d)
        return _from_complex(z)

    def log(self, X, Q):
        """Tangent vector at ``X`` pointing to ``Q`` (disk-frame complex, length = distance)."""
        zx, zq = _to_complex(X), _to_complex(Q)
        return self.distance(X, Q) * self._direction(zx, zq)

    def exp(self, X, v):
        zx = _to_complex(X)
        r = np.abs(v)
        u = np.where(r > 0, v / np.where(r > 0, r, 1.0), 0.0)
        return _from_complex(self._shoot(zx, u, r))

    def barycenter(self, points, weights, tol=DEFAULT_BARYCENTER_TOL, init=None, max_iter=200):
        points = np.asarray(points, dtype=float)
        w = _normalized_weights(points, weights)
        W = np.sum(w, axis=-1)
        if init is None:
            x = points[..., 0, :].copy()
        else:
            x = np.array(np.broadcast_to(init, points.shape[:-2] + (2,)), dtype=float)
        grad = np.inf
        for _ in range(max_iter):
            xs = x[..., None, :]
            d = self.distance(xs, points)
            v = np.sum(w * d * self._direction(_to_complex(xs), _to_complex(points)), axis=-1) / W
            grad = np.abs(v)
            if np.all(grad < tol):
                return x
            # step 1/L with L the mean Hessian bound d*coth(d) of d^2/2
            dc = np.where(d > 1e-8, d / np.tanh(np.where(d > 1e-8, d, 1.0)), 1.0)
            L = np.sum(w * dc, axis=-1) / W
            x = self.exp(x, v / L)
        raise NumericError(
            "hyperbolic barycenter did not converge",
            {"max_gradient": float(np.max(grad)), "iterations": max_iter},
        )

    def random_points(self, rng, n, scale=1.0):
        x = rng.uniform(-2.0 * scale, 2.0 * scale, n)
        y = np.exp(rng.uniform(-1.5 * scale, 1.5 * scale, n))
        return np.stack([x, y], axis=-1)

    def to_spec(self):
        return {"kind": "hyperbolic"}


# ---------------------------------------------------------------------------
# Metric trees


@dataclass(frozen=True)
class TreeShape:
    """Combinatorial description of a metric tree.

    ``edges`` holds ``(u, v, length)`` with vertex indices into ``vertices``.
    When ``line`` is given it lists edge indices forming a path from a vertex
    ``a`` to a vertex ``b``; the described tree is then the periodic tree made of
    infinitely many copies of this cell, copy ``k`` glued to copy ``k + 1`` by
    identifying its ``b`` with the next copy's ``a``.  The union of the path
    copies is the designated bi-infinite line.
    """

    vertices: tuple
    edges: tuple
    line: tuple | None = None

    def __post_init__(self):
        V = len(self.vertices)
        if V < 2:
            raise DomainError("a tree needs at least two vertices")
        if len(set(self.vertices)) != V:
            raise DomainError("vertex names must be unique")
        if len(self.edges) != V - 1:
            raise DomainError("a tree on V vertices has exactly V - 1 edges")
        parent = list(range(V))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for u, v, length in self.edges:
            if not (0 <= u < V and 0 <= v < V) or u == v:
                raise DomainError(f"bad edge endpoints ({u}, {v})")
            if not (length > 0 and math.isfinite(length)):
                raise DomainError("edge lengths must be positive and finite")
            ru, rv = find(u), find(v)
            if ru == rv:
                raise DomainError("edges contain a cycle")
            parent[ru] = rv
        if self.line is not None:
            if len(self.line) == 0:
                raise DomainError("line must contain at least one edge")
            if len(set(self.line)) != len(self.line) or any(not 0 <= e < len(self.edges) for e in self.line):
                raise DomainError("line must list distinct edge indices")
            self.line_vertices()  # validates that the edges form a path

    def line_vertices(self) -> list[int]:
        """Vertices along the designated path, from ``a`` to ``b``."""
        edges = [self.edges[e] for e in self.line]
        if len(edges) == 1:
            return [edges[0][0], edges[0][1]]
        u0, v0, _ = edges[0]
        u1, v1, _ = edges[1]
        if v0 in (u1, v1):
            seq = [u0, v0]
        elif u0 in (u1, v1):
            seq = [v0, u0]
        else:
            raise DomainError("line edges do not form a path")
        for u, v, _ in edges[1:]:
            if u == seq[-1]:
                seq.append(v)
            elif v == seq[-1]:
                seq.append(u)
            else:
                raise DomainError("line edges do not form a path")
        if len(set(seq)) != len(seq):
            raise DomainError("line edges revisit a vertex")
        return seq

    @classmethod
    def from_text(cls, text: str) -> "TreeShape":
        """Parse the line-oriented tree grammar.

        ::

            # comment
            vertex NAME            (optional; edges declare vertices implicitly)
            edge NAME NAME LENGTH
            line EDGE_INDEX ...    (optional; edge indices in declaration order)
        """
        names: list[str] = []
        index: dict[str, int] = {}
        edges = []
        line = None

        def vid(name):
            if name not in index:
                index[name] = len(names)
                names.append(name)
            return index[name]

        for lineno, raw in enumerate(text.splitlines(), 1):
            tokens = raw.split("#", 1)[0].split()
            if not tokens:
                continue
            head, args = tokens[0].lower(), tokens[1:]
            try:
                if head == "vertex" and len(args) == 1:
                    vid(args[0])
                elif head == "edge" and len(args) == 3:
                    edges.append((vid(args[0]), vid(args[1]), float(args[2])))
                elif head == "line" and args and line is None:
                    line = tuple(int(a) for a in args)
                else:
                    raise ValueError(f"unrecognised statement {raw.strip()!r}")
            except ValueError as exc:
                raise DomainError(f"tree description line {lineno}: {exc}") from None
        return cls(tuple(names), tuple(edges), line)

    def to_text(self) -> str:
        out = [f"vertex {name}" for name in self.vertices]
        out += [f"edge {self.vertices[u]} {self.vertices[v]} {length!r}" for u, v, length in self.edges]
        if self.line is not None:
            out.append("line " + " ".join(str(e) for e in self.line))
        return "\n".join(out) + "\n"

    def to_spec(self) -> dict:
        spec = {
            "vertices": list(self.vertices),
            "edges": [[self.vertices[u], self.vertices[v], length] for u, v, length in self.edges],
        }
        if self.line is not None:
            spec["line"] = list(self.line)
        return spec

    @classmethod
    def from_spec(cls, spec: dict) -> "TreeShape":
        vertices = [str(v) for v in spec["vertices"]]
        index = {name: i for i, name in enumerate(vertices)}
        try:
            edges = tuple((index[str(u)], index[str(v)], float(length)) for u, v, length in spec["edges"])
        except KeyError as exc:
            raise DomainError(f"edge references unknown vertex {exc}") from None
        line = spec.get("line")
        return cls(tuple(vertices), edges, None if line is None else tuple(int(e) for e in line))

    @classmethod
    def star(cls, n_arms: int = 3, length: float = 1.0) -> "TreeShape":
        vertices = ("c",) + tuple(f"l{k}" for k in range(n_arms))
        return cls(vertices, tuple((0, k + 1, float(length)) for k in range(n_arms)))

    @classmethod
    def comb(cls, period: float = 1.0, hair: float = 1.0, hair_at: float = 0.5) -> "TreeShape":
        """Periodic comb: a line with one hair of length ``hair`` per period."""
        if not 0 < hair_at < period:
            raise DomainError("hair position must lie strictly inside the period")
        return cls(
            ("a", "m", "b", "h"),
            ((0, 1, float(hair_at)), (1, 2, float(period - hair_at)), (1, 3, float(hair))),
            (0, 1),
        )


class MetricTree(ModelSpace):
    """Metric tree built from a :class:`TreeShape`.

    A point is ``(edge id, offset)``.  For a periodic tree the edge id of local
    edge ``e`` in copy ``k`` is ``k * E + e``.  Offsets are measured from the
    internal start of the edge: along the line for line edges, and from the end
    nearer the line (or nearer vertex 0 in a finite tree) otherwise.  Use
    :meth:`vertex_point`, :meth:`edge_point` and :meth:`line_point` to build
    points from user-facing data.  A point sitting on a vertex is encoded on
    the lowest-numbered incident edge.
    """

    coord_dim = 2

    def __init__(self, shape: TreeShape):
        self.shape = shape
        V, E = len(shape.vertices), len(shape.edges)
        self.n_vertices, self.n_edges = V, E
        adj: list[list[tuple[int, int]]] = [[] for _ in range(V)]
        for e, (u, v, _) in enumerate(shape.edges):
            adj[u].append((v, e))
            adj[v].append((u, e))
        lengths = np.array([length for _, _, length in shape.edges], dtype=float)

        # all-pairs vertex distances
        D = np.zeros((V, V))
        for src in range(V):
            seen = {src}
            stack = [src]
            while stack:
                a = stack.pop()
                for b, e in adj[a]:
                    if b not in seen:
                        seen.add(b)
                        D[src, b] = D[src, a] + lengths[e]
                        stack.append(b)
        self._D = D

        start = np.zeros(E, dtype=np.int64)
        end = np.zeros(E, dtype=np.int64)
        is_line = np.zeros(E, dtype=bool)
        depth = np.zeros(V)
        attach = np.zeros(V, dtype=np.int64)
        parent_edge = -np.ones(V, dtype=np.int64)
        pos = np.zeros(V)

        if shape.line is not None:
            path = shape.line_vertices()
            self.periodic = True
            self._a, self._b = path[0], path[-1]
            cum = [0.0]
            for k, e in enumerate(shape.line):
                start[e], end[e] = path[k], path[k + 1]
                is_line[e] = True
                cum.append(cum[-1] + lengths[e])
            for k, v in enumerate(path):
                pos[v] = cum[k]
                attach[v] = v
            self.period = cum[-1]
            self._line_edges = np.array(shape.line, dtype=np.int64)
            self._line_cum = np.array(cum)
            roots = path
        else:
            self.periodic = False
            self.period = 0.0
            roots = [0]

        on_line = set(roots) if self.periodic else set()
        seen = set(roots)
        stack = list(roots)
        while stack:
            a = stack.pop()
            for b, e in adj[a]:
                if b in seen or (b in on_line and a in on_line):
                    continue
                seen.add(b)
                start[e], end[e] = a, b
                depth[b] = depth[a] + lengths[e]
                attach[b] = attach[a]
                pos[b] = pos[a]
                parent_edge[b] = e
                stack.append(b)

        self._start, self._end, self._len = start, end, lengths
        self._is_line = is_line
        self._depth, self._attach, self._pos = depth, attach, pos
        self._parent_edge = parent_edge
        self._max_hops = V
        self.bare_line = bool(self.periodic and is_line.all())

        # canonical (local edge, offset) for each vertex: lowest incident edge
        canon_e = np.zeros(V, dtype=np.int64)
        canon_s = np.zeros(V)
        for v in range(V):
            e = min(e for _, e in adj[v])
            canon_e[v] = e
            canon_s[v] = 0.0 if start[e] == v else lengths[e]
        self._canon_e, self._canon_s = canon_e, canon_s

    # -- equality -----------------------------------------------------------
    def __eq__(self, other):
        return isinstance(other, MetricTree) and other.shape == self.shape

    def __hash__(self):
        return hash(self.shape)

    def __repr__(self):
        return f"MetricTree({self.shape!r})"

    def to_spec(self):
        return {"kind": "tree", "shape": self.shape.to_spec()}

    # -- point construction ---------------------------------------------------
    def _vertex_encoding(self, v, k):
        v = np.asarray(v, dtype=np.int64)
        k = np.asarray(k, dtype=np.int64)
        if self.periodic:
            glued = v == self._a
            v = np.where(glued, self._b, v)
            k = np.where(glued, k - 1, k)
        gid = k * self.n_edges + self._canon_e[v]
        return np.stack([gid.astype(float), self._canon_s[v] + 0.0 * gid], axis=-1)

    def vertex_point(self, vertex, copy: int = 0) -> np.ndarray:
        v = self.shape.vertices.index(vertex) if not isinstance(vertex, (int, np.integer)) else int(vertex)
        if not self.periodic and copy != 0:
            raise DomainError("finite trees have a single copy")
        return self._vertex_encoding(v, copy)

    def edge_point(self, edge: int, offset: float, copy: int = 0) -> np.ndarray:
        """Point on ``edge`` at ``offset`` from its first listed endpoint."""
        u, _, length = self.shape.edges[edge]
        if not 0.0 <= offset <= length:
            raise DomainError("offset outside the edge")
        s = offset if self._start[edge] == u else length - offset
        if not self.periodic and copy != 0:
            raise DomainError("finite trees have a single copy")
        return self.canonicalize(np.array([float(copy * self.n_edges + edge), s]))

    def line_point(self, x) -> np.ndarray:
        """Point at signed arclength ``x`` along the designated line."""
        if not self.periodic:
            raise DomainError("this tree has no designated line")
        x = np.asarray(x, dtype=float)
        k = np.floor(x / self.period)
        local = np.clip(x - k * self.period, 0.0, self.period)
        idx = np.clip(np.searchsorted(self._line_cum, local, side="right") - 1, 0, len(self._line_edges) - 1)
        e = self._line_edges[idx]
        s = np.minimum(local - self._line_cum[idx], self._len[e])
        P = np.stack([k * self.n_edges + e, s], axis=-1)
        return self.canonicalize(P)

    # -- decoding --------------------------------------------------------------
    def _decode(self, P):
        P = np.asarray(P, dtype=float)
        gid = np.rint(P[..., 0]).astype(np.int64)
        k, e = np.divmod(gid, self.n_edges)
        return k, e, P[..., 1]

    def _features(self, P):
        k, e, s = self._decode(P)
        st = self._start[e]
        line = self._is_line[e]
        h = np.where(line, 0.0, self._depth[st] + s)
        x = k * self.period + self._pos[st] + np.where(line, s, 0.0)
        return k, e, s, h, x, self._attach[st]

    def validate(self, P):
        P = _as_points(P, 2)
        gid = P[..., 0]
        if np.any(gid != np.rint(gid)):
            raise DomainError("tree edge ids must be integers")
        k, e, s = self._decode(P)
        if not self.periodic and np.any(k != 0):
            raise DomainError("edge id out of range")
        if np.any(s < 0) or np.any(s > self._len[e]):
            raise DomainError("tree offset outside the edge")
        return P

    def canonicalize(self, P):
        P = np.asarray(P, dtype=float)
        k, e, s = self._decode(P)
        L = self._len[e]
        s = np.clip(s, 0.0, L)
        at_start, at_end = s <= 0.0, s >= L
        v = np.where(at_start, self._start[e], self._end[e])
        vert = self._vertex_encoding(v, k)
        plain = np.stack([(k * self.n_edges + e).astype(float), s], axis=-1)
        return np.where((at_start | at_end)[..., None], vert, plain)

    # -- geometry --------------------------------------------------------------
    def _cell_distance(self, e1, s1, e2, s2):
        st1, en1, L1 = self._start[e1], self._end[e1], self._len[e1]
        st2, en2, L2 = self._start[e2], self._end[e2], self._len[e2]
        D = self._D
        combos = np.stack(
            [
                s1 + D[st1, st2] + s2,
                s1 + D[st1, en2] + (L2 - s2),
                (L1 - s1) + D[en1, st2] + s2,
                (L1 - s1) + D[en1, en2] + (L2 - s2),
            ]
        )
        return np.where(e1 == e2, np.abs(s1 - s2), combos.min(axis=0))

    def _same_branch(self, f1, f2):
        k1, _, _, h1, _, a1 = f1
        k2, _, _, h2, _, a2 = f2
        return (k1 == k2) & (h1 > 0) & (h2 > 0) & (a1 == a2)

    def distance(self, P, Q):
        P, Q = np.broadcast_arrays(np.asarray(P, float), np.asarray(Q, float))
        f1, f2 = self._features(P), self._features(Q)
        dcell = self._cell_distance(f1[1], f1[2], f2[1], f2[2])
        if not self.periodic:
            return dcell
        across = f1[3] + np.abs(f1[4] - f2[4]) + f2[3]
        return np.where(self._same_branch(f1, f2), dcell, across)

    def _ancestor(self, k, e, depth_target):
        """Point on the root-ward path of edge ``e`` at the given depth."""
        e = np.array(e, dtype=np.int64, copy=True)
        for _ in range(self._max_hops):
            st = self._start[e]
            up = (depth_target < self._depth[st]) & (self._parent_edge[st] >= 0) & ~self._is_line[e]
            if not up.any():
                break
            e = np.where(up, self._parent_edge[st], e)
        s = depth_target - self._depth[self._start[e]]
        return np.stack([(k * self.n_edges + e).astype(float), s], axis=-1)

    def interpolate(self, P, Q, t):
        P, Q, t = np.broadcast_arrays(np.asarray(P, float), np.asarray(Q, float), np.asarray(t, float)[..., None])
        t = t[..., 0]
        f1, f2 = self._features(P), self._features(Q)
        d = self.distance(P, Q)
        tau = t * d
        k1, e1, s1, h1, x1, _ = f1
        k2, e2, s2, h2, x2, _ = f2
        if self.periodic:
            dep1, dep2 = h1, h2
        else:
            dep1 = self._depth[self._start[e1]] + s1
            dep2 = self._depth[self._start[e2]] + s2

        # rooted walk: up from P to the meeting point, then down to Q
        meet = 0.5 * (dep1 + dep2 - d)
        rise = dep1 - meet
        up_pt = self._ancestor(k1, e1, np.clip(dep1 - tau, 0.0, dep1))
        down_pt = self._ancestor(k2, e2, np.clip(dep2 - (d - tau), 0.0, dep2))
        rooted = np.where((tau <= rise)[..., None], up_pt, down_pt)
        if not self.periodic:
            out = rooted
        else:
            span = np.abs(x2 - x1)
            step = np.sign(x2 - x1)
            on_line = self.line_point(x1 + step * np.clip(tau - h1, 0.0, span))
            up_cross = self._ancestor(k1, e1, np.clip(h1 - tau, 0.0, h1))
            down_cross = self._ancestor(k2, e2, np.clip(h2 - (d - tau), 0.0, h2))
            cross = np.where(
                ((tau < h1) & (h1 > 0))[..., None],
                up_cross,
                np.where(((tau > h1 + span) & (h2 > 0))[..., None], down_cross, on_line),
            )
            same = self._same_branch(f1, f2)
            out = np.where(same[..., None], rooted, cross)
        out = self.canonicalize(out)
        out = np.where((t == 0.0)[..., None], P, out)
        return np.where((t == 1.0)[..., None], Q, out)

    def extend(self, P, Q, t):
        """Continue past ``Q`` along the line (if the geodesic arrives along it) or within ``Q``'s edge."""
        P, Q = np.broadcast_arrays(np.asarray(P, float), np.asarray(Q, float))
        out = self._extend_in_edge(P, Q, t)
        if not self.periodic:
            return out
        fP, fQ = self._features(P), self._features(Q)
        xP, hQ, xQ = fP[4], fQ[3], fQ[4]
        along = (hQ <= 0.0) & (xQ != xP)
        if not np.any(along):
            return out
        extra = np.maximum(np.broadcast_to(np.asarray(t, float), P.shape[:-1]) - 1.0, 0.0) * self.distance(P, Q)
        on_line = self.line_point(xQ + np.sign(xQ - xP) * extra)
        return np.where(along[..., None], on_line, out)

    def _extend_in_edge(self, P, Q, t):
        t = np.broadcast_to(np.asarray(t, float), P.shape[:-1])
        d = self.distance(P, Q)
        extra = np.maximum(t - 1.0, 0.0) * d
        k, e, s = self._decode(Q)
        L = self._len[e]
        gid = (k * self.n_edges + e).astype(float)
        to_end = np.stack([gid, L + 0.0 * s], axis=-1)
        to_start = np.stack([gid, 0.0 * s], axis=-1)
        dq = d
        scale = np.maximum(1.0, dq)
        fwd = np.abs(self.distance(P, to_end) - (dq + (L - s))) <= 1e-10 * scale
        bwd = np.abs(self.distance(P, to_start) - (dq + s)) <= 1e-10 * scale
        interior = (s > 0) & (s < L)
        s_new = np.where(fwd, np.minimum(s + extra, L), np.where(bwd, np.maximum(s - extra, 0.0), s))
        s_new = np.where(interior, s_new, s)
        return self.canonicalize(np.stack([gid, s_new], axis=-1))

    def barycenter(self, points, weights, tol=DEFAULT_BARYCENTER_TOL, init=None):
        """Exact barycenter.

        The minimizer lies in the convex hull, which in a tree is the union of
        the geodesics from the first point to the others.  Along each such
        geodesic every distance is ``|tau - a_k| + h_k``, so the objective is a
        convex piecewise quadratic in ``tau``.  Its minimizer is located from the
        sign of the one-sided derivative at the breakpoints (comparing objective
        values would only resolve it to ``sqrt(eps)``).  A geodesic that leaves
        the true minimizer's path is minimized at its branch point, so the
        deepest restricted minimizer is the global one.
        """
        points = np.asarray(points, dtype=float)
        w = _normalized_weights(points, weights)
        K = points.shape[-2]
        p0 = points[..., 0, :]
        if K == 1:
            return p0.copy()
        lead = points.shape[:-2]
        D0 = self.distance(p0[..., None, :], points)  # (..., K)
        W = np.sum(w, axis=-1)
        best_j = np.zeros(lead, dtype=np.int64)
        best_tau = np.full(lead, -1.0)
        for j in range(1, K):
            pj = points[..., j, :]
            Dj = self.distance(pj[..., None, :], points)
            L = D0[..., j]
            a = np.clip(0.5 * (D0 + L[..., None] - Dj), 0.0, L[..., None])
            h = np.maximum(D0 - a, 0.0)
            srt = np.sort(a, axis=-1)
            edges = np.concatenate([np.zeros(lead + (1,)), srt, L[..., None]], axis=-1)
            tau = np.zeros(lead)
            for q in range(K + 1):
                lo, hi = edges[..., q], np.maximum(edges[..., q], edges[..., q + 1])
                sigma = np.where(a <= lo[..., None], 1.0, -1.0)
                slope_lo = np.sum(w * (lo[..., None] - a + sigma * h), axis=-1)
                stat = np.sum(w * (a - sigma * h), axis=-1) / W
                tau = np.where(slope_lo <= 0.0, np.clip(stat, lo, hi), tau)
            better = tau > best_tau
            best_j = np.where(better, j, best_j)
            best_tau = np.where(better, tau, best_tau)
        L = np.take_along_axis(D0, best_j[..., None], axis=-1)[..., 0]
        target = np.take_along_axis(points, best_j[..., None, None], axis=-2)[..., 0, :]
        frac = np.where(L > 0, best_tau / np.where(L > 0, L, 1.0), 0.0)
        return self.interpolate(p0, target, np.clip(frac, 0.0, 1.0))

    def random_points(self, rng, n, scale=1.0):
        E = self.n_edges
        e = rng.integers(0, E, n)
        k = rng.integers(-2, 3, n) if self.periodic else np.zeros(n, dtype=np.int64)
        s = rng.uniform(0.0, 1.0, n) * self._len[e]
        return self.canonicalize(np.stack([(k * E + e).astype(float), s], axis=-1))

    def height(self, P):
        """Distance to the designated line (periodic trees only)."""
        return self._features(P)[3]

    def line_coordinate(self, P):
        """Arclength coordinate of the projection onto the designated line."""
        return self._features(P)[4]


# ---------------------------------------------------------------------------
# Products


@dataclass(frozen=True)
class Product(ModelSpace):
    left: ModelSpace
    right: ModelSpace

    @property
    def coord_dim(self) -> int:
        return self.left.coord_dim + self.right.coord_dim

    def split(self, P):
        P = np.asarray(P, dtype=float)
        m = self.left.coord_dim
        return P[..., :m], P[..., m:]

    def validate(self, P):
        P = _as_points(P, self.coord_dim)
        A, B = self.split(P)
        self.left.validate(A)
        self.right.validate(B)
        return P

    def canonicalize(self, P):
        A, B = self.split(P)
        return np.concatenate([self.left.canonicalize(A), self.right.canonicalize(B)], axis=-1)

    def distance(self, P, Q):
        (A1, B1), (A2, B2) = self.split(P), self.split(Q)
        return np.hypot(self.left.distance(A1, A2), self.right.distance(B1, B2))

    def interpolate(self, P, Q, t):
        (A1, B1), (A2, B2) = self.split(P), self.split(Q)
        return np.concatenate([self.left.interpolate(A1, A2, t), self.right.interpolate(B1, B2, t)], axis=-1)

    def extend(self, P, Q, t):
        (A1, B1), (A2, B2) = self.split(P), self.split(Q)
        return np.concatenate([self.left.extend(A1, A2, t), self.right.extend(B1, B2, t)], axis=-1)

    def barycenter(self, points, weights, tol=DEFAULT_BARYCENTER_TOL, init=None):
        A, B = self.split(points)
        iA, iB = (None, None) if init is None else self.split(init)
        return np.concatenate(
            [self.left.barycenter(A, weights, tol, iA), self.right.barycenter(B, weights, tol, iB)], axis=-1
        )

    def random_points(self, rng, n, scale=1.0):
        return np.concatenate([self.left.random_points(rng, n, scale), self.right.random_points(rng, n, scale)], axis=-1)

    def to_spec(self):
        return {"kind": "product", "left": self.left.to_spec(), "right": self.right.to_spec()}


def space_from_spec(spec: dict) -> ModelSpace:
    kind = str(spec.get("kind", "")).lower()
    if kind == "euclidean":
        return Euclidean(int(spec["dim"]))
    if kind in ("hyperbolic", "hyperbolic_plane"):
        return HyperbolicPlane()
    if kind == "tree":
        shape = spec["shape"]
        if isinstance(shape, str):
            shape = TreeShape.from_text(shape)
        elif isinstance(shape, dict) and "preset" in shape:
            preset = shape["preset"]
            args = {k: v for k, v in shape.items() if k != "preset"}
            shape = {"star": TreeShape.star, "comb": TreeShape.comb}[preset](**args)
        else:
            shape = TreeShape.from_spec(shape)
        return MetricTree(shape)
    if kind == "product":
        return Product(space_from_spec(spec["left"]), space_from_spec(spec["right"]))
    raise DomainError(f"unknown space kind {spec.get('kind')!r}")


# ---------------------------------------------------------------------------
# Functional interface


def _check_t(t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > 1) or not np.all(np.isfinite(t_arr)):
        raise DomainError("interpolation parameter must lie in [0, 1]")
    return t_arr


def distance(space: ModelSpace, P, Q):
    d = space.distance(space.validate(P), space.validate(Q))
    return float(d) if np.ndim(d) == 0 else d


def interpolate(space: ModelSpace, P, Q, t):
    return space.interpolate(space.validate(P), space.validate(Q), _check_t(t))


def cat0_residual(space: ModelSpace, P, Q, R, t):
    """Right side minus left side of the CAT(0) comparison inequality.

    With ``Q_t`` the point at fraction ``t`` from ``Q`` to ``R``::

        (1-t) d^2(P,Q) + t d^2(P,R) - t(1-t) d^2(Q,R) - d^2(P,Q_t)
    """
    P, Q, R = space.validate(P), space.validate(Q), space.validate(R)
    t = _check_t(t)
    Qt = space.interpolate(Q, R, t)
    res = (
        (1 - t) * space.distance(P, Q) ** 2
        + t * space.distance(P, R) ** 2
        - t * (1 - t) * space.distance(Q, R) ** 2
        - space.distance(P, Qt) ** 2
    )
    return float(res) if np.ndim(res) == 0 else res


def weighted_barycenter(space: ModelSpace, points, weights=None, tol: float = DEFAULT_BARYCENTER_TOL):
    """Barycenter of a list of points with positive weights (default equal)."""
    pts = space.validate(np.asarray(points, dtype=float))
    if pts.ndim < 2 or pts.shape[-2] == 0:
        raise DomainError("need at least one point")
    if weights is None:
        weights = np.ones(pts.shape[-2])
    return space.barycenter(pts, np.asarray(weights, dtype=float), tol)

