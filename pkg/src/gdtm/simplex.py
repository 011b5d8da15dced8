"""Piecewise-linear basis functions on the standard simplex.

Two representations live here. ``AffinePiece`` / ``Combination`` follow the
geometric definitions (normals through barycenters, a solved hyperplane for
the unsymmetric corner) and are valid on all of R^m. ``SimplexLoss`` stores
the same functions reduced to the affine hull sum(x) = 1, where every ramp
touches at most two coordinates:

    hat_v^mu          = relu((x_v - 1 + mu) / mu)
    bump ramp (v, w)  = relu(2 (x_v + x_w) - 1)
    corner_vw^mu      = relu(2 x_v + (1 - (1 - mu) / mu) x_w - 1)

The two agree on the simplex; tests use one as the oracle of the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import numpy as np

QUARTER = 0.25
HALF = 0.5


def vertex(v: int, m: int) -> np.ndarray:
    e = np.zeros(m)
    e[v] = 1.0
    return e


def edge_point(v: int, w: int, mu: float, m: int) -> np.ndarray:
    """(1 - mu) e_v + mu e_w."""
    x = np.zeros(m)
    x[v] += 1.0 - mu
    x[w] += mu
    return x


def barycenter(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


def random_point(m: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(m))


def random_corner_point(v: int, mu: float, m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish point of the corner S_v^mu = (1 - mu) e_v + mu S."""
    return (1.0 - mu) * vertex(v, m) + mu * random_point(m, rng)


@dataclass(frozen=True)
class AffinePiece:
    normal: np.ndarray
    offset: float

    def pre(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.normal - self.offset

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(0.0, self.pre(x))


@dataclass(frozen=True)
class Combination:
    """Signed sum of affine ramps."""
    terms: tuple[tuple[float, AffinePiece], ...]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return sum(c * p(x) for c, p in self.terms)


def hat(v: int, mu: float, m: int) -> AffinePiece:
    if m < 2:
        raise ValueError("need m >= 2")
    n = np.full(m, -1.0 / (mu * m))
    n[v] = (m - 1) / (mu * m)
    return AffinePiece(n, ((1.0 - mu) * m - 1.0) / (mu * m))


def edge_bump(v: int, w: int, m: int) -> Combination:
    if v == w or m < 3:
        raise ValueError("edge bump needs v != w and m >= 3")
    n = 4.0 * (edge_point(v, w, HALF, m) - barycenter(m))
    return Combination(((1.0, AffinePiece(n, 1.0 - 4.0 / m)),
                        (-1.0, hat(v, HALF, m)),
                        (-1.0, hat(w, HALF, m))))


@lru_cache(maxsize=None)
def _canonical_corner(mu: float, m: int) -> tuple[np.ndarray, float]:
    # hyperplane through (1-mu)e_0 + mu e_1 and (e_0 + e_u)/2 for u >= 2,
    # normalized by n.e_0 - d = 1, gauge sum(n) = 0
    rows, rhs = [], []
    pts = [edge_point(0, 1, mu, m)] + [edge_point(0, u, HALF, m) for u in range(2, m)]
    for p in pts:
        rows.append(np.append(p, -1.0))
        rhs.append(0.0)
    rows.append(np.append(vertex(0, m), -1.0))
    rhs.append(1.0)
    rows.append(np.append(np.ones(m), 0.0))
    rhs.append(0.0)
    a, b = np.array(rows), np.array(rhs)
    sol = np.linalg.lstsq(a, b, rcond=None)[0]
    if np.linalg.norm(a @ sol - b) > 1e-8:
        raise np.linalg.LinAlgError(f"degenerate corner hyperplane (m={m}, mu={mu})")
    return sol[:m], float(sol[m])


def unsymmetric_corner(v: int, w: int, mu: float, m: int) -> AffinePiece:
    if v == w or m < 3 or not 0 < mu <= 1:
        raise ValueError("unsymmetric corner needs v != w, m >= 3, 0 < mu <= 1")
    n0, d = _canonical_corner(float(mu), m)
    # canonical coordinates are (v, w, rest...); scatter back
    order = [v, w] + [u for u in range(m) if u not in (v, w)]
    n = np.empty(m)
    n[order] = n0
    return AffinePiece(n, d)


def profile(v: int, w: int, m: int) -> Combination:
    """bump_vw + hat_v^{1/2} - corner_vw^{1/4}: 0, 1, 1, 1/2, 0 along v -> w."""
    return Combination(edge_bump(v, w, m).terms
                       + ((1.0, hat(v, HALF, m)),
                          (-1.0, unsymmetric_corner(v, w, QUARTER, m))))


# -- hull-reduced loss -------------------------------------------------------

@dataclass
class SimplexLoss:
    """sum_r weight_r * relu(alpha_r x_{a_r} + beta_r x_{b_r} + gamma_r) on the simplex.

    ``pair_weight`` adds pair_weight * sum_{v<w} relu(2 (x_v + x_w) - 1) in
    closed form, so a bump on every unordered pair costs O(m) storage.
    """
    m: int
    _cols: dict = field(default_factory=lambda: {k: [] for k in "abABGW"})
    _frozen: tuple | None = None
    pair_weight: float = 0.0

    def _push(self, a, b, alpha, beta, gamma, weight):
        n = np.broadcast(a, b, alpha, beta, gamma, weight).shape
        for key, val in zip("abABGW", (a, b, alpha, beta, gamma, weight)):
            self._cols[key].append(np.broadcast_to(np.asarray(val), n).ravel())
        self._frozen = None

    def add_hats(self, v, mu, weight=1.0):
        v = np.asarray(v, dtype=np.int64)
        mu = np.asarray(mu, dtype=float)
        self._push(v, v, 1.0 / mu, 0.0, -(1.0 - mu) / mu, weight)
        return self

    def add_edge_bumps(self, v, w, weight=1.0):
        v, w = np.asarray(v, dtype=np.int64), np.asarray(w, dtype=np.int64)
        if np.any(v == w):
            raise ValueError("edge bump on a diagonal pair")
        weight = np.broadcast_to(np.asarray(weight, dtype=float), np.broadcast(v, w).shape)
        self._push(v, w, 2.0, 2.0, -1.0, weight)
        self.add_hats(v, HALF, -weight)
        self.add_hats(w, HALF, -weight)
        return self

    def add_corners(self, v, w, mu, weight=1.0):
        v, w = np.asarray(v, dtype=np.int64), np.asarray(w, dtype=np.int64)
        mu = np.asarray(mu, dtype=float)
        self._push(v, w, 2.0, 1.0 - (1.0 - mu) / mu, -1.0, weight)
        return self

    def add_profiles(self, v, w, weight=1.0):
        weight = np.broadcast_to(np.asarray(weight, dtype=float),
                                 np.broadcast(np.asarray(v), np.asarray(w)).shape)
        self.add_edge_bumps(v, w, weight)
        self.add_hats(v, HALF, weight)
        self.add_corners(v, w, QUARTER, -weight)
        return self

    def add_all_pair_bumps(self, weight: float):
        """weight * bump_vw summed over every unordered pair v < w."""
        self.pair_weight += float(weight)
        self.add_hats(np.arange(self.m), HALF, -float(weight) * (self.m - 1))
        return self

    def add(self, other: "SimplexLoss", scale: float = 1.0):
        if other.m != self.m:
            raise ValueError("dimension mismatch")
        self.pair_weight += scale * other.pair_weight
        a, b, al, be, ga, w = other.arrays
        self._push(a, b, al, be, ga, scale * w)
        return self

    @property
    def arrays(self):
        if self._frozen is None:
            cols = [np.concatenate(self._cols[k]) if self._cols[k] else np.zeros(0)
                    for k in "abABGW"]
            cols[0] = cols[0].astype(np.int64)
            cols[1] = cols[1].astype(np.int64)
            if len(cols[0]) and (cols[0].max() >= self.m or cols[1].max() >= self.m
                                 or min(cols[0].min(), cols[1].min()) < 0):
                raise IndexError("term index outside the simplex dimension")
            self._frozen = tuple(cols)
        return self._frozen

    def __len__(self):
        return len(self.arrays[0])

    def __call__(self, x: np.ndarray) -> float | np.ndarray:
        a, b, al, be, ga, w = self.arrays
        x = np.asarray(x, dtype=float)
        pre = al * x[..., a] + be * x[..., b] + ga
        out = np.maximum(0.0, pre) @ w
        if self.pair_weight:
            out = out + self.pair_weight * _pair_ramps(x)
        return out

    def corner_values(self, v: int, mu: float) -> np.ndarray:
        """Loss at (1 - mu) e_v + mu e_u for every vertex u (entry v is loss(e_v))."""
        a, b, al, be, ga, w = self.arrays
        m = self.m
        on_a = (a == v).astype(float)
        on_b = (b == v).astype(float)
        base = 1.0 - mu
        generic = np.maximum(0.0, al * base * on_a + be * base * on_b + ga)
        out = np.full(m, generic @ w)
        # u = a (a != v)
        xa_u = mu + 0.0 * on_a
        xb_u = base * on_b + mu * (b == a)
        val_a = np.maximum(0.0, al * xa_u + be * xb_u + ga)
        sel = a != v
        out += np.bincount(a[sel], weights=(w * (val_a - generic))[sel], minlength=m)
        # u = b (b != v, b != a)
        val_b = np.maximum(0.0, al * base * on_a + be * mu + ga)
        sel = (b != v) & (b != a)
        out += np.bincount(b[sel], weights=(w * (val_b - generic))[sel], minlength=m)
        out[v] = np.maximum(0.0, al * on_a + be * on_b + ga) @ w
        if self.pair_weight:
            # (v,u) gives 1, (v,w) gives relu(1 - 2 mu), (u,w) gives relu(2 mu - 1)
            k = m - 2
            at_edge = 1.0 + k * max(0.0, 1 - 2 * mu) + k * max(0.0, 2 * mu - 1)
            pw = np.full(m, at_edge)
            pw[v] = m - 1
            out = out + self.pair_weight * pw
        return out

    def segment_breakpoints(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Parameters t in (0, 1) where some ramp switches on x + t (y - x)."""
        a, b, al, be, ga, _ = self.arrays
        p0 = al * x[a] + be * x[b] + ga
        p1 = al * y[a] + be * y[b] + ga
        cross = (p0 * p1 < 0)
        t = p0[cross] / (p0[cross] - p1[cross])
        if self.pair_weight:
            t = np.concatenate((t, _pair_breakpoints(x, y)))
        return np.unique(t[(t > 0) & (t < 1)])


def _pair_ramps(x: np.ndarray) -> np.ndarray:
    """sum_{v<w} relu(2 (x_v + x_w) - 1), rowwise, in O(m log m)."""
    s = np.sort(np.asarray(x, dtype=float), axis=-1)
    m = s.shape[-1]
    suffix = np.cumsum(s[..., ::-1], axis=-1)[..., ::-1]
    suffix = np.concatenate((suffix, np.zeros(s.shape[:-1] + (1,))), axis=-1)
    flat_s = s.reshape(-1, m)
    flat_suf = suffix.reshape(-1, m + 1)
    out = np.empty(len(flat_s))
    idx = np.arange(m)
    for r, (row, suf) in enumerate(zip(flat_s, flat_suf)):
        start = np.maximum(idx + 1, np.searchsorted(row, 0.5 - row, side="right"))
        cnt = m - start
        out[r] = np.sum((2 * row - 1) * cnt + 2 * suf[start])
    return out.reshape(s.shape[:-1])


def _pair_breakpoints(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # pairs outside supp(x) u supp(y) stay at -1; pairing with a zero coordinate
    # depends on the support coordinate alone
    S = np.flatnonzero((np.asarray(x) != 0) | (np.asarray(y) != 0))
    xs, ys = np.asarray(x)[S], np.asarray(y)[S]
    i, j = np.triu_indices(len(S), k=1)
    p0, p1 = 2 * (xs[i] + xs[j]) - 1, 2 * (ys[i] + ys[j]) - 1
    if len(S) < len(x):
        p0 = np.concatenate((p0, 2 * xs - 1))
        p1 = np.concatenate((p1, 2 * ys - 1))
    cross = p0 * p1 < 0
    return p0[cross] / (p0[cross] - p1[cross])


def dir_deriv(loss, x: np.ndarray, y: np.ndarray, mu: float) -> float:
    """One-sided derivative of ``loss`` at x toward y, exact when affine on the corner."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float((loss((1.0 - mu) * x + mu * y) - loss(x)) / mu)


def argmin_ties(scores: np.ndarray, v: int, rtol: float = 1e-9) -> int:
    """Index of the smallest score; stay at v if it ties, else lowest index."""
    scores = np.asarray(scores, dtype=float)
    best = scores.min()
    tol = rtol * max(1.0, abs(best))
    if scores[v] <= best + tol:
        return v
    return int(np.flatnonzero(scores <= best + tol)[0])


def corner_scores(loss, v: int, mu: float,
                  quad: tuple[np.ndarray, np.ndarray, float] | None = None) -> np.ndarray:
    """ell((1-mu)e_v + mu e_u) + coef * mu * (A e_v - y)^T A e_u for all u."""
    if isinstance(loss, SimplexLoss):
        scores = loss.corner_values(v, mu)
    else:
        m = quad[0].shape[1] if quad is not None else loss.m
        scores = np.array([loss(edge_point(v, u, mu, m)) if u != v else loss(vertex(v, m))
                           for u in range(m)])
    if quad is not None:
        A, target, coef = quad
        A = np.asarray(A, dtype=float)
        scores = scores + coef * mu * ((A[:, v] - target) @ A)
    return scores


def corner_argmin(loss, v: int, mu: float,
                  quad: tuple[np.ndarray, np.ndarray, float] | None = None) -> int:
    return argmin_ties(corner_scores(loss, v, mu, quad), v)


def line_search(loss: SimplexLoss, x: np.ndarray, y: np.ndarray) -> float:
    """Exact minimizer of loss on the segment [x, y]; ties go to the longest step."""
    ts = np.concatenate(([0.0], loss.segment_breakpoints(x, y), [1.0]))
    vals = np.array([loss(x + t * (y - x)) for t in ts])
    best = vals.min()
    ok = vals <= best + 1e-12 * max(1.0, abs(best))
    return float(ts[np.flatnonzero(ok)[-1]])


def check_corner_affine(f, m: int, mu: float, rng: np.random.Generator,
                        samples: int = 3, tol: float = 1e-10) -> bool:
    """Sample convex combinations inside every corner and test affinity."""
    for u in range(m):
        for _ in range(samples):
            p = random_corner_point(u, mu, m, rng)
            q = random_corner_point(u, mu, m, rng)
            lam = rng.uniform()
            lhs = f(lam * p + (1 - lam) * q)
            rhs = lam * f(p) + (1 - lam) * f(q)
            if abs(lhs - rhs) > tol * max(1.0, abs(lhs)):
                return False
    return True
