"""Coisotropic graph submanifolds in the standard contact chart.

A k-dimensional graph Y lives over source coordinates (x_1..x_n plus a chosen
set of free y-coordinates); the remaining y's and z are graph components. The
restricted 1-form is always the symbolic pullback of dz - sum y_i dx_i.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import null_space

from . import forms as fm
from . import symplin as sl
from .fields import (
    Chart,
    Const,
    ExprField,
    SmoothMapExpr,
    VectorFieldExpr,
    constant,
    coordinate,
    lie_bracket,
    pushforward_field,
    vector_field,
)

RANK_TOL = 1e-8


def ambient_chart(n: int) -> Chart:
    names = tuple(f"x{i}" for i in range(1, n + 1)) \
        + tuple(f"y{i}" for i in range(1, n + 1)) + ("z",)
    return Chart(names)


def standard_alpha(n: int) -> fm.DiffForm:
    """dz - sum_i y_i dx_i on the (2n+1)-chart."""
    ch = ambient_chart(n)
    coeffs = {"z": 1.0}
    form = fm.one_form(ch, coeffs)
    for i in range(1, n + 1):
        form = form + fm.one_form(ch, {f"x{i}": -coordinate(ch, f"y{i}")})
    return form


@dataclass(frozen=True)
class GraphSubmanifold:
    """Y = graph of f over (x_1..x_n, free y's) inside standard contact R^{2n+1}."""

    n: int
    k: int
    free_y: tuple[int, ...]
    components: Mapping[str, ExprField]  # dependent y's and z, on source chart

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.n + 1 <= self.k <= 2 * self.n:
            raise ValueError(f"k={self.k} outside [n+1, 2n] for n={self.n}")
        free = tuple(sorted(self.free_y))
        if len(free) != self.k - self.n or any(
                not 1 <= j <= self.n for j in free):
            raise ValueError("free_y must be k-n distinct indices in 1..n")
        object.__setattr__(self, "free_y", free)
        expected = {f"y{i}" for i in range(1, self.n + 1)
                    if i not in free} | {"z"}
        comps = dict(self.components)
        if set(comps) != expected:
            raise ValueError(
                f"components must be exactly {sorted(expected)}, "
                f"got {sorted(comps)}")
        src = self.source_chart
        comps = {name: c.on_chart(src) for name, c in comps.items()}
        object.__setattr__(self, "components", comps)

    @property
    def source_chart(self) -> Chart:
        names = tuple(f"x{i}" for i in range(1, self.n + 1)) \
            + tuple(f"y{j}" for j in self.free_y)
        return Chart(names)

    @property
    def ambient(self) -> Chart:
        return ambient_chart(self.n)

    @property
    def embedding(self) -> SmoothMapExpr:
        src = self.source_chart
        comps = []
        for name in self.ambient.var_names:
            if name in src.var_names:
                comps.append(coordinate(src, name))
            else:
                comps.append(self.components[name].on_chart(src))
        return SmoothMapExpr(src, self.ambient, tuple(comps))

    @property
    def lambda_form(self) -> fm.DiffForm:
        return fm.pullback(self.embedding, standard_alpha(self.n))


def graph_submanifold(n: int, k: int,
                      components: Mapping[str, ExprField | float] | None = None,
                      free_y: Sequence[int] | None = None) -> GraphSubmanifold:
    """Build a graph; unspecified components default to zero."""
    if free_y is None:
        free_y = tuple(range(2 * n - k + 1, n + 1))
    free = tuple(sorted(free_y))
    src_names = tuple(f"x{i}" for i in range(1, n + 1)) \
        + tuple(f"y{j}" for j in free)
    src = Chart(src_names)
    needed = [f"y{i}" for i in range(1, n + 1) if i not in free] + ["z"]
    given = dict(components or {})
    comps: dict[str, ExprField] = {}
    for name in needed:
        c = given.pop(name, 0.0)
        if isinstance(c, ExprField):
            comps[name] = c.on_chart(src)
        else:
            comps[name] = constant(src, float(c))
    if given:
        raise ValueError(f"unexpected components {sorted(given)}")
    return GraphSubmanifold(n, k, free, comps)


def restricted_form(Y: GraphSubmanifold) -> fm.DiffForm:
    return Y.lambda_form


# ---------------------------------------------------------------------------
# Singular-locus scanning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SingularScanResult:
    box: float
    step: float
    tol: float
    hits: np.ndarray  # (num_hits, k)
    clusters: tuple[tuple[int, ...], ...]  # index lists into hits
    dims: tuple[int, ...]
    flags: tuple[str, ...]

    @property
    def num_hits(self) -> int:
        return len(self.hits)


def _grid_points(dim: int, box: float, step: float) -> np.ndarray:
    axis = np.arange(-box, box + step / 2, step)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _cluster(points: np.ndarray, radius: float) -> list[list[int]]:
    """Single-linkage clustering: points closer than radius join a cluster."""
    m = len(points)
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    r2 = radius * radius
    for i in range(m):
        d2 = np.sum((points[i + 1:] - points[i]) ** 2, axis=1)
        for off in np.nonzero(d2 <= r2)[0]:
            ra, rb = find(i), find(i + 1 + off)
            if ra != rb:
                parent[ra] = rb
    groups: dict[int, list[int]] = {}
    for i in range(m):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def singular_scan(Y: GraphSubmanifold, box: float = 1.0, step: float = 0.05,
                  tol: float = 1e-6) -> SingularScanResult:
    """Grid scan for zeros of the restricted form, with PCA dimension estimates.

    A point is a hit when every coefficient of the restricted form is below
    tol * (1 + local gradient norm); clusters separated by more than three
    grid steps are reported as distinct components.
    """
    if step <= 0 or box <= 0 or tol <= 0:
        raise ValueError("box, step and tol must be positive")
    lam = Y.lambda_form
    src = Y.source_chart
    k = src.dim
    coeff_fields = [lam.coeff((i,)) for i in range(k)]
    grad_fields = [[c.diff(v) for v in src.var_names] for c in coeff_fields]
    pts = _grid_points(k, box, step)
    if pts.size == 0:
        raise ValueError("empty scan grid")
    hits = []
    for p in pts:
        vals = [c.eval(p) for c in coeff_fields]
        gnorm = float(np.sqrt(sum(
            g.eval(p) ** 2 for row in grad_fields for g in row)))
        thresh = tol * (1.0 + gnorm)
        if all(abs(v) <= thresh for v in vals):
            hits.append(p)
    hits_arr = np.array(hits) if hits else np.zeros((0, k))
    clusters = _cluster(hits_arr, 3.0 * step) if len(hits_arr) else []
    dims, flags = [], []
    cutoff = (2.0 * step) ** 2
    for idx in clusters:
        cloud = hits_arr[idx]
        if len(cloud) == 1:
            dim = 0
        else:
            cov = np.cov(cloud.T, bias=True)
            cov = np.atleast_2d(cov)
            eig = np.linalg.eigvalsh(cov)
            dim = int(np.sum(eig > cutoff))
        dims.append(dim)
        if dim == 2 * Y.n - Y.k:
            flags.append("generic")
        elif dim == Y.n and Y.k == Y.n + 1:
            flags.append("perturbable-legendrian")
        else:
            flags.append("other")
    return SingularScanResult(
        box=box, step=step, tol=tol, hits=hits_arr,
        clusters=tuple(tuple(i) for i in clusters),
        dims=tuple(dims), flags=tuple(flags))


# ---------------------------------------------------------------------------
# Residual equations for k = n + 1 graphs in the standard model
# ---------------------------------------------------------------------------


class NotStandardModel(ValueError):
    """Operation requires the k = n + 1 graph with free coordinate y_n."""


def _require_standard(Y: GraphSubmanifold):
    if Y.k != Y.n + 1:
        raise NotStandardModel(
            "residual equations require k = n + 1; use pointwise_coisotropy "
            "for other dimensions")
    if Y.free_y != (Y.n,):
        raise NotStandardModel(
            "residual equations require the free fiber coordinate y_n")


def _model_data(Y: GraphSubmanifold):
    """Partials of the graph components in the standard k = n+1 model."""
    src = Y.source_chart
    n = Y.n
    xn = f"x{n}"
    yn = f"y{n}"
    ys = {a: Y.components[f"y{a}"] for a in range(1, n)}
    z = Y.components["z"]
    d = {
        "z_x": {a: z.diff(f"x{a}") for a in range(1, n + 1)},
        "z_yn": z.diff(yn),
        "y_x": {(a, b): ys[a].diff(f"x{b}")
                for a in range(1, n) for b in range(1, n + 1)},
        "y_yn": {a: ys[a].diff(yn) for a in range(1, n)},
        "y": ys,
        "yn_var": coordinate(src, yn),
        "xn": xn,
        "yn": yn,
    }
    return d


def residual_fields(Y: GraphSubmanifold) -> dict:
    """The foliation-residual equations as labeled symbolic fields.

    Keys: "eq_abc" (triples, redundant), "eq_abn", "eq_abyn" (pairs),
    "eq_a" (singles) and "lambda_ab" (the commutator identity), each mapping
    index tuples to ExprFields on the source chart.
    """
    _require_standard(Y)
    n = Y.n
    d = _model_data(Y)
    zx, zyn = d["z_x"], d["z_yn"]
    yx, yyn, y = d["y_x"], d["y_yn"], d["y"]
    yn = d["yn_var"]

    def A(a):  # dz/dx_a - y_a, with y_a the graph component for a < n
        return zx[a] - y[a]

    out = {"eq_abc": {}, "eq_abn": {}, "eq_abyn": {}, "eq_a": {},
           "lambda_ab": {}}
    rng = range(1, n)
    for a, b, c in itertools.combinations(rng, 3):
        out["eq_abc"][(a, b, c)] = (
            A(a) * (yx[(b, c)] - yx[(c, b)])
            - A(b) * (yx[(a, c)] - yx[(c, a)])
            + A(c) * (yx[(a, b)] - yx[(b, a)]))
    for a, b in itertools.combinations(rng, 2):
        out["eq_abn"][(a, b)] = (
            A(a) * yx[(b, n)] - A(b) * yx[(a, n)]
            + (zx[n] - yn) * (yx[(a, b)] - yx[(b, a)]))
        out["eq_abyn"][(a, b)] = (
            A(a) * yyn[b] - A(b) * yyn[a]
            + zyn * (yx[(a, b)] - yx[(b, a)]))
        out["lambda_ab"][(a, b)] = (
            yyn[a] * yx[(b, n)] - yyn[b] * yx[(a, n)]
            + yx[(a, b)] - yx[(b, a)])
    for a in rng:
        out["eq_a"][a] = zx[a] - (zx[n] - yn) * yyn[a] + zyn * yx[(a, n)] - y[a]
    return out


def coisotropy_residuals(Y: GraphSubmanifold, point: Sequence[float]) -> dict:
    """Evaluate every residual equation at a point.

    The triple equations are recorded but excluded from max_residual, being
    derivable from the others.
    """
    fields_ = residual_fields(Y)
    out = {}
    for key, fam in fields_.items():
        out[key] = {idx: f.eval(point) for idx, f in fam.items()}
    binding = [v for key in ("eq_abn", "eq_abyn", "eq_a")
               for v in out[key].values()]
    out["max_residual"] = max((abs(v) for v in binding), default=0.0)
    out["redundant_max"] = max(
        (abs(v) for v in out["eq_abc"].values()), default=0.0)
    return out


def pointwise_coisotropy(Y: GraphSubmanifold, point: Sequence[float],
                         tol: float = RANK_TOL) -> dict:
    """Classify T_pY intersected with the contact hyperplane, via linear algebra."""
    emb = Y.embedding
    q = emb.eval(point)
    alpha = standard_alpha(Y.n)
    lam = Y.lambda_form
    if lam.max_coeff(point) <= tol:
        return {"singular": True, "kind": "tangent to xi", "coisotropic": None}
    J = emb.jacobian(point)  # (2n+1) x k
    tangent = sl.span(J.T, Y.ambient.dim)
    xi, omega = sl.contact_hyperplane(alpha, q)
    W_amb = tangent.intersect(xi)
    W_coords = sl.coords_in_basis(xi.basis, W_amb.basis)
    cls = sl.classify_subspace(
        sl.LinSubspace(xi.dim, W_coords), omega)
    cls["singular"] = False
    cls["intersection_dim"] = W_amb.dim
    return cls


# ---------------------------------------------------------------------------
# The commuting vector fields and their identities
# ---------------------------------------------------------------------------


def build_Vk(Y: GraphSubmanifold) -> tuple[list[VectorFieldExpr],
                                           list[VectorFieldExpr]]:
    """The n-1 commuting fields on the source chart and their ambient images.

    Source fields: d/dx_a - (dy_a/dy_n) d/dx_n + (dy_a/dx_n) d/dy_n.
    Ambient images are the symbolic pushforwards, extended off the graph by
    keeping their source-variable coefficients constant in the other
    directions.
    """
    _require_standard(Y)
    n = Y.n
    if n == 1:
        return [], []
    src = Y.source_chart
    amb = Y.ambient
    emb = Y.embedding
    xn, yn = f"x{n}", f"y{n}"
    tilde, ambient = [], []
    for a in range(1, n):
        ya = Y.components[f"y{a}"]
        comps = [constant(src, 0.0) for _ in range(src.dim)]
        comps[src.index(f"x{a}")] = constant(src, 1.0)
        comps[src.index(xn)] = comps[src.index(xn)] - ya.diff(yn)
        comps[src.index(yn)] = ya.diff(xn)
        Vt = VectorFieldExpr(src, tuple(comps))
        tilde.append(Vt)
        push = pushforward_field(emb, Vt)
        amb_comps = tuple(c.on_chart(amb) for c in push)
        ambient.append(VectorFieldExpr(amb, amb_comps))
    return tilde, ambient


def verify_claim(Y: GraphSubmanifold, points: Sequence[Sequence[float]],
                 tol: float = 1e-8) -> dict:
    """Check the four identities satisfied by the commuting fields.

    Refuses when the residual equations fail at any sample (the identities
    are conditional on coisotropy).
    """
    _require_standard(Y)
    bad = []
    for p in points:
        r = coisotropy_residuals(Y, p)
        if r["max_residual"] > tol:
            bad.append((list(map(float, p)), r["max_residual"]))
    if bad:
        return {
            "refused": True,
            "reason": "not coisotropic at sampled points",
            "diagnostics": bad[:10],
            "num_bad": len(bad),
        }
    tilde, ambient = build_Vk(Y)
    alpha = standard_alpha(Y.n)
    lam = Y.lambda_form
    dlam = fm.exterior_d(lam)
    emb = Y.embedding
    res = {"i_V_alpha": 0.0, "i_V_dlambda": 0.0, "bracket": 0.0,
           "lie_lambda": 0.0, "lambda_ab": 0.0}
    for Vt, Va in zip(tilde, ambient):
        ival = fm.interior(Va, alpha).coeff(())
        idl = fm.interior(Vt, dlam)
        ld = fm.lie_derivative(Vt, lam)
        for p in points:
            q = emb.eval(p)
            res["i_V_alpha"] = max(res["i_V_alpha"], abs(ival.eval(q)))
            res["i_V_dlambda"] = max(res["i_V_dlambda"], idl.max_coeff(p))
            res["lie_lambda"] = max(res["lie_lambda"], ld.max_coeff(p))
    for Vt, Wt in itertools.combinations(tilde, 2):
        br = lie_bracket(Vt, Wt)
        pushed = pushforward_field(emb, br)
        for p in points:
            val = max(abs(c.eval(p)) for c in pushed)
            res["bracket"] = max(res["bracket"], val)
    lam_fields = residual_fields(Y)["lambda_ab"]
    for f in lam_fields.values():
        for p in points:
            res["lambda_ab"] = max(res["lambda_ab"], abs(f.eval(p)))
    res["refused"] = False
    res["max_residual"] = max(
        res[k] for k in ("i_V_alpha", "i_V_dlambda", "bracket",
                         "lie_lambda", "lambda_ab"))
    res["passed"] = res["max_residual"] <= tol
    res["tolerance"] = tol
    res["samples"] = len(points)
    return res


# ---------------------------------------------------------------------------
# Characteristic foliations in all codimensions
# ---------------------------------------------------------------------------


def char_foliation_form(Y: GraphSubmanifold,
                        points: Sequence[Sequence[float]],
                        tol: float = RANK_TOL) -> dict:
    """Kernel dimension and integrability residual of the defining form.

    The defining form is the pullback of alpha ^ (d alpha)^(k-n-1); its kernel
    at nonsingular samples should have dimension 2n-k+1. The integrability
    residual evaluates the pullback of (d alpha)^(k-n) on tuples drawn from
    the hyperplane annihilated by the restricted 1-form.
    """
    n, k = Y.n, Y.k
    alpha = standard_alpha(n)
    dalpha = fm.exterior_d(alpha)
    emb = Y.embedding
    omega = fm.pullback(emb, fm.wedge(alpha, fm.wedge_power(dalpha, k - n - 1)))
    integ = fm.pullback(emb, fm.wedge_power(dalpha, k - n)) \
        if 2 * (k - n) <= k else None
    lam = Y.lambda_form
    expected = 2 * n - k + 1
    kernel_dims = []
    max_residual = 0.0
    used = 0
    for p in points:
        if lam.max_coeff(p) <= tol:
            continue  # singular point
        used += 1
        M = fm.contraction_matrix(omega, p)
        scale = max(1.0, np.max(np.abs(M)))
        s = np.linalg.svd(M, compute_uv=False)
        rank = int(np.sum(s > tol * scale))
        kernel_dims.append(k - rank)
        # hyperplane ker(lambda_p) in source coordinates
        covec = np.zeros(k)
        for (i,), c in lam.coeffs.items():
            covec[i] = c.eval(p)
        Wbasis = null_space(covec.reshape(1, -1), rcond=1e-12).T
        deg = 2 * (k - n)
        if integ is not None and deg <= len(Wbasis):
            for combo in itertools.combinations(range(len(Wbasis)), deg):
                v = integ.evaluate(p, [Wbasis[i] for i in combo])
                max_residual = max(max_residual, abs(v))
    return {
        "expected_kernel_dim": expected,
        "kernel_dims": kernel_dims,
        "kernel_ok": all(d == expected for d in kernel_dims),
        "integrability_residual": max_residual,
        "samples_used": used,
    }


# ---------------------------------------------------------------------------
# Perturbing away a Legendrian singular component
# ---------------------------------------------------------------------------


def legendrian_model(n: int) -> GraphSubmanifold:
    """The flat graph over (x_1..x_n, y_1): restricted form -y_1 dx_1."""
    return graph_submanifold(n, n + 1, free_y=(1,))


def perturb_legendrian(Y: GraphSubmanifold, bump: ExprField,
                       delta: float) -> GraphSubmanifold:
    """Replace z = 0 by z = bump(y_1), clearing the singular plane at 0.

    Requires the normal-form input (free fiber y_1, all components zero) and
    bump'(0) != 0 unless the bump is identically zero, in which case the
    graph is returned unchanged.
    """
    if Y.free_y != (1,) or Y.k != Y.n + 1:
        raise ValueError("input must be the Legendrian normal-form graph")
    for name, c in Y.components.items():
        if not (isinstance(c.expr, Const) and c.expr.value == 0.0):
            raise ValueError("input components must vanish (normal form)")
    src = Y.source_chart
    bump = bump.on_chart(src)
    allowed = {"y1"}
    if not bump.expr.variables() <= allowed:
        raise ValueError("bump must depend on y1 only")
    if isinstance(bump.expr, Const) and bump.expr.value == 0.0:
        return Y
    slope = bump.diff("y1").eval(np.zeros(src.dim))
    if abs(slope) < 1e-12:
        raise ValueError("perturbation does not clear singularity at 0")
    comps = {name: constant(src, 0.0) for name in Y.components}
    comps["z"] = bump
    out = GraphSubmanifold(Y.n, Y.k, Y.free_y, comps)
    return out


def perturbation_sup_norm(Y0: GraphSubmanifold, Y1: GraphSubmanifold,
                          points: Sequence[Sequence[float]]) -> float:
    """Max displacement between the two embeddings over sample points."""
    e0, e1 = Y0.embedding, Y1.embedding
    return max(
        float(np.max(np.abs(e0.eval(p) - e1.eval(p)))) for p in points)


def foliation_residual(Y: GraphSubmanifold,
                       points: Sequence[Sequence[float]]) -> float:
    """Max of the pulled-back alpha ^ d(alpha) over sampled tangent 3-frames."""
    alpha = standard_alpha(Y.n)
    three = fm.pullback(Y.embedding, fm.wedge(alpha, fm.exterior_d(alpha)))
    best = 0.0
    for p in points:
        best = max(best, three.max_coeff(p))
    return best


# ---------------------------------------------------------------------------
# Singular-point normal data
# ---------------------------------------------------------------------------


def singular_normal_data(Y: GraphSubmanifold, point: Sequence[float],
                         tol: float = 1e-8,
                         normal_pair: Optional[tuple[str, str]] = None) -> dict:
    """Rank and kernel of the restricted two-form at a singular point.

    The orientation sign is that of the two-form on the declared normal pair
    of source coordinates (default: x_n and the last free y).
    """
    lam = Y.lambda_form
    if lam.max_coeff(point) > tol:
        return {"singular": False, "tag": "not singular"}
    src = Y.source_chart
    dlam = fm.exterior_d(lam)
    k = src.dim
    M = np.zeros((k, k))
    eye = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            M[i, j] = dlam.evaluate(point, [eye[i], eye[j]])
            M[j, i] = -M[i, j]
    scale = max(1.0, np.max(np.abs(M)))
    s = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(s > tol * scale))
    if normal_pair is None:
        normal_pair = (f"x{Y.n}", f"y{Y.free_y[-1]}")
    i0, j0 = src.index(normal_pair[0]), src.index(normal_pair[1])
    val = M[i0, j0]
    return {
        "singular": True,
        "rank": rank,
        "kernel_dim": k - rank,
        "normal_pair": normal_pair,
        "normal_value": float(val),
        "orientation_sign": int(np.sign(val)) if abs(val) > tol else 0,
        "generic": rank == 2 and k - rank == Y.n - 1,
    }
