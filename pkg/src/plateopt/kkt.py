"""Regularized discrete optimality systems for the dual thickness-design
problem in both discretizations: residuals, generalized Jacobians, active-set
classification, and control recovery through the projection formula.

The unknowns are the primal/adjoint states; the control never appears as a
degree of freedom. It is recovered pointwise from the adjoint q and the datum
z as l = (P_[m^4, M^4](3 q z))^(-3/4), and the state constraint y >= -tau
enters through the penalty term with multiplier surrogate gamma*(y+tau)^-.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .poisson_p1 import P1Field, assemble_mass, assemble_stiffness, \
    solve_poisson_p1
from .poisson_rt0 import MixedSystem, P0Field
from .quadrature import cell_integrals, eval_on_gauss, load_vector_p1, \
    subdivision_gauss_bary

__all__ = ["ProblemSpec", "OptState", "ActiveSets", "ImplicitControl",
           "ImplicitThickness", "recover_control", "recover_thickness",
           "residual", "residual_rt0", "residual_p1", "jacobian",
           "split_quadrature", "moreau_yosida_multiplier", "objective",
           "active_sets", "initial_state", "system_for"]

# control classification codes
INACTIVE, LOWER, UPPER = 0, 1, 2


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Problem data: constraint bounds, load, and optional tracking terms.

    tau : state-constraint offset (y >= -tau), positive.
    m, M : thickness bounds, 0 < m < M; the dual control l = u**-3 then lives
        in [M**-3, m**-3] and the projection interval is [m**4, M**4].
    load : right-hand side f of the datum problem; a callable on points or an
        object with the `at_points` protocol.
    disc : "rt0" or "p1".
    alpha, y_target : optional tracking term (alpha/2)*||y - y_target||^2.
    extra_load : optional additional right-hand side of the primal equation.
    """

    tau: float
    m: float
    M: float
    load: object
    disc: str = "rt0"
    alpha: float = 0.0
    y_target: object = None
    extra_load: object = None
    name: str = ""

    def __post_init__(self):
        if not (0 < self.m < self.M):
            raise ValueError(f"need 0 < m < M, got m={self.m}, M={self.M}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.disc not in ("rt0", "p1"):
            raise ValueError(f"unknown discretization {self.disc!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.alpha > 0 and self.y_target is None:
            raise ValueError("tracking term needs a target state")

    @property
    def l_min(self):
        return self.M ** -3

    @property
    def l_max(self):
        return self.m ** -3

    @property
    def proj_lo(self):
        return self.m ** 4

    @property
    def proj_hi(self):
        return self.M ** 4


class OptState:
    """Concatenated primal/adjoint iterate at a fixed regularization gamma.

    For the mixed discretization the fields are (flux_y, y, flux_q, q) with
    per-edge fluxes and per-triangle values; for the P1 discretization (y, q)
    hold one value per vertex with zeros on the boundary. `z` caches the
    scalar part of the discrete datum.
    """

    def __init__(self, disc, mesh, gamma, y, q, z, flux_y=None, flux_q=None):
        if gamma <= 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        self.disc = disc
        self.mesh = mesh
        self.gamma = float(gamma)
        self.y = np.asarray(y, dtype=float)
        self.q = np.asarray(q, dtype=float)
        self.z = np.asarray(z, dtype=float)
        if disc == "rt0":
            T, E = mesh.num_triangles, mesh.num_edges
            if self.y.shape != (T,) or self.q.shape != (T,) \
                    or self.z.shape != (T,):
                raise ValueError("rt0 state needs per-triangle y, q, z")
            self.flux_y = np.asarray(flux_y, dtype=float)
            self.flux_q = np.asarray(flux_q, dtype=float)
            if self.flux_y.shape != (E,) or self.flux_q.shape != (E,):
                raise ValueError("rt0 state needs per-edge fluxes")
        elif disc == "p1":
            V = mesh.num_vertices
            if self.y.shape != (V,) or self.q.shape != (V,) \
                    or self.z.shape != (V,):
                raise ValueError("p1 state needs per-vertex y, q, z")
            b = mesh.boundary_vertex
            if np.any(self.y[b] != 0.0):
                self.y = self.y.copy()
                self.y[b] = 0.0
            if np.any(self.q[b] != 0.0):
                self.q = self.q.copy()
                self.q[b] = 0.0
            self.flux_y = self.flux_q = None
        else:
            raise ValueError(f"unknown discretization {disc!r}")

    def with_gamma(self, gamma):
        return OptState(self.disc, self.mesh, gamma, self.y, self.q, self.z,
                        self.flux_y, self.flux_q)

    def y_field(self):
        if self.disc == "rt0":
            return P0Field(self.mesh, self.y)
        return P1Field(self.mesh, self.y)

    def q_field(self):
        if self.disc == "rt0":
            return P0Field(self.mesh, self.q)
        return P1Field(self.mesh, self.q)

    def z_field(self):
        if self.disc == "rt0":
            return P0Field(self.mesh, self.z)
        return P1Field(self.mesh, self.z)


@dataclass
class ActiveSets:
    """Control and state classification.

    `control` holds codes 0 (inactive), 1 (clamped at the lower control bound
    M**-3) and 2 (clamped at the upper bound m**-3); `state_active` flags
    where y + tau <= 0. Per triangle for the mixed discretization, per
    quadrature subregion (shape (T, 4**depth)) for P1.
    """

    disc: str
    control: np.ndarray
    state_active: np.ndarray


def _freeze(l0, l1, l2, cent):
    """Majority label of three samples, centroid label when all differ."""
    return np.where(l0 == l1, l0,
                    np.where(l0 == l2, l0,
                             np.where(l1 == l2, l1, cent)))


def _control_labels(P, spec):
    lab = np.full(np.shape(P), INACTIVE, dtype=np.int8)
    lab[P >= spec.proj_hi] = LOWER
    lab[P <= spec.proj_lo] = UPPER
    return lab


def _project(P, spec):
    """Control values from the projection formula, clamped exactly."""
    P = np.asarray(P, dtype=float)
    l = np.clip(P, spec.proj_lo, spec.proj_hi) ** -0.75
    l = np.where(P >= spec.proj_hi, spec.l_min, l)
    return np.where(P <= spec.proj_lo, spec.l_max, l)


class ImplicitControl:
    """Variationally discretized control for the P1 ansatz: the composition
    (P_[m^4, M^4](3 q_h z_h))^(-3/4) evaluated on demand; it is not a
    piecewise polynomial."""

    def __init__(self, mesh, q_values, z_values, spec):
        self.mesh = mesh
        self.q_values = np.asarray(q_values, dtype=float)
        self.z_values = np.asarray(z_values, dtype=float)
        self.spec = spec

    def at_points(self, mesh, tris, bary, xy):
        if mesh is not self.mesh:
            raise ValueError("control evaluated on a different mesh")
        tv = mesh.triangles[tris]
        q = np.einsum("kj,kj->k", bary, self.q_values[tv])
        z = np.einsum("kj,kj->k", bary, self.z_values[tv])
        return _project(3.0 * q * z, self.spec)

    def sample_p0(self, depth=2):
        """Sample onto piecewise constants on a `depth`-fold refinement."""
        from .mesh import refine
        mesh, q, z = self.mesh, self.q_values, self.z_values
        for _ in range(depth):
            mesh, pro = refine(mesh)
            tv = pro.coarse.triangles[pro.vertex_tri]
            q = np.einsum("vj,vj->v", pro.vertex_bary, q[tv])
            z = np.einsum("vj,vj->v", pro.vertex_bary, z[tv])
        c = np.full((mesh.num_triangles, 3), 1.0 / 3.0)
        tris = np.arange(mesh.num_triangles)
        vals = ImplicitControl(mesh, q, z, self.spec).at_points(
            mesh, tris, c, mesh.centroids)
        return mesh, P0Field(mesh, vals)


class ImplicitThickness:
    """Thickness u = l**(-1/3) of an implicitly represented control."""

    def __init__(self, control):
        self.control = control
        self.spec = control.spec

    def at_points(self, mesh, tris, bary, xy):
        l = self.control.at_points(mesh, tris, bary, xy)
        return np.clip(l ** (-1.0 / 3.0), self.spec.m, self.spec.M)


def recover_control(q, z, spec):
    """Recover the control from the adjoint and the datum via the projection
    formula l = (P_[m^4, M^4](3 q z))^(-3/4).

    Piecewise-constant inputs give a P0Field; P1 inputs give an
    ImplicitControl; raw arrays are mapped elementwise.
    """
    if isinstance(q, P0Field) and isinstance(z, P0Field):
        return P0Field(q.mesh, _project(3.0 * q.values * z.values, spec))
    if isinstance(q, P1Field) and isinstance(z, P1Field):
        return ImplicitControl(q.mesh, q.values, z.values, spec)
    return _project(3.0 * np.asarray(q) * np.asarray(z), spec)


def recover_thickness(l, spec):
    """Thickness u = l**(-1/3); values land in [m, M]."""
    if isinstance(l, ImplicitControl):
        return ImplicitThickness(l)
    vals = l.values if isinstance(l, P0Field) else np.asarray(l, dtype=float)
    slack = 1e-12 * spec.l_max
    if np.any(vals < spec.l_min - slack) or np.any(vals > spec.l_max + slack):
        raise ValueError("control values outside [M**-3, m**-3]")
    u = np.clip(vals ** (-1.0 / 3.0), spec.m, spec.M)
    return P0Field(l.mesh, u) if isinstance(l, P0Field) else u


def moreau_yosida_multiplier(y, gamma, tau):
    """Penalty multiplier surrogate gamma*(y + tau)^-; nonpositive, zero
    wherever the constraint is inactive."""
    if isinstance(y, P0Field):
        return P0Field(y.mesh, gamma * np.minimum(y.values + tau, 0.0))
    if isinstance(y, P1Field):
        return P1Field(y.mesh, gamma * np.minimum(y.values + tau, 0.0))
    return gamma * np.minimum(np.asarray(y, dtype=float) + tau, 0.0)


def split_quadrature(mesh, tri, classifier, integrand, depth=2):
    """Integrate over one triangle with region-frozen subdivision quadrature.

    The triangle is split into 4**depth congruent subtriangles; each is
    classified from its three Gauss points (majority vote, centroid label
    when all three differ) and the integrand is evaluated at the Gauss points
    with that frozen region label.

    classifier : callable points (k, 2) -> integer labels (k,)
    integrand : callable (points (k, 2), labels (k,)) -> values (k,)
    """
    GB, CB = subdivision_gauss_bary(depth)
    S = len(GB)
    corners = mesh.vertices[mesh.triangles[tri]]           # (3, 2)
    pts = GB.reshape(-1, 3) @ corners                      # (S*3, 2)
    cents = CB @ corners                                   # (S, 2)
    labs = np.asarray(classifier(pts)).reshape(S, 3)
    frozen = _freeze(labs[:, 0], labs[:, 1], labs[:, 2],
                     np.asarray(classifier(cents)))
    w = mesh.areas[tri] / (S * 3)
    vals = np.asarray(integrand(pts, np.repeat(frozen, 3)), dtype=float)
    return float(w * vals.sum())


# ----------------------------------------------------------------------
# assembled systems


class _RT0System:
    """Residual/Jacobian assembly for the mixed discretization.

    Unknown vector layout: [flux_y (E), y (T), flux_q (E), q (T)].
    """

    disc = "rt0"

    def __init__(self, mesh, spec):
        self.mesh = mesh
        self.spec = spec
        msys = MixedSystem(mesh)
        g = cell_integrals(mesh, spec.load)
        _, self.z = msys.solve(np.zeros(mesh.num_edges), -g)
        self.mass = msys.mass.tocsr()
        self.div = msys.div.tocsr()
        self.divT = self.div.T.tocsr()
        self.areas = mesh.areas
        T = mesh.num_triangles
        self.b_extra = (cell_integrals(mesh, spec.extra_load)
                        if spec.extra_load is not None else np.zeros(T))
        self.b_target = (cell_integrals(mesh, spec.y_target)
                         if spec.alpha > 0 else np.zeros(T))
        self.dim = 2 * (mesh.num_edges + T)
        self._track_gauss = None

    def zero_state(self, gamma):
        m = self.mesh
        return OptState("rt0", m, gamma, np.zeros(m.num_triangles),
                        np.zeros(m.num_triangles), self.z,
                        np.zeros(m.num_edges), np.zeros(m.num_edges))

    def split(self, x):
        E, T = self.mesh.num_edges, self.mesh.num_triangles
        return (x[:E], x[E:E + T], x[E + T:2 * E + T], x[2 * E + T:])

    def state_to_vec(self, state):
        return np.concatenate([state.flux_y, state.y, state.flux_q, state.q])

    def vec_to_state(self, x, gamma):
        cv, y, cq, q = self.split(x)
        return OptState("rt0", self.mesh, gamma, y, q, self.z, cv, cq)

    def control_values(self, q):
        return _project(3.0 * q * self.z, self.spec)

    def residual_vec(self, x, gamma):
        spec = self.spec
        cv, y, cq, q = self.split(x)
        aT = self.areas
        k1 = self.z * self.control_values(q) * aT
        k2 = gamma * np.minimum(y + spec.tau, 0.0) * aT
        F1 = self.mass @ cv + self.divT @ y
        F2 = self.div @ cv + k1 + self.b_extra
        F3 = self.mass @ cq + self.divT @ q
        F4 = self.div @ cq + k2 + spec.alpha * (y * aT - self.b_target)
        return np.concatenate([F1, F2, F3, F4])

    def jacobian_mat(self, x, gamma):
        spec = self.spec
        _, y, _, q = self.split(x)
        P = 3.0 * q * self.z
        inactive = (P > spec.proj_lo) & (P < spec.proj_hi)
        dk1 = np.where(inactive,
                       -2.25 * self.z ** 2 * self.areas
                       * np.where(inactive, P, 1.0) ** -1.75, 0.0)
        dk2 = (gamma * self.areas * (y + spec.tau < 0.0)
               + spec.alpha * self.areas)
        D1 = sp.diags(dk1)
        D2 = sp.diags(dk2)
        return sp.bmat([[self.mass, self.divT, None, None],
                        [self.div, None, None, D1],
                        [None, None, self.mass, self.divT],
                        [None, D2, self.div, None]], format="csc")

    def active_sets(self, x):
        _, y, _, q = self.split(x)
        lab = _control_labels(3.0 * q * self.z, self.spec)
        return ActiveSets("rt0", lab, y + self.spec.tau <= 0.0)

    def classification_signature(self, x):
        """Arrays fixing every branch decision of residual and Jacobian;
        equality of signatures means the two iterates share one smooth
        piece of the system."""
        _, y, _, q = self.split(x)
        lab = _control_labels(3.0 * q * self.z, self.spec)
        return (lab, y + self.spec.tau < 0.0)

    def objective(self, x, gamma):
        spec = self.spec
        _, y, _, q = self.split(x)
        aT = self.areas
        clipped = np.clip(3.0 * q * self.z, spec.proj_lo, spec.proj_hi)
        J = float((clipped ** 0.25 * aT).sum())
        J += 0.5 * gamma * float((np.minimum(y + spec.tau, 0.0) ** 2
                                  * aT).sum())
        if spec.alpha > 0:
            if self._track_gauss is None:
                self._track_gauss = eval_on_gauss(self.mesh, spec.y_target)
            diff = y[:, None] - self._track_gauss
            J += 0.5 * spec.alpha * float((aT[:, None] / 3.0
                                           * diff ** 2).sum())
        return J


class _P1System:
    """Residual/Jacobian assembly for the piecewise linear discretization.

    Unknown vector layout: [y (N), q (N)] over interior vertices. The
    projection integrals use region-frozen subdivision quadrature.
    """

    disc = "p1"

    def __init__(self, mesh, spec, depth=2):
        self.mesh = mesh
        self.spec = spec
        self.depth = depth
        op = assemble_stiffness(mesh)
        self.A = op.matrix
        self.interior = op.interior
        self.N = len(self.interior)
        self.index = np.full(mesh.num_vertices, -1, dtype=np.int64)
        self.index[self.interior] = np.arange(self.N)
        self.z = solve_poisson_p1(mesh, spec.load).values
        self.dim = 2 * self.N

        GB, CB = subdivision_gauss_bary(depth)
        self.S = len(GB)
        self.PB = GB.reshape(-1, 3)                        # (P, 3)
        self.CB = CB                                       # (S, 3)
        self.nP = self.PB.shape[0]
        tv = mesh.triangles
        self.tv = tv
        self.w = mesh.areas[:, None] / self.nP             # (T, 1)
        self.z_pts = self.z[tv] @ self.PB.T                # (T, P)
        self.z_cent = self.z[tv] @ self.CB.T               # (T, S)

        ids = self.index[tv]
        self.rows9 = np.repeat(ids, 3, axis=1).ravel()
        self.cols9 = np.tile(ids, (1, 3)).ravel()
        self.keep9 = (self.rows9 >= 0) & (self.cols9 >= 0)
        self.scatter_ids = ids.ravel()
        self.scatter_keep = self.scatter_ids >= 0

        if spec.alpha > 0:
            self.mass = assemble_mass(mesh).matrix
            self.b_target = load_vector_p1(mesh, spec.y_target)[self.interior]
        else:
            self.mass = None
            self.b_target = np.zeros(self.N)
        self.b_extra = (load_vector_p1(mesh, spec.extra_load)[self.interior]
                        if spec.extra_load is not None else np.zeros(self.N))
        self._xy_pts = None

    def zero_state(self, gamma):
        V = self.mesh.num_vertices
        return OptState("p1", self.mesh, gamma, np.zeros(V), np.zeros(V),
                        self.z)

    def split(self, x):
        return x[:self.N], x[self.N:]

    def state_to_vec(self, state):
        return np.concatenate([state.y[self.interior],
                               state.q[self.interior]])

    def vec_to_state(self, x, gamma):
        yi, qi = self.split(x)
        V = self.mesh.num_vertices
        y = np.zeros(V)
        q = np.zeros(V)
        y[self.interior] = yi
        q[self.interior] = qi
        return OptState("p1", self.mesh, gamma, y, q, self.z)

    def _full(self, inner):
        out = np.zeros(self.mesh.num_vertices)
        out[self.interior] = inner
        return out

    def _at_pts(self, full):
        return full[self.tv] @ self.PB.T                   # (T, P)

    def _at_cent(self, full):
        return full[self.tv] @ self.CB.T                   # (T, S)

    def _classify(self, y_full, q_full):
        """Frozen per-subtriangle control labels and state-active flags,
        expanded back to quadrature points; shapes (T, P)."""
        spec = self.spec
        P3 = (3.0 * self._at_pts(q_full)
              * self.z_pts).reshape(-1, self.S, 3)
        lab = _control_labels(P3, spec)
        cent = _control_labels(3.0 * self._at_cent(q_full) * self.z_cent,
                               spec)
        frozen = _freeze(lab[:, :, 0], lab[:, :, 1], lab[:, :, 2], cent)
        ctrl = np.repeat(frozen, 3, axis=1)                # (T, P)

        act = ((self._at_pts(y_full) + spec.tau)
               < 0.0).reshape(-1, self.S, 3)
        state = np.repeat(act.sum(axis=2) >= 2, 3, axis=1)
        return ctrl, state, frozen, act.sum(axis=2) >= 2

    def _scatter(self, local):
        out = np.zeros(self.N)
        np.add.at(out, self.scatter_ids[self.scatter_keep],
                  local.ravel()[self.scatter_keep])
        return out

    def _assemble9(self, coeff):
        """Interior matrix from pointwise coefficients: entries
        sum_p w * coeff[t, p] * phi_j(p) * phi_k(p)."""
        local = np.einsum("tp,pj,pk->tjk", self.w * coeff, self.PB, self.PB)
        vals = local.reshape(len(local), 9).ravel()[self.keep9]
        return sp.coo_matrix(
            (vals, (self.rows9[self.keep9], self.cols9[self.keep9])),
            shape=(self.N, self.N)).tocsr()

    def _control_pointvals(self, q_full, ctrl_labels):
        """Pointwise control values under frozen labels, shape (T, P).

        The smooth branch may be evaluated at minority points of a frozen
        subtriangle whose own value lies outside the projection interval;
        flooring the base at the interval's lower end keeps the fractional
        power bounded and matches the clamped value there.
        """
        spec = self.spec
        P = 3.0 * self._at_pts(q_full) * self.z_pts
        base = np.maximum(P, spec.proj_lo)
        l = base ** -0.75
        l = np.where(ctrl_labels == LOWER, spec.l_min, l)
        l = np.where(ctrl_labels == UPPER, spec.l_max, l)
        return l, P, base

    def residual_vec(self, x, gamma):
        spec = self.spec
        yi, qi = self.split(x)
        y_full, q_full = self._full(yi), self._full(qi)
        ctrl, state, _, _ = self._classify(y_full, q_full)
        l, _, _ = self._control_pointvals(q_full, ctrl)
        k1 = self._scatter((-self.w * self.z_pts * l) @ self.PB)
        ypts = self._at_pts(y_full)
        k2_pt = np.where(state, -gamma * (ypts + spec.tau), 0.0)
        k2 = self._scatter((self.w * k2_pt) @ self.PB)
        F1 = self.A @ yi + k1 - self.b_extra
        F2 = self.A @ qi + k2
        if spec.alpha > 0:
            F2 += spec.alpha * (self.b_target - self.mass @ yi)
        return np.concatenate([F1, F2])

    def jacobian_mat(self, x, gamma):
        yi, qi = self.split(x)
        y_full, q_full = self._full(yi), self._full(qi)
        ctrl, state, _, _ = self._classify(y_full, q_full)
        _, P, base = self._control_pointvals(q_full, ctrl)
        c1 = np.where((ctrl == INACTIVE) & (P > self.spec.proj_lo),
                      2.25 * self.z_pts ** 2 * base ** -1.75, 0.0)
        Dk1 = self._assemble9(c1)
        Dk2 = self._assemble9(np.where(state, -gamma, 0.0))
        if self.spec.alpha > 0:
            Dk2 = Dk2 - self.spec.alpha * self.mass
        return sp.bmat([[self.A, Dk1], [Dk2, self.A]], format="csc")

    def active_sets(self, x):
        yi, qi = self.split(x)
        _, _, frozen_ctrl, frozen_state = self._classify(self._full(yi),
                                                         self._full(qi))
        return ActiveSets("p1", frozen_ctrl, frozen_state)

    def classification_signature(self, x):
        """Arrays fixing every branch decision of residual and Jacobian:
        quadrature-point and centroid control labels and the pointwise
        state flags."""
        spec = self.spec
        yi, qi = self.split(x)
        y_full, q_full = self._full(yi), self._full(qi)
        lab = _control_labels(3.0 * self._at_pts(q_full) * self.z_pts, spec)
        cent = _control_labels(3.0 * self._at_cent(q_full) * self.z_cent,
                               spec)
        act = (self._at_pts(y_full) + spec.tau) < 0.0
        return (lab, cent, act)

    def objective(self, x, gamma):
        spec = self.spec
        yi, qi = self.split(x)
        y_full, q_full = self._full(yi), self._full(qi)
        P = 3.0 * self._at_pts(q_full) * self.z_pts
        clipped = np.clip(P, spec.proj_lo, spec.proj_hi)
        J = float((self.w * clipped ** 0.25).sum())
        ypts = self._at_pts(y_full)
        J += 0.5 * gamma * float((self.w
                                  * np.minimum(ypts + spec.tau, 0.0) ** 2
                                  ).sum())
        if spec.alpha > 0:
            if self._xy_pts is None:
                corners = self.mesh.vertices[self.tv]      # (T, 3, 2)
                self._xy_pts = np.einsum("pj,tjd->tpd", self.PB, corners)
            yt = np.asarray(self.spec.y_target(
                self._xy_pts.reshape(-1, 2))).reshape(ypts.shape)
            J += 0.5 * spec.alpha * float((self.w * (ypts - yt) ** 2).sum())
        return J


def system_for(mesh, spec, depth=2):
    """Assembled KKT system for (mesh, spec); cached on the mesh."""
    cache = getattr(mesh, "_kkt_cache", None)
    if cache is None:
        cache = {}
        mesh._kkt_cache = cache
    key = (id(spec), spec.disc, depth)
    entry = cache.get(key)
    if entry is None or entry[0] is not spec:
        if spec.disc == "rt0":
            system = _RT0System(mesh, spec)
        else:
            system = _P1System(mesh, spec, depth)
        cache[key] = (spec, system)
        entry = cache[key]
    return entry[1]


def initial_state(mesh, spec, gamma, depth=2):
    """All-zero iterate with the discrete datum attached."""
    return system_for(mesh, spec, depth).zero_state(gamma)


def _check_disc(state, spec):
    if state.disc != spec.disc:
        raise ValueError(f"state is {state.disc!r} but problem expects "
                         f"{spec.disc!r}")


def residual(state, spec, depth=2):
    """Optimality-system residual F(x) at the state's gamma."""
    _check_disc(state, spec)
    system = system_for(state.mesh, spec, depth)
    return system.residual_vec(system.state_to_vec(state), state.gamma)


def residual_rt0(state, spec):
    if state.disc != "rt0":
        raise ValueError("residual_rt0 needs an rt0-tagged state")
    return residual(state, spec)


def residual_p1(state, spec, depth=2):
    if state.disc != "p1":
        raise ValueError("residual_p1 needs a p1-tagged state")
    return residual(state, spec, depth)


def jacobian(state, spec, depth=2):
    """Generalized Jacobian DF(x); subgradient 0 at classification kinks."""
    _check_disc(state, spec)
    system = system_for(state.mesh, spec, depth)
    return system.jacobian_mat(system.state_to_vec(state), state.gamma)


def active_sets(state, spec, depth=2):
    """Classify the control law and the state constraint at a state."""
    _check_disc(state, spec)
    system = system_for(state.mesh, spec, depth)
    return system.active_sets(system.state_to_vec(state))


def objective(state, spec, depth=2):
    """Penalized cost: volume term plus the constraint penalty (plus the
    tracking term when the problem carries one)."""
    _check_disc(state, spec)
    system = system_for(state.mesh, spec, depth)
    return system.objective(system.state_to_vec(state), state.gamma)
