"""Galerkin solver tests: quadrature, assembly oracles, patch tests, MMS."""

import numpy as np
import pytest
import sympy as sp

from igalam.boundary import BCSet, FaceBC, all_dirichlet, simply_supported_tube
from igalam.errors import SolveError
from igalam.galerkin import (
    assemble_body_load,
    assemble_face_load,
    assemble_stiffness,
    dirichlet_dofs,
    inplane_rule,
    solve_galerkin,
    thickness_rule,
)
from igalam.geometry import build_box, build_quarter_cylinder, map_jet
from igalam.material import EngineeringConstants, Layup, Ply, cross_ply
from igalam.splines import make_open_uniform


def isotropic(e, nu):
    g = e / (2 * (1 + nu))
    return EngineeringConstants(e, e, e, g, g, g, nu, nu, nu)


@pytest.fixture(scope="module")
def iso_layup():
    return Layup([Ply(1.0, 0.0, isotropic(2.0, 0.3))])


@pytest.fixture(scope="module")
def small_tube():
    """Coarse quarter tube, thick enough to keep the system tiny."""
    return build_quarter_cylinder(1.0, 2.0, 3.0).refined((2, 3, 2), (4, 6, 4))


def sample_points(n):
    t = np.linspace(0.07, 0.93, n)
    return [np.array(p) for p in np.stack(np.meshgrid(t, t, t), -1).reshape(-1, 3)]


class TestQuadratureRules:
    def test_inplane_defaults(self):
        kv = make_open_uniform(2, 6)  # 4 spans
        rule = inplane_rule(kv)
        assert len(rule) == 4
        for span, pts, wts in rule:
            a, b = kv.span_interval(span)
            assert len(pts) == 3
            assert wts.sum() == pytest.approx(b - a)
            assert np.all((pts > a) & (pts < b))

    def test_inplane_override(self):
        kv = make_open_uniform(1, 2)
        (span, pts, wts), = inplane_rule(kv, npts=7)
        assert len(pts) == 7
        assert wts.sum() == pytest.approx(1.0)

    def test_thickness_rule_resolves_plies(self, crossply11):
        """A single C^p span gets its own Gauss points in every ply."""
        kv = make_open_uniform(3, 4)
        (span, pts, wts, tags), = thickness_rule(kv, crossply11)
        assert len(pts) == 11 * 4
        assert wts.sum() == pytest.approx(1.0)
        assert np.all(np.bincount(tags, minlength=11) == 4)
        assert np.all(np.diff(pts) > 0)
        for k in range(11):
            assert wts[tags == k].sum() == pytest.approx(1.0 / 11.0)

    def test_thickness_tags_match_layup(self, crossply11):
        kv = make_open_uniform(2, 5)
        for entry in thickness_rule(kv, crossply11):
            pts, tags = entry[1], entry[3]
            assert all(crossply11.ply_of(x) == t for x, t in zip(pts, tags))

    def test_thickness_single_ply_is_gauss(self, table1):
        one = Layup([Ply(2.0, 0.0, table1)])
        kv = make_open_uniform(2, 4)
        plain = inplane_rule(kv)
        layered = thickness_rule(kv, one)
        for (s0, p0, w0), (s1, p1, w1, tg) in zip(plain, layered):
            assert s0 == s1
            assert np.allclose(p0, p1)
            assert np.allclose(w0, w1)
            assert np.all(tg == 0)

    def test_thickness_aligned_spans(self, table1):
        """Layerwise-style knots: each span sees exactly one ply."""
        lay = cross_ply(2, 0.5, table1)
        kv = make_open_uniform(2, 4)  # interior knot at the interface
        rule = thickness_rule(kv, lay)
        assert [np.unique(e[3]).tolist() for e in rule] == [[0], [1]]

    def test_thickness_override_count(self, crossply11):
        kv = make_open_uniform(2, 3)
        (span, pts, wts, tags), = thickness_rule(kv, crossply11, npts_per_ply=2)
        assert len(pts) == 22


class TestAssemblyOracles:
    def test_stiffness_symmetric(self, small_tube, crossply11):
        K = assemble_stiffness(small_tube, crossply11).toarray()
        assert np.abs(K - K.T).max() <= 1e-13 * np.abs(K).max()

    def test_rigid_modes_in_kernel(self, small_tube, crossply11):
        """Translations and a linearized rotation carry no strain energy."""
        K = assemble_stiffness(small_tube, crossply11)
        scale = np.abs(K.toarray()).max()
        P = small_tube.control.reshape(-1, 3)
        for axis in range(3):
            u = np.zeros_like(P)
            u[:, axis] = 1.0
            assert np.abs(K @ u.ravel()).max() <= 1e-12 * scale
        spin = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        u = (P @ spin.T).ravel()
        assert np.abs(K @ u).max() <= 1e-12 * scale * np.abs(u).max()

    def test_constant_traction_resultant(self, small_tube):
        """Partition of unity turns the load sum into the traction integral."""
        t_const = np.array([0.0, 0.0, -1.0])
        f = assemble_face_load(small_tube, (2, 0), lambda x, fr: t_const, npts=10)
        area = np.pi / 2 * 1.0 * 3.0
        assert np.allclose(f.reshape(-1, 3).sum(axis=0), t_const * area, atol=1e-12)

    def test_pressure_resultant_is_projected_area(self, small_tube):
        p = 2.0
        f = assemble_face_load(small_tube, (2, 0), lambda x, fr: p * fr.D[:, 2], npts=10)
        tot = f.reshape(-1, 3).sum(axis=0)
        assert np.allclose(tot, [0.0, p * 3.0, p * 3.0], atol=1e-10)

    def test_face_load_linearity(self, small_tube):
        trac = lambda x, fr: np.array([x[0], -x[1], 2.0])
        f1 = assemble_face_load(small_tube, (2, 0), trac)
        f2 = assemble_face_load(small_tube, (2, 0), lambda x, fr: 2.0 * trac(x, fr))
        assert np.allclose(f2, 2.0 * f1, atol=1e-14)

    def test_none_traction_is_zero(self, small_tube):
        assert not assemble_face_load(small_tube, (2, 1), None).any()

    def test_gravity_resultant(self, iso_layup):
        box = build_box((2.0, 1.0, 0.5), (2, 2, 2)).refined((2, 2, 2), (5, 5, 4))
        rho = 3.0
        f = assemble_body_load(box, lambda x: np.array([0.0, 0.0, -rho]), iso_layup)
        tot = f.reshape(-1, 3).sum(axis=0)
        assert np.allclose(tot, [0.0, 0.0, -rho * 1.0], atol=1e-12)


class TestDirichlet:
    def test_fixed_count_all_faces(self, iso_layup):
        box = build_box((1.0, 1.0, 1.0), (2, 2, 2)).refined((2, 2, 2), (5, 4, 3))
        fixed = dirichlet_dofs(box, all_dirichlet())
        interior = (5 - 2) * (4 - 2) * (3 - 2)
        assert len(fixed) == 3 * (5 * 4 * 3 - interior)
        assert all(v == 0.0 for v in fixed.values())

    def test_value_sampled_at_control_points(self):
        box = build_box((2.0, 1.0, 1.0), (1, 1, 1))
        lin = lambda x: np.array([x[0], 10 * x[1], -x[2]])
        fixed = dirichlet_dofs(box, all_dirichlet(value=lin))
        P = box.control.reshape(-1, 3)
        for n, x in enumerate(P):
            want = lin(x)
            for c in range(3):
                assert fixed[3 * n + c] == pytest.approx(want[c])

    def test_benchmark_pin(self, small_tube):
        fixed = dirichlet_dofs(small_tube, simply_supported_tube(None))
        assert fixed[0] == 0.0  # axial gauge on the first control dof


class TestSolve:
    def test_patch_test_box(self, iso_layup):
        """Linear displacement is reproduced exactly on an affine patch."""
        box = build_box((2.0, 1.0, 0.5), (2, 2, 2)).refined((2, 2, 2), (5, 5, 4))
        M = np.array([[2e-3, 1e-3, 0.0], [0.0, -1e-3, 5e-4], [3e-4, 0.0, 1e-3]])
        c = np.array([0.1, -0.2, 0.05])
        rep = solve_galerkin(box, iso_layup, all_dirichlet(value=lambda x: M @ x + c))
        for xi in sample_points(4):
            x = map_jet(box, xi, 1).x
            u = rep.field.derivatives(xi, 0)[0]
            assert np.abs(u - (M @ x + c)).max() < 1e-13

    def test_patch_test_tube(self, small_tube, iso_layup):
        """Same check on the rational tube; quadrature sets the floor."""
        M = np.array([[2e-3, 1e-3, 0.0], [0.0, -1e-3, 5e-4], [3e-4, 0.0, 1e-3]])
        c = np.array([0.1, -0.2, 0.05])
        rep = solve_galerkin(
            small_tube, iso_layup, all_dirichlet(value=lambda x: M @ x + c)
        )
        for xi in sample_points(4):
            x = map_jet(small_tube, xi, 1).x
            u = rep.field.derivatives(xi, 0)[0]
            assert np.abs(u - (M @ x + c)).max() < 1e-8

    def test_manufactured_bubble(self, iso_layup):
        """Degree-2 equilibrium field with homogeneous boundary data.

        The solution u1 = x1(1-x1) x2(1-x2) x3(1-x3) lies in the spline
        space, vanishes on the boundary (so the sampled Dirichlet data is
        exact), and every integrand is a polynomial the default rule
        integrates exactly; the discrete solution must match to roundoff.
        """
        x1, x2, x3 = sp.symbols("x1 x2 x3")
        xs = (x1, x2, x3)
        lam, mu = lame_pair(2.0, 0.3)
        u_sym = sp.Matrix([x1 * (1 - x1) * x2 * (1 - x2) * x3 * (1 - x3), 0, 0])
        eps = sp.Matrix(
            3, 3, lambda i, j: (sp.diff(u_sym[i], xs[j]) + sp.diff(u_sym[j], xs[i])) / 2
        )
        sig = lam * eps.trace() * sp.eye(3) + 2 * mu * eps
        b_sym = sp.Matrix(
            [-sum(sp.diff(sig[i, j], xs[j]) for j in range(3)) for i in range(3)]
        )
        b_fun = sp.lambdify(xs, b_sym, "numpy")
        u_fun = sp.lambdify(xs, u_sym, "numpy")

        box = build_box((1.0, 1.0, 1.0), (2, 2, 2)).refined((2, 2, 2), (5, 5, 5))
        rep = solve_galerkin(
            box,
            iso_layup,
            all_dirichlet(),
            body=lambda x: np.asarray(b_fun(*x), float).ravel(),
        )
        for xi in sample_points(4):
            x = map_jet(box, xi, 1).x
            u = rep.field.derivatives(xi, 0)[0]
            want = np.asarray(u_fun(*x), float).ravel()
            assert np.abs(u - want).max() < 1e-12

    def test_benchmark_constraints_hold(self, small_tube, crossply11):
        """Supported faces stay pinned after a pressure solve."""
        bcs = simply_supported_tube(lambda x, fr: -1.0 * fr.D[:, 2])
        rep = solve_galerkin(small_tube, crossply11, bcs)
        assert rep.residual < 1e-9
        assert rep.ndof == 3 * 4 * 6 * 4
        for t in np.linspace(0.0, 1.0, 4):
            for v in np.linspace(0.0, 1.0, 3):
                u_end0 = rep.field.derivatives(np.array([0.0, t, v]), 0)[0]
                u_end1 = rep.field.derivatives(np.array([1.0, t, v]), 0)[0]
                assert abs(u_end0[1]) < 1e-14 and abs(u_end0[2]) < 1e-14
                assert abs(u_end1[1]) < 1e-14 and abs(u_end1[2]) < 1e-14
                u_sym0 = rep.field.derivatives(np.array([t, 0.0, v]), 0)[0]
                u_sym1 = rep.field.derivatives(np.array([t, 1.0, v]), 0)[0]
                assert abs(u_sym0[1]) < 1e-14
                assert abs(u_sym1[2]) < 1e-14

    def test_floating_structure_rejected(self, crossply11):
        tube = build_quarter_cylinder(1.0, 2.0, 3.0)
        bcs = BCSet(faces={(2, 0): FaceBC(traction=lambda x, fr: -fr.D[:, 2])})
        with pytest.raises(SolveError):
            solve_galerkin(tube, crossply11, bcs)


def lame_pair(e, nu):
    return e * nu / ((1 + nu) * (1 - 2 * nu)), e / (2 * (1 + nu))
