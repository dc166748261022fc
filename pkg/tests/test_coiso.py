"""Graph submanifolds: restricted forms, tangency residuals against the
linear-algebra oracle, the commuting frame and its identities, singular-set
scans and the graphical perturbation."""

import numpy as np
import pytest

from legfol import coiso as co
from legfol import forms as fm
from legfol.fields import parse_field, pushforward


class TestConstruction:
    def test_default_free_fibers(self):
        Y = co.graph_submanifold(3, 5)
        assert Y.free_y == (2, 3)
        assert Y.source_chart.var_names == ("x1", "x2", "x3", "y2", "y3")

    def test_unexpected_component_rejected(self):
        with pytest.raises(ValueError):
            co.graph_submanifold(2, 3, {"y2": 1.0})

    def test_restricted_form_hand_computed(self):
        src_names = ("x1", "x2", "y2")
        Y = co.graph_submanifold(
            2, 3, {"z": parse_field(co.graph_submanifold(2, 3).source_chart,
                                    "(x2^2 + y2^2) / 2")})
        lam = Y.lambda_form
        # lambda = dz - y1 dx1 - y2 dx2 = (x2 - y2) dx2 + y2 dy2
        p = [0.3, 0.8, -0.4]
        src = Y.source_chart
        assert lam.coeff((src.index("x1"),)).eval(p) == 0.0
        assert lam.coeff((src.index("x2"),)).eval(p) == pytest.approx(1.2)
        assert lam.coeff((src.index("y2"),)).eval(p) == pytest.approx(-0.4)


def hypersurface(n, g_text):
    Y0 = co.graph_submanifold(n, n + 1)
    return co.graph_submanifold(
        n, n + 1, {"z": parse_field(Y0.source_chart, g_text)})


COISOTROPIC = {
    2: ["(x2^2 + y2^2) / 2", "sin(x2) * y2", "x2^3 - y2 + x2*y2^2"],
    3: ["(x3^2 + y3^2) / 2", "sin(x3) * y3"],
}
NON_COISOTROPIC = {
    2: [{"y1": "x1 * x2"}, {"z": "x1^2"}],
    3: [{"y1": "x1 * x3"}, {"z": "x1^2 + x2 * y3"}],
}


class TestResidualOracle:
    """The first-order residual system must agree pointwise with the
    independent linear-algebra classification of the tangent space."""

    @pytest.mark.parametrize("n", [2, 3])
    def test_equivalence_on_samples(self, n, rng):
        families = [hypersurface(n, g) for g in COISOTROPIC[n]]
        for recipe in NON_COISOTROPIC[n]:
            Y0 = co.graph_submanifold(n, n + 1)
            comps = {key: parse_field(Y0.source_chart, val)
                     for key, val in recipe.items()}
            families.append(co.graph_submanifold(n, n + 1, comps))
        checked = 0
        for Y in families:
            pts = rng.uniform(-0.9, 0.9, (20, Y.source_chart.dim))
            for p in pts:
                res = co.coisotropy_residuals(Y, p)
                algebra = co.pointwise_coisotropy(Y, p)
                if algebra["singular"]:
                    continue
                assert (res["max_residual"] <= 1e-8) \
                    == bool(algebra["coisotropic"]), (Y.components, list(p))
                checked += 1
        assert checked >= 80

    def test_counterexample_value(self):
        Y0 = co.graph_submanifold(2, 3)
        Y = co.graph_submanifold(
            2, 3, {"y1": parse_field(Y0.source_chart, "x1 * x2")})
        res = co.coisotropy_residuals(Y, [1.0, 1.0, 0.0])
        assert res["max_residual"] == pytest.approx(1.0, abs=1e-12)

    def test_surface_case_always_coisotropic(self, rng):
        # one-dimensional fibers: a line in a 2-plane is automatically
        # its own symplectic complement's superset
        Y = hypersurface(1, "x1^2 + y1")
        for p in rng.uniform(-0.9, 0.9, (10, 2)):
            algebra = co.pointwise_coisotropy(Y, p)
            if algebra["singular"]:
                continue
            assert algebra["coisotropic"]
            assert co.coisotropy_residuals(Y, p)["max_residual"] == 0.0


class TestCommutingFrame:
    @pytest.mark.parametrize("n", [2, 3])
    def test_identities_hold(self, n, rng):
        Y = hypersurface(n, COISOTROPIC[n][0])
        pts = rng.uniform(-0.9, 0.9, (30, Y.source_chart.dim))
        res = co.verify_claim(Y, pts, tol=1e-10)
        assert not res["refused"]
        assert res["passed"]
        assert res["max_residual"] <= 1e-10

    def test_refusal_with_diagnostics(self, rng):
        Y0 = co.graph_submanifold(2, 3)
        Y = co.graph_submanifold(
            2, 3, {"y1": parse_field(Y0.source_chart, "x1 * x2")})
        pts = rng.uniform(0.5, 0.9, (10, 3))
        res = co.verify_claim(Y, pts)
        assert res["refused"]
        assert res["num_bad"] == 10
        assert res["diagnostics"]

    def test_alpha_annihilates_frame_numerically(self, rng):
        # independent check of i_V alpha = 0: pair the ambient covector of
        # alpha with the pushforward of each frame field via the Jacobian
        Y = hypersurface(2, COISOTROPIC[2][0])
        alpha = co.standard_alpha(2)
        tilde, _ = co.build_Vk(Y)
        emb = Y.embedding
        for p in rng.uniform(-0.9, 0.9, (10, 3)):
            q = emb.eval(p)
            covec = np.array([alpha.coeff((i,)).eval(q) for i in range(5)])
            for Vt in tilde:
                vec = pushforward(emb, Vt, p)
                assert abs(covec @ vec) < 1e-10

    def test_requires_standard_slice(self):
        Y = co.graph_submanifold(2, 3, free_y=(1,))
        with pytest.raises(co.NotStandardModel):
            co.residual_fields(Y)


class TestSingularScan:
    def test_hypersurface_model(self):
        Y = hypersurface(2, "(x2^2 + y2^2) / 2")
        res = co.singular_scan(Y, box=0.6, step=0.1)
        assert len(res.clusters) == 1
        assert res.dims == (1,)
        assert res.flags == ("generic",)

    def test_flat_legendrian_plane(self):
        Y = co.legendrian_model(2)
        res = co.singular_scan(Y, box=0.6, step=0.1)
        assert res.dims == (2,)
        assert res.flags == ("perturbable-legendrian",)

    def test_no_hits_when_nonvanishing(self):
        Y0 = co.graph_submanifold(2, 3)
        Y = co.graph_submanifold(
            2, 3, {"z": parse_field(Y0.source_chart, "x1")})
        # lambda = (1 - y1) dx1 + ... with y1 = 0 on the graph: dx1 term
        # never vanishes
        res = co.singular_scan(Y, box=0.6, step=0.1)
        assert res.num_hits == 0

    def test_normal_data_at_model_singularity(self):
        Y = hypersurface(2, "(x2^2 + y2^2) / 2")
        data = co.singular_normal_data(Y, [0.3, 0.0, 0.0])
        assert data["singular"]
        assert data["rank"] == 2
        assert data["generic"]


class TestPerturbation:
    def test_bump_removes_all_zeros(self, rng):
        Y = co.legendrian_model(2)
        src = Y.source_chart
        bump = parse_field(src, "0.1 * y1 * exp(-(y1^2))")
        Yp = co.perturb_legendrian(Y, bump, 0.1)
        res = co.singular_scan(Yp, box=0.8, step=0.1)
        assert res.num_hits == 0
        pts = rng.uniform(-0.9, 0.9, (50, 3))
        assert co.foliation_residual(Yp, pts) <= 1e-10

    def test_sup_norm_is_delta_scale(self, rng):
        Y = co.legendrian_model(2)
        src = Y.source_chart
        bump = parse_field(src, "0.1 * y1 * exp(-(y1^2))")
        Yp = co.perturb_legendrian(Y, bump, 0.1)
        pts = rng.uniform(-1, 1, (200, 3))
        assert co.perturbation_sup_norm(Y, Yp, pts) <= 0.1

    def test_flat_bump_rejected(self):
        Y = co.legendrian_model(2)
        bump = parse_field(Y.source_chart, "y1^3")
        with pytest.raises(ValueError, match="does not clear"):
            co.perturb_legendrian(Y, bump, 0.1)

    def test_zero_bump_is_identity(self):
        Y = co.legendrian_model(2)
        assert co.perturb_legendrian(
            Y, parse_field(Y.source_chart, "0"), 0.1) is Y


class TestCharFoliation:
    @pytest.mark.parametrize("n,k", [(2, 3), (2, 4), (3, 4), (3, 5), (3, 6)])
    def test_kernel_dimension_flat_graphs(self, n, k, rng):
        Y = co.graph_submanifold(n, k)
        pts = rng.uniform(-0.9, 0.9, (20, Y.source_chart.dim))
        res = co.char_foliation_form(Y, pts)
        assert res["expected_kernel_dim"] == 2 * n - k + 1
        assert res["kernel_ok"]
        assert res["integrability_residual"] <= 1e-8
        assert res["samples_used"] > 0

    def test_curved_hypersurface(self, rng):
        Y = hypersurface(2, "(x2^2 + y2^2) / 2")
        pts = rng.uniform(-0.9, 0.9, (20, 3))
        res = co.char_foliation_form(Y, pts)
        assert res["kernel_ok"]
        assert res["integrability_residual"] <= 1e-8
