import numpy as np
import pytest

from nddcert.core import (
    Edge,
    IntervalBox,
    NetworkDescriptor,
    NetworkValidationError,
    SignedStructure,
    SimulationConfig,
    SubsystemDescriptor,
    apply_unintended,
    delta_matrix,
    network_violations,
    validate_network,
    with_epsilon,
    with_nu,
    with_reference,
)
from conftest import make_srna_sub


class TestIntervalBox:
    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError, match="lower > upper"):
            IntervalBox([0.0, 2.0], [1.0, 1.0])

    def test_rejects_dim_mismatch(self):
        with pytest.raises(ValueError):
            IntervalBox([0.0], [1.0, 2.0])

    def test_degenerate_box_allowed(self):
        box = IntervalBox([1.0, -2.0], [1.0, -2.0])
        assert box.diameter() == 0.0
        assert box.contains([1.0, -2.0])

    def test_geometry_helpers(self):
        box = IntervalBox([-1.0, 0.0], [3.0, 2.0])
        assert box.diameter() == 4.0
        assert box.extent() == 3.0
        assert box.contains([0.0, 1.0])
        assert not box.contains([4.0, 1.0])

    def test_sample_inside(self, rng):
        box = IntervalBox([-2.0, 5.0], [1.0, 6.0])
        pts = box.sample(100, rng)
        assert all(box.contains(p) for p in pts)


class TestSignedStructure:
    def test_rejects_bad_entries(self):
        with pytest.raises(ValueError):
            SignedStructure([[2, 0]])

    def test_from_orders_outer_product(self):
        st = SignedStructure.from_orders([1, -1], [1, -1, 1])
        assert st.lam.tolist() == [[1, -1], [-1, 1], [1, -1]]
        assert st.sigma_u.tolist() == [1, -1]


class TestDescriptors:
    def test_params_are_hashable_and_sorted(self):
        sub = make_srna_sub()
        assert hash(sub) == hash(make_srna_sub())
        assert sub.param("alpha") == 100.0
        with pytest.raises(KeyError):
            sub.param("missing")

    def test_positivity_guards(self):
        with pytest.raises(ValueError):
            make_srna_sub(epsilon=0.0)
        with pytest.raises(ValueError):
            SubsystemDescriptor(index=1, kind="no-such-kind")

    def test_constant_edge_has_no_source(self):
        with pytest.raises(ValueError):
            Edge(dst=2, kind="constant", params={"r_star": 1.0}, src=1)
        with pytest.raises(ValueError):
            Edge(dst=2, kind="hill", params={"B": 1, "k": 1, "n": 1})

    def test_simulation_config_guards(self):
        with pytest.raises(ValueError):
            SimulationConfig(t_final=-1.0)
        with pytest.raises(ValueError):
            SimulationConfig(rel_tol=0.0)
        with pytest.raises(ValueError):
            SimulationConfig(solver="rk999")

    def test_parameter_overrides(self, fig2_net):
        assert all(s.epsilon == 1e-4 for s in with_epsilon(fig2_net, 1e-4).subsystems)
        assert all(s.nu == 0.5 for s in with_nu(fig2_net, 0.5).subsystems)
        bumped = with_reference(fig2_net, 25.0)
        assert all(e.param("r_star") == 25.0 for e in bumped.edges if e.kind == "constant")


class TestValidateNetwork:
    def test_triple_with_competition_is_valid(self, fig2_net):
        assert validate_network(fig2_net) is fig2_net

    def test_five_chain_is_valid(self, fig4_net):
        assert network_violations(fig4_net) == []

    def test_backward_edge_rejected(self):
        subs = tuple(make_srna_sub(index=i) for i in (1, 2, 3))
        edges = (Edge(dst=2, src=3, kind="hill", params={"B": 1, "k": 1, "n": 1}),)
        net = NetworkDescriptor(subsystems=subs, edges=edges, unintended="none")
        with pytest.raises(NetworkValidationError) as err:
            validate_network(net)
        assert any(i.code == "EdgeNotForward" for i in err.value.issues)

    def test_self_edge_rejected(self):
        subs = (make_srna_sub(index=1),)
        edges = (Edge(dst=1, src=1, kind="hill", params={"B": 1, "k": 1, "n": 1}),)
        net = NetworkDescriptor(subsystems=subs, edges=edges, unintended="none")
        assert any(i.code == "EdgeNotForward" for i in network_violations(net))

    def test_negative_custom_delta_rejected(self):
        subs = tuple(make_srna_sub(index=i) for i in (1, 2))
        net = NetworkDescriptor(
            subsystems=subs, edges=(), unintended=((0.0, -1.0), (1.0, 0.0))
        )
        codes = {i.code for i in network_violations(net)}
        assert "NonCooperativeDelta" in codes

    def test_nonzero_diagonal_rejected(self):
        subs = tuple(make_srna_sub(index=i) for i in (1, 2))
        net = NetworkDescriptor(
            subsystems=subs, edges=(), unintended=((1.0, 1.0), (1.0, 0.0))
        )
        codes = {i.code for i in network_violations(net)}
        assert "SelfCouplingDelta" in codes

    def test_all_violations_reported_at_once(self):
        subs = tuple(make_srna_sub(index=i) for i in (1, 2, 3))
        edges = (
            Edge(dst=2, src=3, kind="hill", params={"B": 1, "k": 1, "n": 1}),
            Edge(dst=1, src=2, kind="hill", params={"B": 1, "k": 1, "n": 1}),
        )
        net = NetworkDescriptor(
            subsystems=subs, edges=edges, unintended=((0, -1, 0), (0, 0, 0), (0, 0, 0))
        )
        issues = network_violations(net)
        assert sum(i.code == "EdgeNotForward" for i in issues) == 2
        assert any(i.code == "NonCooperativeDelta" for i in issues)


class TestUnintendedMap:
    def test_resource_competition_matrix(self, fig2_net):
        mat = delta_matrix(fig2_net)
        assert np.array_equal(mat, np.ones((3, 3)) - np.eye(3))
        assert np.allclose(apply_unintended(fig2_net, [1.0, 2.0, 3.0]), [5.0, 4.0, 3.0])

    def test_none_tag_is_zero_map(self):
        net = NetworkDescriptor(subsystems=(make_srna_sub(),), edges=(), unintended="none")
        assert np.array_equal(delta_matrix(net), np.zeros((1, 1)))

    def test_custom_matrix_applied(self):
        subs = tuple(make_srna_sub(index=i) for i in (1, 2))
        net = NetworkDescriptor(
            subsystems=subs, edges=(), unintended=((0.0, 2.0), (0.5, 0.0))
        )
        assert np.allclose(apply_unintended(net, [1.0, 1.0]), [2.0, 0.5])


class TestCertificateReport:
    def test_verdict_box_consistency(self):
        from nddcert.core import CertificateReport

        with pytest.raises(ValueError):
            CertificateReport("certified-bounded")
        with pytest.raises(ValueError):
            CertificateReport("diverged", ultimate_box=IntervalBox([0.0], [1.0]))
        rep = CertificateReport("certified-bounded", ultimate_box=IntervalBox([0.0], [1.0]))
        assert rep.certified
