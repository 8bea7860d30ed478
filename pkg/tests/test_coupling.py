import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardiowave.coupling import (
    PmjEntry,
    PmjRegistry,
    PmjType,
    classify_pmjs,
    couple,
    match_pmjs,
)
from cardiowave.eikonal import ConductivityModel, MuscleStimulusSet, SolverOptions
from cardiowave.mesh import build_structured_slab
from cardiowave.network import ConductionNetwork, NodeActivation, apply_blocks, build_synthetic_tree

from conftest import conductivity_along

D_O, D_A = 10e-3, 2e-3


def one_junction_registry(t=0, v=0):
    return PmjRegistry((PmjEntry(terminal=t, vertex=v, d_o=D_O, d_a=D_A),))


def classify_single(tp, tm, avn_wins=True):
    reg = one_junction_registry(t=1)
    u_p = NodeActivation(
        times=np.array([0.0, tp]),
        winning_source=np.array([0, 0 if avn_wins else 1]),
    )
    out = classify_pmjs(reg, u_p, np.array([tm]), avn_node=0)
    return out.entries[0].type


class TestClassification:
    def test_orthodromic_from_root(self):
        assert classify_single(0.0, 0.1) is PmjType.OO

    def test_orthodromic_via_antidromic_source(self):
        assert classify_single(0.0, 0.1, avn_wins=False) is PmjType.OA

    def test_antidromic(self):
        assert classify_single(0.1, 0.0) is PmjType.ANTIDROMIC

    def test_collision_inside_window(self):
        assert classify_single(0.050, 0.049) is PmjType.COLLISION

    def test_antidromic_boundary_included(self):
        assert classify_single(0.1 + D_A, 0.1) is PmjType.ANTIDROMIC

    def test_orthodromic_boundary_included(self):
        assert classify_single(0.1 - D_O, 0.1) is PmjType.OO

    def test_just_inside_window_is_collision(self):
        assert classify_single(0.1 + D_A - 1e-6, 0.1) is PmjType.COLLISION
        assert classify_single(0.1 - D_O + 1e-6, 0.1) is PmjType.COLLISION

    def test_infinite_muscle_time(self):
        assert classify_single(0.0, np.inf) is PmjType.OO

    def test_infinite_network_time(self):
        assert classify_single(np.inf, 0.0) is PmjType.ANTIDROMIC

    def test_both_infinite_is_collision(self):
        assert classify_single(np.inf, np.inf) is PmjType.COLLISION

    @settings(max_examples=300, deadline=None)
    @given(
        st.floats(-0.1, 0.1),
        st.floats(-0.1, 0.1),
        st.floats(1e-4, 0.05),
        st.floats(0.5, 0.999),
    )
    def test_exactly_one_branch_fires(self, tp, tm, d_o, frac):
        d_a = d_o * frac
        reg = PmjRegistry((PmjEntry(terminal=1, vertex=0, d_o=d_o, d_a=d_a),))
        u_p = NodeActivation(times=np.array([0.0, tp]),
                             winning_source=np.array([0, 0]))
        out = classify_pmjs(reg, u_p, np.array([tm]), avn_node=0)
        assert out.entries[0].type in set(PmjType)

    def test_orthodromic_flag(self):
        assert PmjType.OO.is_orthodromic and PmjType.OA.is_orthodromic
        assert not PmjType.ANTIDROMIC.is_orthodromic
        assert not PmjType.COLLISION.is_orthodromic


class TestRegistry:
    def test_delay_ordering_enforced(self):
        with pytest.raises(ValueError):
            PmjEntry(terminal=0, vertex=0, d_o=1e-3, d_a=2e-3)
        with pytest.raises(ValueError):
            PmjEntry(terminal=0, vertex=0, d_o=1e-3, d_a=0.0)

    def test_one_to_one_pairing_enforced(self):
        e1 = PmjEntry(terminal=0, vertex=0, d_o=D_O, d_a=D_A)
        e2 = PmjEntry(terminal=1, vertex=0, d_o=D_O, d_a=D_A)
        with pytest.raises(ValueError, match="one-to-one"):
            PmjRegistry((e1, e2))

    def test_counts(self):
        reg = one_junction_registry()
        counts = reg.counts()
        assert counts[PmjType.COLLISION] == 1
        assert sum(counts.values()) == 1


class TestMatching:
    def _setup(self):
        mesh = build_structured_slab(2, [0.02, 0.01], [20, 10])
        net = build_synthetic_tree(2, 0.004, root=(0.002, 0.005, 0.0))
        return mesh, net

    def test_nearest_vertex_oracle(self):
        mesh, net = self._setup()
        reg = match_pmjs(net, mesh, D_O, D_A)
        assert len(reg) == net.terminal_nodes.size
        for e in reg.entries:
            p = net.nodes[e.terminal]
            d = np.linalg.norm(mesh.vertices3 - p, axis=1)
            # the chosen vertex is nearest among vertices not claimed earlier
            assert e.distance <= np.partition(d, len(reg))[len(reg)] + 1e-12
            np.testing.assert_allclose(d[e.vertex], e.distance, atol=1e-15)

    def test_conflicting_terminals_get_distinct_vertices(self):
        mesh = build_structured_slab(2, [0.02, 0.01], [4, 2])  # coarse: conflicts
        net = build_synthetic_tree(2, 0.0012, root=(0.009, 0.005, 0.0))
        reg = match_pmjs(net, mesh, D_O, D_A, snap_radius=1.0)
        verts = [e.vertex for e in reg.entries]
        assert len(set(verts)) == len(verts)

    def test_snap_radius_enforced(self):
        mesh, net = self._setup()
        with pytest.raises(ValueError, match="snap radius"):
            match_pmjs(net, mesh, D_O, D_A, snap_radius=1e-9)


class TestCoupledLoop:
    def _healthy(self):
        model = ConductivityModel()
        mesh = build_structured_slab(2, [0.02, 0.01], [20, 10])
        sig = conductivity_along(mesh, model)
        net = build_synthetic_tree(3, 0.004, branch_angle_deg=30.0,
                                   root=(0.002, 0.005, 0.0))
        reg = match_pmjs(net, mesh, D_O, D_A)
        return model, mesh, sig, net, reg

    def test_healthy_all_orthodromic(self):
        model, mesh, sig, net, reg = self._healthy()
        state = couple(net, mesh, sig, model.c_f, reg)
        counts = {t.value: c for t, c in state.registry.counts().items()}
        assert counts == {"OO": len(reg), "OA": 0, "A": 0, "C": 0}
        assert state.fixed_point
        assert np.all(np.isfinite(state.u_m))

    def test_muscle_times_follow_network_plus_delay(self):
        model, mesh, sig, net, reg = self._healthy()
        state = couple(net, mesh, sig, model.c_f, reg)
        for e in state.registry.entries:
            tp = state.u_p.times[e.terminal]
            tm = state.u_m[e.vertex]
            # a driving junction pins its vertex to exactly u_p + d_o unless
            # an earlier front from a neighbor junction reaches it first
            assert tm <= tp + e.d_o + 1e-12

    def test_early_stop_and_history(self):
        model, mesh, sig, net, reg = self._healthy()
        state = couple(net, mesh, sig, model.c_f, reg, n_max=3)
        assert state.iterations < 3
        assert len(state.history) == state.iterations
        types0 = tuple(t for t, _, _ in state.history[-1])
        assert types0 == state.registry.types()

    def test_early_stop_disabled_runs_all_iterations(self):
        model, mesh, sig, net, reg = self._healthy()
        state = couple(net, mesh, sig, model.c_f, reg, n_max=3, early_stop=False)
        assert state.iterations == 3

    def test_avn_time_offset_shifts_everything(self):
        model, mesh, sig, net, reg = self._healthy()
        a = couple(net, mesh, sig, model.c_f, reg)
        b = couple(net, mesh, sig, model.c_f, reg, avn_time=5e-3)
        np.testing.assert_allclose(b.u_p.times, a.u_p.times + 5e-3, atol=1e-12)
        np.testing.assert_allclose(b.u_m, a.u_m + 5e-3, atol=2e-5)

    def test_fully_blocked_network_no_sources(self):
        model, mesh, sig, net, reg = self._healthy()
        blocked = apply_blocks(net, [0, 1])  # sever both root branches
        state = couple(blocked, mesh, sig, model.c_f, reg)
        assert np.all(np.isinf(state.u_m))
        counts = state.registry.counts()
        assert counts[PmjType.COLLISION] == len(reg)

    def test_ectopic_source_drives_antidromic(self):
        model, mesh, sig, net, reg = self._healthy()
        blocked = apply_blocks(net, [0, 1])
        ect = MuscleStimulusSet.from_sphere(mesh, (0.018, 0.008), 1.5e-3, 0.0)
        state = couple(blocked, mesh, sig, model.c_f, reg, muscular_sources=ect)
        counts = state.registry.counts()
        assert counts[PmjType.ANTIDROMIC] >= 1
        # antidromic junctions reach the network: their terminals are finite
        for e in state.registry.entries:
            if e.type is PmjType.ANTIDROMIC:
                np.testing.assert_allclose(
                    state.u_p.times[e.terminal],
                    state.u_m[e.vertex] + e.d_a,
                    atol=1e-12,
                )

    def test_n_max_validated(self):
        model, mesh, sig, net, reg = self._healthy()
        with pytest.raises(ValueError):
            couple(net, mesh, sig, model.c_f, reg, n_max=0)

    def test_options_forwarded(self):
        model, mesh, sig, net, reg = self._healthy()
        opts = SolverOptions(steady_tol=1e-5)
        state = couple(net, mesh, sig, model.c_f, reg, options=opts)
        assert np.all(np.isfinite(state.u_m))
