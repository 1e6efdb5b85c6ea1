import numpy as np
import pytest
from scipy.optimize import linprog

from stochequiv.catalog import (
    degenerate_integrator_pair,
    external_not_bisimilar_pair,
    one_step_counterexample_pair,
    scalar_ar1,
)
from stochequiv.montecarlo import (
    BoxSet,
    SimulationConfig,
    SimulationOverflowError,
    _RelationImage,
    check_bisim_condition_empirical,
    compare_output_laws,
    empirical_moments,
    noise_factor,
    simulate,
    support_distance,
)
from stochequiv.numlin import DimensionError
from stochequiv.relations import LinearRelation, NotTotalError
from stochequiv.sysmodel import StochasticLinearSystem, conditional_moments, state_means

from generators import random_system


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(trajectories=0), dict(horizon=-1), dict(chunk_size=0), dict(seed=-1)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SimulationConfig(**{"seed": 1, **kw})


class TestSimulate:
    def test_deterministic_and_worker_independent(self):
        s = random_system(np.random.default_rng(0), 3, psi=True)
        cfg = SimulationConfig(seed=7, trajectories=20000, horizon=4, chunk_size=4096)
        a = simulate(s, None, None, cfg)
        b = simulate(s, None, None, cfg)
        c = simulate(s, None, None, SimulationConfig(7, 20000, 4, 4096, workers=4))
        assert np.array_equal(a.states, b.states) and np.array_equal(a.outputs, b.outputs)
        assert np.array_equal(a.states, c.states) and np.array_equal(a.outputs, c.outputs)
        assert a.to_text() == c.to_text()

    def test_streams_and_seeds_differ(self):
        s = scalar_ar1()
        cfg = SimulationConfig(seed=1, trajectories=10, horizon=2)
        assert not np.array_equal(simulate(s, None, None, cfg).states, simulate(s, None, None, cfg, stream=1).states)
        other = SimulationConfig(seed=2, trajectories=10, horizon=2)
        assert not np.array_equal(simulate(s, None, None, cfg).states, simulate(s, None, None, other).states)

    def test_noise_free_matches_mean_recursion(self):
        rng = np.random.default_rng(1)
        s = random_system(rng, 3, m=2).replace(G=np.zeros((3, 3)))
        u = rng.standard_normal((5, 2))
        x0 = rng.standard_normal(3)
        ens = simulate(s, x0, u, SimulationConfig(seed=3, trajectories=4, horizon=5))
        assert np.allclose(ens.states, state_means(s, x0, u)[None], rtol=1e-13, atol=1e-13)

    def test_degenerate_noise_stays_on_support(self):
        s1, _, _ = degenerate_integrator_pair()
        ens = simulate(s1, [0.5, 1.0], [[1.0]] * 6, SimulationConfig(seed=4, trajectories=2000, horizon=6))
        assert support_distance(ens, s1, [0.5, 1.0], [[1.0]] * 6).max() < 1e-9
        assert np.array_equal(ens.states[:, 6, 1], np.full(2000, 64.0))

    def test_overflow_guard(self):
        s = StochasticLinearSystem(A=[[1e20]], B=np.zeros((1, 0)), C=[[1.0]], G=[[1.0]])
        with pytest.raises(SimulationOverflowError):
            simulate(s, [1.0], None, SimulationConfig(seed=0, trajectories=5, horizon=20))

    def test_input_too_short(self):
        s = random_system(np.random.default_rng(2), 2)
        with pytest.raises(DimensionError):
            simulate(s, None, np.zeros((2, 1)), SimulationConfig(seed=0, trajectories=5, horizon=3))

    def test_text_layout(self):
        s = random_system(np.random.default_rng(3), 2, p=1)
        ens = simulate(s, None, None, SimulationConfig(seed=5, trajectories=3, horizon=2))
        lines = ens.to_text().splitlines()
        assert lines[0].startswith("# seed=5 trajectories=3 horizon=2")
        assert lines[1] == "# trajectory t x1 x2 y1"
        assert len(lines) == 2 + 3 * 3
        k, t, *vals = lines[-1].split()
        assert (k, t) == ("2", "2") and float(vals[0]) == ens.states[2, 2, 0]


class TestNoiseFactor:
    def test_square_root(self):
        Psi = np.array([[2.0, 1.0], [1.0, 2.0]])
        F = noise_factor(Psi)
        assert np.allclose(F @ F.T, Psi)

    def test_singular_and_negative(self):
        F = noise_factor(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert np.allclose(F @ F.T, np.ones((2, 2)))
        with pytest.raises(ValueError):
            noise_factor(np.diag([1.0, -1e-3]))


class TestMoments:
    def test_ar1_stationary_variance(self):
        s = scalar_ar1(0.5, 1.0)
        N = 100_000
        ens = simulate(s, [0.0], None, SimulationConfig(seed=11, trajectories=N, horizon=40))
        var = empirical_moments(ens, "state").covs[40, 0, 0]
        # variance of a Gaussian sample variance is 2 sigma^4 / (N - 1)
        target = 4.0 / 3.0
        assert abs(var - target) <= 5 * np.sqrt(2 / (N - 1)) * target

    def test_matches_exact_moments(self):
        rng = np.random.default_rng(5)
        s = random_system(rng, 3, m=1, p=2, psi=True, radius=0.9)
        x0 = rng.standard_normal(3)
        u = rng.standard_normal((5, 1))
        N = 50_000
        ens = simulate(s, x0, u, SimulationConfig(seed=13, trajectories=N, horizon=5))
        emp = empirical_moments(ens)
        ex = conditional_moments(s, x0, u)
        for t in range(6):
            S = ex.output_cov(t)
            se = np.sqrt((np.outer(np.diag(S), np.diag(S)) + S**2) / N)
            assert np.all(np.abs(emp.covs[t] - S) <= 5 * se + 1e-12)
            assert np.all(np.abs(emp.means[t] - ex.output_means[t]) <= 5 * np.sqrt(np.diag(S) / N) + 1e-12)
        for t in range(1, 6):
            S = ex.output_cov(t, t - 1)
            se = np.sqrt((np.outer(np.diag(ex.output_cov(t)), np.diag(ex.output_cov(t - 1))) + S**2) / N)
            assert np.all(np.abs(emp.lag1[t] - S) <= 5 * se + 1e-12)

    def test_needs_two(self):
        ens = simulate(scalar_ar1(), None, None, SimulationConfig(seed=0, trajectories=1, horizon=1))
        with pytest.raises(ValueError):
            empirical_moments(ens)
        with pytest.raises(ValueError):
            empirical_moments(ens, "bogus")


class TestCompareLaws:
    cfg = SimulationConfig(seed=21, trajectories=20_000, horizon=6)

    def test_equivalent_pair_passes(self):
        s1, s2, _ = external_not_bisimilar_pair()
        res = compare_output_laws(s1, s2, ([0.3, -1.0], [0.3]), [[0.5]] * 6, self.cfg)
        assert res.passed and res.max_z <= 5

    def test_scaled_output_fails(self):
        s1, s2, _ = external_not_bisimilar_pair()
        res = compare_output_laws(s1, s2.replace(C=[[1.5]]), ([0.0, 0.0], [0.0]), None, self.cfg)
        assert not res.passed
        assert res.to_dict()["passed"] is False

    def test_deterministic_outputs(self):
        s = StochasticLinearSystem(A=[[0.5]], B=[[1.0]], C=[[1.0]], G=np.zeros((1, 1)))
        assert compare_output_laws(s, s, ([1.0], [1.0]), None, self.cfg).passed
        assert not compare_output_laws(s, s, ([1.0], [1.0 + 1e-6]), None, self.cfg).passed


def lp_member(rel, box, off, D, x2):
    """Oracle: is there z with a = off + D z in the box and R1 a = R2 x2?"""
    n, k = D.shape
    A_eq = rel.R1 @ D
    b_eq = rel.R2 @ x2 - rel.R1 @ off
    bounds_lo = box.lower - off
    bounds_hi = box.upper - off
    A_ub = np.vstack([D, -D])
    b_ub = np.concatenate([bounds_hi, -bounds_lo])
    fin = np.isfinite(b_ub)
    r = linprog(np.zeros(k), A_ub=A_ub[fin], b_ub=b_ub[fin], A_eq=A_eq, b_eq=b_eq,
                bounds=[(None, None)] * k, method="highs")
    return r.status == 0


class TestRelationImage:
    @pytest.mark.parametrize("seed", range(6))
    def test_against_linear_program(self, seed):
        rng = np.random.default_rng(seed)
        n1, n2, k, r = 3, 2, rng.integers(1, 4), 2
        rel = LinearRelation(rng.standard_normal((r, n1)), rng.standard_normal((r, n2)))
        D = np.linalg.qr(rng.standard_normal((n1, k)))[0]
        off = 0.2 * rng.standard_normal(n1)
        lo = -rng.uniform(0.2, 1.0, n1)
        hi = rng.uniform(0.2, 1.0, n1)
        if seed % 2:
            lo[0] = -np.inf
        box = BoxSet(lo, hi)
        img = _RelationImage(rel, box, off, D)
        X2 = 1.5 * rng.standard_normal((150, n2))
        # also plant points that are certainly inside
        a = off + D @ np.linalg.lstsq(D, np.clip(off, lo, hi) - off, rcond=None)[0]
        if box.contains(a)[0]:
            X2[0] = np.linalg.lstsq(rel.R2, rel.R1 @ a, rcond=None)[0]
        got = img.contains(X2)
        want = np.array([lp_member(rel, box, off, D, x) for x in X2])
        # points within rounding of the boundary may go either way
        mismatch = np.flatnonzero(got != want)
        for i in mismatch:
            grown = BoxSet(lo - 1e-6, hi + 1e-6)
            shrunk = BoxSet(lo + 1e-6, hi - 1e-6)
            assert lp_member(rel, grown, off, D, X2[i]) != lp_member(rel, shrunk, off, D, X2[i])

    def test_empty_intersection(self):
        rel = LinearRelation([[1.0, 0.0]], [[1.0]])
        box = BoxSet([0.0, 1.0], [1.0, 2.0])
        img = _RelationImage(rel, box, np.zeros(2), np.array([[1.0], [0.0]]))
        assert not img.contains(np.array([[0.5], [0.0], [2.0]])).any()


class TestBoxConditions:
    cfg = SimulationConfig(seed=2024, trajectories=20_000)

    def test_degenerate_pair_with_support(self):
        s1, s2, rel = degenerate_integrator_pair()
        x0 = (np.zeros(2), np.zeros(1))
        rep = check_bisim_condition_empirical(s1, s2, rel, x0, None, 1, BoxSet([0, 1], [1, 2]), self.cfg)
        assert rep.p_left == 0.0 and rep.p_right == 0.0 and rep.passed and rep.z == 0.0
        rep = check_bisim_condition_empirical(s1, s2, rel, x0, None, 1, BoxSet([0, -1], [1, 1]), self.cfg)
        assert rep.passed and 0.3 < rep.p_left < 0.4

    def test_degenerate_pair_without_support_fails(self):
        s1, s2, rel = degenerate_integrator_pair()
        rep = check_bisim_condition_empirical(s1, s2, rel, (np.zeros(2), np.zeros(1)), None, 1,
                                              BoxSet([0, 1], [1, 2]), self.cfg, intersect_support=False)
        assert not rep.passed and rep.p_left == 0.0 and rep.p_right > 0.3

    def test_condition_ii(self):
        s1, s2, rel = degenerate_integrator_pair()
        rep = check_bisim_condition_empirical(s1, s2, rel, (np.zeros(2), np.zeros(1)), None, 3,
                                              BoxSet([-np.inf], [0.5]), self.cfg, condition="ii")
        assert rep.passed and rep.condition == "ii"

    def test_one_step_pair(self):
        s1, s2, rel = one_step_counterexample_pair()
        x0 = (np.zeros(2), np.zeros(2))
        box = BoxSet([0, 0], [1, 1])
        assert check_bisim_condition_empirical(s1, s2, rel, x0, None, 1, box, self.cfg).passed
        rep = check_bisim_condition_empirical(s1, s2, rel, x0, None, 2, box, self.cfg)
        assert not rep.passed and rep.p_right > rep.p_left
        assert rep.to_dict()["passed"] is False
        # an unbounded first coordinate makes the box a cylinder over the relation
        cyl = BoxSet([-np.inf, 0], [np.inf, 1])
        assert check_bisim_condition_empirical(s1, s2, rel, x0, None, 2, cyl, self.cfg).passed

    def test_errors(self):
        s1, s2, rel = degenerate_integrator_pair()
        x0 = (np.zeros(2), np.zeros(1))
        with pytest.raises(ValueError):
            check_bisim_condition_empirical(s1, s2, rel, x0, None, 1, BoxSet([0, 0], [1, 1]), self.cfg, condition="x")
        with pytest.raises(DimensionError):
            check_bisim_condition_empirical(s1, s2, rel, x0, None, 1, BoxSet([0], [1]), self.cfg)
        with pytest.raises(NotTotalError):
            check_bisim_condition_empirical(s1, s2, LinearRelation([[0.0, 0.0]], [[1.0]]), x0, None, 1,
                                            BoxSet([0, 0], [1, 1]), self.cfg)
        with pytest.raises(ValueError):
            BoxSet([1.0], [0.0])
