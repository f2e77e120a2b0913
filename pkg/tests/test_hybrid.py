import mpmath as mp
import numpy as np
import pytest
from scipy import stats

from kdmc.hybrid import (effective_diffusion, fluid_coefficients, fluid_solve,
                         kdmc_solve, kdmc_step, kdmc_step_many)
from kdmc.kinetic import kinetic_solve
from kdmc.model import Background, BoundarySpec, ParticleArray, ParticleState
from kdmc.sampling import make_stream, sample_gaussian
from kdmc.tally import RunMetrics

BOTH_WALLS = [BoundarySpec.reflecting("left", 0.0),
              BoundarySpec.reflecting("right", 1.0)]


def paper_bg():
    return Background.uniform(0.0, 1.0, 101, 100.0, 1e7, 1e7)


def plasma_particles(n, bg, x0, seed):
    rng = make_stream(seed, 0)
    pa = ParticleArray.filled(n, x0, 0.0)
    i = 0
    pa.v = sample_gaussian(rng, bg.nu_p[i], np.sqrt(bg.sigma_p2[i]), n)
    return pa


class TestFluidCoefficients:
    def test_paper_values(self):
        nu, D = fluid_coefficients(0.5, paper_bg())
        assert nu == 100.0
        assert D == 1.0

    def test_vanishing_scatter_limit(self):
        # sigma_p2 -> 0: drift reduces to nu_p and diffusion vanishes
        bg = Background.uniform(0.0, 1.0, 4, 7.0, 1e-12, 1e3)
        nu, D = fluid_coefficients(0.3, bg)
        assert nu == pytest.approx(7.0, abs=1e-12)
        assert D == pytest.approx(0.0, abs=1e-12)

    def test_gradient_correction_sign(self):
        bg = Background(0.0, 1.0, nu_p=[0.0, 0.0], sigma_p2=[1e6, 1e6],
                        r_cx=[1e7, 2e7])
        h = bg.cell_width
        # one-sided difference of 1/R at cell 0 (matches construction)
        dinv = (1 / 2e7 - 1 / 1e7) / h
        nu0, _ = fluid_coefficients(0.25, bg)
        assert dinv < 0
        assert nu0 == pytest.approx(1e6 * dinv, rel=1e-12)


class TestEffectiveDiffusion:
    def test_fluid_limit(self):
        # R*theta -> inf: D -> sigma_p2/R
        D = effective_diffusion(1.0, 1e7, 1e7)
        assert D == pytest.approx(1.0 * (1e7 - 2) / 1e7, rel=1e-12)

    def test_ballistic_limit_series(self):
        # R*theta -> 0: D -> sigma_p2 * R * theta^2 / 6
        theta, R, s2 = 1e-12, 1.0, 3.0
        D = effective_diffusion(theta, s2, R)
        assert D == pytest.approx(s2 * R * theta ** 2 / 6.0, rel=1e-6)

    def test_unit_argument_value(self):
        # bracket at R*theta = 1 is 3/e - 1
        D = effective_diffusion(1.0, 2.5, 1.0)
        assert D == pytest.approx(2.5 * (3.0 * np.exp(-1.0) - 1.0), rel=1e-13)

    def test_series_matches_mpmath_through_switch(self):
        mp.mp.dps = 40
        for x in (1e-6, 1e-4, 5e-3, 0.019, 0.021, 0.05):
            want = float(2 * mp.e ** (-x) + x + x * mp.e ** (-x) - 2) / x
            got = effective_diffusion(x, 1.0, 1.0)
            assert got == pytest.approx(want, rel=1e-10), x

    def test_bounded_and_monotone(self):
        xs = np.logspace(-6, 4, 60)
        vals = effective_diffusion(xs, 1.0, 1.0)
        assert np.all(vals > 0)
        assert np.all(vals < 1.0)
        assert np.all(np.diff(vals) > 0)


class TestStepStructure:
    def test_low_collisionality_stays_kinetic(self):
        # fraction entering the diffusive phase = 1 - exp(-R dt)
        bg = Background.uniform(0.0, 1.0, 11, 0.0, 1e4, 1e3)
        n = 40_000
        dt = 2e-4                      # R dt = 0.2
        pa = plasma_particles(n, bg, 0.5, seed=1)
        m = RunMetrics()
        kdmc_step_many(pa, bg, BOTH_WALLS, dt, "fluid", make_stream(2, 0),
                       metrics=m)
        frac = m.collisions / n
        want = -np.expm1(-1e3 * dt)
        assert abs(frac - want) < 4 * np.sqrt(want * (1 - want) / n)

    def test_kinetic_share_shrinks_with_collisionality(self):
        # share of the step spent in the kinetic phase falls as R dt grows
        bg = Background.uniform(0.0, 1.0, 11, 0.0, 1e4, 1e4)
        n = 20_000
        fracs = []
        for k, dt in enumerate((1e-5, 1e-4, 1e-3)):   # R dt = 0.1, 1, 10
            pa = plasma_particles(n, bg, 0.5, seed=30 + k)
            m = RunMetrics()
            kdmc_step_many(pa, bg, BOTH_WALLS, dt, "fluid",
                           make_stream(40 + k, 0), metrics=m)
            fracs.append(m.collisions / n)    # P(diffusive phase entered)
        assert fracs[0] < fracs[1] < fracs[2]

    @pytest.mark.parametrize("mode", ["kin", "fluid"])
    def test_free_space_mean_displacement(self, mode):
        bg = Background.uniform(-1e9, 1e9, 1, 100.0, 1e7, 1e7)
        n = 200_000
        dt = 1e-6                      # R dt = 10
        pa = plasma_particles(n, bg, 0.0, seed=3)
        kdmc_step_many(pa, bg, [], dt, mode, make_stream(4, 0))
        se = pa.x.std() / np.sqrt(n)
        assert abs(pa.x.mean() - 100.0 * dt) < 4 * se
        assert np.allclose(pa.t, dt)

    @pytest.mark.parametrize("mode", ["kin", "fluid"])
    def test_one_step_matches_kinetic_moments(self, mode):
        bg = Background.uniform(-1e9, 1e9, 1, 100.0, 1e7, 1e7)
        n = 200_000
        dt = 1e-7 * 10                 # R dt = 10
        pa = plasma_particles(n, bg, 0.0, seed=5)
        kdmc_step_many(pa, bg, [], dt, mode, make_stream(6, 0))
        pk = plasma_particles(n, bg, 0.0, seed=7)
        kinetic_solve(pk, bg, [], dt, make_stream(8, 0))
        se_m = np.sqrt(pa.x.var() / n + pk.x.var() / n)
        assert abs(pa.x.mean() - pk.x.mean()) < 4 * se_m
        dv = ((pa.x - pa.x.mean()) ** 2).std() ** 2 / n + \
            ((pk.x - pk.x.mean()) ** 2).std() ** 2 / n
        assert abs(pa.x.var() - pk.x.var()) < 4 * np.sqrt(dv)

    def test_kin_mode_never_touches_weights(self):
        bg = paper_bg()
        n = 5000
        pa = plasma_particles(n, bg, 0.98, seed=9)
        pa.w[:] = 0.37
        kdmc_solve(pa, bg, BOTH_WALLS, 1e-4, 1e-3, "kin", make_stream(10, 0))
        assert np.all(pa.w == 0.37)

    def test_fluid_mode_reflecting_weights_identical(self):
        bg = paper_bg()
        n = 5000
        pa = plasma_particles(n, bg, 0.98, seed=11)
        kdmc_solve(pa, bg, BOTH_WALLS, 1e-4, 1e-3, "fluid", make_stream(12, 0))
        assert np.all(pa.w == 1.0)
        assert np.all((pa.x >= 0.0) & (pa.x <= 1.0))

    def test_fallback_fraction_saturates_at_large_dt(self):
        bg = paper_bg()
        n = 3000
        pa = plasma_particles(n, bg, 0.98, seed=13)
        m = RunMetrics()
        kdmc_solve(pa, bg, BOTH_WALLS, 1e-3, 2e-3, "kin", make_stream(14, 0),
                   metrics=m)
        assert m.fallback_fraction > 0.99

    def test_far_boundary_equals_free_stepping(self):
        # wall pushed far away: wall-aware mode must equal the plain stepper
        bg = Background.uniform(-200.0, 200.0, 1, 100.0, 1e7, 1e7)
        walls = [BoundarySpec.reflecting("left", -200.0),
                 BoundarySpec.reflecting("right", 200.0)]
        n = 50_000
        pa1 = plasma_particles(n, bg, 0.0, seed=15)
        kdmc_solve(pa1, bg, walls, 1e-5, 1e-4, "fluid", make_stream(16, 0))
        pa2 = plasma_particles(n, bg, 0.0, seed=17)
        kdmc_solve(pa2, bg, [], 1e-5, 1e-4, "kin", make_stream(18, 0))
        d = stats.ks_2samp(pa1.x, pa2.x).statistic
        assert d < 1.63 * np.sqrt(2.0 / n)

    def test_scalar_step(self):
        bg = paper_bg()
        p = ParticleState(x=0.5, v=120.0)
        out = kdmc_step(p, bg, BOTH_WALLS, 1e-5, "fluid", make_stream(19, 0))
        assert out.t == pytest.approx(1e-5)
        assert 0.0 <= out.x <= 1.0

    def test_absorbing_fluid_mode_kills_and_logs(self):
        bg = paper_bg()
        walls = [BoundarySpec.reflecting("left", 0.0),
                 BoundarySpec.absorbing("right", 1.0)]
        n = 20_000
        pa = plasma_particles(n, bg, 0.98, seed=20)
        m = RunMetrics()
        kdmc_solve(pa, bg, walls, 1e-4, 1e-3, "fluid", make_stream(21, 0),
                   metrics=m)
        lost = n - pa.w.sum()
        assert lost > 0
        assert m.absorbed_weight == pytest.approx(lost, rel=1e-12)
        dead = ~pa.alive
        assert np.all(pa.w[dead] == 0.0)


class TestFluidSolve:
    def test_free_space_exact_distribution(self):
        bg = Background.uniform(-1e6, 1e6, 1, 3.0, 8.0, 2.0)   # D = 4
        n = 100_000
        pa = ParticleArray.filled(n, 0.0, 0.0)
        fluid_solve(pa, bg, [], 0.5, make_stream(22, 0))
        z = (pa.x - 3.0 * 0.5) / np.sqrt(2 * 4.0 * 0.5)
        d = stats.kstest(z, "norm").statistic
        assert d < 1.63 / np.sqrt(n)

    def test_substep_count_invariance(self):
        bg = Background.uniform(-1e6, 1e6, 1, 3.0, 8.0, 2.0)
        n = 50_000
        pa1 = ParticleArray.filled(n, 0.0, 0.0)
        fluid_solve(pa1, bg, [], 0.5, make_stream(23, 0), dt_fluid=0.5)
        pa2 = ParticleArray.filled(n, 0.0, 0.0)
        fluid_solve(pa2, bg, [], 0.5, make_stream(24, 0), dt_fluid=0.5 / 64)
        d = stats.ks_2samp(pa1.x, pa2.x).statistic
        assert d < 1.63 * np.sqrt(2.0 / n)

    def test_reflecting_stationary_profile(self):
        # long-time density against a reflecting wall ~ exp((nu/D) x)
        bg = Background.uniform(0.0, 1.0, 50, 5.0, 1e6, 1e6)    # nu/D = 5
        walls = BOTH_WALLS
        n = 40_000
        pa = ParticleArray.filled(n, 0.5, 0.0)
        fluid_solve(pa, bg, walls, 3.0, make_stream(25, 0), dt_fluid=0.01)
        counts, edges = np.histogram(pa.x, bins=np.linspace(0, 1, 11))
        centers = 0.5 * (edges[1:] + edges[:-1])
        keep = counts > 200
        slope = np.polyfit(centers[keep], np.log(counts[keep]), 1)[0]
        assert slope == pytest.approx(5.0, rel=0.12)

    def test_weight_conserved_reflecting(self):
        bg = paper_bg()
        n = 5000
        pa = ParticleArray.filled(n, 0.98, 0.0)
        fluid_solve(pa, bg, BOTH_WALLS, 1e-3, make_stream(26, 0),
                    dt_fluid=1e-5)
        assert pa.w.sum() == float(n)
