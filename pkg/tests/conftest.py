import numpy as np
import pytest

from patchscaler.models import (GaussianOracleDenoiser, GaussianOracleStats,
                                GlobalRestorer, PatchDiT,
                                make_dit_gaussian_objective,
                                make_grm_objective, train_toy)
from patchscaler.pgs import CountingDenoiser
from patchscaler.pipeline import (PipelineConfig, make_scene,
                                  nearest_upsample, superresolve)
from patchscaler.schedule import build_linear_schedule


@pytest.fixture(scope="session")
def schedule1000():
    return build_linear_schedule(1000)


def _grm_pair_sampler(rng):
    sc = make_scene(48, 48, seed=int(rng.integers(1 << 31)), patch=16, factor=2)
    return nearest_upsample(sc.lr, 2), sc.hr


@pytest.fixture(scope="session")
def trained_grm():
    grm = GlobalRestorer(channels=1, hidden=16, seed=0)
    train_toy(grm.params, make_grm_objective(grm, _grm_pair_sampler),
              steps=2000, lr=3e-3, seed=0)
    return grm


@pytest.fixture(scope="session")
def trained_dit(schedule1000):
    dit = PatchDiT(channels=1, patch=4, width=32, depth=2, heads=4, seed=0)
    obj = make_dit_gaussian_objective(dit, schedule1000,
                                      GaussianOracleStats(0.0, 1.0), batch=8)
    train_toy(dit.params, obj, steps=1200, lr=3e-3, seed=0)
    return dit


@pytest.fixture(scope="session")
def mixed_scene():
    # texture fraction tuned so well over 40% of patches quantize as Simple
    return make_scene(96, 96, seed=7, patch=16, texture_frac=0.2, factor=2)


@pytest.fixture(scope="session")
def bench_run(trained_grm, mixed_scene):
    """Paired adaptive/unified runs with instrumented denoisers."""
    cfg = PipelineConfig(seed=3)
    stats = GaussianOracleStats(mean=float(mixed_scene.hr.mean()),
                                var=float(mixed_scene.hr.var()))
    oracle = GaussianOracleDenoiser(stats, cfg.schedule())

    counted_a = CountingDenoiser(oracle)
    sr_a, rep_a = superresolve(cfg, mixed_scene.lr, trained_grm, counted_a)

    cfg_u = PipelineConfig(seed=3, taus=(1000, 1000, 1000), steps=(20, 20, 20))
    counted_u = CountingDenoiser(oracle)
    sr_u, rep_u = superresolve(cfg_u, mixed_scene.lr, trained_grm, counted_u)

    return {
        "cfg": cfg,
        "sr_pgs": sr_a, "report_pgs": rep_a, "calls_pgs": counted_a.calls,
        "sr_unified": sr_u, "report_unified": rep_u,
        "calls_unified": counted_u.calls,
        "mse_pgs": float(np.mean((sr_a - mixed_scene.hr) ** 2)),
        "mse_unified": float(np.mean((sr_u - mixed_scene.hr) ** 2)),
    }
