import numpy as np

from app.cyhmm.dataset import FeatureKind, IndividualSeries, TimeSeriesDataset
from app.cyhmm.model import CyhmmModel, DurationFamily, DurationKind, EmissionParams


def two_state_model(lam=4.0, mu=((0.0, 0.0), (4.0, -4.0)), p_obs=0.9, d_max=20):
    durations = DurationFamily(DurationKind.POISSON, [lam, lam], d_max)
    emissions = EmissionParams(
        FeatureKind.CONTINUOUS,
        p_obs=np.full((2, 2), p_obs),
        mu=np.asarray(mu, dtype=float),
        sigma=np.ones((2, 2)),
    )
    return CyhmmModel(durations, emissions, ("x", "y"))


def binary_cycle_model(lam=3.0, d_max=15):
    durations = DurationFamily(DurationKind.POISSON, [lam, lam, lam], d_max)
    emissions = EmissionParams(
        FeatureKind.BINARY,
        p_obs=[0.8, 0.6, 0.9],
        rate=[[0.9, 0.1], [0.1, 0.9], [0.5, 0.5]],
    )
    return CyhmmModel(durations, emissions, ("p", "q"))


def sample_dataset(model, N=20, T=60, seed=0):
    """N series drawn from ``model`` with ids s000.."""
    rng = np.random.default_rng(seed)
    series = [model.sample(T, rng, series_id=f"s{i:03d}")[0] for i in range(N)]
    return TimeSeriesDataset(tuple(series), model.feature_names, model.kind)


def four_state_model(lam=4.0, d_max=20):
    """Corners of a square, one per state, so every state is well separated"""
    durations = DurationFamily(DurationKind.POISSON, [lam] * 4, d_max)
    emissions = EmissionParams(
        FeatureKind.CONTINUOUS,
        p_obs=np.full((4, 2), 0.9),
        mu=[[0.0, 0.0], [5.0, 0.0], [5.0, 5.0], [0.0, 5.0]],
        sigma=np.ones((4, 2)),
    )
    return CyhmmModel(durations, emissions, ("x", "y"))


def white_noise_dataset(N=40, T=100, K=2, seed=0):
    rng = np.random.default_rng(seed)
    series = [IndividualSeries(f"s{i:03d}", rng.normal(size=(T, K)), np.ones((T, K), dtype=bool)) for i in range(N)]
    return TimeSeriesDataset(tuple(series), tuple(f"f{k}" for k in range(K)), FeatureKind.CONTINUOUS)
