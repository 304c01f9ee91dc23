import numpy as np
import pytest

from lightltv.base import Dataset, GenConfig, UserProfile
from lightltv.data import generate_synthetic
from lightltv.features import FeatureEncoder


def make_dataset(rows, profiles, paid_catalog_size=50, download_catalog_size=100):
    """rows: (user, game, day, spend); profiles: user -> (history, t180, f180)."""
    users, games, days, spends = (np.array(col) for col in zip(*rows)) if rows else ([], [], [], [])
    return Dataset(
        users=users,
        games=games,
        days=days,
        spends=spends,
        profiles={
            u: UserProfile(u, tuple(h), float(t), int(f)) for u, (h, t, f) in profiles.items()
        },
        paid_catalog_size=paid_catalog_size,
        download_catalog_size=download_catalog_size,
    )


@pytest.fixture
def tiny_ds():
    rows = [
        (1, 0, 1, 10.0),
        (1, 1, 1, 0.0),
        (2, 0, 2, 20.0),
        (2, 2, 2, 5.0),
        (3, 0, 3, 30.0),
        (3, 1, 3, 0.0),
        (3, 2, 4, 15.0),
    ]
    profiles = {
        1: ([3, 4], 100.0, 10),
        2: ([5], 40.0, 2),
        3: ([6, 7, 8], 0.0, 0),
    }
    return make_dataset(rows, profiles)


SMALL_GEN = GenConfig(
    n_users=300,
    n_paid_games=150,
    n_download_games=400,
    n_days=6,
    zero_rate=0.7,
    interactions_per_user=10,
    seed=3,
)


@pytest.fixture(scope="session")
def small_ds():
    return generate_synthetic(SMALL_GEN)


@pytest.fixture(scope="session")
def small_encoder(small_ds):
    return FeatureEncoder.from_dataset(small_ds)
