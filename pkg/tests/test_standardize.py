import numpy as np
import pytest

from conftest import make_dataset
from lightltv.base import GameSpendStats, Scheme
from lightltv.data import read_labeled
from lightltv.exceptions import ColdEntityError, ConfigError, DataError
from lightltv.standardize import (
    GameColumns,
    LabelStandardizer,
    combine_both_sided,
    game_sided,
    label_dispersion,
    standardize_dataset,
    user_sided,
    write_labeled,
)
from lightltv.types import NormStats
from lightltv.utils import iter_jsonl

ALL_SCHEMES = list(Scheme)


class TestFormulas:
    def test_game_sided(self):
        stats = GameSpendStats(0, 3, 20.0, 8.16496580927726)
        assert game_sided(30.0, stats) == pytest.approx(1.2247, abs=1e-4)

    def test_game_sided_zero_std(self):
        assert game_sided(7.0, GameSpendStats(0, 1, 7.0, 0.0)) == 0.0

    def test_game_sided_cold(self):
        with pytest.raises(ColdEntityError):
            game_sided(7.0, None)

    def test_user_sided(self):
        assert user_sided(10.0, 500.0, 50, 99.0) == pytest.approx(1.0)

    def test_user_sided_cold_fallback(self):
        assert user_sided(20.0, 0.0, 0, 10.0) == pytest.approx(2.0)

    def test_both_sided_cold_game_uses_user_only(self):
        norm = NormStats(scheme="bs", g_mean=1.0, g_std=2.0, u_mean=0.5, u_std=0.25)
        assert combine_both_sided(None, 1.0, norm) == pytest.approx(2.0)
        assert combine_both_sided(3.0, 1.0, norm) == pytest.approx(0.5 * 1.0 + 0.5 * 2.0)

    @pytest.mark.parametrize("scale, shift", [(3.0, 0.0), (0.5, 4.0), (2.0, -1.5)])
    def test_game_sided_ignores_affine_rescaling(self, scale, shift):
        spends = np.array([4.0, 9.0, 17.0])
        stats = GameSpendStats(0, 3, float(spends.mean()), float(spends.std()))
        moved = GameSpendStats(0, 3, scale * stats.mean + shift, scale * stats.std)
        for s in spends:
            assert game_sided(scale * s + shift, moved) == pytest.approx(game_sided(s, stats))

    def test_user_sided_ignores_currency_scale(self):
        assert user_sided(36.0, 1500.0, 50, 7.0) == pytest.approx(user_sided(12.0, 500.0, 50, 7.0 / 3.0))
        assert user_sided(36.0, 0.0, 0, 21.0) == pytest.approx(user_sided(12.0, 0.0, 0, 7.0))

    def test_array_inputs_match_scalar_calls(self):
        spends = np.array([30.0, 7.0, 12.0, 5.0])
        columns = GameColumns(
            mean=np.array([20.0, 7.0, 0.0, 10.0]),
            std=np.array([8.0, 0.0, 0.0, 5.0]),
            cold=np.array([False, False, True, False]),
        )
        t180 = np.array([500.0, 0.0, 90.0, 40.0])
        f180 = np.array([50, 0, 3, 2])
        g = game_sided(spends, columns)
        u = user_sided(spends, t180, f180, 16.0)
        norm = NormStats(scheme="bs", g_mean=0.2, g_std=1.5, u_mean=0.8, u_std=0.4)
        both = combine_both_sided(g, u, norm, columns.cold)
        for i in range(4):
            stats = GameSpendStats(0, 2, float(columns.mean[i]), float(columns.std[i]))
            assert g[i] == pytest.approx(game_sided(float(spends[i]), stats))
            assert u[i] == pytest.approx(user_sided(float(spends[i]), float(t180[i]), int(f180[i]), 16.0))
            g_i = None if columns.cold[i] else g[i]
            assert both[i] == pytest.approx(combine_both_sided(g_i, float(u[i]), norm))

    def test_label_dispersion(self):
        assert label_dispersion(np.array([1.0, 1.0, 1.0])) == 0.0
        assert label_dispersion(np.array([1.0, 3.0])) == pytest.approx(0.5)
        assert label_dispersion(np.zeros(3)) == 0.0


def test_scheme_parse():
    assert Scheme.parse("BS") is Scheme.BS
    assert Scheme.parse(Scheme.LOG) is Scheme.LOG
    with pytest.raises(ConfigError, match="Valid schemes"):
        Scheme.parse("zscore")


class TestTransform:
    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_zero_spend_rows_get_zero(self, tiny_ds, scheme):
        targets = LabelStandardizer.fit(tiny_ds, scheme).transform(tiny_ds)
        np.testing.assert_array_equal(targets[tiny_ds.spends == 0], 0.0)
        assert np.all(np.isfinite(targets))

    def test_ov_and_log(self, tiny_ds):
        np.testing.assert_array_equal(LabelStandardizer.fit(tiny_ds, "ov").transform(tiny_ds), tiny_ds.spends)
        np.testing.assert_allclose(
            LabelStandardizer.fit(tiny_ds, "log").transform(tiny_ds), np.log1p(tiny_ds.spends)
        )

    def test_gs_values(self, tiny_ds):
        targets = LabelStandardizer.fit(tiny_ds, "gs").transform(tiny_ds)
        # game 0 spends {10, 20, 30}; game 2 spends {5, 15}
        np.testing.assert_allclose(targets[[0, 2, 4]], np.array([-10.0, 0.0, 10.0]) / 8.16496580927726)
        np.testing.assert_allclose(targets[[3, 6]], [-1.0, 1.0])

    def test_us_values(self, tiny_ds):
        targets = LabelStandardizer.fit(tiny_ds, "us").transform(tiny_ds)
        # user 1 averages 10, user 2 averages 20, user 3 is cold: global mean 16
        np.testing.assert_allclose(targets[[0, 2, 3, 4, 6]], [1.0, 1.0, 0.25, 30 / 16, 15 / 16])

    def test_gs_cold_game_is_zero(self, tiny_ds):
        std = LabelStandardizer.fit(tiny_ds, "gs")
        fresh = make_dataset([(1, 9, 5, 12.0)], {1: ([3, 4], 100.0, 10)})
        np.testing.assert_array_equal(std.transform(fresh), [0.0])

    def test_bs_cold_game_uses_user_side(self, tiny_ds):
        std = LabelStandardizer.fit(tiny_ds, "bs")
        fresh = make_dataset([(1, 9, 5, 12.0)], {1: ([3, 4], 100.0, 10)})
        n = std.norm
        expected = (12.0 / 10.0 - n.u_mean) / n.u_std
        np.testing.assert_allclose(std.transform(fresh), [expected])

    def test_bs_is_weighted_sum(self, tiny_ds):
        std = LabelStandardizer.fit(tiny_ds, "bs", g_weight=0.3, u_weight=0.7)
        n = std.norm
        g = (30.0 - 20.0) / 8.16496580927726
        u = 30.0 / 16.0
        expected = 0.3 * (g - n.g_mean) / n.g_std + 0.7 * (u - n.u_mean) / n.u_std
        assert std.transform(tiny_ds)[4] == pytest.approx(expected)

    def test_norm_stats_populations(self, tiny_ds):
        n = LabelStandardizer.fit(tiny_ds, "bs").norm
        # game-sided population covers rows whose game has stats, zeros included
        g = np.array([-10.0 / 8.16496580927726, 0.0, -1.0, 10.0 / 8.16496580927726, 1.0])
        assert n.g_mean == pytest.approx(g.mean())
        assert n.g_std == pytest.approx(g.std())
        u = np.array([1.0, 0.0, 1.0, 0.25, 30 / 16, 0.0, 15 / 16])
        assert n.u_mean == pytest.approx(u.mean())
        assert n.u_std == pytest.approx(u.std())
        assert n.global_mean_nonzero == pytest.approx(16.0)

    def test_fit_once_apply_to_other_split(self, small_ds):
        train = small_ds.take(np.flatnonzero(small_ds.days <= 4))
        test = small_ds.take(np.flatnonzero(small_ds.days > 4))
        std = LabelStandardizer.fit(train, "bs")
        again = LabelStandardizer.fit(train, "bs")
        np.testing.assert_array_equal(std.transform(test), again.transform(test))

    def test_bs_matches_per_row_formulas(self, tiny_ds):
        std = LabelStandardizer.fit(tiny_ds, "bs")
        targets = std.transform(tiny_ds)
        for i, (user, game, spend) in enumerate(zip(tiny_ds.users, tiny_ds.games, tiny_ds.spends)):
            if spend == 0:
                assert targets[i] == 0.0
                continue
            profile = tiny_ds.profiles[int(user)]
            stats = std.game_stats.get(int(game))
            g = None if stats is None else game_sided(float(spend), stats)
            u = user_sided(float(spend), profile.total_spend_180, profile.payment_count_180, std.norm.global_mean_nonzero)
            assert targets[i] == pytest.approx(combine_both_sided(g, u, std.norm))

    def test_us_ignores_currency_scale(self):
        rows = [(1, 0, 1, 10.0), (1, 1, 2, 4.0), (2, 0, 1, 6.0), (3, 1, 2, 8.0)]
        profiles = {1: ([3], 100.0, 10), 2: ([4], 30.0, 2), 3: ([5], 0.0, 0)}
        base = make_dataset(rows, profiles)
        scaled = make_dataset(
            [(u, g, d, 3.0 * s) for u, g, d, s in rows],
            {u: (h, 3.0 * t, f) for u, (h, t, f) in profiles.items()},
        )
        np.testing.assert_allclose(
            LabelStandardizer.fit(scaled, "us").transform(scaled),
            LabelStandardizer.fit(base, "us").transform(base),
        )

    def test_gs_ignores_currency_scale(self, tiny_ds):
        rows = list(zip(tiny_ds.users, tiny_ds.games, tiny_ds.days, 2.5 * tiny_ds.spends))
        profiles = {u: (p.download_history, p.total_spend_180, p.payment_count_180) for u, p in tiny_ds.profiles.items()}
        scaled = make_dataset(rows, profiles)
        np.testing.assert_allclose(
            LabelStandardizer.fit(scaled, "gs").transform(scaled),
            LabelStandardizer.fit(tiny_ds, "gs").transform(tiny_ds),
        )


class TestInverse:
    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_recovers_paid_spends(self, small_ds, scheme):
        std = LabelStandardizer.fit(small_ds, scheme)
        targets = std.transform(small_ds)
        spend = std.inverse(targets, small_ds)
        paid = small_ds.spends > 0
        if scheme is Scheme.GS:
            # games with a single payment carry no spread to invert
            usable = np.array([not std.game_stats[int(g)].degenerate for g in small_ds.games[paid]])
            np.testing.assert_allclose(spend[paid][usable], small_ds.spends[paid][usable], rtol=1e-8)
        else:
            np.testing.assert_allclose(spend[paid], small_ds.spends[paid], rtol=1e-8)

    @pytest.mark.parametrize("scheme", ALL_SCHEMES)
    def test_clipped_at_zero(self, tiny_ds, scheme):
        std = LabelStandardizer.fit(tiny_ds, scheme)
        assert np.all(std.inverse(np.full(len(tiny_ds), -1e6), tiny_ds) >= 0.0)


def test_dict_round_trip_keeps_transform(small_ds):
    std = LabelStandardizer.fit(small_ds, "bs")
    again = LabelStandardizer.from_dict(std.to_dict())
    assert again.scheme is Scheme.BS
    np.testing.assert_array_equal(again.transform(small_ds), std.transform(small_ds))


def test_write_labeled(tmp_path, tiny_ds):
    labeled = standardize_dataset(tiny_ds, "us")
    write_labeled(labeled, str(tmp_path), "labeled.jsonl")
    rows = [obj for _, obj in iter_jsonl(str(tmp_path / "labeled.jsonl"))]
    assert len(rows) == len(tiny_ds)
    assert rows[0] == {"user": 1, "game": 0, "day": 1, "spend": 10.0, "target": 1.0}


def test_read_labeled_round_trips_targets(tmp_path, tiny_ds):
    labeled = standardize_dataset(tiny_ds, "gs")
    write_labeled(labeled, str(tmp_path), "labeled.jsonl")
    records = read_labeled(str(tmp_path / "labeled.jsonl"))
    np.testing.assert_allclose([r.target for r in records], labeled.targets)
    assert [r.user for r in records] == tiny_ds.users.tolist()


def test_read_labeled_rejects_missing_target(tmp_path):
    path = tmp_path / "labeled.jsonl"
    path.write_text('{"user": 1, "game": 0, "day": 1, "spend": 2.0, "target": 0.5}\n{"user": 1, "game": 1, "day": 1, "spend": 0.0}\n')
    with pytest.raises(DataError) as exc:
        read_labeled(str(path))
    assert exc.value.row == 2
    assert exc.value.column == "target"
