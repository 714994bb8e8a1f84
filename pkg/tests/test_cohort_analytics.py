import numpy as np
import pandas as pd
import pytest

from cohort_analytics import (
    AnalyticsError,
    age_bucket,
    distinctive_categories,
    distribution,
    group_stats,
    log_edges,
    metric_values,
    price_popularity,
    select_users,
    spearman,
    stats_frame,
    top_items,
)
from datastore import UserProfile, ingest_and_filter


class TestGroupStats:
    def test_age_buckets(self):
        assert age_bucket(18) == '18-22'
        assert age_bucket(22) == '18-22'
        assert age_bucket(23) == '23-27'
        assert age_bucket(17) == 'other'
        assert age_bucket(90) == 'other'
        assert age_bucket(None) == 'unknown'

    def test_gender_age_table(self, small_dataset):
        stats = {g.group: g for g in group_stats(small_dataset)}
        assert list(stats) == ['female/23-27', 'female/28-32', 'male/38-42', 'male/48-52']
        alice = stats['female/23-27']
        assert (alice.population, alice.shoppers, alice.purchases) == (1, 1, 4)
        assert alice.total_spend_cents == 4500
        assert alice.mean_price_cents == pytest.approx(1125.0)
        dave = stats['male/48-52']
        assert dave.shopper_fraction == 0.0
        assert dave.purchases_per_shopper == 0.0

    def test_population_outside_dataset(self, small_dataset):
        population = dict(small_dataset.profiles)
        population['erin'] = UserProfile('erin', 'female', 24)
        stats = {g.group: g for g in group_stats(small_dataset, population)}
        assert stats['female/23-27'].population == 2
        assert stats['female/23-27'].shopper_fraction == 0.5

    def test_income_grouping(self, small_dataset):
        frame = stats_frame(group_stats(small_dataset, grouping='income', n_income_buckets=2))
        assert frame['group'].iloc[-1] == 'unknown'
        assert frame['population'].sum() == 4
        assert frame.loc[frame['group'] == 'unknown', 'shoppers'].item() == 1

    def test_income_needs_join(self, records):
        dataset, _ = ingest_and_filter(records, {})
        with pytest.raises(AnalyticsError):
            group_stats(dataset, grouping='income')

    def test_unknown_grouping(self, small_dataset):
        with pytest.raises(AnalyticsError):
            group_stats(small_dataset, grouping='zodiac')


class TestDistinctive:
    def test_select_users(self, small_dataset):
        assert select_users(small_dataset, gender='female') == {'alice', 'carol'}
        assert select_users(small_dataset, age_range=(30, 60)) == {'bob', 'carol'}
        assert select_users(small_dataset, gender='male', shoppers_only=False) == {'bob', 'dave'}

    def test_level_one(self, small_dataset):
        frame = distinctive_categories(small_dataset, {'alice', 'carol'}, {'bob'}, level=1, top_k=2)
        assert list(frame['side']) == ['a', 'a', 'b', 'b']
        assert list(frame['category']) == ['Books', 'Pet Supplies', 'Electronics', 'Home & Garden']
        books = frame.iloc[0]
        assert books['share_a'] == pytest.approx(0.6)
        assert books['share_b'] == 0.0
        assert books['diff'] == pytest.approx(0.6)
        assert books['z'] > 0 and 0 < books['p_value'] < 1

    def test_item_level(self, small_dataset):
        frame = distinctive_categories(small_dataset, {'alice'}, {'carol'}, level='item', top_k=1)
        # carol only bought the Novel, alice bought it once out of four
        assert frame.iloc[-1]['category'] == 'Novel'
        assert frame.iloc[-1]['side'] == 'b'

    @staticmethod
    def labelled(purchases):
        """Dataset from (user, level-1 category or None) pairs."""
        rows = [{'user_id': user, 'ts': 1000 + i, 'item_id': f'i{i}', 'item_name': f'item {i}',
                 'price_cents': 100, 'order_id': f'o{i}', 'merchant_id': 'm', 'cat1': cat}
                for i, (user, cat) in enumerate(purchases)]
        dataset, _ = ingest_and_filter(rows, {})
        return dataset

    def test_share_counts_uncategorized_purchases(self):
        dataset = self.labelled([('a', 'X'), ('a', None), ('a', None), ('a', None), ('b', 'X')])
        frame = distinctive_categories(dataset, {'a'}, {'b'}, top_k=5)
        assert list(frame['category']) == ['X', 'X']
        row = frame[frame['side'] == 'b'].iloc[0]
        assert row['share_a'] == pytest.approx(0.25) and row['share_b'] == 1.0
        assert row['diff'] == pytest.approx(-0.75)

    def test_disjoint_groups_rank_both_sides(self):
        dataset = self.labelled([('a', 'X'), ('a', 'X'), ('b', 'Y'), ('b', 'Y'), ('b', 'Y')])
        frame = distinctive_categories(dataset, {'a'}, {'b'}, top_k=2)
        a_side = frame[frame['side'] == 'a']
        b_side = frame[frame['side'] == 'b']
        assert list(a_side['category']) == ['X', 'Y']
        assert list(b_side['category']) == ['Y', 'X']
        assert b_side.iloc[0]['diff'] == -1.0 and a_side.iloc[0]['diff'] == 1.0

    def test_group_against_itself(self, small_dataset):
        users = {'alice', 'bob', 'carol'}
        frame = distinctive_categories(small_dataset, users, users, level=2, top_k=10)
        assert (frame['diff'] == 0).all() and (frame['z'] == 0).all() and (frame['p_value'] == 1).all()

    def test_identical_distributions(self):
        dataset = self.labelled([('u1', 'X'), ('u1', 'Y'), ('u2', 'Y'), ('u2', 'X')])
        frame = distinctive_categories(dataset, {'u1'}, {'u2'})
        assert len(frame) == 4
        assert (frame['diff'] == 0).all()

    def test_empty_group(self, small_dataset):
        with pytest.raises(AnalyticsError):
            distinctive_categories(small_dataset, {'dave'}, {'bob'})
        with pytest.raises(AnalyticsError):
            distinctive_categories(small_dataset, {'alice'}, {'bob'}, level=4)


class TestDistributions:
    def test_metric_values(self, small_dataset):
        assert sorted(metric_values(small_dataset, 'purchases_per_user')) == [1, 3, 4]
        assert sorted(metric_values(small_dataset, 'spend_per_user')) == [1000, 4500, 11500]
        with pytest.raises(AnalyticsError):
            metric_values(small_dataset, 'height')

    def test_log_edges(self):
        edges = log_edges(1000, 3)
        assert edges[0] == 1 and edges[-1] == 1001
        assert np.all(np.diff(edges) > 0)
        assert log_edges(10, 2, with_zero=True)[0] == 0

    def test_pdf_and_cdf(self, small_dataset):
        frame = distribution(small_dataset, 'purchases_per_user', n_bins=5)
        assert frame['count'].sum() == 3
        assert frame['pdf'].sum() == pytest.approx(1.0)
        assert frame['cdf'].iloc[-1] == pytest.approx(1.0)
        assert (frame['count'] > 0).all()

    def test_spearman(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
        assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
        assert spearman([1, 1, 1], [1, 2, 3]) == 0.0
        assert spearman([1], [1]) == 0.0

    def test_price_popularity(self, small_dataset):
        bins, rho = price_popularity(small_dataset, n_price_bins=3)
        assert bins['n_items'].sum() == 5
        assert -1.0 <= rho <= 1.0
        np.testing.assert_array_less(bins['price_lo_cents'], bins['price_hi_cents'])

    def test_cheaper_items_sell_more(self):
        # item k costs 100 * 2^k and is bought 2^(6-k) times
        rows = []
        for k in range(6):
            for i in range(2 ** (6 - k)):
                rows.append({'user_id': f'u{i}', 'ts': 1000 + k * 10 + i, 'item_id': f'i{k}',
                             'item_name': f'item {k}', 'price_cents': 100 * 2 ** k,
                             'order_id': f'o{k}-{i}', 'merchant_id': 'm'})
        dataset, _ = ingest_and_filter(rows, {})
        _, rho = price_popularity(dataset, n_price_bins=4)
        assert rho == pytest.approx(-1.0)


class TestTopItems:
    def test_by_count_and_spend(self, small_dataset):
        by_count = top_items(small_dataset, 'count', top_k=3)
        assert list(by_count['purchases']) == [2, 2, 2]
        assert set(by_count['item_name']) == {'Novel', 'Kibble', 'Phone Case'}
        by_spend = top_items(small_dataset, 'spend', top_k=1)
        assert by_spend['item_name'].item() == 'Phone Case'
        assert by_spend['spend_cents'].item() == 10000

    def test_unknown_ranking(self, small_dataset):
        with pytest.raises(AnalyticsError):
            top_items(small_dataset, 'weight')

    def test_frame_columns(self, small_dataset):
        frame = top_items(small_dataset)
        assert list(frame.columns) == ['item_id', 'item_name', 'purchases', 'spend_cents']
        assert isinstance(frame, pd.DataFrame)
