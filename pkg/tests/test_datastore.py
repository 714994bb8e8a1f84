import json

import numpy as np
import pandas as pd
import pytest

import datastore
from datastore import (
    CategoryTaxonomy,
    DatastoreError,
    GraphError,
    IncomeTableError,
    PurchaseEvent,
    TaxonomyError,
    UserProfile,
    build_graph,
    category_key,
    events_frame,
    ingest_and_filter,
    join_income,
    load_dataset_dir,
    normalize_age,
    normalize_gender,
    normalize_zip,
)
from receipt_parser import item_key

from conftest import EDGES, LEAVES, WINDOW, purchase_records


def bulk_records(user, n, start=WINDOW[0]):
    return [{'user_id': user, 'ts': start + i * 60, 'item_id': 'i1', 'item_name': 'Widget',
             'price_cents': 100, 'order_id': f'{user}{i}', 'merchant_id': 'm'} for i in range(n)]


class TestRecords:
    def test_negative_price_event(self):
        with pytest.raises(DatastoreError):
            PurchaseEvent('u', 0, 'A', 'i1', -1, 'o', 'm')

    def test_record_round_trip_keeps_category(self):
        e = PurchaseEvent('u', 10, 'A', 'i1', 100, 'o', 'm', ('Books', 'Fiction', 'Novels'))
        rec = e.to_record()
        assert rec['cat3'] == 'Novels'
        assert PurchaseEvent.from_record(rec) == e

    @pytest.mark.parametrize('kwargs', [
        {'gender': 'other'}, {'age': 12}, {'age': 111}, {'zip': '1234'}, {'zip': 'abcde'},
    ])
    def test_profile_invariants(self, kwargs):
        with pytest.raises(DatastoreError):
            UserProfile('u', **kwargs)

    @pytest.mark.parametrize('raw, value', [
        ('F', 'female'), (' Male ', 'male'), ('w', 'female'), ('x', 'unknown'), (None, 'unknown'), ('', 'unknown'),
    ])
    def test_normalize_gender(self, raw, value):
        assert normalize_gender(raw) == value

    def test_normalize_age_and_zip(self):
        assert normalize_age('42') == 42
        assert normalize_age('42.0') == 42
        assert normalize_age('7') is None
        assert normalize_age('old') is None
        assert normalize_zip('90292-1234') == '90292'
        assert normalize_zip('9029') is None
        assert normalize_zip(float('nan')) is None


class TestTaxonomy:
    def test_rejects_shallow_leaf(self):
        frame = pd.DataFrame([('i1', 'Books', 'Fiction', '')], columns=['item_id', 'cat1', 'cat2', 'cat3'])
        with pytest.raises(TaxonomyError):
            CategoryTaxonomy.from_frame(frame)

    def test_rejects_item_with_two_leaves(self):
        frame = pd.DataFrame([('i1', 'Books', 'Fiction', 'Novels'), ('i1', 'Books', 'Fiction', 'Poetry')],
                             columns=['item_id', 'cat1', 'cat2', 'cat3'])
        with pytest.raises(TaxonomyError, match='two leaves'):
            CategoryTaxonomy.from_frame(frame)

    def test_node_count(self, small_dataset):
        # Books, Pet Supplies, Electronics, Home & Garden; five level-2 and five leaves
        assert small_dataset.taxonomy.node_count == 4 + 5 + 5

    def test_events_take_taxonomy_leaf(self, small_dataset):
        novel = small_dataset.events[small_dataset.events['item_name'] == 'Novel']
        assert set(novel['cat3']) == {'Novels'}

    def test_conflicting_path_is_rejected(self, records):
        records[0].update(cat1='Toys', cat2='Dolls', cat3='Rag')
        taxonomy = CategoryTaxonomy({item_key(n): p for n, p in LEAVES.items()})
        dataset, rejected = ingest_and_filter(records, {}, taxonomy, window=WINDOW)
        assert len(rejected) == 1
        assert rejected[0][1] == 'category path conflicts with taxonomy'
        assert len(dataset) == len(records) - 1

    def test_category_key(self, small_dataset):
        ev = small_dataset.user_events('bob')
        assert list(category_key(ev, 2)) == ['Electronics/Phones', 'Home & Garden/Lighting', 'Electronics/Phones']
        unlabelled = events_frame(bulk_records('u', 1))
        assert category_key(unlabelled, 1).isna().all()
        with pytest.raises(DatastoreError):
            category_key(ev, 4)


class TestIngest:
    def test_user_above_cap_removed(self):
        events = bulk_records('big', 1001) + bulk_records('edge', 1000)
        dataset, rejected = ingest_and_filter(events, {}, max_purchases=1000)
        assert rejected == []
        assert dataset.users == ['edge']
        assert len(dataset) == 1000
        assert dataset.provenance['users_removed'] == 1
        assert dataset.provenance['events_removed'] == 1001

    def test_empty_event_list(self):
        dataset, rejected = ingest_and_filter([], {})
        assert len(dataset) == 0 and dataset.users == [] and rejected == []
        assert dataset.provenance['users_removed'] == 0

    def test_bad_records_are_returned_not_raised(self, records):
        records[0]['price_cents'] = -5
        records[1]['user_id'] = None
        records[2]['ts'] = WINDOW[1]
        dataset, rejected = ingest_and_filter(records, {}, window=WINDOW)
        assert sorted(reason for _, reason in rejected) == [
            'missing user id', 'negative price', 'timestamp outside window']
        assert len(dataset) == len(records) - 3
        assert dataset.provenance['records_rejected'] == 3

    def test_events_sorted_per_user(self, records):
        dataset, _ = ingest_and_filter(list(reversed(records)), {}, window=WINDOW)
        for user in dataset.users:
            ts = dataset.user_events(user)['ts'].to_numpy()
            assert np.all(np.diff(ts) >= 0)
        assert dataset.users == ['alice', 'bob', 'carol']

    def test_unknown_user_profile(self, small_dataset):
        assert small_dataset.profile('zed') == UserProfile('zed')
        assert small_dataset.user_events('zed').empty
        assert small_dataset.purchase_counts().to_dict() == {'alice': 4, 'bob': 3, 'carol': 1}


class TestJoinIncome:
    def test_join(self):
        profiles = {'a': UserProfile('a', zip='90292'), 'b': UserProfile('b')}
        joined = join_income(profiles, {'90292': 75000})
        assert joined['a'].income_cents == 7500000
        assert joined['b'].income_cents is None

    def test_duplicate_zip(self):
        table = pd.DataFrame({'zip': ['90292', '90292'], 'median_income_usd': [1, 2]})
        with pytest.raises(IncomeTableError):
            join_income({}, table)

    def test_unknown_zip_in_table_gives_no_income(self, small_dataset):
        assert small_dataset.profile('alice').income_cents == 5000000
        assert small_dataset.profile('carol').income_cents is None


class TestGraph:
    def test_summed_counts(self):
        graph = build_graph([('a', 'b', 3), ('b', 'a', 2), ('c', 'd', 4), ('d', 'c', 0)])
        assert graph.edges() == [('a', 'b')]
        assert graph.counts[('a', 'b')] == 5

    def test_triangle_contact_levels(self):
        graph = build_graph([('a', 'b', 5), ('b', 'c', 5)], shoppers={'a', 'c'})
        assert graph.contacts('a', 1) == {'b'}
        assert graph.contacts('c', 1) == {'b'}
        assert graph.contacts('c', 2) == {'a'}
        assert graph.contacts('b', 2) == frozenset()
        with pytest.raises(GraphError):
            graph.contacts('a', 3)

    def test_self_loops_dropped(self, small_graph):
        assert small_graph.self_loops_dropped == 1
        assert not small_graph.has_edge('carol', 'carol')
        assert small_graph.edges() == [('alice', 'bob'), ('alice', 'carol'), ('bob', 'dave')]
        assert small_graph.contacts('alice', 2) == {'dave'}

    def test_retention_is_monotone(self, small_graph):
        for threshold in (6, 7, 8, 11):
            stricter = build_graph(EDGES, min_messages=threshold)
            assert set(stricter.edges()) <= set(small_graph.edges())

    def test_negative_count(self):
        with pytest.raises(GraphError):
            build_graph([('a', 'b', -1)])


class TestFiles:
    def test_directory_round_trip(self, dataset_dir, small_dataset):
        loaded, rejected = load_dataset_dir(dataset_dir)
        assert rejected == []
        assert (loaded.t_start, loaded.t_end) == WINDOW
        key = ['user_id', 'ts', 'order_id', 'item_name']
        a = loaded.events.sort_values(key).reset_index(drop=True)
        b = small_dataset.events.sort_values(key).reset_index(drop=True)
        pd.testing.assert_frame_equal(a, b)
        assert loaded.profiles == small_dataset.profiles

    def test_manifest(self, dataset_dir):
        manifest = json.loads((dataset_dir / datastore.MANIFEST_FILE).read_text())
        assert manifest['t_start'] == WINDOW[0]
        assert manifest['provenance']['max_purchases'] == datastore.MAX_PURCHASES

    def test_zip_timezone(self, dataset_dir):
        assert datastore.load_zip_timezone(dataset_dir / datastore.ZIP_TIMEZONE_FILE) == {
            '10001': -300, '94105': -480}

    def test_graph_dir(self, dataset_dir):
        graph = datastore.load_graph_dir(dataset_dir, shoppers={'alice', 'bob', 'carol'})
        assert len(graph) == 3

    def test_missing_events_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset_dir(tmp_path)

    def test_events_file_from_records(self, tmp_path):
        path = tmp_path / 'events.jsonl'
        datastore.write_events(purchase_records(), path)
        frame = datastore.load_events(path)
        assert len(frame) == len(purchase_records())
        assert frame['cat1'].isna().all()
