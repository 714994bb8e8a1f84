"""Shared fixtures: a hand-built four-person dataset and small synthetic populations."""

import pandas as pd
import pytest

import datastore
import synthgen
from datastore import CategoryTaxonomy, UserProfile, build_graph, ingest_and_filter, join_income
from receipt_parser import item_key

DAY = 86400
# 2014-02-01 (a Saturday) .. 2014-10-01, UTC
WINDOW = (1391212800, 1412121600)

LEAVES = {
    'Novel': ('Books', 'Fiction', 'Novels'),
    'Atlas': ('Books', 'Reference', 'Maps'),
    'Kibble': ('Pet Supplies', 'Food', 'Dry'),
    'Phone Case': ('Electronics', 'Phones', 'Cases'),
    'Lamp': ('Home & Garden', 'Lighting', 'Lamps'),
}

# user, local == UTC time, item, price in cents, order id, merchant
PURCHASES = [
    ('alice', '2014-02-03 10:00', 'Novel', 1000, 'A1', 'bookbarn'),
    ('alice', '2014-02-03 10:00', 'Kibble', 500, 'A1', 'bookbarn'),
    ('alice', '2014-02-10 09:00', 'Atlas', 2500, 'A2', 'bookbarn'),
    ('alice', '2014-03-12 09:00', 'Kibble', 500, 'A3', 'petpantry'),
    ('bob', '2014-02-09 20:00', 'Phone Case', 5000, 'B1', 'gadgetgrove'),
    ('bob', '2014-02-16 20:00', 'Lamp', 1500, 'B2', 'homehaven'),
    ('bob', '2014-03-03 08:00', 'Phone Case', 5000, 'B3', 'gadgetgrove'),
    ('carol', '2014-02-17 12:00', 'Novel', 1000, 'C1', 'bookbarn'),
]

PROFILES = [
    UserProfile('alice', 'female', 25, '10001'),
    UserProfile('bob', 'male', 40, '94105'),
    UserProfile('carol', 'female', 31, None),
    UserProfile('dave', 'male', 52, '10001'),
]

ZIP_INCOME = pd.DataFrame({'zip': ['10001', '94105'], 'median_income_usd': [50000, 120000]})

EDGES = pd.DataFrame(
    [('alice', 'bob', 3), ('bob', 'alice', 3), ('alice', 'carol', 10), ('bob', 'dave', 7),
     ('carol', 'carol', 9), ('bob', 'carol', 2)],
    columns=['src', 'dst', 'count'],
)


def utc(text):
    return int(pd.Timestamp(text, tz='UTC').timestamp())


def purchase_records(rows=PURCHASES):
    return [{
        'user_id': user, 'ts': utc(when), 'item_id': item_key(item), 'item_name': item,
        'price_cents': price, 'order_id': order, 'merchant_id': merchant,
    } for user, when, item, price, order, merchant in rows]


def taxonomy():
    return CategoryTaxonomy({item_key(name): path for name, path in LEAVES.items()})


@pytest.fixture
def at():
    """'2014-02-03 10:00' -> UTC epoch seconds."""
    return utc


@pytest.fixture
def records():
    return purchase_records()


@pytest.fixture
def small_dataset():
    profiles = join_income({p.user_id: p for p in PROFILES}, ZIP_INCOME)
    dataset, rejected = ingest_and_filter(purchase_records(), profiles, taxonomy(), window=WINDOW)
    assert rejected == []
    return dataset


@pytest.fixture
def small_graph(small_dataset):
    return build_graph(EDGES, shoppers=set(small_dataset.users))


@pytest.fixture
def dataset_dir(tmp_path, small_dataset):
    """The small dataset written out in the on-disk layout the cli reads."""
    directory = tmp_path / 'data'
    datastore.write_dataset_dir(small_dataset, directory)
    ZIP_INCOME.to_csv(directory / datastore.ZIP_INCOME_FILE, index=False)
    EDGES.to_csv(directory / datastore.EDGES_FILE, index=False)
    pd.DataFrame({'zip': ['10001', '94105'], 'utc_offset_minutes': [-300, -480]}).to_csv(
        directory / datastore.ZIP_TIMEZONE_FILE, index=False)
    return directory


@pytest.fixture(scope='session')
def synth_small():
    """A few hundred synthetic users with every cheap effect switched on."""
    config = synthgen.SynthConfig(seed=11, n_users=300, weekly_buyer_frac=0.05, consumable_frac=0.1,
                                  bulk_accounts=1, homophily=0.3, gender_assortativity=0.3)
    return synthgen.generate(config)
