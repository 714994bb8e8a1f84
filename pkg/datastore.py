"""
Purchase log, user profiles, category taxonomy and e-mail contact graph.

Holds the dataset every analysis reads and applies the dataset filters:
users above the bulk-account cap are dropped, e-mail edges need a minimum
number of exchanged messages, zip codes join their median income.
"""

import json
import logging
import os
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from functools import cached_property
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MAX_PURCHASES = int(os.getenv('PURCHASES_MAX_PURCHASES', 1000))
MIN_MESSAGES = 5
AGE_RANGE = (13, 110)
GENDERS = ('female', 'male', 'unknown')

EVENT_COLUMNS = [
    'user_id', 'ts', 'item_id', 'item_name', 'price_cents',
    'order_id', 'merchant_id', 'cat1', 'cat2', 'cat3',
]
CATEGORY_COLUMNS = ['cat1', 'cat2', 'cat3']

# file names of a dataset directory
EVENTS_FILE = 'events.jsonl'
PROFILES_FILE = 'profiles.csv'
TAXONOMY_FILE = 'taxonomy.csv'
ZIP_INCOME_FILE = 'zip_income.csv'
ZIP_TIMEZONE_FILE = 'zip_timezone.csv'
EDGES_FILE = 'edges.csv'
MANIFEST_FILE = 'manifest.json'


class DatastoreError(ValueError):
    pass


class TaxonomyError(DatastoreError):
    pass


class GraphError(DatastoreError):
    pass


class IncomeTableError(DatastoreError):
    pass


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PurchaseEvent:
    """One item bought by one user at one instant (UTC epoch seconds)."""
    user_id: str
    timestamp: int
    item_name: str
    item_id: str
    price_cents: int
    order_id: str
    merchant_id: str
    category: tuple = ()

    def __post_init__(self):
        if self.price_cents < 0:
            raise DatastoreError(f'negative price for item {self.item_name!r}')

    def to_record(self):
        cats = list(self.category) + [None] * (3 - len(self.category))
        return {
            'user_id': self.user_id,
            'ts': int(self.timestamp),
            'item_id': self.item_id,
            'item_name': self.item_name,
            'price_cents': int(self.price_cents),
            'order_id': self.order_id,
            'merchant_id': self.merchant_id,
            'cat1': cats[0],
            'cat2': cats[1],
            'cat3': cats[2],
        }

    @classmethod
    def from_record(cls, rec):
        path = []
        for col in CATEGORY_COLUMNS:
            val = rec.get(col)
            if _blank(val):
                break
            path.append(str(val))
        return cls(
            user_id=str(rec['user_id']),
            timestamp=int(rec['ts']),
            item_name=str(rec['item_name']),
            item_id=str(rec['item_id']),
            price_cents=int(rec['price_cents']),
            order_id=str(rec['order_id']),
            merchant_id=str(rec['merchant_id']),
            category=tuple(path),
        )


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    gender: str = 'unknown'
    age: int = None
    zip: str = None
    income_cents: int = None

    def __post_init__(self):
        if self.gender not in GENDERS:
            raise DatastoreError(f'bad gender {self.gender!r} for user {self.user_id}')
        if self.age is not None and not (AGE_RANGE[0] <= self.age <= AGE_RANGE[1]):
            raise DatastoreError(f'age {self.age} out of range for user {self.user_id}')
        if self.zip is not None and not (len(self.zip) == 5 and self.zip.isdigit()):
            raise DatastoreError(f'bad zip {self.zip!r} for user {self.user_id}')


def _blank(val):
    if val is None:
        return True
    if isinstance(val, float) and np.isnan(val):
        return True
    return val is pd.NA or (isinstance(val, str) and not val.strip())


def normalize_gender(value):
    g = '' if _blank(value) else str(value).strip().lower()
    if g in ('female', 'f', 'woman', 'w'):
        return 'female'
    if g in ('male', 'm', 'man'):
        return 'male'
    return 'unknown'


def normalize_age(value):
    if _blank(value):
        return None
    try:
        age = int(float(value))
    except (TypeError, ValueError):
        return None
    return age if AGE_RANGE[0] <= age <= AGE_RANGE[1] else None


def normalize_zip(value):
    if _blank(value):
        return None
    z = str(value).strip().split('-')[0]
    if z.isdigit() and len(z) == 5:
        return z
    return None


# ---------------------------------------------------------------------------
# taxonomy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CategoryTaxonomy:
    """Depth-3 category tree given as item_id -> (level1, level2, level3)."""
    leaves: dict = field(default_factory=dict)

    def leaf(self, item_id):
        return self.leaves.get(item_id)

    def nodes(self, level):
        return {leaf[:level] for leaf in self.leaves.values()}

    @property
    def node_count(self):
        return sum(len(self.nodes(level)) for level in (1, 2, 3))

    @classmethod
    def from_frame(cls, frame):
        leaves = {}
        for row_no, row in enumerate(frame.itertuples(index=False), start=2):
            item_id = str(row.item_id)
            path = tuple('' if _blank(v) else str(v).strip() for v in (row.cat1, row.cat2, row.cat3))
            if not all(path):
                raise TaxonomyError(f'taxonomy row {row_no}: leaf for {item_id!r} is not 3 levels deep')
            if leaves.get(item_id, path) != path:
                raise TaxonomyError(f'taxonomy row {row_no}: item {item_id!r} maps to two leaves')
            leaves[item_id] = path
        return cls(leaves)

    def to_frame(self):
        rows = [(item_id,) + path for item_id, path in sorted(self.leaves.items())]
        return pd.DataFrame(rows, columns=['item_id'] + CATEGORY_COLUMNS)


# ---------------------------------------------------------------------------
# dataset
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Immutable snapshot: events sorted per user by time, plus side tables."""
    events: pd.DataFrame
    profiles: dict
    taxonomy: CategoryTaxonomy
    t_start: int
    t_end: int
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.events)

    @cached_property
    def _user_rows(self):
        return self.events.groupby('user_id', sort=True).indices

    @property
    def users(self):
        return list(self._user_rows)

    def user_events(self, user_id):
        rows = self._user_rows.get(user_id)
        if rows is None:
            return self.events.iloc[0:0]
        return self.events.iloc[rows]

    def profile(self, user_id):
        return self.profiles.get(user_id) or UserProfile(user_id)

    def purchase_counts(self):
        return self.events.groupby('user_id', sort=True).size()

    @property
    def window_days(self):
        return (self.t_end - self.t_start) / 86400.0


def empty_events():
    frame = pd.DataFrame({col: pd.Series(dtype=object) for col in EVENT_COLUMNS})
    return frame.astype({'ts': 'int64', 'price_cents': 'int64'})


def events_frame(events):
    """Event table from a DataFrame, PurchaseEvents or jsonl-style records."""
    if isinstance(events, pd.DataFrame):
        frame = events.copy()
    else:
        records = [e.to_record() if isinstance(e, PurchaseEvent) else dict(e) for e in events]
        if not records:
            return empty_events()
        frame = pd.DataFrame.from_records(records)
    for col in EVENT_COLUMNS:
        if col not in frame.columns:
            frame[col] = None
    frame = frame[EVENT_COLUMNS]
    for col in ('user_id', 'item_id', 'item_name', 'order_id', 'merchant_id'):
        frame[col] = frame[col].map(lambda v: None if _blank(v) else str(v))
    for col in CATEGORY_COLUMNS:
        frame[col] = frame[col].map(lambda v: None if _blank(v) else str(v)).astype(object)
    frame['ts'] = frame['ts'].astype('int64')
    frame['price_cents'] = frame['price_cents'].astype('int64')
    return frame.reset_index(drop=True)


def category_key(frame, level):
    """Category id at `level` (path prefix joined by '/'); None when unlabelled."""
    if level not in (1, 2, 3):
        raise DatastoreError(f'unknown category level {level!r}')
    cols = CATEGORY_COLUMNS[:level]
    keys = frame[cols[0]].astype('string')
    for col in cols[1:]:
        keys = keys + '/' + frame[col].astype('string')
    return keys.astype(object).where(keys.notna(), None)


def _apply_taxonomy(frame, taxonomy, reject):
    if not taxonomy.leaves:
        return frame
    mapped = frame['item_id'].map(taxonomy.leaves)
    has_leaf = mapped.notna()
    conflict = pd.Series(False, index=frame.index)
    leaf_cols = {}
    for level, col in enumerate(CATEGORY_COLUMNS):
        leaf_cols[col] = mapped.map(lambda p, i=level: p[i] if isinstance(p, tuple) else None)
        conflict |= has_leaf & frame[col].notna() & (frame[col] != leaf_cols[col])
    reject(conflict, 'category path conflicts with taxonomy')
    frame = frame[~conflict].copy()
    has_leaf = has_leaf[~conflict]
    for col in CATEGORY_COLUMNS:
        frame.loc[has_leaf, col] = leaf_cols[col][~conflict][has_leaf]
    return frame


def ingest_and_filter(events, profiles, taxonomy=None, max_purchases=MAX_PURCHASES, window=None):
    """Validate, label and filter events into a Dataset.

    Returns (dataset, rejected) where rejected lists (record, reason) pairs for
    records that failed validation. Users with more than `max_purchases`
    events are dropped entirely (bulk accounts).
    """
    taxonomy = taxonomy or CategoryTaxonomy()
    if not isinstance(profiles, dict):
        profiles = {p.user_id: p for p in profiles}
    frame = events_frame(events)
    rejected = []

    def reject(mask, reason):
        nonlocal frame
        if mask.any():
            for rec in frame[mask].to_dict('records'):
                rejected.append((rec, reason))
            logger.warning('rejected %d records: %s', int(mask.sum()), reason)
            frame = frame[~mask]

    reject(frame['user_id'].isna(), 'missing user id')
    reject(frame['price_cents'] < 0, 'negative price')
    if window is not None:
        t_start, t_end = window
        reject((frame['ts'] < t_start) | (frame['ts'] >= t_end), 'timestamp outside window')
    frame = _apply_taxonomy(frame, taxonomy, reject)

    counts = frame.groupby('user_id').size()
    bulk = counts[counts > max_purchases].index
    bulk_rows = frame['user_id'].isin(bulk)
    if len(bulk):
        logger.warning('removed %d bulk accounts (%d events) above %d purchases',
                       len(bulk), int(bulk_rows.sum()), max_purchases)
    frame = frame[~bulk_rows]
    frame = frame.sort_values(['user_id', 'ts'], kind='mergesort').reset_index(drop=True)

    if window is None:
        window = (int(frame['ts'].min()), int(frame['ts'].max()) + 1) if len(frame) else (0, 0)
    provenance = {
        'max_purchases': max_purchases,
        'users_removed': int(len(bulk)),
        'events_removed': int(bulk_rows.sum()),
        'records_rejected': len(rejected),
    }
    dataset = Dataset(frame, dict(profiles), taxonomy, int(window[0]), int(window[1]), provenance)
    logger.info('dataset: %d events, %d users', len(frame), frame['user_id'].nunique())
    return dataset, rejected


def join_income(profiles, zip_income_table):
    """Attach zip-level median income (cents) to every profile with a known zip."""
    if isinstance(zip_income_table, pd.DataFrame):
        pairs = list(zip(zip_income_table['zip'], zip_income_table['median_income_usd']))
    else:
        pairs = list(zip_income_table.items())
    table = {}
    for raw_zip, usd in pairs:
        z = normalize_zip(raw_zip)
        if z is None:
            raise IncomeTableError(f'bad zip {raw_zip!r} in income table')
        if z in table:
            raise IncomeTableError(f'zip {z} listed twice in income table')
        try:
            table[z] = int((Decimal(str(usd)) * 100).to_integral_value())
        except InvalidOperation:
            raise IncomeTableError(f'bad income {usd!r} for zip {z}')
    joined = {}
    for user_id, p in profiles.items():
        income = table.get(p.zip) if p.zip else None
        joined[user_id] = replace(p, income_cents=income)
    return joined


# ---------------------------------------------------------------------------
# e-mail graph
# ---------------------------------------------------------------------------

@dataclass
class EmailGraph:
    """Undirected contact graph of retained edges (summed message counts)."""
    counts: dict
    min_messages: int = MIN_MESSAGES
    shoppers: frozenset = frozenset()
    self_loops_dropped: int = 0

    def __post_init__(self):
        low = [pair for pair, n in self.counts.items() if n < self.min_messages]
        if low:
            raise GraphError(f'{len(low)} edges below {self.min_messages} messages')
        adjacency = {}
        for a, b in self.counts:
            adjacency.setdefault(a, set()).add(b)
            adjacency.setdefault(b, set()).add(a)
        self.adjacency = {u: frozenset(vs) for u, vs in adjacency.items()}
        self.contact_levels = {s: self._levels(s) for s in sorted(self.shoppers)}

    def _levels(self, user):
        first = self.adjacency.get(user, frozenset())
        second = set()
        for contact in first:
            second |= self.adjacency[contact]
        second -= first
        second.discard(user)
        return first, frozenset(second)

    def neighbors(self, user):
        return self.adjacency.get(user, frozenset())

    def has_edge(self, a, b):
        return b in self.adjacency.get(a, ())

    def contacts(self, user, level=1):
        if level not in (1, 2):
            raise GraphError(f'contact level must be 1 or 2, got {level!r}')
        levels = self.contact_levels.get(user) or self._levels(user)
        return levels[level - 1]

    def edges(self):
        return sorted(self.counts)

    def __len__(self):
        return len(self.counts)


def build_graph(edge_list, min_messages=MIN_MESSAGES, shoppers=None):
    """Sum directed message counts per pair and keep pairs with >= min_messages."""
    if isinstance(edge_list, pd.DataFrame):
        frame = edge_list[['src', 'dst', 'count']].copy()
    else:
        frame = pd.DataFrame(list(edge_list), columns=['src', 'dst', 'count'])
    frame['src'] = frame['src'].astype(str)
    frame['dst'] = frame['dst'].astype(str)
    frame['count'] = frame['count'].astype('int64')
    if (frame['count'] < 0).any():
        raise GraphError('negative message count in edge list')

    loops = frame['src'] == frame['dst']
    if loops.any():
        logger.warning('dropped %d self-loops from edge list', int(loops.sum()))
    frame = frame[~loops]
    frame['a'] = np.where(frame['src'] < frame['dst'], frame['src'], frame['dst'])
    frame['b'] = np.where(frame['src'] < frame['dst'], frame['dst'], frame['src'])
    summed = frame.groupby(['a', 'b'], sort=True)['count'].sum()
    summed = summed[summed >= min_messages]
    counts = {pair: int(n) for pair, n in summed.items()}

    if shoppers is None:
        shoppers = {u for pair in counts for u in pair}
    graph = EmailGraph(counts, min_messages, frozenset(shoppers), int(loops.sum()))
    logger.info('email graph: %d retained edges (min %d messages)', len(counts), min_messages)
    return graph


# ---------------------------------------------------------------------------
# file IO
# ---------------------------------------------------------------------------

def load_events(path):
    path = Path(path)
    if path.stat().st_size == 0:
        return empty_events()
    frame = pd.read_json(path, lines=True, dtype=False, convert_dates=False)
    return events_frame(frame)


def write_events(events, path):
    frame = events_frame(events)
    frame = frame.astype({col: object for col in CATEGORY_COLUMNS})
    with open(path, 'w', encoding='utf-8') as f:
        for rec in frame.to_dict('records'):
            f.write(json.dumps(rec, ensure_ascii=False) + '\n')


def load_profiles(path):
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    profiles = {}
    for row in frame.itertuples(index=False):
        user_id = str(row.user_id)
        profiles[user_id] = UserProfile(
            user_id,
            normalize_gender(row.gender),
            normalize_age(row.age),
            normalize_zip(row.zip),
        )
    return profiles


def profiles_frame(profiles):
    rows = [(p.user_id, p.gender, p.age, p.zip) for _, p in sorted(profiles.items())]
    frame = pd.DataFrame(rows, columns=['user_id', 'gender', 'age', 'zip'])
    frame['age'] = frame['age'].astype('Int64')
    return frame


def write_profiles(profiles, path):
    profiles_frame(profiles).to_csv(path, index=False)


def load_taxonomy(path):
    return CategoryTaxonomy.from_frame(pd.read_csv(path, dtype=str, keep_default_na=False))


def write_taxonomy(taxonomy, path):
    taxonomy.to_frame().to_csv(path, index=False)


def load_zip_income(path):
    return pd.read_csv(path, dtype={'zip': str})


def load_zip_timezone(path):
    frame = pd.read_csv(path, dtype={'zip': str})
    return {normalize_zip(z): int(m) for z, m in zip(frame['zip'], frame['utc_offset_minutes'])}


def load_edges(path):
    return pd.read_csv(path, dtype={'src': str, 'dst': str, 'count': 'int64'})


def load_dataset_dir(directory, max_purchases=MAX_PURCHASES):
    """Read a dataset directory (events + side tables) into a Dataset.

    Returns (dataset, rejected) like ingest_and_filter.
    """
    directory = Path(directory)
    events = load_events(directory / EVENTS_FILE)
    profiles = {}
    if (directory / PROFILES_FILE).exists():
        profiles = load_profiles(directory / PROFILES_FILE)
    if (directory / ZIP_INCOME_FILE).exists():
        profiles = join_income(profiles, load_zip_income(directory / ZIP_INCOME_FILE))
    taxonomy = None
    if (directory / TAXONOMY_FILE).exists():
        taxonomy = load_taxonomy(directory / TAXONOMY_FILE)
    window = None
    if (directory / MANIFEST_FILE).exists():
        manifest = json.loads((directory / MANIFEST_FILE).read_text())
        window = (manifest['t_start'], manifest['t_end'])
    return ingest_and_filter(events, profiles, taxonomy, max_purchases, window)


def load_graph_dir(directory, shoppers=None, min_messages=MIN_MESSAGES):
    path = Path(directory) / EDGES_FILE
    if not path.exists():
        raise FileNotFoundError(f'no {EDGES_FILE} in {directory}')
    return build_graph(load_edges(path), min_messages, shoppers)


def write_manifest(directory, t_start, t_end, provenance=None):
    manifest = {'t_start': int(t_start), 't_end': int(t_end), 'provenance': provenance or {}}
    (Path(directory) / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n')


def write_dataset_dir(dataset, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_events(dataset.events, directory / EVENTS_FILE)
    write_profiles(dataset.profiles, directory / PROFILES_FILE)
    write_taxonomy(dataset.taxonomy, directory / TAXONOMY_FILE)
    write_manifest(directory, dataset.t_start, dataset.t_end, dataset.provenance)
