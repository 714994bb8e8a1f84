"""
Seeded synthetic shopper population.

Plants the effects the analyses look for (weekly cycle, recurring
consumables, budget depletion, category homophily along e-mail edges,
gender-specific category taste, income-driven spend, class-repeating
shoppers) and records every planted parameter in ground_truth.json.
Also renders purchase-confirmation emails from the merchant templates.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

import datastore
from datastore import CategoryTaxonomy, UserProfile, build_graph, ingest_and_filter, join_income
from receipt_parser import format_price, item_key

logger = logging.getLogger(__name__)

DAY = 86400
LEVEL1 = ('Books', 'Electronics', 'Home & Garden', 'Pet Supplies',
          'Clothing', 'Health & Beauty', 'Toys & Games', 'Grocery')
NOUNS = {
    'Books': ('Novel', 'Cookbook', 'Atlas', 'Biography'),
    'Electronics': ('Charger', 'Headphones', 'Cable', 'Speaker'),
    'Home & Garden': ('Lamp', 'Planter', 'Towel', 'Skillet'),
    'Pet Supplies': ('Kibble', 'Leash', 'Litter', 'Chew Toy'),
    'Clothing': ('Sweater', 'Sock Pack', 'Scarf', 'Jacket'),
    'Health & Beauty': ('Shampoo', 'Lotion', 'Vitamins', 'Razor'),
    'Toys & Games': ('Puzzle', 'Board Game', 'Plush', 'Kite'),
    'Grocery': ('Coffee', 'Tea', 'Olive Oil', 'Granola'),
}
N_LEVEL2 = 4
N_LEVEL3 = 4
MERCHANT_OF = {'Books': 'bookbarn', 'Electronics': 'gadgetgrove',
               'Home & Garden': 'homehaven', 'Pet Supplies': 'petpantry'}
DEFAULT_MERCHANT = 'shopmart'
ORDER_PREFIX = {'bookbarn': 'BB', 'gadgetgrove': 'GG', 'homehaven': 'HH',
                'petpantry': 'PP', 'shopmart': 'SM'}
CONSUMABLE_LEVEL1 = ('Pet Supplies', 'Grocery')
DISTINCTIVE_CATEGORY = 'Books'
UTC_OFFSETS = (-300, -360, -420, -480)
WEEKLY_PERIODS = (7, 14)
# relative purchase volume per local hour
DIURNAL_PROFILE = np.array([
    2, 1, 1, 1, 1, 2, 3, 5, 7, 8, 9, 10,
    11, 10, 9, 9, 9, 10, 11, 12, 13, 12, 8, 4,
], dtype='float64')
P95_Z = 1.6448536269514722
FILLER_LINES = (
    'Hello,',
    'Thank you for shopping with us!',
    'Here is a summary of your purchase.',
    'Questions? Reply to this email.',
)


class SynthConfigError(ValueError):
    pass


class RenderError(ValueError):
    pass


@dataclass
class SynthConfig:
    seed: int = 42
    n_users: int = 2000
    t_start: str = '2014-02-01'
    t_end: str = '2014-10-01'
    # demographics
    female_frac: float = 0.5
    unknown_gender_frac: float = 0.01
    age_mean: float = 40.0
    age_sd: float = 13.0
    unknown_age_frac: float = 0.02
    n_zips: int = 50
    unknown_zip_frac: float = 0.02
    income_median_usd: float = 55000.0
    income_sigma: float = 0.35
    shopper_prob_female: float = 0.7
    shopper_prob_male: float = 0.6
    # purchase volume
    median_purchases: float = 8.0
    purchases_sigma: float = 1.0
    income_elasticity: float = 0.5
    bulk_accounts: int = 0
    bulk_purchases: int = 1500
    extra_items_mean: float = 0.4
    # catalog and taste
    items_per_leaf: int = 6
    price_median_cents: float = 1500.0
    price_sigma: float = 0.9
    popularity_beta: float = 1.0
    preference_concentration: float = 0.3
    homophily: float = 0.0
    gender_assortativity: float = 0.0
    female_concentration: float = 0.1
    male_concentration: float = 1.0
    female_books_boost: float = 0.0
    # e-mail graph
    n_communities: int = 25
    mean_degree: float = 6.0
    within_community_prob: float = 0.8
    weak_tie_frac: float = 0.2
    # timing
    monday_multiplier: float = 1.0
    diurnal: bool = True
    weekly_buyer_frac: float = 0.0
    consumable_frac: float = 0.0
    consumable_period_days: float = 30.0
    consumable_jitter_days: float = 3.0
    # budget depletion
    budget_depletion: bool = False
    budget_span_frac: float = 0.9
    budget_softness: float = 0.02
    budget_rate: float = None
    # predictor signal
    class_repeat_prob: float = 0.0

    PROBABILITIES = (
        'female_frac', 'unknown_gender_frac', 'unknown_age_frac', 'unknown_zip_frac',
        'shopper_prob_female', 'shopper_prob_male', 'homophily', 'gender_assortativity',
        'female_books_boost', 'within_community_prob', 'weak_tie_frac', 'weekly_buyer_frac',
        'consumable_frac', 'class_repeat_prob',
    )

    def validate(self):
        for name in self.PROBABILITIES:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise SynthConfigError(f'{name} must be in [0, 1], got {value}')
        if self.homophily + self.gender_assortativity > 1.0:
            raise SynthConfigError('homophily + gender_assortativity must not exceed 1')
        if self.n_users < 1:
            raise SynthConfigError('n_users must be at least 1')
        if self.window[1] <= self.window[0]:
            raise SynthConfigError('t_end must be after t_start')
        if self.monday_multiplier <= 0:
            raise SynthConfigError('monday_multiplier must be positive')
        if self.median_purchases < 1 or self.purchases_sigma < 0:
            raise SynthConfigError('median_purchases must be >= 1 and purchases_sigma >= 0')
        if self.budget_depletion:
            if self.budget_rate is not None and self.budget_rate <= 0:
                raise SynthConfigError('budget replenishment rate must be positive when purchases are mandatory')
            if not 0.0 < self.budget_span_frac <= 1.0:
                raise SynthConfigError('budget_span_frac must be in (0, 1]')
            if self.budget_softness <= 0:
                raise SynthConfigError('budget_softness must be positive')
        return self

    @property
    def window(self):
        start = int(pd.Timestamp(self.t_start, tz='UTC').timestamp())
        end = int(pd.Timestamp(self.t_end, tz='UTC').timestamp())
        return start, end

    @property
    def purchases_p95(self):
        return math.ceil(self.median_purchases * math.exp(P95_Z * self.purchases_sigma))

    @classmethod
    def from_json(cls, text, **overrides):
        """Config from a JSON object (text or path); keyword overrides win."""
        if isinstance(text, Path) or (isinstance(text, str) and not text.lstrip().startswith('{')):
            text = Path(text).read_text()
        data = json.loads(text)
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SynthConfigError(f'unknown config keys: {", ".join(sorted(unknown))}')
        return cls(**data).validate()


@dataclass
class Catalog:
    names: list
    prices: np.ndarray
    leaf: np.ndarray
    leaves: list
    level1: np.ndarray
    popularity: np.ndarray
    consumable: np.ndarray
    price_class: np.ndarray

    @property
    def taxonomy(self):
        return CategoryTaxonomy({item_key(n): self.leaves[l] for n, l in zip(self.names, self.leaf)})

    def merchant(self, item):
        return MERCHANT_OF.get(LEVEL1[self.level1[item]], DEFAULT_MERCHANT)


def build_catalog(config, rng):
    names, leaf, level1, consumable = [], [], [], []
    leaves = []
    for i, l1 in enumerate(LEVEL1):
        for j in range(N_LEVEL2):
            l2 = f'{l1} {chr(65 + j)}'
            for m in range(N_LEVEL3):
                leaves.append((l1, l2, f'{l2}{m + 1}'))
                for it in range(config.items_per_leaf):
                    names.append(f'{NOUNS[l1][j]} {chr(65 + j)}{m + 1}-{it + 1:02d}')
                    leaf.append(len(leaves) - 1)
                    level1.append(i)
                    consumable.append(l1 in CONSUMABLE_LEVEL1 and it == 0)
    n = len(names)
    prices = np.maximum(99, np.round(rng.lognormal(np.log(config.price_median_cents), config.price_sigma, n)))
    prices = prices.astype('int64')
    consumable = np.array(consumable)
    popularity = prices.astype('float64') ** -config.popularity_beta
    popularity[consumable] = 0.0
    price_class = np.searchsorted([600, 1200, 2000, 4000], prices, side='right') + 1
    return Catalog(names, prices, np.array(leaf), leaves, np.array(level1),
                   popularity / popularity.sum(), consumable, price_class)


def _zip_pool(config, rng):
    codes = rng.choice(np.arange(10000, 100000), size=config.n_zips, replace=False)
    zips = [f'{c:05d}' for c in codes]
    incomes = np.round(rng.lognormal(np.log(config.income_median_usd), config.income_sigma, config.n_zips))
    offsets = rng.choice(UTC_OFFSETS, size=config.n_zips)
    return zips, incomes.astype('int64'), offsets.astype('int64')


def _population(config, rng, zips):
    n = config.n_users
    u = rng.random(n)
    gender = np.where(u < config.unknown_gender_frac, 'unknown',
                      np.where(rng.random(n) < config.female_frac, 'female', 'male'))
    ages = np.clip(np.round(rng.normal(config.age_mean, config.age_sd, n)), 18, 80).astype('int64')
    age_known = rng.random(n) >= config.unknown_age_frac
    zip_idx = rng.integers(0, len(zips), n)
    zip_known = rng.random(n) >= config.unknown_zip_frac
    profiles = []
    for i in range(n):
        profiles.append(UserProfile(
            user_id=f'u{i:06d}',
            gender=str(gender[i]),
            age=int(ages[i]) if age_known[i] else None,
            zip=zips[zip_idx[i]] if zip_known[i] else None,
        ))
    return profiles


def _preferences(config, rng, profiles, communities, catalog):
    """Per-user leaf preference vectors mixing personal, community and gender taste."""
    n_leaves = len(catalog.leaves)
    conc = config.preference_concentration
    community_taste = rng.dirichlet(np.full(n_leaves, conc), size=config.n_communities)
    female_taste = rng.dirichlet(np.full(n_leaves, config.female_concentration))
    male_taste = rng.dirichlet(np.full(n_leaves, config.male_concentration))
    books = np.array([leaf[0] == DISTINCTIVE_CATEGORY for leaf in catalog.leaves], dtype='float64')
    books /= books.sum()
    h, g = config.homophily, config.gender_assortativity
    prefs = np.empty((len(profiles), n_leaves))
    for i, p in enumerate(profiles):
        taste = {'female': female_taste, 'male': male_taste}.get(p.gender, (female_taste + male_taste) / 2)
        w = (1 - h - g) * rng.dirichlet(np.full(n_leaves, conc)) + h * community_taste[communities[i]] + g * taste
        if p.gender == 'female' and config.female_books_boost:
            w = (1 - config.female_books_boost) * w + config.female_books_boost * books
        prefs[i] = w / w.sum()
    return prefs


def _email_edges(config, rng, profiles, communities):
    """Directed (src, dst, count) rows; weak ties stay below the retention threshold."""
    n = len(profiles)
    members = [np.flatnonzero(communities == c) for c in range(config.n_communities)]
    pairs = {}
    for i in range(n):
        for _ in range(rng.poisson(config.mean_degree / 2)):
            if rng.random() < config.within_community_prob and len(members[communities[i]]) > 1:
                j = int(rng.choice(members[communities[i]]))
            else:
                j = int(rng.integers(0, n))
            if i == j:
                continue
            pair = (min(i, j), max(i, j))
            if pair in pairs:
                continue
            if rng.random() < config.weak_tie_frac:
                total = int(rng.integers(0, datastore.MIN_MESSAGES))
            else:
                total = datastore.MIN_MESSAGES + int(rng.poisson(10))
            pairs[pair] = total
    rows = []
    for (i, j), total in sorted(pairs.items()):
        forward = int(rng.binomial(total, 0.5))
        for src, dst, count in ((i, j, forward), (j, i, total - forward)):
            if count:
                rows.append((profiles[src].user_id, profiles[dst].user_id, count))
    return pd.DataFrame(rows, columns=['src', 'dst', 'count'])


class _Clock:
    """Draws purchase instants on the shopper's local clock and returns UTC seconds."""

    def __init__(self, config, rng):
        self.rng = rng
        self.t_start, self.t_end = config.window
        self.n_days = (self.t_end - self.t_start) // DAY
        weekday = (pd.Timestamp(self.t_start, unit='s').weekday() + np.arange(self.n_days)) % 7
        day_w = np.where(weekday == 0, config.monday_multiplier, 1.0)
        self.day_p = day_w / day_w.sum()
        hour_w = DIURNAL_PROFILE if config.diurnal else np.ones(24)
        self.hour_p = hour_w / hour_w.sum()

    def time_of_day(self, k):
        hours = self.rng.choice(24, size=k, p=self.hour_p)
        return hours * 3600 + self.rng.integers(0, 3600, size=k)

    def to_utc(self, local_seconds, offset_minutes):
        return local_seconds - offset_minutes * 60

    def in_window(self, ts):
        return (ts >= self.t_start) & (ts < self.t_end)

    def sample(self, k, offset_minutes):
        out = np.empty(k, dtype='int64')
        todo = np.arange(k)
        while len(todo):
            days = self.rng.choice(self.n_days, size=len(todo), p=self.day_p)
            ts = self.to_utc(self.t_start + days * DAY + self.time_of_day(len(todo)), offset_minutes)
            ok = self.in_window(ts)
            out[todo[ok]] = ts[ok]
            todo = todo[~ok]
        return np.sort(out)


class _Orders:
    def __init__(self):
        self.events = []
        self.counter = {}

    def add(self, user_id, ts, items, catalog):
        merchant = catalog.merchant(items[0])
        self.counter[merchant] = self.counter.get(merchant, 0) + 1
        order_id = f'{ORDER_PREFIX[merchant]}{self.counter[merchant]:08d}'
        for item in items:
            l1, l2, l3 = catalog.leaves[catalog.leaf[item]]
            name = catalog.names[item]
            self.events.append({
                'user_id': user_id, 'ts': int(ts), 'item_id': item_key(name), 'item_name': name,
                'price_cents': int(catalog.prices[item]), 'order_id': order_id, 'merchant_id': merchant,
                'cat1': l1, 'cat2': l2, 'cat3': l3,
            })


def _item_weights(pref, catalog):
    w = pref[catalog.leaf] * catalog.popularity
    return w / w.sum()


class _ClassHistory:
    """Price classes a shopper has bought so far; the first purchase takes the home class."""

    def __init__(self, home):
        self.home = int(home)
        self.counts = np.zeros(6, dtype='int64')

    def next_class(self, rng, repeat_prob):
        if not self.counts.any():
            c = self.home
        elif rng.random() < repeat_prob:
            # index 0 is never counted, so ties go to the lower class
            c = int(np.argmax(self.counts))
        else:
            c = int(rng.integers(1, 6))
        self.counts[c] += 1
        return c


def _choose(rng, weights, k, catalog, config, history):
    """k items by preference; with class signal each item repeats the modal class bought so far."""
    if not config.class_repeat_prob:
        return list(rng.choice(len(weights), size=k, p=weights))
    items = []
    for _ in range(k):
        c = history.next_class(rng, config.class_repeat_prob)
        pool = np.flatnonzero((catalog.price_class == c) & ~catalog.consumable)
        w = weights[pool]
        w = w / w.sum() if w.sum() > 0 else np.full(len(pool), 1 / len(pool))
        items.append(int(pool[rng.choice(len(pool), p=w)]))
    return items


def _same_category(rng, weights, first, k, catalog):
    pool = np.flatnonzero(catalog.level1 == catalog.level1[first])
    w = weights[pool]
    if w.sum() <= 0:
        return [first] * k
    return list(pool[rng.choice(len(pool), size=k, p=w / w.sum())])


def _normal_shopper(rng, clock, orders, user_id, n, weights, offset, catalog, config, home_class):
    history = _ClassHistory(home_class)
    sizes = []
    remaining = n
    while remaining > 0:
        extra = 0 if config.class_repeat_prob else int(rng.poisson(config.extra_items_mean))
        sizes.append(min(remaining, 1 + extra))
        remaining -= sizes[-1]
    times = clock.sample(len(sizes), offset)
    for ts, size in zip(times, sizes):
        first = _choose(rng, weights, 1, catalog, config, history)[0]
        items = [first] + (_same_category(rng, weights, first, size - 1, catalog) if size > 1 else [])
        orders.add(user_id, ts, items, catalog)


def _weekly_shopper(rng, clock, orders, user_id, weights, offset, catalog, config, home_class):
    period = int(rng.choice(WEEKLY_PERIODS))
    first_day = int(rng.integers(0, period))
    tod = int(clock.time_of_day(1)[0])
    days = np.arange(first_day, clock.n_days, period)
    ts = clock.to_utc(clock.t_start + days * DAY + tod, offset)
    ts = ts[clock.in_window(ts)]
    for t, item in zip(ts, _choose(rng, weights, len(ts), catalog, config, _ClassHistory(home_class))):
        orders.add(user_id, t, [item], catalog)
    return period


def _consumable_habit(rng, clock, orders, user_id, offset, catalog, config):
    item = int(rng.choice(np.flatnonzero(catalog.consumable)))
    period, jitter = config.consumable_period_days, config.consumable_jitter_days
    t = rng.uniform(0, period)
    while t < clock.n_days:
        ts = clock.to_utc(clock.t_start + int(t * DAY), offset)
        if clock.in_window(ts):
            orders.add(user_id, ts, [item], catalog)
        t += period + rng.uniform(-jitter, jitter)
    return item


def _budget_shoppers(rng, clock, orders, shoppers, counts, weights, offsets, catalog, config, home):
    """Single-item purchases driven by an accruing budget, simulated day by day.

    Each shopper accrues budget at rate r per day; the next intended item
    of price p is bought on a day with probability sigmoid((B - p) / (s * p)).
    """
    intended = [np.asarray(_choose(rng, weights[u], counts[u], catalog, config, _ClassHistory(home[u])),
                           dtype='int64')
                for u in range(len(shoppers))]
    offsets_flat = np.concatenate([[0], np.cumsum([len(x) for x in intended])])
    flat_prices = catalog.prices[np.concatenate(intended)].astype('float64')
    totals = np.array([catalog.prices[x].sum() for x in intended], dtype='float64')
    if config.budget_rate is not None:
        rate = np.full(len(shoppers), float(config.budget_rate))
    else:
        rate = totals / (config.budget_span_frac * clock.n_days) * rng.uniform(0.9, 1.1, len(shoppers))
    if (rate <= 0).any():
        raise SynthConfigError('budget replenishment rate is 0 for some shoppers')
    budget = np.zeros(len(shoppers))
    pos = np.zeros(len(shoppers), dtype='int64')
    n_items = np.array([len(x) for x in intended])
    purchases = []
    for day in range(clock.n_days):
        active = pos < n_items
        if not active.any():
            break
        budget += rate
        price = np.where(active, flat_prices[np.minimum(offsets_flat[:-1] + pos, len(flat_prices) - 1)], 1.0)
        z = np.clip((budget - price) / (config.budget_softness * price), -50, 50)
        buy = active & (rng.random(len(shoppers)) < 1 / (1 + np.exp(-z)))
        for u in np.flatnonzero(buy):
            purchases.append((u, day, intended[u][pos[u]]))
        budget[buy] -= price[buy]
        pos[buy] += 1
    tods = clock.time_of_day(len(purchases))
    for (u, day, item), tod in zip(purchases, tods):
        ts = clock.to_utc(clock.t_start + day * DAY + int(tod), offsets[u])
        if clock.in_window(ts):
            orders.add(shoppers[u].user_id, ts, [int(item)], catalog)


def _purchase_counts(config, rng, profiles, incomes):
    base = rng.lognormal(np.log(config.median_purchases), config.purchases_sigma, len(profiles))
    scale = np.ones(len(profiles))
    if config.income_elasticity:
        ref = config.income_median_usd
        for i, p in enumerate(profiles):
            if p.zip in incomes:
                scale[i] = (incomes[p.zip] / ref) ** config.income_elasticity
    return np.maximum(1, np.ceil(base * scale)).astype('int64')


def generate(config, out_dir=None):
    """Synthetic (Dataset, EmailGraph, ground truth); files written when out_dir is given."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    catalog = build_catalog(config, rng)
    zips, zip_income, zip_offset = _zip_pool(config, rng)
    incomes = dict(zip(zips, zip_income.tolist()))
    offsets_by_zip = dict(zip(zips, zip_offset.tolist()))

    profiles = _population(config, rng, zips)
    communities = rng.integers(0, config.n_communities, len(profiles))
    prefs = _preferences(config, rng, profiles, communities, catalog)
    edges = _email_edges(config, rng, profiles, communities)

    shop_prob = np.array([{'female': config.shopper_prob_female, 'male': config.shopper_prob_male}
                          .get(p.gender, (config.shopper_prob_female + config.shopper_prob_male) / 2)
                          for p in profiles])
    is_shopper = rng.random(len(profiles)) < shop_prob
    counts = _purchase_counts(config, rng, profiles, incomes)
    home = rng.integers(1, 6, len(profiles))
    weekly = rng.random(len(profiles)) < config.weekly_buyer_frac
    consumer = rng.random(len(profiles)) < config.consumable_frac
    offsets = np.array([offsets_by_zip.get(p.zip, 0) for p in profiles], dtype='int64')
    weights = {i: _item_weights(prefs[i], catalog) for i in np.flatnonzero(is_shopper)}

    clock = _Clock(config, rng)
    orders = _Orders()
    weekly_periods = {}
    consumables = {}
    shoppers = np.flatnonzero(is_shopper)
    if config.budget_depletion:
        _budget_shoppers(rng, clock, orders, [profiles[i] for i in shoppers], counts[shoppers],
                         [weights[i] for i in shoppers], offsets[shoppers], catalog, config, home[shoppers])
    else:
        for i in shoppers:
            uid = profiles[i].user_id
            if weekly[i]:
                weekly_periods[uid] = _weekly_shopper(rng, clock, orders, uid, weights[i], offsets[i],
                                                      catalog, config, home[i])
                continue
            _normal_shopper(rng, clock, orders, uid, int(counts[i]), weights[i], offsets[i],
                            catalog, config, home[i])
            if consumer[i]:
                consumables[uid] = item_key(catalog.names[
                    _consumable_habit(rng, clock, orders, uid, offsets[i], catalog, config)])

    bulk_ids = []
    for b in range(config.bulk_accounts):
        uid = f'b{b:06d}'
        profiles.append(UserProfile(uid))
        bulk_ids.append(uid)
        _normal_shopper(rng, clock, orders, uid, config.bulk_purchases,
                        _item_weights(np.full(len(catalog.leaves), 1 / len(catalog.leaves)), catalog),
                        0, catalog, config, 1)

    raw_events = datastore.events_frame(orders.events)
    zip_table = pd.DataFrame({'zip': zips, 'median_income_usd': zip_income})
    joined = join_income({p.user_id: p for p in profiles}, zip_table)
    dataset, rejected = ingest_and_filter(raw_events, joined, catalog.taxonomy, window=config.window)
    if rejected:
        raise SynthConfigError(f'generator produced {len(rejected)} invalid records')
    graph = build_graph(edges, shoppers=set(dataset.users))

    truth = {
        'config': asdict(config),
        'purchases_p95': config.purchases_p95,
        'distinctive_category': DISTINCTIVE_CATEGORY if config.female_books_boost else None,
        'monday_multiplier': config.monday_multiplier,
        'weekly_buyers': dict(sorted(weekly_periods.items())),
        'consumable_items': sorted(set(consumables.values())),
        'consumable_period_days': config.consumable_period_days if consumables else None,
        'bulk_accounts': bulk_ids,
        'first_price_class': {profiles[i].user_id: int(home[i]) for i in shoppers}
        if config.class_repeat_prob else {},
        'n_population': len(profiles),
        'n_shoppers': int(len(dataset.users)),
        'n_events': int(len(raw_events)),
    }
    logger.info('synthesized %d events for %d shoppers in a population of %d',
                len(raw_events), truth['n_shoppers'], len(profiles))

    if out_dir is not None:
        _write(Path(out_dir), config, raw_events, profiles, catalog, zip_table, zips, zip_offset, edges, truth)
    return dataset, graph, truth


def _write(out, config, raw_events, profiles, catalog, zip_table, zips, zip_offset, edges, truth):
    out.mkdir(parents=True, exist_ok=True)
    datastore.write_events(raw_events, out / datastore.EVENTS_FILE)
    datastore.write_profiles({p.user_id: p for p in profiles}, out / datastore.PROFILES_FILE)
    datastore.write_taxonomy(catalog.taxonomy, out / datastore.TAXONOMY_FILE)
    zip_table.to_csv(out / datastore.ZIP_INCOME_FILE, index=False)
    pd.DataFrame({'zip': zips, 'utc_offset_minutes': zip_offset}).to_csv(
        out / datastore.ZIP_TIMEZONE_FILE, index=False)
    edges.to_csv(out / datastore.EDGES_FILE, index=False)
    datastore.write_manifest(out, *config.window, {'generator': 'synthgen', 'seed': config.seed})
    (out / 'ground_truth.json').write_text(json.dumps(truth, indent=2, sort_keys=True) + '\n')


# ---------------------------------------------------------------------------
# receipts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Receipt:
    user_id: str
    order_id: str
    text: str


def _sender(template):
    return template.sender_pattern.replace('*', 'orders').replace('?', 'x')


def render_order(template, order_id, ts, lines):
    """Email text for one order; lines are (item_name, price_cents) per unit."""
    when = datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime(template.date_format)
    grouped = []
    for name, price in lines:
        if template.has_quantity and grouped and grouped[-1][:2] == (name, price):
            grouped[-1] = (name, price, grouped[-1][2] + 1)
        else:
            grouped.append((name, price, 1))
    body = [FILLER_LINES[0], FILLER_LINES[1],
            template.fill('order', ORDER_ID=order_id),
            template.fill('date', DATE=when),
            FILLER_LINES[2]]
    for name, price, qty in grouped:
        body.append(template.fill('item', ITEM=name, PRICE=format_price(price), QTY=qty))
    body.append(FILLER_LINES[3])
    return f'From: {template.merchant_id.title()} <{_sender(template)}>\n\n' + '\n'.join(body) + '\n'


def render_receipts(dataset, templates):
    """One email per order of the dataset."""
    receipts = []
    events = dataset.events
    for (user_id, order_id), g in events.groupby(['user_id', 'order_id'], sort=False):
        merchant = g['merchant_id'].iloc[0]
        if merchant not in templates:
            raise RenderError(f'no template for merchant {merchant!r}')
        lines = list(zip(g['item_name'], g['price_cents'].astype(int)))
        text = render_order(templates[merchant], order_id, g['ts'].iloc[0], lines)
        receipts.append(Receipt(user_id, order_id, text))
    logger.info('rendered %d receipts', len(receipts))
    return receipts


def write_corpus(receipts, directory):
    """Write receipts as <directory>/<user_id>/<order_id>.eml."""
    directory = Path(directory)
    for r in receipts:
        path = directory / r.user_id / f'{r.order_id}.eml'
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(r.text, encoding='utf-8')
    return len(receipts)
