"""
Cohort analytics: who shops, how much, and what each group buys.

Covers the shopper-share tables by gender and age, income-bucket spend,
distinctive categories between two groups, the heavy-tailed count / spend
distributions and the price-vs-popularity relation.
"""

import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from scipy import stats

from datastore import category_key

logger = logging.getLogger(__name__)

# 5-year bands [18,23), [23,28), ... [78,83)
AGE_EDGES = tuple(range(18, 84, 5))
N_INCOME_BUCKETS = 5
METRICS = ('purchases_per_user', 'spend_per_user', 'purchases_per_item')
LEVELS = (1, 2, 3, 'item')


class AnalyticsError(ValueError):
    pass


@dataclass
class GroupStats:
    group: str
    population: int
    shoppers: int
    shopper_fraction: float
    purchases: int
    purchases_per_shopper: float
    mean_price_cents: float
    total_spend_cents: int
    spend_per_shopper: float


def stats_frame(group_stats):
    return pd.DataFrame([asdict(g) for g in group_stats], columns=list(GroupStats.__dataclass_fields__))


def age_bucket(age, edges=AGE_EDGES):
    if age is None:
        return 'unknown'
    i = int(np.searchsorted(edges, age, side='right'))
    if i == 0 or i == len(edges):
        return 'other'
    return f'{edges[i - 1]}-{edges[i] - 1}'


def _population(dataset, population_profiles):
    """Profiles of the full population; shoppers missing from it are added as unknown."""
    profiles = dict(dataset.profiles if population_profiles is None else population_profiles)
    for user_id in dataset.users:
        if user_id not in profiles:
            profiles[user_id] = dataset.profile(user_id)
    return profiles


def _per_user(dataset):
    ev = dataset.events
    return ev.groupby('user_id').agg(purchases=('price_cents', 'size'), spend=('price_cents', 'sum'))


def _gender_age_groups(profiles, age_edges):
    order = {}
    for i, lo in enumerate(age_edges[:-1]):
        order[f'{lo}-{age_edges[i + 1] - 1}'] = i
    order['other'] = len(order)
    order['unknown'] = len(order)
    genders = {'female': 0, 'male': 1, 'unknown': 2}
    rows = []
    for user_id, p in profiles.items():
        bucket = age_bucket(p.age, age_edges)
        rows.append((user_id, f'{p.gender}/{bucket}', genders[p.gender] * 100 + order[bucket]))
    return pd.DataFrame(rows, columns=['user_id', 'group', 'order'])


def _income_groups(profiles, n_buckets):
    users = list(profiles)
    incomes = pd.Series([profiles[u].income_cents for u in users], index=users, dtype='float64')
    known = incomes.dropna()
    if known.empty:
        raise AnalyticsError('income grouping needs profiles joined with a zip income table')
    codes, edges = pd.qcut(known, n_buckets, labels=False, retbins=True, duplicates='drop')
    rows = []
    for user_id in users:
        if user_id in codes.index:
            q = int(codes[user_id])
            label = f'Q{q + 1} ${edges[q] / 100:,.0f}-${edges[q + 1] / 100:,.0f}'
            rows.append((user_id, label, q))
        else:
            rows.append((user_id, 'unknown', len(edges)))
    return pd.DataFrame(rows, columns=['user_id', 'group', 'order'])


def group_stats(dataset, population_profiles=None, grouping='gender_age',
                n_income_buckets=N_INCOME_BUCKETS, age_edges=AGE_EDGES):
    """Shopper share and spend per group.

    grouping is 'gender_age' (gender x 5-year age band) or 'income'
    (equal-population quantile buckets of joined zip income). The
    population is `population_profiles` (defaults to dataset.profiles)
    plus every shopper; shoppers without a profile land in unknown groups.
    """
    profiles = _population(dataset, population_profiles)
    if grouping == 'gender_age':
        groups = _gender_age_groups(profiles, age_edges)
    elif grouping == 'income':
        groups = _income_groups(profiles, n_income_buckets)
    else:
        raise AnalyticsError(f'unknown grouping {grouping!r}')

    merged = groups.merge(_per_user(dataset), left_on='user_id', right_index=True, how='left')
    merged[['purchases', 'spend']] = merged[['purchases', 'spend']].fillna(0).astype('int64')

    result = []
    for (_, label), g in sorted(merged.groupby(['order', 'group']), key=lambda kv: kv[0]):
        shoppers = int((g['purchases'] > 0).sum())
        purchases = int(g['purchases'].sum())
        spend = int(g['spend'].sum())
        result.append(GroupStats(
            group=label,
            population=len(g),
            shoppers=shoppers,
            shopper_fraction=shoppers / len(g),
            purchases=purchases,
            purchases_per_shopper=purchases / shoppers if shoppers else 0.0,
            mean_price_cents=spend / purchases if purchases else 0.0,
            total_spend_cents=spend,
            spend_per_shopper=spend / shoppers if shoppers else 0.0,
        ))
    return result


def select_users(dataset, population_profiles=None, gender=None, age_range=None, shoppers_only=True):
    """User ids matching gender and an inclusive (lo, hi) age range."""
    profiles = _population(dataset, population_profiles)
    shoppers = set(dataset.users)
    chosen = set()
    for user_id, p in profiles.items():
        if shoppers_only and user_id not in shoppers:
            continue
        if gender is not None and p.gender != gender:
            continue
        if age_range is not None and (p.age is None or not age_range[0] <= p.age <= age_range[1]):
            continue
        chosen.add(user_id)
    return chosen


def _keys(events, level):
    if level == 'item':
        return events['item_name']
    return category_key(events, level)


def distinctive_categories(dataset, group_a, group_b, level=1, top_k=10):
    """Categories whose share of group_a's purchases most exceeds group_b's, and the reverse.

    share_g(c) is the group's purchases in c over all of its purchases, so
    uncategorized purchases count in the denominator and in no row. Each row
    carries a pooled two-proportion z-test. The a and b lists are ranked
    independently; with a large top_k a category can appear on both.
    """
    if level not in LEVELS:
        raise AnalyticsError(f'unknown level {level!r}')
    ev = dataset.events
    keys = _keys(ev, level)
    counts, totals = {}, {}
    for name, users in (('a', group_a), ('b', group_b)):
        member = ev['user_id'].isin(set(users))
        if not member.any():
            raise AnalyticsError(f'group {name} has no purchases')
        totals[name] = int(member.sum())
        counts[name] = keys[member & keys.notna()].value_counts()

    table = pd.DataFrame({'count_a': counts['a'], 'count_b': counts['b']}, dtype='float64').fillna(0)
    n_a, n_b = totals['a'], totals['b']
    table['share_a'] = table['count_a'] / n_a
    table['share_b'] = table['count_b'] / n_b
    table['diff'] = table['share_a'] - table['share_b']

    pooled = (table['count_a'] + table['count_b']) / (n_a + n_b)
    se = np.sqrt(pooled * (1 - pooled) * (1 / n_a + 1 / n_b))
    with np.errstate(divide='ignore', invalid='ignore'):
        z = np.where(se > 0, table['diff'] / se, 0.0)
    table['z'] = z
    table['p_value'] = np.where(se > 0, 2 * stats.norm.sf(np.abs(z)), 1.0)

    table = table.rename_axis('category').reset_index()
    cols = ['category', 'share_a', 'share_b', 'diff', 'z', 'p_value']
    top = table.sort_values(['diff', 'category'], ascending=[False, True], kind='mergesort').head(top_k)
    bottom = table.sort_values(['diff', 'category'], kind='mergesort').head(top_k)
    top, bottom = top.assign(side='a'), bottom.assign(side='b')
    return pd.concat([top, bottom], ignore_index=True)[['side'] + cols]


def metric_values(dataset, metric):
    ev = dataset.events
    if metric == 'purchases_per_user':
        return ev.groupby('user_id').size().to_numpy()
    if metric == 'spend_per_user':
        return ev.groupby('user_id')['price_cents'].sum().to_numpy()
    if metric == 'purchases_per_item':
        return ev.groupby('item_id').size().to_numpy()
    raise AnalyticsError(f'unknown metric {metric!r}')


def log_edges(max_value, n_bins, with_zero=False):
    """Integer log-spaced bin edges covering [1, max_value]; edge 0 first when needed."""
    raw = np.floor(np.logspace(0, np.log10(max_value + 1), n_bins + 1))
    edges = np.unique(np.concatenate([raw, [max_value + 1]])).astype('int64')
    if with_zero:
        edges = np.concatenate([[0], edges])
    return edges


def distribution(dataset, metric, n_bins=20):
    """Histogram with PDF (probability mass per bin) and CDF, log-spaced bins."""
    values = metric_values(dataset, metric)
    if len(values) == 0:
        raise AnalyticsError('distribution of an empty dataset')
    edges = log_edges(int(values.max()), n_bins, with_zero=bool((values < 1).any()))
    counts, _ = np.histogram(values, bins=edges)
    pdf = counts / counts.sum()
    frame = pd.DataFrame({
        'bin_lo': edges[:-1],
        'bin_hi': edges[1:],
        'count': counts,
        'pdf': pdf,
        'cdf': np.cumsum(pdf),
    })
    return frame[frame['count'] > 0].reset_index(drop=True)


def spearman(x, y):
    """Spearman rank correlation; 0 for constant input."""
    x = np.asarray(x, dtype='float64')
    y = np.asarray(y, dtype='float64')
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    return float(stats.spearmanr(x, y)[0])


def price_popularity(dataset, n_price_bins=10):
    """Mean times-purchased per log-spaced price bin, and the item-level Spearman correlation.

    An item's price is the median of its purchase prices.
    """
    items = dataset.events.groupby('item_id')['price_cents'].agg(['median', 'size'])
    prices = items['median'].to_numpy(dtype='float64')
    counts = items['size'].to_numpy()
    if len(np.unique(prices)) < 2:
        raise AnalyticsError('price popularity needs at least two distinct item prices')

    lo = max(prices.min(), 1.0)
    edges = np.logspace(np.log10(lo), np.log10(prices.max() + 1), n_price_bins + 1)
    idx = np.clip(np.searchsorted(edges, prices, side='right') - 1, 0, n_price_bins - 1)
    frame = pd.DataFrame({'bin': idx, 'count': counts})
    per_bin = frame.groupby('bin')['count'].agg(['size', 'mean'])
    bins = pd.DataFrame({
        'price_lo_cents': edges[per_bin.index],
        'price_hi_cents': edges[per_bin.index + 1],
        'n_items': per_bin['size'].to_numpy(),
        'mean_purchases': per_bin['mean'].to_numpy(),
    })
    rho = spearman(prices, counts)
    logger.info('price vs popularity spearman %.3f over %d items', rho, len(prices))
    return bins, rho


def top_items(dataset, by='count', top_k=5):
    """Most purchased products (by='count') or products with most money spent (by='spend')."""
    if by not in ('count', 'spend'):
        raise AnalyticsError(f'unknown ranking {by!r}')
    ev = dataset.events
    items = ev.groupby('item_id').agg(
        item_name=('item_name', 'first'),
        purchases=('price_cents', 'size'),
        spend_cents=('price_cents', 'sum'),
    ).reset_index()
    key = 'purchases' if by == 'count' else 'spend_cents'
    items = items.sort_values([key, 'item_id'], ascending=[False, True], kind='mergesort')
    return items.head(top_k).reset_index(drop=True)
