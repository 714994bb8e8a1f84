"""
Temporal analytics over the purchase log.

Weekly and diurnal activity, the first- vs last-Monday comparison, recurring
purchases, inter-purchase delays and the budget curve with its shuffle test.
Timestamps are stored UTC; they are moved to the shopper's local clock here
when a zip -> UTC offset table is given (unknown zips stay UTC).
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.signal import find_peaks

from cohort_analytics import spearman

logger = logging.getLogger(__name__)

DAY = 86400
DAY_NAMES = ('Monday', 'Tuesday', 'Wednesday', 'Thursday', 'Friday', 'Saturday', 'Sunday')
GRANULARITIES = ('day_of_week', 'hour_of_day')
Z_95 = 1.96
MIN_CURVE_SAMPLES = 10


class TemporalError(ValueError):
    pass


def local_times(dataset, zip_timezone=None):
    """Event times on the shopper's local clock, as naive pandas timestamps."""
    ts = dataset.events['ts'].to_numpy(dtype='int64')
    if zip_timezone:
        offsets = {}
        for user_id, p in dataset.profiles.items():
            if p.zip in zip_timezone:
                offsets[user_id] = zip_timezone[p.zip] * 60
        ts = ts + dataset.events['user_id'].map(offsets).fillna(0).to_numpy(dtype='int64')
    return pd.Series(pd.to_datetime(ts, unit='s'), index=dataset.events.index)


def _weekday_count(t_start, t_end, weekday):
    if t_end <= t_start:
        return 0
    days = pd.date_range(pd.to_datetime(t_start, unit='s').normalize(),
                         pd.to_datetime(t_end - 1, unit='s').normalize(), freq='D')
    return int((days.weekday == weekday).sum())


@dataclass
class ActivityProfile:
    counts: pd.DataFrame
    monday_sunday_ratio: float


def monday_sunday_ratio(local, t_start, t_end):
    """Mean events per Monday over mean events per Sunday in the window; NaN if undefined."""
    n_mon, n_sun = _weekday_count(t_start, t_end, 0), _weekday_count(t_start, t_end, 6)
    mon = int((local.dt.weekday == 0).sum())
    sun = int((local.dt.weekday == 6).sum())
    if not n_mon or not n_sun or not sun:
        return float('nan')
    return (mon / n_mon) / (sun / n_sun)


def activity_profile(dataset, granularity='day_of_week', zip_timezone=None):
    if granularity not in GRANULARITIES:
        raise TemporalError(f'unknown granularity {granularity!r}')
    local = local_times(dataset, zip_timezone)
    if granularity == 'day_of_week':
        slots = local.dt.weekday.value_counts().reindex(range(7), fill_value=0)
        counts = pd.DataFrame({'slot': DAY_NAMES, 'purchases': slots.to_numpy()})
    else:
        slots = local.dt.hour.value_counts().reindex(range(24), fill_value=0)
        counts = pd.DataFrame({'slot': range(24), 'purchases': slots.to_numpy()})
    ratio = monday_sunday_ratio(local, dataset.t_start, dataset.t_end)
    logger.info('monday/sunday ratio %.3f', ratio)
    return ActivityProfile(counts, ratio)


def daily_counts(dataset, zip_timezone=None):
    """Purchases and spend per calendar day across the window, zero days included."""
    local = local_times(dataset, zip_timezone).dt.normalize()
    frame = pd.DataFrame({'date': local, 'price_cents': dataset.events['price_cents']})
    per_day = frame.groupby('date')['price_cents'].agg(purchases='size', spend_cents='sum')
    if dataset.t_end > dataset.t_start:
        days = pd.date_range(pd.to_datetime(dataset.t_start, unit='s').normalize(),
                             pd.to_datetime(dataset.t_end - 1, unit='s').normalize(), freq='D')
        per_day = per_day.reindex(days.union(per_day.index), fill_value=0)
    per_day.index.name = 'date'
    per_day = per_day.reset_index()
    per_day['date'] = per_day['date'].dt.strftime('%Y-%m-%d')
    return per_day


def month_boundary_test(dataset, zip_timezone=None):
    """First- vs last-Monday purchases and spend for each month fully inside the window."""
    columns = ['month', 'first_monday', 'last_monday', 'first_count', 'last_count', 'count_ratio',
               'first_spend_cents', 'last_spend_cents', 'spend_ratio']
    start = pd.to_datetime(dataset.t_start, unit='s')
    end = pd.to_datetime(dataset.t_end, unit='s')
    months = pd.period_range(start, end, freq='M')
    local = local_times(dataset, zip_timezone).dt.normalize()
    per_day = pd.DataFrame({'date': local, 'price_cents': dataset.events['price_cents']})
    per_day = per_day.groupby('date')['price_cents'].agg(['size', 'sum'])

    rows = []
    for month in months:
        m_start, m_end = month.start_time, (month + 1).start_time
        if m_start < start or m_end > end:
            continue
        mondays = pd.date_range(m_start, m_end - pd.Timedelta(days=1), freq='W-MON')
        first, last = mondays[0], mondays[-1]
        fc, fs = per_day.loc[first].tolist() if first in per_day.index else (0, 0)
        lc, ls = per_day.loc[last].tolist() if last in per_day.index else (0, 0)
        rows.append((
            str(month), first.strftime('%Y-%m-%d'), last.strftime('%Y-%m-%d'),
            int(fc), int(lc), fc / lc if lc else float('nan'),
            int(fs), int(ls), fs / ls if ls else float('nan'),
        ))
    return pd.DataFrame(rows, columns=columns)


def recurring_items(dataset, top_k=None):
    """Items bought at least twice by the same user, with median repurchase delay.

    Copies of an item within one order count as one purchase occasion.
    """
    ev = dataset.events.drop_duplicates(['user_id', 'item_id', 'ts'])
    size = ev.groupby(['user_id', 'item_id'])['ts'].transform('size')
    ev = ev[size >= 2]
    columns = ['item_id', 'item_name', 'purchases', 'users', 'median_delay_days']
    if ev.empty:
        return pd.DataFrame(columns=columns)
    gaps = ev.groupby(['user_id', 'item_id'])['ts'].diff() / DAY
    ev = ev.assign(gap=gaps)
    items = ev.groupby('item_id').agg(
        item_name=('item_name', 'first'),
        purchases=('ts', 'size'),
        users=('user_id', 'nunique'),
        median_delay_days=('gap', 'median'),
    ).reset_index()
    items = items.sort_values(['purchases', 'item_id'], ascending=[False, True], kind='mergesort')
    if top_k is not None:
        items = items.head(top_k)
    return items[columns].reset_index(drop=True)


def inter_purchase_delays(events):
    """Consecutive same-user gaps in fractional days (events sorted by user, time)."""
    gaps = events.groupby('user_id')['ts'].diff().dropna()
    return gaps.to_numpy(dtype='float64') / DAY


@dataclass
class DelayDistribution:
    pdf: pd.DataFrame
    peaks: list


def delay_distribution(dataset, bin_days=1.0):
    delays = inter_purchase_delays(dataset.events)
    if len(delays) == 0:
        return DelayDistribution(pd.DataFrame(columns=['day_lo', 'day_hi', 'count', 'pdf']), [])
    n_bins = int(np.floor(delays.max() / bin_days)) + 1
    edges = np.arange(n_bins + 1) * bin_days
    counts, _ = np.histogram(delays, bins=edges)
    pdf = counts / counts.sum()
    frame = pd.DataFrame({'day_lo': edges[:-1], 'day_hi': edges[1:], 'count': counts, 'pdf': pdf})
    # zero padding lets the first and last bins count as maxima
    peaks, _ = find_peaks(np.concatenate(([0.0], pdf, [0.0])))
    return DelayDistribution(frame, [float(edges[i - 1]) for i in peaks])


@dataclass
class BudgetCurve:
    """Mean normalized price per whole day since the previous purchase."""
    points: pd.DataFrame
    delay_days: np.ndarray
    normalized: np.ndarray
    users: int

    def spearman(self, min_samples=MIN_CURVE_SAMPLES):
        """Rank correlation of (delay day, mean) over points with n >= min_samples."""
        pts = self.points[self.points['n'] >= min_samples]
        return spearman(pts['delay_days'], pts['mean'])

    @property
    def pooled_spearman(self):
        return spearman(self.delay_days, self.normalized)


def _cohort_range(cohort):
    if cohort is None:
        return None
    if isinstance(cohort, (int, np.integer)):
        return int(cohort), int(cohort)
    lo, hi = cohort
    if lo > hi:
        raise TemporalError(f'empty cohort range {cohort!r}')
    return int(lo), int(hi)


def budget_curve(dataset, cohort=None, shuffle_seed=None):
    """Budget curve for users whose purchase count lies in `cohort` (inclusive range).

    Normalized price is price over the user's total spend in the window. The
    first event of each user has no delay: it counts toward the total but not
    toward the curve. With `shuffle_seed` each user's prices are permuted
    across that user's events before anything else is computed.
    """
    ev = dataset.events
    counts = ev.groupby('user_id')['ts'].transform('size')
    bounds = _cohort_range(cohort)
    if bounds is not None:
        ev = ev[(counts >= bounds[0]) & (counts <= bounds[1])]
    if ev.empty:
        raise TemporalError(f'no users in cohort {cohort!r}')
    totals = ev.groupby('user_id')['price_cents'].transform('sum')
    zero = totals <= 0
    if zero.any():
        logger.warning('excluded %d zero-spend users from the budget curve',
                       ev.loc[zero, 'user_id'].nunique())
        ev, totals = ev[~zero], totals[~zero]
        if ev.empty:
            raise TemporalError(f'every user in cohort {cohort!r} has zero spend')

    prices = ev['price_cents'].to_numpy(dtype='float64')
    codes = pd.factorize(ev['user_id'])[0]
    if shuffle_seed is not None:
        rng = np.random.default_rng(shuffle_seed)
        # rows are grouped by user, so sorting by (user, random key) permutes within each user
        perm = np.lexsort((rng.random(len(prices)), codes))
        prices = prices[perm]
    normalized = prices / totals.to_numpy(dtype='float64')

    gaps = ev.groupby('user_id')['ts'].diff().to_numpy()
    has_delay = ~np.isnan(gaps)
    days = np.floor(gaps[has_delay] / DAY).astype('int64')
    values = normalized[has_delay]

    frame = pd.DataFrame({'delay_days': days, 'value': values})
    grouped = frame.groupby('delay_days')['value']
    points = grouped.agg(['mean', 'std', 'size']).reset_index().rename(columns={'size': 'n'})
    points['ci'] = np.where(points['n'] > 1, Z_95 * points['std'].fillna(0) / np.sqrt(points['n']), 0.0)
    points = points[['delay_days', 'mean', 'ci', 'n']]
    n_users = int(len(np.unique(codes)))
    logger.info('budget curve: %d users, %d delay points, shuffle=%s', n_users, len(points), shuffle_seed)
    return BudgetCurve(points, days, values, n_users)
