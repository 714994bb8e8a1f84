"""
Purchase similarity of e-mail contacts versus random shopper pairs.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import pandas as pd

from datastore import category_key

logger = logging.getLogger(__name__)

LEVELS = (1, 2, 3)
GENDER_PAIRS = {
    ('female', 'female'): 'ff',
    ('male', 'male'): 'mm',
    ('female', 'male'): 'fm',
    ('male', 'female'): 'fm',
}
MAX_DRAWS_PER_PAIR = 100


class SimilarityError(ValueError):
    pass


class InsufficientPairsError(SimilarityError):
    pass


class CategoryVector(Counter):
    """Purchase frequency per category id at one taxonomy level."""

    def __init__(self, counts=(), level=None):
        super().__init__(counts)
        self.level = level


def category_vector(dataset, user, level):
    if level not in LEVELS:
        raise SimilarityError(f'unknown category level {level!r}')
    keys = category_key(dataset.user_events(user), level).dropna()
    if keys.empty:
        raise SimilarityError(f'user {user} has no categorized purchases at level {level}')
    return CategoryVector(keys.value_counts().to_dict(), level)


def all_vectors(dataset, level):
    """category_vector for every user with at least one categorized purchase."""
    keys = category_key(dataset.events, level)
    frame = pd.DataFrame({'user_id': dataset.events['user_id'], 'key': keys}).dropna()
    vectors = {}
    for user_id, g in frame.groupby('user_id', sort=True)['key']:
        vectors[user_id] = CategoryVector(g.value_counts().to_dict(), level)
    return vectors


def cosine(v1, v2):
    if not v1 or not v2:
        raise SimilarityError('cosine of an empty category vector')
    l1, l2 = getattr(v1, 'level', None), getattr(v2, 'level', None)
    if l1 is not None and l2 is not None and l1 != l2:
        raise SimilarityError(f'comparing level {l1} with level {l2} vectors')
    dot = sum(v1[k] * v2[k] for k in sorted(v1.keys() & v2.keys()))
    n1 = math.sqrt(sum(c * c for c in v1.values()))
    n2 = math.sqrt(sum(c * c for c in v2.values()))
    return min(1.0, max(0.0, dot / (n1 * n2)))


def sample_connected_pairs(graph, eligible, n_pairs, rng):
    candidates = [(a, b) for a, b in graph.edges() if a in eligible and b in eligible]
    if len(candidates) < n_pairs:
        raise InsufficientPairsError(
            f'need {n_pairs} connected shopper pairs, graph has {len(candidates)} '
            f'(short by {n_pairs - len(candidates)})')
    idx = rng.choice(len(candidates), size=n_pairs, replace=False)
    return [candidates[i] for i in sorted(idx)]


def sample_random_pairs(graph, eligible, n_pairs, rng):
    """Uniform shopper pairs that share no direct edge, without repeats."""
    users = sorted(eligible)
    m = len(users)
    possible = m * (m - 1) // 2 - sum(1 for a, b in graph.edges() if a in eligible and b in eligible)
    if possible < n_pairs:
        raise InsufficientPairsError(
            f'need {n_pairs} unconnected shopper pairs, only {max(possible, 0)} exist')
    pairs = []
    seen = set()
    draws = 0
    while len(pairs) < n_pairs:
        draws += 1
        if draws > MAX_DRAWS_PER_PAIR * n_pairs:
            raise InsufficientPairsError(f'gave up after {draws} draws with {len(pairs)} random pairs')
        i, j = rng.integers(0, m, size=2)
        if i == j:
            continue
        a, b = sorted((users[i], users[j]))
        if (a, b) in seen or graph.has_edge(a, b):
            continue
        seen.add((a, b))
        pairs.append((a, b))
    return pairs


def _row(level, cohort, sims):
    sims = np.asarray(sims, dtype='float64')
    n = len(sims)
    sem = float(sims.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return {'level': level, 'cohort': cohort, 'mean': float(sims.mean()) if n else float('nan'),
            'sem': sem, 'n': n}


@dataclass
class SimilarityReport:
    rows: pd.DataFrame

    def mean(self, level, cohort):
        return float(self._get(level, cohort)['mean'])

    def sem(self, level, cohort):
        return float(self._get(level, cohort)['sem'])

    def lift(self, level):
        base = self.mean(level, 'random')
        if base == 0:
            return float('nan')
        return self.mean(level, 'connected') / base - 1

    def _get(self, level, cohort):
        hit = self.rows[(self.rows['level'] == level) & (self.rows['cohort'] == cohort)]
        if hit.empty:
            raise KeyError((level, cohort))
        return hit.iloc[0]

    def to_frame(self):
        frame = self.rows.copy()
        frame['lift'] = [self.lift(lvl) if c == 'connected' else np.nan
                         for lvl, c in zip(frame['level'], frame['cohort'])]
        return frame


def cohort_similarity(dataset, graph, n_pairs, seed, by_gender=False):
    """Mean cosine of connected versus random shopper pairs at every level.

    Shoppers qualify when they have categorized purchases at all three
    levels. Pairs are drawn with numpy's default_rng(seed).
    """
    if n_pairs < 1:
        raise SimilarityError('n_pairs must be at least 1')
    vectors = {level: all_vectors(dataset, level) for level in LEVELS}
    eligible = set(vectors[1]) & set(vectors[2]) & set(vectors[3])
    rng = np.random.default_rng(seed)
    connected = sample_connected_pairs(graph, eligible, n_pairs, rng)
    random_pairs = sample_random_pairs(graph, eligible, n_pairs, rng)

    partitions = {}
    if by_gender:
        for a, b in connected:
            key = GENDER_PAIRS.get((dataset.profile(a).gender, dataset.profile(b).gender))
            if key:
                partitions.setdefault(key, []).append((a, b))

    rows = []
    for level in LEVELS:
        vec = vectors[level]
        rows.append(_row(level, 'connected', [cosine(vec[a], vec[b]) for a, b in connected]))
        rows.append(_row(level, 'random', [cosine(vec[a], vec[b]) for a, b in random_pairs]))
        for key in ('ff', 'mm', 'fm'):
            if key in partitions:
                rows.append(_row(level, key, [cosine(vec[a], vec[b]) for a, b in partitions[key]]))
    report = SimilarityReport(pd.DataFrame(rows, columns=['level', 'cohort', 'mean', 'sem', 'n']))
    for level in LEVELS:
        logger.info('level %d: connected %.3f random %.3f lift %+.1f%%', level,
                    report.mean(level, 'connected'), report.mean(level, 'random'), 100 * report.lift(level))
    return report
