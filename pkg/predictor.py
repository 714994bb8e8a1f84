"""
Next-purchase prediction: price class and time class of a user's next purchase.

Every purchase after a user's first is one instance; its 55 features read
only the strictly earlier history (plus, when enabled, the declared
cross-target slot). The classifier is a naive-factorized Bayesian model over
discretized features with additive smoothing, evaluated against the
majority, last-class and most-used-class baselines.
"""

import json
import logging
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from scipy.stats import chi2_contingency
from sklearn.metrics import roc_auc_score
from sklearn.preprocessing import label_binarize

logger = logging.getLogger(__name__)

DAY = 86400
ALPHA = 0.5
N_BINS = 5
PRICE_THRESHOLDS = (600, 1200, 2000, 4000)
TIME_THRESHOLDS = (1, 5, 14, 33)
TARGETS = ('price', 'time')
CLASSES = (1, 2, 3, 4, 5)

DEMOGRAPHIC_FEATURES = ['gender', 'age', 'zip', 'income']
PRICE_FEATURES = (
    [f'last_price_{i}' for i in (1, 2, 3)]
    + [f'last_price_class_{i}' for i in (1, 2, 3)]
    + ['n_purchases', 'mean_price', 'median_price', 'total_spent', 'price_std']
    + [f'n_price_class_P{c}' for c in CLASSES]
    + ['modal_price_class', 'modal_price_class_count', 'total_purchases_so_far']
)
TIME_FEATURES = (
    [f'prev_delay_{i}' for i in (1, 2, 3)]
    + ['mean_delay', 'median_delay', 'delay_std']
    + [f'n_delay_class_T{c}' for c in CLASSES]
    + ['modal_delay_class', 'modal_delay_class_count']
)
PRODUCT_FEATURES = [f'last_category_{i}' for i in (1, 2, 3)] + ['modal_category']
CROSS_FEATURES = ['cross_target']
CONTACT_STATS = ('mean', 'median', 'std', 'min', 'max', 'p10', 'p90')
CONTACT_FEATURES = [f'contact_price_{s}' for s in CONTACT_STATS] + [f'contact_delay_{s}' for s in CONTACT_STATS]

FEATURE_NAMES = (DEMOGRAPHIC_FEATURES + PRICE_FEATURES + TIME_FEATURES
                 + PRODUCT_FEATURES + CROSS_FEATURES + CONTACT_FEATURES)
CATEGORICAL_FEATURES = frozenset(
    ['gender', 'zip', 'modal_price_class', 'modal_delay_class']
    + [f'last_price_class_{i}' for i in (1, 2, 3)]
    + PRODUCT_FEATURES
)


class PredictorError(ValueError):
    pass


class PriceClass(IntEnum):
    P1 = 1
    P2 = 2
    P3 = 3
    P4 = 4
    P5 = 5


class TimeClass(IntEnum):
    T1 = 1
    T2 = 2
    T3 = 3
    T4 = 4
    T5 = 5


def discretize_target(value, kind):
    """Price in cents or delay in days -> its half-open class."""
    if kind not in TARGETS:
        raise PredictorError(f'unknown target kind {kind!r}')
    if value < 0:
        raise PredictorError(f'negative {kind} value {value}')
    if kind == 'price':
        return PriceClass(bisect_right(PRICE_THRESHOLDS, value) + 1)
    return TimeClass(bisect_right(TIME_THRESHOLDS, value) + 1)


def _classes_of(values, thresholds):
    return np.searchsorted(np.asarray(thresholds, dtype='float64'), values, side='right') + 1


def is_missing(value):
    if value is None or value is pd.NA:
        return True
    return isinstance(value, (float, np.floating)) and np.isnan(value)


class FeatureVector(dict):
    """The 55 named features of one instance; None marks a missing value."""

    def __init__(self, values):
        unknown = set(values) - set(FEATURE_NAMES)
        if unknown:
            raise PredictorError(f'unknown features: {", ".join(sorted(unknown))}')
        super().__init__((name, None if is_missing(values.get(name)) else values.get(name))
                         for name in FEATURE_NAMES)

    def missing(self, name):
        return self[name] is None


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------

def _objects(values, ok):
    out = np.empty(len(ok), dtype=object)
    for i, good in enumerate(ok):
        out[i] = values[i] if good else None
    return out


def _prefix_blocks(ts, prices, categories):
    """Price, time and product features for every history prefix.

    Row k-1 describes the history made of the first k events.
    """
    n = len(ts)
    k = np.arange(1, n + 1)
    p = prices.astype('float64')
    pc = _classes_of(p, PRICE_THRESHOLDS)
    cols = {}

    for i in (1, 2, 3):
        src = k - i
        ok = src >= 0
        safe = np.clip(src, 0, None)
        cols[f'last_price_{i}'] = np.where(ok, p[safe], np.nan)
        cols[f'last_price_class_{i}'] = _objects(pc[safe], ok)

    new_occasion = np.concatenate(([True], ts[1:] != ts[:-1])) if n else np.zeros(0, bool)
    cols['n_purchases'] = np.cumsum(new_occasion).astype('float64')
    csum = np.cumsum(p)
    mean = csum / k
    cols['mean_price'] = mean
    cols['median_price'] = np.array([np.median(p[:j]) for j in k])
    cols['total_spent'] = csum
    cols['price_std'] = np.sqrt(np.clip(np.cumsum(p * p) / k - mean ** 2, 0, None))
    price_counts = np.cumsum(np.eye(5)[pc - 1], axis=0) if n else np.zeros((0, 5))
    for c in CLASSES:
        cols[f'n_price_class_P{c}'] = price_counts[:, c - 1]
    cols['modal_price_class'] = _objects(np.argmax(price_counts, axis=1) + 1, np.ones(n, bool))
    cols['modal_price_class_count'] = price_counts.max(axis=1) if n else np.zeros(0)
    cols['total_purchases_so_far'] = k.astype('float64')

    # delays run between distinct purchase times; items of one order share a time
    delays = np.diff(ts[new_occasion]) / DAY
    n_delays = np.cumsum(new_occasion) - 1
    has = n_delays > 0
    for i in (1, 2, 3):
        src = n_delays - i
        ok = src >= 0
        cols[f'prev_delay_{i}'] = np.where(ok, delays[np.clip(src, 0, None)] if len(delays) else np.nan, np.nan)
    dsum = np.concatenate(([0.0], np.cumsum(delays)))[n_delays]
    dsq = np.concatenate(([0.0], np.cumsum(delays * delays)))[n_delays]
    with np.errstate(divide='ignore', invalid='ignore'):
        dmean = np.where(has, dsum / np.maximum(n_delays, 1), np.nan)
        cols['mean_delay'] = dmean
        cols['delay_std'] = np.where(has, np.sqrt(np.clip(dsq / np.maximum(n_delays, 1) - dmean ** 2, 0, None)), np.nan)
    cols['median_delay'] = np.array([np.median(delays[:j]) if j else np.nan for j in n_delays])
    dc = _classes_of(delays, TIME_THRESHOLDS)
    delay_counts = np.vstack([np.zeros((1, 5)), np.cumsum(np.eye(5)[dc - 1], axis=0)]) if len(delays) \
        else np.zeros((1, 5))
    delay_counts = delay_counts[n_delays] if n else np.zeros((0, 5))
    for c in CLASSES:
        cols[f'n_delay_class_T{c}'] = delay_counts[:, c - 1]
    cols['modal_delay_class'] = _objects(np.argmax(delay_counts, axis=1) + 1 if n else [], has)
    cols['modal_delay_class_count'] = delay_counts.max(axis=1) if n else np.zeros(0)

    for i in (1, 2, 3):
        src = k - i
        cols[f'last_category_{i}'] = _objects([categories[s] if s >= 0 else None for s in src], src >= 0)
    modal = np.empty(n, dtype=object)
    seen = Counter()
    best = None
    for j, cat in enumerate(categories):
        if cat is not None:
            seen[cat] += 1
            if best is None or seen[cat] > seen[best] or (seen[cat] == seen[best] and cat < best):
                best = cat
        modal[j] = best
    cols['modal_category'] = modal
    return cols


def _summary(values):
    if len(values) == 0:
        return [np.nan] * len(CONTACT_STATS)
    p10, med, p90 = np.quantile(values, [0.1, 0.5, 0.9])
    return [values.mean(), med, values.std(), values.min(), values.max(), p10, p90]


def _contact_block(stream_ts, stream_values, instants, prefix):
    """Statistics of a merged contact stream restricted to entries before each instant."""
    ks = np.searchsorted(stream_ts, instants, side='left')
    cache = {}
    rows = []
    for kk in ks:
        if kk not in cache:
            cache[kk] = _summary(stream_values[:kk])
        rows.append(cache[kk])
    rows = np.array(rows, dtype='float64').reshape(len(instants), len(CONTACT_STATS))
    return {f'{prefix}_{s}': rows[:, i] for i, s in enumerate(CONTACT_STATS)}


@dataclass
class _Stream:
    ts: np.ndarray
    prices: np.ndarray
    categories: list

    @property
    def delay_ts(self):
        return np.unique(self.ts)[1:]

    @property
    def delays(self):
        return np.diff(np.unique(self.ts)) / DAY


def _user_stream(dataset, user):
    ev = dataset.user_events(user)
    cats = [None if is_missing(c) else c for c in ev['cat1']]
    return _Stream(ev['ts'].to_numpy(dtype='int64'), ev['price_cents'].to_numpy(dtype='float64'), cats)


def _contact_streams(contacts, streams):
    """Merge contacts' purchase and delay streams, each sorted by time."""
    parts = [streams[c] for c in sorted(contacts) if c in streams]
    if not parts:
        return None
    pts = np.concatenate([s.ts for s in parts])
    pv = np.concatenate([s.prices for s in parts])
    dts = np.concatenate([s.delay_ts for s in parts])
    dv = np.concatenate([s.delays for s in parts])
    po, do = np.argsort(pts, kind='stable'), np.argsort(dts, kind='stable')
    return pts[po], pv[po], dts[do], dv[do]


def _instance_columns(profile, stream, rows, instants, cross, merged):
    n = len(rows)
    cols = {
        'gender': np.array([profile.gender] * n, dtype=object),
        'age': np.full(n, np.nan if profile.age is None else float(profile.age)),
        'zip': np.array([profile.zip] * n, dtype=object),
        'income': np.full(n, np.nan if profile.income_cents is None else float(profile.income_cents)),
    }
    blocks = _prefix_blocks(stream.ts, stream.prices, stream.categories)
    for name in PRICE_FEATURES + TIME_FEATURES + PRODUCT_FEATURES:
        cols[name] = blocks[name][rows]
    cols['cross_target'] = cross
    if merged is None:
        for name in CONTACT_FEATURES:
            cols[name] = np.full(n, np.nan)
    else:
        pts, pv, dts, dv = merged
        cols.update(_contact_block(pts, pv, instants, 'contact_price'))
        cols.update(_contact_block(dts, dv, instants, 'contact_delay'))
    return cols


def _category_value(v):
    if is_missing(v):
        return None
    if isinstance(v, (int, np.integer)) or (isinstance(v, (float, np.floating)) and float(v).is_integer()):
        return str(int(v))
    return str(v)


def _frame(columns):
    frame = pd.DataFrame(columns, columns=FEATURE_NAMES)
    for name in FEATURE_NAMES:
        if name in CATEGORICAL_FEATURES:
            frame[name] = frame[name].map(_category_value).astype(object)
        else:
            frame[name] = frame[name].astype('float64')
    return frame


def _check_target(kind):
    if kind not in TARGETS:
        raise PredictorError(f'unknown target kind {kind!r}')


def extract_features(dataset, graph, user, prediction_instant, target_kind='price', include_cross_target=True):
    """FeatureVector for `user` at `prediction_instant` from strictly earlier events."""
    _check_target(target_kind)
    stream = _user_stream(dataset, user)
    k = int(np.searchsorted(stream.ts, prediction_instant, side='left'))
    if k == 0:
        raise PredictorError(f'user {user} has no purchase before {prediction_instant}')
    history = _Stream(stream.ts[:k], stream.prices[:k], stream.categories[:k])

    cross = np.nan
    if include_cross_target and k < len(stream.ts):
        if target_kind == 'price':
            cross = (stream.ts[k] - stream.ts[k - 1]) / DAY
        else:
            cross = stream.prices[k]

    merged = None
    if graph is not None:
        contacts = graph.contacts(user, 1)
        merged = _contact_streams(contacts, {c: _user_stream(dataset, c) for c in contacts})
    cols = _instance_columns(dataset.profile(user), history, np.array([k - 1]),
                             np.array([prediction_instant]), np.array([cross], dtype='float64'), merged)
    row = _frame(cols).iloc[0]
    return FeatureVector(row.to_dict())


@dataclass
class Instances:
    """Prediction instances: one per purchase with strictly earlier history."""
    features: pd.DataFrame
    labels: np.ndarray
    instants: np.ndarray
    users: np.ndarray
    target_kind: str

    def __len__(self):
        return len(self.labels)

    def subset(self, mask):
        mask = np.asarray(mask)
        return Instances(self.features[mask].reset_index(drop=True), self.labels[mask],
                         self.instants[mask], self.users[mask], self.target_kind)

    def _history_class(self, column):
        return np.array([None if v is None else int(v) for v in self.features[column]], dtype=object)

    @property
    def last_class(self):
        if self.target_kind == 'price':
            return self._history_class('last_price_class_1')
        delays = self.features['prev_delay_1'].to_numpy()
        return np.array([None if np.isnan(d) else int(discretize_target(d, 'time')) for d in delays], dtype=object)

    @property
    def most_used_class(self):
        column = 'modal_price_class' if self.target_kind == 'price' else 'modal_delay_class'
        return self._history_class(column)


def build_instances(dataset, graph=None, target_kind='price', include_cross_target=True):
    _check_target(target_kind)
    streams = {u: _user_stream(dataset, u) for u in dataset.users}
    parts = {name: [] for name in FEATURE_NAMES}
    labels, instants, users = [], [], []
    for user, stream in streams.items():
        ts = stream.ts
        k = np.searchsorted(ts, ts, side='left')
        idx = np.flatnonzero(k >= 1)
        if not len(idx):
            continue
        prev = k[idx] - 1
        delay = (ts[idx] - ts[prev]) / DAY
        if target_kind == 'price':
            y = _classes_of(stream.prices[idx], PRICE_THRESHOLDS)
            cross = delay
        else:
            y = _classes_of(delay, TIME_THRESHOLDS)
            cross = stream.prices[idx]
        if not include_cross_target:
            cross = np.full(len(idx), np.nan)
        merged = None
        if graph is not None:
            merged = _contact_streams(graph.contacts(user, 1), streams)
        cols = _instance_columns(dataset.profile(user), stream, prev, ts[idx], cross.astype('float64'), merged)
        for name in FEATURE_NAMES:
            parts[name].append(cols[name])
        labels.append(y)
        instants.append(ts[idx])
        users.append(np.full(len(idx), user, dtype=object))

    if not labels:
        frame = _frame({name: [] for name in FEATURE_NAMES})
        return Instances(frame, np.zeros(0, 'int64'), np.zeros(0, 'int64'), np.zeros(0, object), target_kind)
    columns = {name: np.concatenate(parts[name]) for name in FEATURE_NAMES}
    inst = Instances(_frame(columns), np.concatenate(labels).astype('int64'),
                     np.concatenate(instants), np.concatenate(users), target_kind)
    logger.info('built %d %s instances from %d users', len(inst), target_kind, len(streams))
    return inst


def month_split(dataset, train_months=6, test_months=2):
    """(train_end, test_end) epoch seconds counted in calendar months from the window start."""
    start = pd.Timestamp(dataset.t_start, unit='s')
    train_end = start + pd.DateOffset(months=train_months)
    test_end = train_end + pd.DateOffset(months=test_months)
    return int(train_end.timestamp()), int(test_end.timestamp())


def temporal_split(instances, train_end, test_end):
    train = instances.subset(instances.instants < train_end)
    test = instances.subset((instances.instants >= train_end) & (instances.instants < test_end))
    return train, test


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

def fit_bins(values, k=N_BINS):
    """Quantile bin edges; bin = searchsorted(edges, v, 'right'), missing bin is extra.

    A column with at most k distinct values gets one bin per value.
    """
    v = np.asarray(values, dtype='float64')
    if len(v) == 0:
        raise PredictorError('cannot fit bins on an empty column')
    v = v[~np.isnan(v)]
    if len(v) == 0:
        return np.zeros(0)
    distinct = np.unique(v)
    if len(distinct) <= k:
        return distinct[1:]
    edges = np.unique(np.quantile(v, [i / k for i in range(1, k)]))
    return edges[edges > v.min()]


@dataclass
class NBModel:
    classes: list
    priors: np.ndarray
    features: list
    bins: dict
    cpts: dict
    alpha: float = ALPHA
    target_kind: str = None

    @property
    def majority_class(self):
        return self.classes[int(np.argmax(self.priors))]

    def n_bins(self, feature):
        spec = self.bins[feature]
        if spec['kind'] == 'continuous':
            return len(spec['edges']) + 2
        return len(spec['values']) + (1 if spec['missing'] else 0)

    def bin_indices(self, feature, column):
        """Bin index per value; -1 where the value has no bin (skipped at prediction)."""
        spec = self.bins[feature]
        if spec['kind'] == 'continuous':
            v = pd.to_numeric(pd.Series(column, dtype=object), errors='coerce').to_numpy(dtype='float64')
            idx = np.searchsorted(np.asarray(spec['edges'], dtype='float64'), v, side='right')
            idx[np.isnan(v)] = len(spec['edges']) + 1
            return idx
        lookup = {val: i for i, val in enumerate(spec['values'])}
        miss = len(spec['values']) if spec['missing'] else -1
        return np.array([miss if is_missing(x) else lookup.get(_category_value(x), -1) for x in column],
                        dtype='int64')

    def to_json(self):
        return json.dumps({
            'alpha': self.alpha,
            'target_kind': self.target_kind,
            'classes': [int(c) for c in self.classes],
            'priors': [float(p) for p in self.priors],
            'features': list(self.features),
            'bins': self.bins,
            'cpts': {f: self.cpts[f].tolist() for f in self.features},
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(
            classes=data['classes'],
            priors=np.asarray(data['priors'], dtype='float64'),
            features=data['features'],
            bins=data['bins'],
            cpts={f: np.asarray(t, dtype='float64') for f, t in data['cpts'].items()},
            alpha=data['alpha'],
            target_kind=data.get('target_kind'),
        )


def _bin_spec(feature, column, categorical, k):
    if categorical:
        present = [_category_value(x) for x in column if not is_missing(x)]
        return {'kind': 'categorical', 'values': sorted(set(present)),
                'missing': len(present) < len(column)}
    return {'kind': 'continuous', 'edges': [float(e) for e in fit_bins(column, k)]}


def train(features, labels, alpha=ALPHA, classes=None, k=N_BINS, categorical=None, target_kind=None):
    """Fit priors (N_c+a)/(N+aK) and per-feature tables (n+a)/(N_c+aV_f)."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise PredictorError('empty training set')
    if alpha <= 0:
        raise PredictorError('alpha must be positive')
    classes = sorted(int(c) for c in (classes if classes is not None else np.unique(labels)))
    if categorical is None:
        categorical = CATEGORICAL_FEATURES | {c for c in features.columns if features[c].dtype == object}
    y = np.searchsorted(classes, labels)
    n_c = np.bincount(y, minlength=len(classes)).astype('float64')
    priors = (n_c + alpha) / (len(labels) + alpha * len(classes))

    model = NBModel(list(classes), priors, list(features.columns), {}, {}, alpha, target_kind)
    for feature in features.columns:
        column = features[feature].tolist()
        model.bins[feature] = _bin_spec(feature, column, feature in categorical, k)
        idx = model.bin_indices(feature, column)
        counts = np.zeros((len(classes), model.n_bins(feature)))
        ok = idx >= 0
        np.add.at(counts, (y[ok], idx[ok]), 1)
        model.cpts[feature] = (counts + alpha) / (n_c[:, None] + alpha * model.n_bins(feature))
    logger.info('trained on %d instances, %d features, %d classes', len(labels), len(model.features), len(classes))
    return model


def predict_proba(model, features):
    """Posterior matrix (instances x classes) for a feature frame."""
    log_post = np.tile(np.log(model.priors), (len(features), 1))
    for feature in model.features:
        if feature not in features.columns:
            continue
        idx = model.bin_indices(feature, features[feature].tolist())
        ok = idx >= 0
        log_cpt = np.log(model.cpts[feature])
        log_post[ok] += log_cpt[:, idx[ok]].T
    return np.exp(log_post - logsumexp(log_post, axis=1, keepdims=True))


def predict(model, features):
    """(class, posterior vector) for one instance; ties go to the lower class."""
    if isinstance(features, pd.Series):
        features = features.to_dict()
    frame = pd.DataFrame([{f: features.get(f) for f in model.features}], columns=model.features)
    frame = frame.astype(object)
    posterior = predict_proba(model, frame)[0]
    return model.classes[int(np.argmax(posterior))], posterior


def baseline_predict(kind, history, training_majority):
    if kind == 'majority' or not len(history):
        if kind not in ('majority', 'last_class', 'most_used_class'):
            raise PredictorError(f'unknown baseline {kind!r}')
        return training_majority
    if kind == 'last_class':
        return history[-1]
    if kind == 'most_used_class':
        counts = Counter(history)
        top = max(counts.values())
        return min(c for c, n in counts.items() if n == top)
    raise PredictorError(f'unknown baseline {kind!r}')


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def weighted_auc(labels, posteriors, classes):
    """Prevalence-weighted one-vs-rest ROC AUC over the classes present in `labels`."""
    labels = np.asarray(labels)
    total, weight = 0.0, 0.0
    for i, c in enumerate(classes):
        pos = labels == c
        if not pos.any() or pos.all():
            continue
        prevalence = pos.mean()
        total += prevalence * roc_auc_score(pos, posteriors[:, i])
        weight += prevalence
    return total / weight if weight else float('nan')


def rmse(labels, posteriors, classes):
    onehot = label_binarize(labels, classes=list(classes))
    if len(classes) == 2:
        onehot = np.hstack([1 - onehot, onehot])
    return float(np.sqrt(np.mean((posteriors - onehot) ** 2)))


@dataclass
class EvalReport:
    n: int
    majority_accuracy: float
    last_class_accuracy: float
    most_used_accuracy: float
    accuracy: float
    auc: float
    rmse: float
    target_kind: str = None
    improvement_abs: float = field(init=False)
    improvement_rel: float = field(init=False)

    def __post_init__(self):
        self.improvement_abs = self.accuracy - self.majority_accuracy
        self.improvement_rel = self.improvement_abs / self.majority_accuracy if self.majority_accuracy else float('nan')

    def to_frame(self):
        return pd.DataFrame([{
            'target': self.target_kind,
            'n': self.n,
            'majority': self.majority_accuracy,
            'last_class': self.last_class_accuracy,
            'most_used_class': self.most_used_accuracy,
            'classifier': self.accuracy,
            'improvement_abs': self.improvement_abs,
            'improvement_rel': self.improvement_rel,
            'auc': self.auc,
            'rmse': self.rmse,
        }])


def _baseline_accuracy(history_classes, labels, majority):
    guess = np.array([majority if c is None else c for c in history_classes], dtype='int64')
    return float(np.mean(guess == labels))


def evaluate(model, test, training_majority=None):
    """Accuracy of the model and the three baselines on held-out instances."""
    if len(test) == 0:
        raise PredictorError('empty test set')
    majority = model.majority_class if training_majority is None else training_majority
    labels = test.labels
    posteriors = predict_proba(model, test.features)
    predicted = np.asarray(model.classes)[np.argmax(posteriors, axis=1)]
    shares = pd.Series(labels).value_counts(normalize=True)
    report = EvalReport(
        n=len(labels),
        majority_accuracy=float(shares.max()),
        last_class_accuracy=_baseline_accuracy(test.last_class, labels, majority),
        most_used_accuracy=_baseline_accuracy(test.most_used_class, labels, majority),
        accuracy=float(np.mean(predicted == labels)),
        auc=weighted_auc(labels, posteriors, model.classes),
        rmse=rmse(labels, posteriors, model.classes),
        target_kind=test.target_kind,
    )
    logger.info('accuracy %.3f vs majority %.3f (%+.1f%%)', report.accuracy,
                report.majority_accuracy, 100 * report.improvement_rel)
    return report


def chi2_rank(features, labels, model=None, k=N_BINS):
    """Features ranked by chi-squared statistic of their bins against the labels."""
    labels = np.asarray(labels)
    if model is None:
        model = train(features, labels, k=k)
    rows = []
    for feature in features.columns:
        if feature not in model.bins:
            continue
        idx = model.bin_indices(feature, features[feature].tolist())
        ok = idx >= 0
        table = pd.crosstab(idx[ok], labels[ok])
        if table.shape[0] < 2 or table.shape[1] < 2:
            stat = 0.0
        else:
            stat = float(chi2_contingency(table.to_numpy(), correction=False)[0])
        rows.append((feature, stat))
    ranked = pd.DataFrame(rows, columns=['feature', 'chi2'])
    return ranked.sort_values(['chi2', 'feature'], ascending=[False, True], kind='mergesort').reset_index(drop=True)
