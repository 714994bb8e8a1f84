#!/usr/bin/env python3
"""
Command-line entry point: one subcommand per analysis.

    python cli.py synth --seed 7 --out data/
    python cli.py budget-curve --data data/ --cohort 5 --shuffle --seed 7
    python cli.py evaluate --data data/ --target price --train-months 6 --test-months 2

Analysis subcommands read a dataset directory (events.jsonl, profiles.csv,
taxonomy.csv, zip_income.csv, zip_timezone.csv, edges.csv, manifest.json).
Tables go to --out as CSV, or stdout when --out is omitted.
"""

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import pandas as pd

import cohort_analytics
import datastore
import predictor
import receipt_parser
import social_analytics
import synthgen
import temporal_analytics

logger = logging.getLogger(__name__)

LOG_LEVEL = os.getenv('PURCHASES_LOG_LEVEL', 'INFO')
STATS = ('groups', 'purchases_per_user', 'spend_per_user', 'purchases_per_item',
         'price_popularity', 'top_items_count', 'top_items_spend')
TEMPORAL = ('day_of_week', 'hour_of_day', 'month_boundary', 'daily', 'delays')
SIDE_FILES = (datastore.ZIP_INCOME_FILE, datastore.ZIP_TIMEZONE_FILE, datastore.EDGES_FILE)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _emit_text(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding='utf-8')


def _emit(frame, out):
    _emit_text(frame.to_csv(index=False), out)


def _load(args):
    dataset, rejected = datastore.load_dataset_dir(args.data, args.max_purchases)
    if rejected:
        logger.warning('%d records rejected while loading %s', len(rejected), args.data)
    return dataset


def _graph(args, dataset, required=False):
    path = Path(args.data) / datastore.EDGES_FILE
    if not path.exists():
        if required:
            raise FileNotFoundError(f'no {datastore.EDGES_FILE} in {args.data}')
        return None
    return datastore.load_graph_dir(args.data, set(dataset.users), args.min_messages)


def _zip_timezone(args):
    path = Path(args.data) / datastore.ZIP_TIMEZONE_FILE
    return datastore.load_zip_timezone(path) if path.exists() else None


def _group(dataset, spec):
    """'gender=female,age=18-34' -> user ids."""
    gender = age = None
    for part in filter(None, spec.split(',')):
        key, _, value = part.partition('=')
        if key == 'gender':
            gender = datastore.normalize_gender(value)
        elif key == 'age':
            lo, _, hi = value.partition('-')
            age = (int(lo), int(hi or lo))
        else:
            raise UsageError(f'bad group {spec!r}: use gender=... and/or age=LO-HI')
    return cohort_analytics.select_users(dataset, gender=gender, age_range=age)


def _cohort(value):
    if value is None or value == 'all':
        return None
    lo, _, hi = value.partition('-')
    return int(lo), int(hi or lo)


def _instances(args, dataset):
    graph = _graph(args, dataset)
    instances = predictor.build_instances(dataset, graph, args.target, not args.no_cross_target)
    train_end, test_end = predictor.month_split(dataset, args.train_months, args.test_months)
    return predictor.temporal_split(instances, train_end, test_end)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_parse(args):
    templates = receipt_parser.load_templates(args.templates)
    events, failures = receipt_parser.parse_corpus(args.emails, templates)
    frame = datastore.events_frame(events)
    if args.out is None:
        for rec in frame.to_dict('records'):
            sys.stdout.write(json.dumps(rec, ensure_ascii=False) + '\n')
    else:
        datastore.write_events(frame, args.out)
    kinds = pd.Series([kind for _, kind, _ in failures], dtype=object).value_counts()
    unmatched = int(kinds.get('NoTemplateMatch', 0))
    logger.info('parsed %d events; NoTemplateMatch: %d; other failures: %d',
                len(frame), unmatched, int(kinds.sum()) - unmatched)


def cmd_synth(args):
    if args.out is None:
        raise UsageError('synth needs --out DIR')
    overrides = {'seed': args.seed, 'n_users': args.n_users}
    if args.config:
        config = synthgen.SynthConfig.from_json(Path(args.config), **overrides)
    else:
        config = synthgen.SynthConfig(**{k: v for k, v in overrides.items() if v is not None}).validate()
    _, _, truth = synthgen.generate(config, args.out)
    logger.info('wrote %d events for %d shoppers to %s', truth['n_events'], truth['n_shoppers'], args.out)


def cmd_render(args):
    if args.out is None:
        raise UsageError('render needs --out DIR')
    dataset = _load(args)
    receipts = synthgen.render_receipts(dataset, receipt_parser.load_templates(args.templates))
    logger.info('wrote %d emails to %s', synthgen.write_corpus(receipts, args.out), args.out)


def cmd_ingest(args):
    if args.out is None:
        raise UsageError('ingest needs --out DIR')
    dataset = _load(args)
    datastore.write_dataset_dir(dataset, args.out)
    for name in SIDE_FILES:
        if (Path(args.data) / name).exists():
            shutil.copyfile(Path(args.data) / name, Path(args.out) / name)
    logger.info('%d events kept; %d bulk accounts removed', len(dataset), dataset.provenance['users_removed'])


def cmd_stats(args):
    dataset = _load(args)
    if args.what == 'groups':
        frame = cohort_analytics.stats_frame(cohort_analytics.group_stats(dataset))
    elif args.what == 'price_popularity':
        frame, rho = cohort_analytics.price_popularity(dataset, args.bins)
        logger.info('spearman(price, purchases) = %.4f', rho)
    elif args.what.startswith('top_items_'):
        frame = cohort_analytics.top_items(dataset, args.what.rsplit('_', 1)[1], args.top_k)
    else:
        frame = cohort_analytics.distribution(dataset, args.what, args.bins)
    _emit(frame, args.out)


def cmd_distinctive(args):
    dataset = _load(args)
    level = args.level if args.level == 'item' else int(args.level)
    frame = cohort_analytics.distinctive_categories(
        dataset, _group(dataset, args.a), _group(dataset, args.b), level, args.top_k)
    _emit(frame, args.out)


def cmd_income(args):
    dataset = _load(args)
    stats = cohort_analytics.group_stats(dataset, grouping='income', n_income_buckets=args.buckets)
    _emit(cohort_analytics.stats_frame(stats), args.out)


def cmd_temporal(args):
    dataset = _load(args)
    zones = _zip_timezone(args)
    if args.what in ('day_of_week', 'hour_of_day'):
        profile = temporal_analytics.activity_profile(dataset, args.what, zones)
        frame = profile.counts.assign(monday_sunday_ratio=profile.monday_sunday_ratio)
    elif args.what == 'month_boundary':
        frame = temporal_analytics.month_boundary_test(dataset, zones)
    elif args.what == 'daily':
        frame = temporal_analytics.daily_counts(dataset, zones)
    else:
        dist = temporal_analytics.delay_distribution(dataset)
        frame = dist.pdf
        logger.info('local maxima at days: %s', ', '.join(f'{p:g}' for p in dist.peaks[:10]))
    _emit(frame, args.out)


def cmd_recurring(args):
    _emit(temporal_analytics.recurring_items(_load(args), args.top_k), args.out)


def cmd_budget_curve(args):
    if args.shuffle and args.seed is None:
        raise UsageError('budget-curve --shuffle needs --seed')
    dataset = _load(args)
    curve = temporal_analytics.budget_curve(dataset, _cohort(args.cohort), args.seed if args.shuffle else None)
    logger.info('%d users; spearman(curve) = %.4f; spearman(pooled) = %.4f',
                curve.users, curve.spearman(args.min_samples), curve.pooled_spearman)
    _emit(curve.points, args.out)


def cmd_social_sim(args):
    dataset = _load(args)
    graph = _graph(args, dataset, required=True)
    report = social_analytics.cohort_similarity(dataset, graph, args.pairs, args.seed, args.by_gender)
    _emit(report.to_frame(), args.out)


def cmd_train(args):
    dataset = _load(args)
    train, _ = _instances(args, dataset)
    model = predictor.train(train.features, train.labels, args.alpha, classes=predictor.CLASSES,
                            target_kind=args.target)
    _emit_text(model.to_json() + '\n', args.out)


def cmd_predict(args):
    dataset = _load(args)
    model = predictor.NBModel.from_json(Path(args.model).read_text())
    target = model.target_kind or args.target
    at = int(args.at) if args.at.isdigit() else int(pd.Timestamp(args.at, tz='UTC').timestamp())
    features = predictor.extract_features(dataset, _graph(args, dataset), args.user, at, target,
                                          not args.no_cross_target)
    cls, posterior = predictor.predict(model, features)
    result = {'user_id': args.user, 'instant': at, 'target': target, 'class': int(cls),
              'posterior': {str(c): float(p) for c, p in zip(model.classes, posterior)}}
    _emit_text(json.dumps(result, indent=2, sort_keys=True) + '\n', args.out)


def cmd_evaluate(args):
    dataset = _load(args)
    model = None
    if args.model:
        model = predictor.NBModel.from_json(Path(args.model).read_text())
        args.target = model.target_kind or args.target
    train, test = _instances(args, dataset)
    if model is None:
        model = predictor.train(train.features, train.labels, args.alpha, classes=predictor.CLASSES,
                                target_kind=args.target)
    majority = model.majority_class
    _emit(predictor.evaluate(model, test, majority).to_frame(), args.out)


def cmd_chi2(args):
    dataset = _load(args)
    train, _ = _instances(args, dataset)
    model = predictor.train(train.features, train.labels, args.alpha, classes=predictor.CLASSES,
                            target_kind=args.target)
    _emit(predictor.chi2_rank(train.features, train.labels, model), args.out)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog='purchases', description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest='command', required=True)

    def add(name, func, data=True, help=None):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument('--out', help='output file or directory (default: stdout)')
        if data:
            p.add_argument('--data', required=True, help='dataset directory')
            p.add_argument('--max-purchases', type=int, default=datastore.MAX_PURCHASES,
                           help='bulk-account cap (default %(default)s)')
            p.add_argument('--min-messages', type=int, default=datastore.MIN_MESSAGES)
        return p

    def add_model_flags(p):
        p.add_argument('--target', choices=predictor.TARGETS, default='price')
        p.add_argument('--train-months', type=int, default=6)
        p.add_argument('--test-months', type=int, default=2)
        p.add_argument('--alpha', type=float, default=predictor.ALPHA)
        p.add_argument('--no-cross-target', action='store_true', help='leave the cross-target feature missing')

    p = add('parse', cmd_parse, data=False, help='parse a mailbox of receipts into events.jsonl')
    p.add_argument('--templates', required=True)
    p.add_argument('--emails', required=True)

    p = add('synth', cmd_synth, data=False, help='generate a synthetic dataset directory')
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--config', help='JSON file of SynthConfig fields')
    p.add_argument('--n-users', type=int)

    p = add('render', cmd_render, help='render one receipt email per order')
    p.add_argument('--templates', required=True)

    add('ingest', cmd_ingest, help='validate, filter and write a clean dataset directory')

    p = add('stats', cmd_stats, help='shopper groups, distributions, price popularity, top items')
    p.add_argument('--what', choices=STATS, default='groups')
    p.add_argument('--bins', type=int, default=20)
    p.add_argument('--top-k', type=int, default=5)

    p = add('distinctive', cmd_distinctive, help='categories distinguishing two groups')
    p.add_argument('--a', default='gender=female')
    p.add_argument('--b', default='gender=male')
    p.add_argument('--level', choices=('1', '2', '3', 'item'), default='1')
    p.add_argument('--top-k', type=int, default=5)

    p = add('income', cmd_income, help='spend by income quantile bucket')
    p.add_argument('--buckets', type=int, default=cohort_analytics.N_INCOME_BUCKETS)

    p = add('temporal', cmd_temporal, help='weekly / diurnal activity, month boundary, daily series, delays')
    p.add_argument('--what', choices=TEMPORAL, default='day_of_week')

    p = add('recurring', cmd_recurring, help='items bought repeatedly by the same user')
    p.add_argument('--top-k', type=int)

    p = add('budget-curve', cmd_budget_curve, help='normalized price vs days since previous purchase')
    p.add_argument('--cohort', help='purchase count N or range LO-HI (default: all users)')
    p.add_argument('--shuffle', action='store_true')
    p.add_argument('--seed', type=int)
    p.add_argument('--min-samples', type=int, default=temporal_analytics.MIN_CURVE_SAMPLES)

    p = add('social-sim', cmd_social_sim, help='category similarity of contacts vs random pairs')
    p.add_argument('--pairs', type=int, default=1000)
    p.add_argument('--seed', type=int, required=True)
    p.add_argument('--by-gender', action='store_true')

    p = add('train', cmd_train, help='train the next-purchase classifier, write model JSON')
    add_model_flags(p)

    p = add('predict', cmd_predict, help='predict one user at one instant')
    add_model_flags(p)
    p.add_argument('--model', required=True)
    p.add_argument('--user', required=True)
    p.add_argument('--at', required=True, help='epoch seconds or ISO date (UTC)')

    p = add('evaluate', cmd_evaluate, help='classifier and baselines on the held-out months')
    add_model_flags(p)
    p.add_argument('--model', help='model JSON (default: train on the training months)')

    p = add('chi2', cmd_chi2, help='features ranked by chi-squared against the class')
    add_model_flags(p)
    return parser


def run(argv=None):
    """Run one subcommand; returns the process exit status."""
    logging.basicConfig(level=LOG_LEVEL, format='%(asctime)s %(levelname)s %(name)s: %(message)s',
                        stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code
    try:
        args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f'error: {e}', file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as e:
        print(f'error: {e}', file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == '__main__':
    main()
