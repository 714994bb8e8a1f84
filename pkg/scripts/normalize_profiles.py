#!/usr/bin/env python3
"""Normalize a raw profiles.csv in place to the canonical user_id,gender,age,zip form.

Gender collapses to female / male / unknown, ages outside 13..110 become
blank, zip+4 codes are cut to five digits and anything else becomes blank.

    python scripts/normalize_profiles.py data/profiles.csv
"""
import sys
from collections import Counter
from pathlib import Path

import pandas as pd

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from datastore import normalize_age, normalize_gender, normalize_zip  # noqa: E402

CSV = Path('profiles.csv')


def normalize_frame(raw):
    """Canonical profile columns from a raw frame; rows without a user id are dropped."""
    raw = raw.fillna('')
    for col in ('gender', 'age', 'zip'):
        if col not in raw.columns:
            raw[col] = ''
    raw = raw[raw['user_id'].astype(str).str.strip() != '']
    out = pd.DataFrame({
        'user_id': raw['user_id'].astype(str).str.strip(),
        'gender': raw['gender'].map(normalize_gender),
        'age': raw['age'].map(normalize_age).astype('Int64'),
        'zip': raw['zip'].map(normalize_zip),
    })
    return out.drop_duplicates('user_id', keep='first').reset_index(drop=True)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    path = Path(argv[0]) if argv else CSV
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    before = Counter(raw['gender']) if 'gender' in raw.columns else Counter()
    out = normalize_frame(raw)
    out.to_csv(path, index=False)
    print('Before:', dict(before))
    print('After:', dict(Counter(out['gender'])))
    print('Blank ages:', int(out['age'].isna().sum()), 'blank zips:', int(out['zip'].isna().sum()))
    print('Dropped rows:', len(raw) - len(out))
    return 0


if __name__ == '__main__':
    sys.exit(main())
