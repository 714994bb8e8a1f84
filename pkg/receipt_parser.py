"""
Template-driven extraction of orders from purchase-confirmation emails.

Each merchant has one declarative template file (templates/*.tpl):

    merchant: shopmart
    sender: *@shopmart.example
    date: Order placed: {DATE}
    date_format: %Y-%m-%d %H:%M:%S
    order: Order number: {ORDER_ID}
    item: {QTY} x {ITEM} .... {PRICE}

The item line may match any number of body lines; every match is one order
line. Emails are plain text: `From: <address>`, a blank line, then the body.
"""

import fnmatch
import hashlib
import logging
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path

from datastore import PurchaseEvent

logger = logging.getLogger(__name__)

DEFAULT_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
CURRENCY_SYMBOLS = '$€£¥'

SLOT_PATTERNS = {
    'ITEM': r'(?P<ITEM>.+?)',
    'PRICE': r'(?P<PRICE>\S+)',
    'QTY': r'(?P<QTY>\d+)',
    'ORDER_ID': r'(?P<ORDER_ID>\S+)',
    'DATE': r'(?P<DATE>.+?)',
}
# slots each template line may carry, and the ones it must carry
LINE_SLOTS = {
    'date': ({'DATE'}, {'DATE'}),
    'order': ({'ORDER_ID'}, {'ORDER_ID'}),
    'item': ({'ITEM', 'PRICE', 'QTY'}, {'ITEM', 'PRICE'}),
}
TEMPLATE_KEYS = ('merchant', 'sender', 'date', 'date_format', 'order', 'item')

SLOT_RE = re.compile(r'\{([A-Z_]+)\}')
PRICE_RE = re.compile(r'(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d{0,2})?')


class ReceiptError(ValueError):
    pass


class TemplateError(ReceiptError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = f'{path}:{line}' if line else str(path)
        super().__init__(f'{where}: {message}' if path else message)


class NoTemplateMatch(ReceiptError):
    pass


class GrammarMismatch(ReceiptError):
    pass


class BadPrice(ReceiptError):
    pass


class BadDate(ReceiptError):
    pass


@dataclass(frozen=True)
class OrderLine:
    item_name: str
    price_cents: int
    quantity: int = 1


@dataclass(frozen=True)
class ParsedOrder:
    merchant_id: str
    order_id: str
    timestamp: int
    lines: tuple

    def __post_init__(self):
        if not self.lines:
            raise GrammarMismatch(f'order {self.order_id} has no item lines')
        for line in self.lines:
            if line.price_cents < 0:
                raise BadPrice(f'negative price in order {self.order_id}')
            if line.quantity < 1:
                raise GrammarMismatch(f'quantity below 1 in order {self.order_id}')


def normalize_price(text):
    """'$1,234.56' -> 123456 cents. Raises BadPrice on anything malformed."""
    s = (text or '').strip()
    if not s:
        raise BadPrice('empty price')
    if '-' in s:
        raise BadPrice(f'negative price {text!r}')
    s = re.sub(r'\s+', '', s.strip(CURRENCY_SYMBOLS + ' '))
    if s.count('.') > 1:
        raise BadPrice(f'multiple decimal points in {text!r}')
    if not PRICE_RE.fullmatch(s):
        raise BadPrice(f'unreadable price {text!r}')
    try:
        return int(Decimal(s.replace(',', '')) * 100)
    except InvalidOperation:
        raise BadPrice(f'unreadable price {text!r}')


def format_price(price_cents):
    if price_cents < 0:
        raise BadPrice(f'negative price {price_cents}')
    return f'${price_cents // 100:,}.{price_cents % 100:02d}'


def item_key(name):
    """Stable opaque item id for an item name (case and spacing folded)."""
    folded = ' '.join(name.split()).lower()
    return 'i' + hashlib.sha1(folded.encode('utf-8')).hexdigest()[:12]


def compile_line(pattern, allowed, required, path=None, line_no=None):
    """Compile one anchored template line into a full-match regex."""
    parts = []
    seen = set()
    pos = 0
    literal_text = ''
    prev_was_slot = False
    for m in SLOT_RE.finditer(pattern):
        literal = pattern[pos:m.start()]
        slot = m.group(1)
        if slot not in allowed:
            raise TemplateError(f'slot {{{slot}}} not allowed here', path, line_no)
        if slot in seen:
            raise TemplateError(f'slot {{{slot}}} used twice', path, line_no)
        if prev_was_slot and not literal:
            raise TemplateError('two slots need a literal between them', path, line_no)
        parts.append(re.escape(literal))
        parts.append(SLOT_PATTERNS[slot])
        literal_text += literal
        seen.add(slot)
        pos = m.end()
        prev_was_slot = True
    parts.append(re.escape(pattern[pos:]))
    literal_text += pattern[pos:]
    missing = required - seen
    if missing:
        raise TemplateError(f'missing slot(s) {", ".join(sorted(missing))}', path, line_no)
    if not literal_text.strip():
        raise TemplateError('line has no literal anchor text', path, line_no)
    return re.compile(''.join(parts))


@dataclass(frozen=True)
class Template:
    merchant_id: str
    sender_pattern: str
    date_line: str
    order_line: str
    item_line: str
    date_format: str = DEFAULT_DATE_FORMAT
    source: str = ''

    def __post_init__(self):
        for key in ('date', 'order', 'item'):
            allowed, required = LINE_SLOTS[key]
            regex = compile_line(getattr(self, f'{key}_line'), allowed, required, self.source or None)
            object.__setattr__(self, f'_{key}_re', regex)

    def matches_sender(self, sender):
        return fnmatch.fnmatch(sender.lower(), self.sender_pattern.lower())

    def match(self, key, line):
        return getattr(self, f'_{key}_re').fullmatch(line)

    def fill(self, key, **values):
        """Render a template line with slot values (the inverse of match)."""
        return SLOT_RE.sub(lambda m: str(values[m.group(1)]), getattr(self, f'{key}_line'))

    @property
    def has_quantity(self):
        return '{QTY}' in self.item_line


class TemplateSet:
    """Templates in file-name order; the first sender match wins."""

    def __init__(self, templates=()):
        self._templates = {}
        for t in templates:
            self.add(t)

    def add(self, template):
        if template.merchant_id in self._templates:
            raise TemplateError(f'duplicate merchant {template.merchant_id!r}', template.source or None)
        self._templates[template.merchant_id] = template

    def match(self, sender):
        for t in self._templates.values():
            if t.matches_sender(sender):
                return t
        return None

    def __getitem__(self, merchant_id):
        return self._templates[merchant_id]

    def __contains__(self, merchant_id):
        return merchant_id in self._templates

    def __iter__(self):
        return iter(self._templates.values())

    def __len__(self):
        return len(self._templates)


def parse_template(text, path=None):
    fields = {}
    lines = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        key, sep, value = line.partition(':')
        key = key.strip().lower()
        if not sep or key not in TEMPLATE_KEYS:
            raise TemplateError(f'expected one of {", ".join(TEMPLATE_KEYS)}', path, line_no)
        if key in fields:
            raise TemplateError(f'{key!r} given twice', path, line_no)
        value = value.strip()
        if not value:
            raise TemplateError(f'{key!r} is empty', path, line_no)
        fields[key] = value
        lines[key] = line_no
    for key in ('merchant', 'sender', 'date', 'order', 'item'):
        if key not in fields:
            raise TemplateError(f'missing {key!r} line', path)
    # per-line errors should point at the offending line
    for key in ('date', 'order', 'item'):
        allowed, required = LINE_SLOTS[key]
        compile_line(fields[key], allowed, required, path, lines[key])
    return Template(
        merchant_id=fields['merchant'],
        sender_pattern=fields['sender'],
        date_line=fields['date'],
        order_line=fields['order'],
        item_line=fields['item'],
        date_format=fields.get('date_format', DEFAULT_DATE_FORMAT),
        source=str(path or ''),
    )


def load_templates(path):
    directory = Path(path)
    if not directory.is_dir():
        raise FileNotFoundError(f'template directory not found: {directory}')
    templates = TemplateSet()
    for file in sorted(directory.glob('*.tpl')):
        templates.add(parse_template(file.read_text(encoding='utf-8'), file))
    logger.info('loaded %d templates from %s', len(templates), directory)
    return templates


def _sender_address(header):
    value = header.split(':', 1)[1].strip()
    m = re.search(r'<([^>]*)>', value)
    return (m.group(1) if m else value).strip()


def _parse_date(text, fmt):
    try:
        dt = datetime.strptime(text.strip(), fmt)
    except ValueError as e:
        raise BadDate(f'cannot read date {text!r}: {e}')
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_email(raw, templates):
    lines = raw.splitlines()
    if not lines or not lines[0].lower().startswith('from:'):
        raise GrammarMismatch('email does not start with a From: line')
    sender = _sender_address(lines[0])
    template = templates.match(sender)
    if template is None:
        raise NoTemplateMatch(f'no template for sender {sender!r}')

    date_text = order_id = None
    items = []
    for line in (l.strip() for l in lines[1:]):
        if not line:
            continue
        if date_text is None and (m := template.match('date', line)):
            date_text = m.group('DATE')
        elif order_id is None and (m := template.match('order', line)):
            order_id = m.group('ORDER_ID')
        elif m := template.match('item', line):
            items.append(m)

    if date_text is None:
        raise GrammarMismatch(f'{template.merchant_id}: date line not found')
    if order_id is None:
        raise GrammarMismatch(f'{template.merchant_id}: order line not found')
    if not items:
        raise GrammarMismatch(f'{template.merchant_id}: no item lines found')

    order_lines = []
    for m in items:
        qty = int(m.group('QTY')) if template.has_quantity else 1
        order_lines.append(OrderLine(m.group('ITEM').strip(), normalize_price(m.group('PRICE')), qty))
    return ParsedOrder(
        merchant_id=template.merchant_id,
        order_id=order_id,
        timestamp=_parse_date(date_text, template.date_format),
        lines=tuple(order_lines),
    )


def explode_order(order, user_id):
    """One PurchaseEvent per unit of quantity; all share order id and time."""
    events = []
    for line in order.lines:
        for _ in range(line.quantity):
            events.append(PurchaseEvent(
                user_id=str(user_id),
                timestamp=order.timestamp,
                item_name=line.item_name,
                item_id=item_key(line.item_name),
                price_cents=line.price_cents,
                order_id=order.order_id,
                merchant_id=order.merchant_id,
            ))
    return events


def parse_corpus(directory, templates):
    """Parse every <user_id>/<order>.eml below `directory`.

    Returns (events, failures); failures are (path, error kind, message)
    tuples. A bad email never stops the run.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f'email directory not found: {directory}')
    events = []
    failures = []
    n_emails = 0
    for path in sorted(directory.glob('*/*.eml')):
        n_emails += 1
        try:
            order = parse_email(path.read_text(encoding='utf-8'), templates)
        except ReceiptError as e:
            failures.append((str(path), type(e).__name__, str(e)))
            continue
        events.extend(explode_order(order, path.parent.name))
    if failures:
        kinds = {}
        for _, kind, _ in failures:
            kinds[kind] = kinds.get(kind, 0) + 1
        logger.warning('%d of %d emails not parsed: %s', len(failures), n_emails,
                       ', '.join(f'{k}={v}' for k, v in sorted(kinds.items())))
    logger.info('parsed %d emails into %d purchase events', n_emails - len(failures), len(events))
    return events, failures
