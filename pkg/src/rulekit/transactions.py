"""Bitset transaction encoding of categorical records.

Each record becomes one transaction holding exactly one item per selected
variable, where an item is a (variable, category) pair. Transactions are
packed into 64-bit words so that support counting is a word-AND plus
popcount, which is exact and fast at the scales this package targets
(tens of thousands of transactions, at most a few hundred items).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .io_utils import atomic_write_text
from .schema import RecordSet

Item = tuple[str, str]


def item_token(item: Item) -> str:
    """Render an item as ``variable=category`` (categories may contain '=')."""
    return f"{item[0]}={item[1]}"


def parse_item_token(token: str) -> Item:
    variable, sep, category = token.partition("=")
    if not sep or not variable or not category:
        raise ValidationError(f"malformed item token {token!r}; expected 'variable=category'")
    return variable, category


@dataclass(frozen=True)
class ItemUniverse:
    """Ordered item list with a dense id per item.

    Item ids follow dictionary variable order, then category order within
    each variable; every downstream tie-break keys off this ordering.
    """

    items: tuple[Item, ...]

    def __post_init__(self) -> None:
        index: dict[Item, int] = {}
        for i, item in enumerate(self.items):
            if item in index:
                raise ValidationError(f"duplicate item {item_token(item)!r} in universe")
            index[item] = i
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_variables", tuple(item[0] for item in self.items))

    def __len__(self) -> int:
        return len(self.items)

    def item_id(self, variable: str, category: str) -> int:
        try:
            return self._index[(variable, category)]  # type: ignore[attr-defined]
        except KeyError:
            raise ValidationError(
                f"item {item_token((variable, category))!r} is not in the universe"
            ) from None

    def variable_of(self, item_id: int) -> str:
        return self._variables[item_id]  # type: ignore[attr-defined]

    def token(self, item_id: int) -> str:
        return item_token(self.items[item_id])


@dataclass(frozen=True, eq=False)
class TransactionSet:
    """Immutable transaction database over an item universe."""

    universe: ItemUniverse
    masks: np.ndarray  # shape (n_transactions, n_words), dtype uint64
    n_transactions: int

    def __post_init__(self) -> None:
        if self.masks.shape[0] != self.n_transactions:
            raise ValidationError("mask row count does not match n_transactions")

    @property
    def n_words(self) -> int:
        return self.masks.shape[1]


def _n_words(n_items: int) -> int:
    return max(1, (n_items + 63) // 64)


def encode(rs: RecordSet, selected_vars: Sequence[str], full_universe: bool = False) -> TransactionSet:
    """Encode a RecordSet over the selected variables.

    The universe contains only the categories that actually occur in the
    records unless ``full_universe`` is set, in which case every dictionary
    category of each selected variable gets an item id (absent ones simply
    never appear in any transaction).
    """
    if not selected_vars:
        raise ValidationError("empty selection: at least one variable is required")
    if not rs.records:
        raise ValidationError("cannot encode an empty RecordSet")
    selected = set(selected_vars)
    for var in selected_vars:
        rs.dictionary.variable(var)

    occurring: set[Item] = set()
    if not full_universe:
        for rec in rs.records:
            for var in selected:
                occurring.add((var, rec.values[var]))

    items: list[Item] = []
    for var_schema in rs.dictionary.variables:
        if var_schema.name not in selected:
            continue
        for cat in var_schema.categories:
            if full_universe or (var_schema.name, cat) in occurring:
                items.append((var_schema.name, cat))
    universe = ItemUniverse(items=tuple(items))

    n = len(rs.records)
    masks = np.zeros((n, _n_words(len(items))), dtype=np.uint64)
    ordered_vars = [v.name for v in rs.dictionary.variables if v.name in selected]
    for row, rec in enumerate(rs.records):
        for var in ordered_vars:
            item_id = universe.item_id(var, rec.values[var])
            masks[row, item_id >> 6] |= np.uint64(1) << np.uint64(item_id & 63)
    masks.setflags(write=False)
    return TransactionSet(universe=universe, masks=masks, n_transactions=n)


def _query_words(ts: TransactionSet, itemset: Iterable[int]) -> np.ndarray:
    query = np.zeros(ts.n_words, dtype=np.uint64)
    for item_id in itemset:
        if not 0 <= item_id < len(ts.universe):
            raise ValidationError(f"item id {item_id} is outside the universe")
        query[item_id >> 6] |= np.uint64(1) << np.uint64(item_id & 63)
    return query


def support_count(ts: TransactionSet, itemset: Iterable[int]) -> int:
    """Number of transactions containing every item of the itemset.

    The empty itemset is contained in every transaction.
    """
    query = _query_words(ts, itemset)
    hits = (ts.masks & query) == query
    return int(np.count_nonzero(hits.all(axis=1)))


@dataclass(frozen=True)
class ItemFrequency:
    item_id: int
    variable: str
    category: str
    count: int
    relative_frequency: float


def item_frequencies(ts: TransactionSet) -> tuple[ItemFrequency, ...]:
    """Per-item counts and relative frequencies, descending by count.

    Ties are broken by item id so the ordering is total.
    """
    n = ts.n_transactions
    freqs = []
    for item_id, (var, cat) in enumerate(ts.universe.items):
        count = support_count(ts, (item_id,))
        freqs.append(
            ItemFrequency(
                item_id=item_id,
                variable=var,
                category=cat,
                count=count,
                relative_frequency=count / n if n else 0.0,
            )
        )
    freqs.sort(key=lambda f: (-f.count, f.item_id))
    return tuple(freqs)


def dump_transactions(ts: TransactionSet, sink: str | Path) -> Path:
    """Debug dump: one line per transaction, space-separated item tokens."""
    lines = []
    for row in range(ts.n_transactions):
        tokens = [
            ts.universe.token(i)
            for i in range(len(ts.universe))
            if ts.masks[row, i >> 6] >> np.uint64(i & 63) & np.uint64(1)
        ]
        lines.append(" ".join(tokens))
    return atomic_write_text(sink, "\n".join(lines) + "\n")
