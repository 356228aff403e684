"""Database catalogue: schema introspection, column statistics, execution.

The catalogue wraps a SQLite connection and answers the questions the rest of
the pipeline asks: what tables and columns exist, their primitive types
(``num``/``str``), per-column statistics (range, distinct count, uniqueness,
small materialized domains), declared or discovered keys, and cached query
execution with order-insensitive result comparison.
"""

from __future__ import annotations

import sqlite3
from dataclasses import dataclass, field

#: distinct-value domains at or below this size are materialized
MATERIALIZE_LIMIT = 24

#: numeric columns with fewer known distinct values than this read as categorical
CATEGORICAL_LIMIT = 20


@dataclass(frozen=True)
class Attr:
    """One base-table column with its scan statistics.

    Equality/hash use only (table, column): statistics are a property of the
    identity, not part of it.
    """

    table: str
    column: str
    primitive: str  # "num" | "str"
    lo: float | None = field(default=None, compare=False)
    hi: float | None = field(default=None, compare=False)
    distinct_count: int = field(default=0, compare=False)
    unique: bool = field(default=False, compare=False)
    values: tuple | None = field(default=None, compare=False)

    @property
    def categorical(self) -> bool:
        """May this attribute feed a categorical visual channel?

        Strings always can; numbers only with a known small domain.
        """
        if self.primitive == "str":
            return True
        return 0 < self.distinct_count < CATEGORICAL_LIMIT

    def __str__(self) -> str:
        return f"{self.table}.{self.column}"


@dataclass
class Table:
    name: str
    columns: dict[str, Attr]  # insertion-ordered, keys lower-cased
    key: tuple[str, ...] | None  # declared primary key, lower-cased

    def column(self, name: str) -> Attr | None:
        return self.columns.get(name.lower())


class Catalogue:
    """Introspected view of one SQLite database."""

    def __init__(self, conn: sqlite3.Connection):
        self.conn = conn
        self.tables: dict[str, Table] = {}
        self._cache: dict[str, tuple] = {}
        for (tname,) in conn.execute(
            "SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name"
        ):
            self.tables[tname.lower()] = self._scan(tname)

    def _scan(self, tname: str) -> Table:
        info = list(self.conn.execute(f'PRAGMA table_info("{tname}")'))
        (nrows,) = self.conn.execute(f'SELECT count(*) FROM "{tname}"').fetchone()
        columns: dict[str, Attr] = {}
        key = [name for (_, name, _, _, _, pk) in info if pk]
        for _, name, decltype, _, _, _ in info:
            primitive = "str" if "CHAR" in decltype.upper() or "TEXT" in decltype.upper() else "num"
            ndist, lo, hi = self.conn.execute(
                f'SELECT count(DISTINCT "{name}"), min("{name}"), max("{name}") FROM "{tname}"'
            ).fetchone()
            values = None
            if 0 < ndist <= MATERIALIZE_LIMIT:
                values = tuple(
                    v
                    for (v,) in self.conn.execute(
                        f'SELECT DISTINCT "{name}" FROM "{tname}" ORDER BY "{name}"'
                    )
                )
            if primitive == "str":
                lo = hi = None
            columns[name.lower()] = Attr(
                table=tname.lower(),
                column=name,
                primitive=primitive,
                lo=lo,
                hi=hi,
                distinct_count=ndist,
                unique=nrows > 0 and ndist == nrows,
                values=values,
            )
        return Table(tname.lower(), columns, tuple(k.lower() for k in key) or None)

    def table(self, name: str) -> Table | None:
        return self.tables.get(name.lower())

    def attr(self, table: str, column: str) -> Attr | None:
        t = self.table(table)
        return t.column(column) if t else None

    # --- execution ---------------------------------------------------------

    def execute(self, sql: str) -> tuple:
        """Run a query, returning rows as a tuple of tuples (cached by text)."""
        hit = self._cache.get(sql)
        if hit is None:
            hit = tuple(tuple(row) for row in self.conn.execute(sql))
            self._cache[sql] = hit
        return hit


def result_equal(a: tuple, b: tuple) -> bool:
    """Row-multiset equality; engine row order is not part of the contract."""
    if len(a) != len(b):
        return False
    if a and b and len(a[0]) != len(b[0]):
        return False
    return sorted(map(tuple, a)) == sorted(map(tuple, b))
