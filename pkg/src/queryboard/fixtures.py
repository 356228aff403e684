"""Bundled example corpus: seed databases and query logs.

Each log names the dataset its queries run against; ``seed_db`` builds a fresh
in-memory SQLite database for a dataset, and ``load_log`` parses a log into
ASTs.
"""

from __future__ import annotations

import sqlite3
from importlib.resources import files

from .grammar import parse_log
from .nodes import Node

#: log name -> dataset name
LOGS = {
    "fig2": "t",
    "fig5": "t",
    "explore": "cars",
    "abstract": "sp500",
    "connect": "cars",
    "filter": "flights",
    "covid": "covid",
    "sdss": "sdss",
    "sales": "sales",
}

DATASETS = tuple(sorted(set(LOGS.values())))

#: fixed "current date" answered by the today() SQL function
TODAY = "2021-03-01"


def _read(relpath: str) -> str:
    return files("queryboard").joinpath("fixtures").joinpath(relpath).read_text()


def seed_sql(dataset: str) -> str:
    if dataset not in DATASETS:
        raise KeyError(f"unknown dataset {dataset!r}")
    return _read(f"{dataset}.sql")


def log_sql(log: str) -> str:
    if log not in LOGS:
        raise KeyError(f"unknown log {log!r}")
    return _read(f"logs/{log}.sql")


def seed_db(dataset: str) -> sqlite3.Connection:
    """Create and populate an in-memory database for one dataset."""
    conn = sqlite3.connect(":memory:")
    conn.create_function("today", 0, lambda: TODAY, deterministic=True)
    conn.executescript(seed_sql(dataset))
    return conn


def load_log(log: str) -> list[Node]:
    return parse_log(log_sql(log))
