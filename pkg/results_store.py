import os
import sqlite3
from typing import Any, Dict, Iterable, List

# Optional SQLite mirror of benchmark run records.
# - One row per (model, N, algorithm, randomization), upserted so reruns overwrite
# - The CSV files written by the harness stay the primary output

DEFAULT_DB_PATH = os.path.join("data", "stable_bn.db")

RUN_COLUMNS = (
    "model", "n_rows", "algorithm", "randomization", "seed", "status", "cpdag_fingerprint",
    "score", "normalized_score", "f1", "bsf", "precision", "recall", "mean_degree", "iterations",
)


def open_db(db_path: str = DEFAULT_DB_PATH) -> sqlite3.Connection:
    db_dir = os.path.dirname(db_path)
    if db_dir:
        os.makedirs(db_dir, exist_ok=True)
    conn = sqlite3.connect(db_path)
    conn.execute("PRAGMA journal_mode=WAL;")
    return conn


def init_db(conn: sqlite3.Connection):
    conn.executescript(
        """
        CREATE TABLE IF NOT EXISTS run_records (
            model TEXT,
            n_rows INTEGER,
            algorithm TEXT,
            randomization INTEGER,
            seed INTEGER,
            status TEXT,
            cpdag_fingerprint TEXT,
            score REAL,
            normalized_score REAL,
            f1 REAL,
            bsf REAL,
            precision REAL,
            recall REAL,
            mean_degree REAL,
            iterations INTEGER,
            PRIMARY KEY (model, n_rows, algorithm, randomization)
        );
        """
    )
    conn.commit()


def upsert_runs(conn: sqlite3.Connection, rows: Iterable[Dict[str, Any]]) -> int:
    """Insert or replace run rows (dicts keyed by RUN_COLUMNS). Returns the number written."""
    placeholders = ",".join("?" for _ in RUN_COLUMNS)
    updates = ", ".join(f"{c}=excluded.{c}" for c in RUN_COLUMNS[4:])
    sql = (f"INSERT INTO run_records ({', '.join(RUN_COLUMNS)}) VALUES ({placeholders}) "
           f"ON CONFLICT(model, n_rows, algorithm, randomization) DO UPDATE SET {updates}")
    count = 0
    cur = conn.cursor()
    for row in rows:
        cur.execute(sql, tuple(row.get(c) for c in RUN_COLUMNS))
        count += 1
    conn.commit()
    return count


def fetch_runs(conn: sqlite3.Connection, model: str = None, algorithm: str = None) -> List[Dict[str, Any]]:
    clauses, params = [], []
    if model is not None:
        clauses.append("model=?")
        params.append(model)
    if algorithm is not None:
        clauses.append("algorithm=?")
        params.append(algorithm)
    where = f" WHERE {' AND '.join(clauses)}" if clauses else ""
    cur = conn.execute(
        f"SELECT {', '.join(RUN_COLUMNS)} FROM run_records{where} "
        "ORDER BY model, n_rows, algorithm, randomization",
        params,
    )
    return [dict(zip(RUN_COLUMNS, row)) for row in cur.fetchall()]


def mirror_runs(rows: List[Dict[str, Any]], db_path: str = DEFAULT_DB_PATH) -> Dict[str, Any]:
    """Write run rows into the SQLite mirror and return a small summary."""
    conn = open_db(db_path)
    try:
        init_db(conn)
        written = upsert_runs(conn, rows)
        total = conn.execute("SELECT COUNT(*) FROM run_records").fetchone()[0]
    finally:
        conn.close()
    return {"db_path": db_path, "written": written, "total": int(total)}
