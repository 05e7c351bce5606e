"""
Stable-BN Run Logger
Structured JSON log plus a readable text summary for each structure-learning run.
"""

import json
import os
from datetime import datetime
from typing import Any, Dict, List, Optional

from config import Config
from graph import Dag, dag_to_cpdag, serialize_graph
from search import ChangeRecord, SearchResult


class RunLogger:
    """Logs one learning run with its per-iteration change history."""

    def __init__(self, run_id: str, algorithm: str, dataset: Dict[str, Any], logs_dir: Optional[str] = None):
        """
        Initialize a run logger.

        Args:
            run_id: Unique identifier for this run
            algorithm: Learner name (hc, tabu, hc-stable, ...)
            dataset: Dataset descriptor (see Dataset.fingerprint)
            logs_dir: Target directory, defaults to Config.LOGS_DIR
        """
        self.run_id = run_id
        self.algorithm = algorithm
        self.dataset = dataset
        self.logs_dir = logs_dir or Config.LOGS_DIR
        self.start_time = datetime.now()
        self.changes: List[Dict[str, Any]] = []

        self.stable_order: Optional[List[str]] = None
        self.stable_branch: Optional[str] = None
        self.final_dag: Optional[str] = None
        self.cpdag: Optional[str] = None
        self.score: Optional[float] = None
        self.normalized_score: Optional[float] = None
        self.iterations = 0
        self.wall_time_s: Optional[float] = None
        self.status = "running"

        os.makedirs(self.logs_dir, exist_ok=True)
        timestamp = self.start_time.strftime("%Y%m%d_%H%M%S")
        self.log_filename = f"run_{timestamp}_{algorithm}_{run_id[:8]}.json"
        self.log_filepath = os.path.join(self.logs_dir, self.log_filename)

        self._update_log_file()

    def _payload(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "algorithm": self.algorithm,
            "dataset": self.dataset,
            "start_time": self.start_time.isoformat(),
            "status": self.status,
            "stable_order": self.stable_order,
            "stable_branch": self.stable_branch,
            "total_changes": len(self.changes),
            "changes": self.changes,
            "final_dag": self.final_dag,
            "cpdag": self.cpdag,
            "score": self.score,
            "normalized_score": self.normalized_score,
            "iterations": self.iterations,
            "wall_time_s": self.wall_time_s,
        }

    def _update_log_file(self):
        try:
            with open(self.log_filepath, "w", encoding="utf-8") as f:
                json.dump(self._payload(), f, indent=2, ensure_ascii=False)
        except OSError as e:
            print(f"[!] Error writing log file: {e}")

    def log_change(self, record: ChangeRecord):
        self.changes.append(record.to_dict())

    def set_result(self, result: SearchResult, n_rows: int, wall_time_s: float):
        """Record the outcome of a finished search, including its change log."""
        for record in result.change_log:
            self.log_change(record)
        if result.stable_order is not None:
            self.stable_order = result.stable_order.labels
            self.stable_branch = result.stable_order.branch
        self.set_graph(result.dag)
        self.score = result.score
        self.normalized_score = result.score / n_rows
        self.iterations = result.iterations
        self.wall_time_s = wall_time_s
        self.status = "ok"
        self._update_log_file()

    def set_graph(self, dag: Dag):
        self.final_dag = serialize_graph(dag)
        self.cpdag = serialize_graph(dag_to_cpdag(dag))

    def set_status(self, status: str):
        self.status = status
        self._update_log_file()

    def close(self):
        """Write the final JSON log and the text summary."""
        self._update_log_file()
        self._write_text_summary()

    def _write_text_summary(self):
        text_filepath = os.path.join(self.logs_dir, self.log_filename.replace(".json", ".txt"))

        try:
            with open(text_filepath, "w", encoding="utf-8") as f:
                f.write("=" * 80 + "\n")
                f.write("STABLE-BN STRUCTURE LEARNING RUN\n")
                f.write("=" * 80 + "\n\n")

                f.write(f"Run ID:        {self.run_id}\n")
                f.write(f"Algorithm:     {self.algorithm}\n")
                f.write(f"Variables:     {self.dataset.get('n')}\n")
                f.write(f"Rows:          {self.dataset.get('N')}\n")
                f.write(f"Status:        {self.status}\n")
                if self.wall_time_s is not None:
                    f.write(f"Wall time:     {self.wall_time_s:.3f} seconds\n")
                if self.stable_order:
                    f.write(f"Stable order:  {', '.join(self.stable_order)} ({self.stable_branch})\n")
                f.write("\n")

                f.write("=" * 80 + "\n")
                f.write("CHANGE HISTORY\n")
                f.write("=" * 80 + "\n\n")
                for change in self.changes:
                    parent, child = change["arc"]
                    flag = "  [arbitrary]" if change["arbitrary"] else ""
                    f.write(f"[{change['iteration']}] {change['kind']:<7} {parent} -> {child}  "
                            f"delta={change['delta']:+.6f}  score={change['score']:.6f}{flag}\n")

                f.write("\n" + "=" * 80 + "\n")
                f.write("RESULT\n")
                f.write("=" * 80 + "\n\n")
                if self.score is not None:
                    f.write(f"Score:            {self.score:.6f}\n")
                    f.write(f"Normalized score: {self.normalized_score:.6f}\n")
                f.write(f"Iterations:       {self.iterations}\n")
                arbitrary = sum(1 for c in self.changes if c["arbitrary"])
                f.write(f"Arbitrary orientation choices: {arbitrary}\n\n")
                if self.cpdag:
                    f.write("CPDAG:\n")
                    f.write(self.cpdag)

        except OSError as e:
            print(f"[!] Error writing text summary: {e}")

    def get_summary(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "algorithm": self.algorithm,
            "status": self.status,
            "iterations": self.iterations,
            "score": self.score,
            "log_file": self.log_filepath,
        }
