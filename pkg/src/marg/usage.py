"""Token usage ledger and per-method cost report."""

from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable


@dataclass(frozen=True)
class UsageEntry:
    method_label: str
    input_tokens: int
    generated_tokens: int
    paper_id: str = ""
    group: str = ""
    agent: str = ""
    # >1 when the entry summarizes several completions (e.g. read back from usage.json)
    calls: int = 1


@dataclass
class UsageRecord:
    """One row of the cost table."""

    method_label: str
    input_tokens: int = 0
    generated_tokens: int = 0
    completions: int = 0
    papers: int = 0
    avg_input_tokens: float | None = None
    avg_generated_tokens: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class UsageLedger:
    """Append-only log of completed requests. Safe to share between threads."""

    def __init__(self) -> None:
        self._entries: list[UsageEntry] = []
        self._lock = threading.Lock()

    def record(self, entry: UsageEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> list[UsageEntry]:
        with self._lock:
            return list(self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def totals(self, method_label: str | None = None, paper_id: str | None = None) -> tuple[int, int]:
        n_in = n_out = 0
        for e in self.entries:
            if method_label is not None and e.method_label != method_label:
                continue
            if paper_id is not None and e.paper_id != paper_id:
                continue
            n_in += e.input_tokens
            n_out += e.generated_tokens
        return n_in, n_out

    def count(self, method_label: str | None = None) -> int:
        return sum(e.calls for e in self.entries if method_label is None or e.method_label == method_label)


def usage_report(entries: Iterable[UsageEntry]) -> list[UsageRecord]:
    """Sum tokens per method label; average per paper where paper ids are tagged."""
    rows: dict[str, UsageRecord] = {}
    per_paper: dict[str, dict[str, list[int]]] = defaultdict(lambda: defaultdict(lambda: [0, 0]))
    for e in entries:
        row = rows.setdefault(e.method_label, UsageRecord(e.method_label))
        row.input_tokens += e.input_tokens
        row.generated_tokens += e.generated_tokens
        row.completions += e.calls
        if e.paper_id:
            acc = per_paper[e.method_label][e.paper_id]
            acc[0] += e.input_tokens
            acc[1] += e.generated_tokens
    for label, row in rows.items():
        papers = per_paper.get(label)
        if papers:
            row.papers = len(papers)
            row.avg_input_tokens = sum(v[0] for v in papers.values()) / len(papers)
            row.avg_generated_tokens = sum(v[1] for v in papers.values()) / len(papers)
    return [rows[k] for k in sorted(rows)]
