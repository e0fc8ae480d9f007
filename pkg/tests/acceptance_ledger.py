"""Collects one verdict line per acceptance criterion for the end-of-run summary."""

import time
from contextlib import contextmanager

RESULTS: dict = {}


class Verdict:
    def __init__(self, number, title, limit):
        self.number, self.title, self.limit = number, title, limit
        self.clauses = []  # (label, ok, detail)
        self.elapsed = None

    def check(self, label, ok, detail=""):
        self.clauses.append((label, bool(ok), detail))
        return bool(ok)

    @property
    def passed(self):
        timely = self.limit is None or (self.elapsed is not None and self.elapsed < self.limit)
        return timely and bool(self.clauses) and all(ok for _, ok, _ in self.clauses)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        budget = "" if self.limit is None else f" (runtime {self.elapsed:.1f}s < {self.limit:g}s)"
        parts = "; ".join(f"{lab}: {'ok' if ok else 'FAILED'}{(' [' + d + ']') if d else ''}" for lab, ok, d in self.clauses)
        return f"ACCEPTANCE {self.number:>2} {status}  {self.title}{budget} -- {parts}"


@contextmanager
def criterion(number, title, limit=None):
    v = Verdict(number, title, limit)
    t0 = time.perf_counter()
    try:
        yield v
    finally:
        v.elapsed = time.perf_counter() - t0
        RESULTS[number] = v
        print(v.line())
