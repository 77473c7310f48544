"""Independent reference models used by the tests.

Nothing here imports the simulator's implementations of the same thing:
each oracle is the most obvious possible version, kept small enough to
check by eye.
"""

from collections import OrderedDict, defaultdict, deque

import numpy as np


def dense_matmul(a, b):
    """Exact product with Python ints (no int64 overflow surprises)."""
    a = np.asarray(a, dtype=object)
    b = np.asarray(b, dtype=object)
    return a.dot(b)


def brute_transpose_fibers(n_major, n_minor, fibers):
    """Re-fiber a list of ``[(coord, value)]`` fibers along the other axis."""
    out = [[] for _ in range(n_minor)]
    for i, fiber in enumerate(fibers):
        for c, v in fiber:
            out[c].append((i, v))
    return out


def dict_merge(fibers):
    """k-way merge with accumulation on equal coordinates."""
    acc = defaultdict(int)
    seen = set()
    for f in fibers:
        for c, v in f:
            acc[c] += v
            seen.add(c)
    return [(c, acc[c]) for c in sorted(seen)]


class ReferenceLRU:
    """Set-associative LRU cache, one list per set, most recent at the end."""

    def __init__(self, size_bytes, line_bytes, assoc):
        self.n_sets = size_bytes // (line_bytes * assoc)
        self.assoc = assoc
        self.line_bytes = line_bytes
        self.sets = [[] for _ in range(self.n_sets)]

    def access(self, addr):
        line = addr // self.line_bytes
        ways = self.sets[line % self.n_sets]
        if line in ways:
            ways.remove(line)
            ways.append(line)
            return True
        if len(ways) == self.assoc:
            ways.pop(0)
        ways.append(line)
        return False


class QueuePsram:
    """Psum store as a map from (row, k) to a FIFO of elements."""

    def __init__(self):
        self.q = OrderedDict()

    def write(self, row, k, e):
        self.q.setdefault((row, k), deque()).append(e)

    def consume(self, row, k):
        d = self.q.get((row, k))
        if not d:
            return None
        e = d.popleft()
        if not d:
            del self.q[(row, k)]
        return e

    def resident(self):
        return sum(len(d) for d in self.q.values())


# Golden tables typed in from the published property and transition tables.
# Columns: stationary tensor, stationary fiber, streaming tensor, A, B, C, intersection, merging
TABLE_PROPERTIES = {
    "ip-m": ("C", "A", "B", "CSR", "CSC", "CSR", "scalar-scalar", "none"),
    "op-m": ("A", "B", "C", "CSC", "CSR", "CSR", "none", "scalar"),
    "gust-m": ("A", "C", "B", "CSR", "CSR", "CSR", "leader-follower", "fiber"),
    "ip-n": ("C", "B", "A", "CSR", "CSC", "CSC", "scalar-scalar", "none"),
    "op-n": ("B", "A", "C", "CSC", "CSR", "CSC", "none", "scalar"),
    "gust-n": ("B", "C", "A", "CSC", "CSC", "CSC", "leader-follower", "fiber"),
}

# rows: producer, columns: consumer, in the order ip-m, op-m, gust-m, ip-n, op-n, gust-n
# True = no explicit conversion needed
_OK, _EC = True, False
TABLE_TRANSITIONS = {
    "ip-m": (_OK, _EC, _OK, _OK, _EC, _EC),
    "op-m": (_OK, _EC, _OK, _OK, _EC, _EC),
    "gust-m": (_OK, _EC, _OK, _OK, _EC, _EC),
    "ip-n": (_EC, _OK, _EC, _EC, _OK, _OK),
    "op-n": (_EC, _OK, _EC, _EC, _OK, _OK),
    "gust-n": (_EC, _OK, _EC, _EC, _OK, _OK),
}
TABLE_ORDER = ("ip-m", "op-m", "gust-m", "ip-n", "op-n", "gust-n")
