"""Process-wide operation counters.

The pipeline and optimizers bump these so tests can prove, for example,
that no line residual is ever evaluated during global refinement.
"""

from collections import Counter

COUNTERS = Counter()

LINE_OPS = "line_ops"
LINE_RESIDUALS = "line_residuals"
GLOBAL_LINE_RESIDUALS = "global_line_residuals"


def bump(name, n=1):
    COUNTERS[name] += n


def get(name):
    return COUNTERS[name]


def reset():
    COUNTERS.clear()
