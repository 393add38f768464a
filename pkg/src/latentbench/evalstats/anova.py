import math
from itertools import combinations

import numpy as np

from ..errors import InvalidInput
from .distributions import f_sf, studentized_range_sf


def _groups(groups):
    arrs = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(arrs) < 2:
        raise InvalidInput(f"need >= 2 groups, got {len(arrs)}")
    for i, a in enumerate(arrs):
        if a.size < 2:
            raise InvalidInput(f"group {i} has {a.size} values; need >= 2")
        if not np.all(np.isfinite(a)):
            raise InvalidInput(f"group {i} contains non-finite values")
    return arrs


def _within(arrs):
    n_total = sum(a.size for a in arrs)
    ss_within = sum(float(np.sum((a - a.mean()) ** 2)) for a in arrs)
    df_within = n_total - len(arrs)
    return ss_within, df_within


def anova_oneway(groups):
    """One-way ANOVA.

    Returns
    -------
    f_stat, p_value : float
        ``F = MS_between / MS_within`` and its upper-tail probability. If every
        value is identical the result is ``(0.0, 1.0)``.
    """
    arrs = _groups(groups)
    allv = np.concatenate(arrs)
    grand = allv.mean()
    k = len(arrs)
    ss_between = sum(a.size * (a.mean() - grand) ** 2 for a in arrs)
    ss_within, df_within = _within(arrs)
    df_between = k - 1
    if ss_between == 0.0 or np.ptp(allv) == 0.0:
        return 0.0, 1.0
    if ss_within == 0.0:
        return math.inf, 0.0
    f = (ss_between / df_between) / (ss_within / df_within)
    return float(f), float(f_sf(f, df_between, df_within))


def tukey_hsd(groups, labels=None):
    """Tukey-Kramer pairwise comparisons.

    Returns a list of ``(label_a, label_b, mean_a - mean_b, q, p_adj)`` for
    every pair ``a < b`` in input order.
    """
    arrs = _groups(groups)
    k = len(arrs)
    labels = list(range(k)) if labels is None else list(labels)
    if len(labels) != k:
        raise InvalidInput("labels must match the number of groups")
    ss_within, df_within = _within(arrs)
    ms_within = ss_within / df_within
    out = []
    for a, b in combinations(range(k), 2):
        diff = float(arrs[a].mean() - arrs[b].mean())
        se = math.sqrt(ms_within / 2.0 * (1.0 / arrs[a].size + 1.0 / arrs[b].size))
        if diff == 0.0:
            q, p = 0.0, 1.0
        elif se == 0.0:
            q, p = math.inf, 0.0
        else:
            q = abs(diff) / se
            p = min(1.0, max(0.0, studentized_range_sf(q, k, df_within)))
        out.append((labels[a], labels[b], diff, q, p))
    return out
