"""Fidelity metrics, ANOVA / Tukey-Kramer and benchmark summaries."""

from .anova import anova_oneway, tukey_hsd
from .distributions import (betainc_reg, f_cdf, f_sf, studentized_range_cdf, studentized_range_quantile,
                            studentized_range_sf, t_sf_two_sided)
from .metrics import r2, rmse
from .report import (BenchCell, StatsReport, aggregate, aggregate_csv, cell_observations, compare_groups,
                     log2_slope)

__all__ = [
    "rmse", "r2", "anova_oneway", "tukey_hsd", "betainc_reg", "f_cdf", "f_sf", "t_sf_two_sided",
    "studentized_range_cdf", "studentized_range_sf", "studentized_range_quantile", "BenchCell",
    "StatsReport", "aggregate", "aggregate_csv", "cell_observations", "compare_groups", "log2_slope",
]
