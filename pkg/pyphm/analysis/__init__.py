# -*- coding: utf-8 -*-
"""Parameter, MAC and latency budgets, and the published reference table"""
from .budget import (BudgetReport, count_params, estimate_flops,
                     measure_latency, budget, compare_depth, plot_budget)
