"""Procedure layer: coverage classes, random access, scheduling and rate calculators."""
from nbiot.mac.coverage import (CoverageClass, default_classes, preamble_power,
                                select_coverage_level, validate_classes)
from nbiot.mac.random_access import (RandomAccessState, RaStep, UeContext, msg3_grant,
                                     random_access, trace_rows)
from nbiot.mac.rates import (LINK_BUDGETS, NOT_REPRODUCED, LinkBudgetEntry, link_budget,
                             peak_rate, sustained_rate)
from nbiot.mac.timeline import (Direction, Harq, Interval, ScheduleError, ScheduleTimeline,
                                Transaction, gap, place_dl, place_ul, schedule_dl, schedule_ul,
                                violations)
