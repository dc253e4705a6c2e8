"""Calendar arithmetic for lookback windows and ages.

Month and year shifts clamp to month end (May 31 minus 3 months is Feb 28/29)
so that compiled SQL and the reference evaluator agree on every engine.
"""

from __future__ import annotations

import calendar
from datetime import date


def shift_months(d: date, months: int) -> date:
    """Shift by a number of calendar months, clamping the day to month end."""
    index = d.year * 12 + (d.month - 1) + months
    year, month0 = divmod(index, 12)
    month = month0 + 1
    day = min(d.day, calendar.monthrange(year, month)[1])
    return date(year, month, day)


def shift_years(d: date, years: int) -> date:
    return shift_months(d, 12 * years)


def age_at(birth_date: date, as_of: date) -> int:
    """Age in whole years at ``as_of``."""
    years = as_of.year - birth_date.year
    if (as_of.month, as_of.day) < (birth_date.month, birth_date.day):
        years -= 1
    return years
