"""Product-limit survival estimation over outage recurrence times."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SurvivalCurve:
    times: np.ndarray       # distinct event times, ascending
    survival: np.ndarray    # S(t) immediately after each event time
    at_risk: np.ndarray
    events: np.ndarray

    def __call__(self, t: float) -> float:
        """S(t): right-continuous step function with S(0) = 1."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        return 1.0 if idx < 0 else float(self.survival[idx])


def kaplan_meier(event_times, censoring_flags=None) -> SurvivalCurve:
    """Product-limit estimator; censored subjects leave the risk set silently.

    ``censoring_flags[i]`` true means subject i was censored at its time
    (no event step). Ties between events and censorings at the same time
    follow the usual convention: events happen first.
    """
    times = np.asarray(list(event_times), dtype=float)
    if times.size == 0:
        raise ValueError("empty input")
    if np.any(times < 0):
        raise ValueError("negative times")
    censored = (np.zeros(times.size, dtype=bool) if censoring_flags is None
                else np.asarray(list(censoring_flags), dtype=bool))
    if censored.shape != times.shape:
        raise ValueError("censoring flags length mismatch")

    order = np.argsort(times, kind="stable")
    times, censored = times[order], censored[order]
    distinct = np.unique(times[~censored])

    out_times, out_surv, out_risk, out_events = [], [], [], []
    s = 1.0
    for t in distinct:
        at_risk = int(np.sum(times >= t))
        d = int(np.sum((times == t) & ~censored))
        if at_risk == 0:
            break
        s *= (at_risk - d) / at_risk
        out_times.append(float(t))
        out_surv.append(s)
        out_risk.append(at_risk)
        out_events.append(d)
    return SurvivalCurve(times=np.array(out_times), survival=np.array(out_surv),
                         at_risk=np.array(out_risk, dtype=np.int64),
                         events=np.array(out_events, dtype=np.int64))
