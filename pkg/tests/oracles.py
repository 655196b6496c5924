"""Independent reference computations used to pin derived values.

Nothing here imports the package: each function re-derives an expected
result from the model rules by direct enumeration.
"""

from __future__ import annotations

from fractions import Fraction


def pipeline(period, proc_time, horizon):
    """Generator -> drop-while-busy processor, enumerated on exact rationals.

    Returns event times up to ``horizon`` and the job counts at ``horizon``.
    A completion that coincides with an arrival is handled first, so the
    freed processor accepts that arrival.
    """
    period, proc_time, horizon = Fraction(period), Fraction(proc_time), Fraction(horizon)
    arrivals = []
    t = period
    while t <= horizon:
        arrivals.append(t)
        t += period
    busy_until = None
    completions, dropped = [], 0
    for a in arrivals:
        if busy_until is not None and busy_until <= a:
            completions.append(busy_until)
            busy_until = None
        if busy_until is None:
            busy_until = a + proc_time
        else:
            dropped += 1
    if busy_until is not None and busy_until <= horizon:
        completions.append(busy_until)
        busy_until = None
    times = sorted(set(arrivals) | set(completions))
    return {
        "times": [float(x) for x in times],
        "sent": len(arrivals),
        "received": len(completions),
        "dropped": dropped,
        "in_service": 0 if busy_until is None else 1,
        "completions": [float(x) for x in completions],
    }


def round_robin(names, servers):
    out = {}
    for i, name in enumerate(sorted(names)):
        out[name] = servers[i % len(servers)]
    return out


def acceptor_stop_time(check_interval, by_time, completions, min_solved):
    """First check instant at or after ``by_time`` that fails, else None."""
    k = 1
    while True:
        t = k * check_interval
        if t >= by_time:
            seen = sum(1 for c in completions if c < t)
            return t if seen < min_solved else None
        k += 1
