"""Trace analysis: efficiency metrics, wait-state search, ideal replay.

The efficiency report decomposes parallel efficiency into load balance
and communication efficiency, and the latter further into serialisation
and transfer efficiency, using an ideal-network replay of the trace as
the reference: computation intervals and message dependencies are
preserved while transfer cost and sender blocking are removed.  The
wait-state search flags Late Receiver patterns (a posted send blocked
because the matching receive came later) and, as the mirror case, Late
Sender patterns.
"""

import csv
import statistics
from dataclasses import dataclass

from .trace import Trace, TraceEvent, comm_intervals, merged_length

__all__ = [
    "PopReport",
    "WaitState",
    "CausalityError",
    "EmptyPhaseError",
    "ReplayError",
    "causality_violations",
    "pop_metrics",
    "detect_late_receiver",
    "detect_late_sender",
    "audit_messages",
    "ideal_replay",
    "replay_trace",
    "emit_report",
    "phase_window",
]

POP_METRIC_ORDER = (
    "load_balance",
    "communication_efficiency",
    "serialisation_efficiency",
    "transfer_efficiency",
    "parallel_efficiency",
)


class EmptyPhaseError(RuntimeError):
    pass


class ReplayError(RuntimeError):
    pass


class CausalityError(RuntimeError):
    pass


@dataclass
class PopReport:
    load_balance: float
    communication_efficiency: float
    serialisation_efficiency: float
    transfer_efficiency: float
    parallel_efficiency: float
    comp_times: dict
    total_runtime: float
    ideal_runtime: float

    def as_rows(self):
        return [(name, getattr(self, name)) for name in POP_METRIC_ORDER]


@dataclass
class WaitState:
    pattern: str
    sender: int
    receiver: int
    wait_s: float
    location: str


@dataclass
class _Match:
    source: int
    dest: int
    name: str
    send_post: float
    send_complete: float | None
    recv_post: float | None
    recv_complete: float | None


def match_messages(trace):
    """Pair sends with receives by (source, dest, tag), FIFO within a key.

    Returns (matches, unmatched_sends, unmatched_recvs); matches may have
    a missing completion if the trace was cut short.
    """
    sends = {}
    recvs = {}
    for ev in trace.events:
        if ev.kind == "send-post":
            sends.setdefault((ev.rank, ev.peer, ev.name), []).append(
                _Match(ev.rank, ev.peer, ev.name, ev.t, None, None, None)
            )
        elif ev.kind == "send-complete":
            for m in sends.get((ev.rank, ev.peer, ev.name), []):
                if m.send_complete is None:
                    m.send_complete = ev.t
                    break
        elif ev.kind == "recv-post":
            recvs.setdefault((ev.peer, ev.rank, ev.name), []).append([ev.t, None])
        elif ev.kind == "recv-complete":
            for pair in recvs.get((ev.peer, ev.rank, ev.name), []):
                if pair[1] is None:
                    pair[1] = ev.t
                    break
    matches = []
    unmatched_sends = []
    unmatched_recvs = []
    for key, send_list in sends.items():
        recv_list = recvs.pop(key, [])
        for i, m in enumerate(send_list):
            if i < len(recv_list):
                m.recv_post, m.recv_complete = recv_list[i]
                matches.append(m)
            else:
                unmatched_sends.append(m)
        unmatched_recvs.extend(recv_list[len(send_list):])
    for leftover in recvs.values():
        unmatched_recvs.extend(leftover)
    return matches, unmatched_sends, unmatched_recvs


def audit_messages(trace):
    """Counts of message events; flags unmatched sends or receives."""
    matches, unmatched_sends, unmatched_recvs = match_messages(trace)
    return {
        "matched": len(matches),
        "unmatched_sends": len(unmatched_sends),
        "unmatched_recvs": len(unmatched_recvs),
        "send_posts": sum(1 for ev in trace.events if ev.kind == "send-post"),
        "recv_posts": sum(1 for ev in trace.events if ev.kind == "recv-post"),
    }


def causality_violations(trace):
    """Matched pairs whose receive completed before the send was posted.

    Backends here share one clock, so any violation means a corrupt
    trace; no skew correction is attempted.
    """
    return sum(
        1
        for m in match_messages(trace)[0]
        if m.recv_complete is not None and m.recv_complete < m.send_post
    )


def phase_window(trace, full_run=False):
    """Analysis window: the full run, or everything after the last
    predictor exit (initialization excluded, the default)."""
    if not trace.events:
        raise EmptyPhaseError("trace holds no events")
    t_min = min(ev.t for ev in trace.events)
    t_max = max(ev.t for ev in trace.events)
    if full_run:
        return t_min, t_max
    predict_exits = [
        ev.t
        for ev in trace.events
        if ev.kind == "region-exit" and " -- PREDICT -- " in ev.name
    ]
    start = max(predict_exits) if predict_exits else t_min
    if start >= t_max:
        raise EmptyPhaseError("selected phase is empty; nothing after the predictor")
    return start, t_max


def _clip_spans(spans, lo, hi):
    return [(max(s, lo), min(e, hi)) for s, e in spans if min(e, hi) > max(s, lo)]


def pop_metrics(trace, full_run=False):
    """Efficiency decomposition of a trace phase.

    With per-rank computation time c_p = span_p - comm_p and phase
    makespan T: load balance mean(c)/max(c), communication efficiency
    max(c)/T, parallel efficiency mean(c)/T; the ideal replay makespan
    splits communication efficiency into serialisation max(c)/T_ideal
    and transfer T_ideal/T.
    """
    violations = causality_violations(trace)
    if violations:
        raise CausalityError(f"{violations} matched messages complete before their send posts")
    lo, hi = phase_window(trace, full_run)
    comp = {}
    for rank, events in trace.by_rank().items():
        in_phase = [ev for ev in events if lo <= ev.t <= hi]
        if not in_phase:
            continue
        start = min(ev.t for ev in in_phase)
        end = max(ev.t for ev in in_phase)
        comm = merged_length(_clip_spans(comm_intervals(sorted(events, key=lambda e: e.t)), lo, hi))
        comp[rank] = (end - start) - comm
    if not comp:
        raise EmptyPhaseError("no rank has events in the selected phase")
    c_max = max(comp.values())
    c_mean = statistics.fmean(comp.values())
    if c_max <= 0:
        raise EmptyPhaseError("no computation time in the selected phase")
    starts = []
    ends = []
    for rank, events in trace.by_rank().items():
        in_phase = [ev.t for ev in events if lo <= ev.t <= hi]
        if in_phase:
            starts.append(min(in_phase))
            ends.append(max(in_phase))
    total = max(ends) - min(starts)
    ideal = ideal_replay(trace, window=(lo, hi))
    return PopReport(
        load_balance=c_mean / c_max,
        communication_efficiency=c_max / total,
        serialisation_efficiency=c_max / ideal,
        transfer_efficiency=ideal / total,
        parallel_efficiency=c_mean / total,
        comp_times=comp,
        total_runtime=total,
        ideal_runtime=ideal,
    )


def _region_at(events, rank, t):
    stack = []
    for ev in events:
        if ev.rank != rank or ev.t > t:
            if ev.t > t:
                break
            continue
        if ev.kind == "region-enter":
            stack.append(ev.name)
        elif ev.kind == "region-exit" and stack:
            stack.pop()
    return stack[-1] if stack else "<untracked>"


def detect_late_receiver(trace, min_wait=0.0):
    """Late Receiver wait states: send posted before the matching receive
    and blocked until it; waiting time is the receive-post lag clamped to
    the blocked interval."""
    ordered = sorted(trace.events, key=lambda ev: ev.t)
    states = []
    for m in match_messages(trace)[0]:
        if m.send_complete is None or m.recv_post is None:
            continue
        blocked = m.send_complete - m.send_post
        if blocked <= 0 or m.recv_post <= m.send_post:
            continue
        wait = min(m.recv_post, m.send_complete) - m.send_post
        if wait >= max(min_wait, 0.0) and wait > 0:
            region = _region_at(ordered, m.source, m.send_post)
            states.append(WaitState("late-receiver", m.source, m.dest, wait, f"{region} @ {m.name}"))
    states.sort(key=lambda w: -w.wait_s)
    return states


def detect_late_sender(trace, min_wait=0.0):
    """Mirror pattern: receive posted before the send, receiver blocked."""
    ordered = sorted(trace.events, key=lambda ev: ev.t)
    states = []
    for m in match_messages(trace)[0]:
        if m.recv_post is None or m.recv_complete is None:
            continue
        if m.send_post <= m.recv_post:
            continue
        wait = min(m.send_post, m.recv_complete) - m.recv_post
        if wait >= max(min_wait, 0.0) and wait > 0:
            region = _region_at(ordered, m.dest, m.recv_post)
            states.append(WaitState("late-sender", m.source, m.dest, wait, f"{region} @ {m.name}"))
    states.sort(key=lambda w: -w.wait_s)
    return states


def _replay_ops(trace, window):
    """Per-rank op lists with pure compute deltas between events."""
    matches = match_messages(trace)[0]
    send_key = {}
    recv_key = {}
    for idx, m in enumerate(matches):
        send_key[(m.source, m.dest, m.name, m.send_post)] = idx
        if m.recv_post is not None:
            recv_key[(m.source, m.dest, m.name, m.recv_post)] = idx
    lo, hi = window if window else (None, None)
    clipped = {}
    replayed_sends = set()
    for rank, events in trace.by_rank().items():
        events = sorted(events, key=lambda ev: ev.t)
        blocked = comm_intervals(events)
        in_window = events if lo is None else [ev for ev in events if lo <= ev.t <= hi]
        clipped[rank] = (in_window, blocked)
        for ev in in_window:
            if ev.kind == "send-post":
                idx = send_key.get((ev.rank, ev.peer, ev.name, ev.t))
                if idx is not None:
                    replayed_sends.add(idx)
    ranks = {}
    for rank, (events, blocked) in clipped.items():
        ops = []
        prev_t = events[0].t if events else 0.0
        for ev in events:
            gap = ev.t - prev_t
            overlap = merged_length(_clip_spans(blocked, prev_t, ev.t))
            delta = max(gap - overlap, 0.0)
            match_idx = None
            if ev.kind == "send-post":
                match_idx = send_key.get((ev.rank, ev.peer, ev.name, ev.t))
            elif ev.kind == "recv-post":
                match_idx = recv_key.get((ev.peer, ev.rank, ev.name, ev.t))
                if match_idx is not None and match_idx not in replayed_sends:
                    # matching send predates the window; dependency already met
                    match_idx = None
            ops.append((delta, ev, match_idx))
            prev_t = ev.t
        ranks[rank] = ops
    return ranks


def replay_trace(trace, window=None):
    """Re-time the trace on an ideal network.

    Compute intervals keep their length, transfers are free, senders
    never block, and each receive completes as soon as both it and the
    matching send are posted.  Ranks start at time zero.
    """
    ranks = _replay_ops(trace, window)
    send_post_times = {}
    pointers = {rank: 0 for rank in ranks}
    clocks = {rank: 0.0 for rank in ranks}
    new_events = []
    pending_recv = {}  # rank -> match idx blocking it
    progress = True
    while progress:
        progress = False
        for rank, ops in ranks.items():
            while pointers[rank] < len(ops):
                delta, ev, match_idx = ops[pointers[rank]]
                if ev.kind == "recv-complete":
                    idx = pending_recv.pop(rank, None)
                    if idx is not None and idx not in send_post_times:
                        pending_recv[rank] = idx
                        break  # matched send not replayed yet
                    t = clocks[rank] if idx is None else max(clocks[rank], send_post_times[idx])
                    clocks[rank] = t
                elif ev.kind == "send-complete":
                    t = clocks[rank]  # no sender blocking
                else:
                    clocks[rank] += delta
                    t = clocks[rank]
                    if ev.kind == "send-post" and match_idx is not None:
                        send_post_times[match_idx] = t
                    elif ev.kind == "recv-post":
                        pending_recv[rank] = match_idx
                new_events.append(TraceEvent(rank, ev.kind, ev.name, t, ev.bytes, ev.peer))
                pointers[rank] += 1
                progress = True
    if any(pointers[rank] < len(ops) for rank, ops in ranks.items()):
        stuck = {rank: len(ops) - pointers[rank] for rank, ops in ranks.items() if pointers[rank] < len(ops)}
        raise ReplayError(f"cyclic message dependency; undelivered ops per rank: {stuck}")
    new_events.sort(key=lambda ev: (ev.t, ev.rank))
    return Trace(events=new_events, num_ranks=trace.num_ranks)


def ideal_replay(trace, window=None):
    """Makespan of the trace replayed on the ideal network."""
    replayed = replay_trace(trace, window)
    if not replayed.events:
        return 0.0
    return max(ev.t for ev in replayed.events)


def _fmt(value):
    return f"{value:.3f}"


def emit_report(report, path, fmt="csv"):
    """Write a PopReport or a list of WaitStates as CSV or aligned text."""
    if fmt not in ("csv", "text"):
        raise ValueError(f"format must be 'csv' or 'text', got {fmt!r}")
    with open(path, "w", newline="") as fh:
        if isinstance(report, PopReport):
            if fmt == "csv":
                writer = csv.writer(fh)
                writer.writerow(["metric", "value"])
                for name, value in report.as_rows():
                    writer.writerow([name, _fmt(value)])
            else:
                fh.write("metric,value,percent\n")
                for name, value in report.as_rows():
                    fh.write(f"{name},{_fmt(value)},{100.0 * value:.1f} %\n")
        else:
            writer = csv.writer(fh)
            writer.writerow(["pattern", "sender", "receiver", "wait_s", "location"])
            for ws in report:
                writer.writerow([ws.pattern, ws.sender, ws.receiver, f"{ws.wait_s:.6f}", ws.location])
    return path
