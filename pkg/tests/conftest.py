"""Shared builders for synthetic traces used across test modules."""

from pitlab.trace import Trace, TraceEvent


def ev(rank, kind, name, t, nbytes=None, peer=None):
    return TraceEvent(rank, kind, name, t, bytes=nbytes, peer=peer)


def make_trace(events, num_ranks):
    return Trace(events=sorted(events, key=lambda e: (e.t, e.rank)), num_ranks=num_ranks)


def pop_hand_trace():
    """Two-rank trace engineered to give T=10, c=(8,6), T_ideal=9.

    Rank 0 computes for 8 s, fires an eager send and then blocks 2 s in
    a receive; rank 1 computes 5 s, blocks 4 s receiving (1 s of it pure
    transfer), computes 1 s more and answers.  The replay compresses the
    schedule to 9 s.
    """
    events = [
        ev(0, "region-enter", "REGION -- IT_FINE -- 0", 0.0),
        ev(0, "region-exit", "REGION -- IT_FINE -- 0", 8.0),
        ev(0, "send-post", "fine/value/1", 8.0, 64, 1),
        ev(0, "send-complete", "fine/value/1", 8.0, 64, 1),
        ev(0, "recv-post", "fine/value/2", 8.0, 0, 1),
        ev(0, "recv-complete", "fine/value/2", 10.0, 64, 1),
        ev(1, "region-enter", "REGION -- IT_FINE -- 1", 0.0),
        ev(1, "region-exit", "REGION -- IT_FINE -- 1", 5.0),
        ev(1, "recv-post", "fine/value/1", 5.0, 0, 0),
        ev(1, "recv-complete", "fine/value/1", 9.0, 64, 0),
        ev(1, "region-enter", "REGION -- IT_CHECK -- 1", 9.0),
        ev(1, "region-exit", "REGION -- IT_CHECK -- 1", 10.0),
        ev(1, "send-post", "fine/value/2", 10.0, 64, 0),
        ev(1, "send-complete", "fine/value/2", 10.0, 64, 0),
    ]
    return make_trace(events, 2)


def fig5_trace():
    """One blocked send released by a receive posted 3 s later."""
    events = [
        ev(0, "send-post", "fine/value/1", 2.0, 4096, 1),
        ev(0, "send-complete", "fine/value/1", 5.0, 4096, 1),
        ev(1, "recv-post", "fine/value/1", 5.0, 0, 0),
        ev(1, "recv-complete", "fine/value/1", 5.0, 4096, 0),
    ]
    return make_trace(events, 2)
