"""In-process message passing with nonblocking sends and tracing hooks.

Channels connect one sender to one receiver per direction and match
messages by an exact (level, kind, iteration) tag.  Payloads below the
rendezvous threshold are buffered eagerly, so the send completes at
post time; larger payloads complete only once the matching receive is
posted, which deliberately reproduces the Late Receiver behaviour of an
MPI library without asynchronous progress.  An optional fixed latency
delays delivery for analyzer experiments.

Every send-post/send-complete and recv-post/recv-complete is reported
to the sender's or receiver's tracer.  A non-eager send is stamped
complete at the moment the receive was posted (the hand-shake time),
no matter when the sender finally calls wait(), so overlapping local
work between isend and wait is recorded faithfully.
"""

import io
import threading
import time
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Message",
    "Network",
    "Endpoint",
    "ChannelClosed",
    "DeadlockError",
    "RunAborted",
    "pack_array",
    "unpack_array",
    "pack_status",
    "unpack_status",
]

DEFAULT_RENDEZVOUS_BYTES = 1 << 20


class ChannelClosed(RuntimeError):
    pass


class RunAborted(RuntimeError):
    pass


class DeadlockError(RuntimeError):
    def __init__(self, msg, last_events=None):
        super().__init__(msg)
        self.last_events = last_events or {}


def monotonic_seconds():
    return time.perf_counter_ns() / 1e9


@dataclass
class Message:
    source: int
    dest: int
    tag: tuple
    payload: bytes
    post_time: float = 0.0
    completion_time: float = 0.0


def tag_name(tag):
    return "/".join(str(part) for part in tag)


class SendHandle:
    def __init__(self, message):
        self.message = message
        self.accepted = threading.Event()
        self.accepted_at = None
        self.waited = False


class _Entry:
    __slots__ = ("message", "available_at", "handle", "accepted")

    def __init__(self, message, available_at, handle):
        self.message = message
        self.available_at = available_at
        self.handle = handle
        self.accepted = False


class _Channel:
    def __init__(self, network):
        self.network = network
        self.cond = threading.Condition()
        self.entries = []
        self.closed = False
        self.sent = 0
        self.received = 0

    def put(self, entry):
        with self.cond:
            if self.closed:
                raise ChannelClosed("send on closed channel")
            self.entries.append(entry)
            self.sent += 1
            self.cond.notify_all()

    def take(self, tag, timeout):
        deadline = None if timeout is None else monotonic_seconds() + timeout
        with self.cond:
            while True:
                if self.network.abort_reason is not None:
                    raise RunAborted(self.network.abort_reason)
                entry = next((e for e in self.entries if e.message.tag == tag), None)
                if entry is not None:
                    if not entry.accepted:
                        # rendezvous hand-shake: the posted receive releases
                        # the sender; completion is stamped with this moment
                        entry.accepted = True
                        entry.handle.accepted_at = monotonic_seconds()
                        entry.handle.accepted.set()
                    now = monotonic_seconds()
                    if now >= entry.available_at:
                        self.entries.remove(entry)
                        self.received += 1
                        return entry.message
                    pause = entry.available_at - now
                elif self.closed:
                    raise ChannelClosed(f"no message with tag {tag} on closed channel")
                else:
                    pause = None
                if deadline is not None:
                    remaining = deadline - monotonic_seconds()
                    if remaining <= 0:
                        raise DeadlockError(
                            f"receive of tag {tag} made no progress for {timeout:.1f} s",
                            self.network.last_events(),
                        )
                    pause = remaining if pause is None else min(pause, remaining)
                self.cond.wait(pause if pause is not None else 1.0)


class Network:
    """Shared transport for a fixed set of worker ranks."""

    def __init__(self, num_ranks, rendezvous_bytes=DEFAULT_RENDEZVOUS_BYTES, latency=0.0, recv_timeout=60.0):
        self.num_ranks = num_ranks
        self.rendezvous_bytes = rendezvous_bytes
        self.latency = latency
        self.recv_timeout = recv_timeout
        self.abort_reason = None
        self._channels = {}
        self._tracers = {}
        for src in range(num_ranks):
            for dst in range(num_ranks):
                if src != dst:
                    self._channels[(src, dst)] = _Channel(self)

    def endpoint(self, rank, tracer=None):
        if tracer is not None:
            self._tracers[rank] = tracer
        return Endpoint(self, rank, tracer)

    def channel(self, src, dst):
        try:
            return self._channels[(src, dst)]
        except KeyError:
            raise ValueError(f"no channel {src}->{dst}") from None

    def abort(self, reason):
        self.abort_reason = reason
        for ch in self._channels.values():
            with ch.cond:
                ch.cond.notify_all()

    def close(self):
        """Close every channel; further sends and unmatched receives fail."""
        for ch in self._channels.values():
            with ch.cond:
                ch.closed = True
                ch.cond.notify_all()

    def last_events(self):
        return {rank: tracer.last_event_name() for rank, tracer in self._tracers.items()}

    def audit(self):
        """Per-channel send/receive counts and outstanding message count."""
        report = {}
        for (src, dst), ch in self._channels.items():
            with ch.cond:
                report[(src, dst)] = {
                    "sent": ch.sent,
                    "received": ch.received,
                    "pending": len(ch.entries),
                }
        return report


class Endpoint:
    """Per-rank communication interface; owned by exactly one worker."""

    def __init__(self, network, rank, tracer=None):
        self.network = network
        self.rank = rank
        self.tracer = tracer
        self.unwaited = 0

    def _record(self, kind, tag, nbytes, peer, t=None):
        if self.tracer is not None:
            self.tracer.record_comm(kind, tag_name(tag), nbytes, peer, t=t)

    def isend(self, dest, tag, payload):
        """Post a send; returns a handle that must be waited exactly once.

        Never blocks: the message is enqueued immediately.  Below the
        rendezvous threshold the transport accepts it on the spot.
        """
        msg = Message(self.rank, dest, tag, bytes(payload), post_time=monotonic_seconds())
        handle = SendHandle(msg)
        self._record("send-post", tag, len(msg.payload), dest, t=msg.post_time)
        entry = _Entry(msg, msg.post_time + self.network.latency, handle)
        if len(msg.payload) <= self.network.rendezvous_bytes:
            entry.accepted = True
            handle.accepted_at = msg.post_time
            handle.accepted.set()
            self.network.channel(self.rank, dest).put(entry)
            msg.completion_time = msg.post_time
            self._record("send-complete", tag, len(msg.payload), dest, t=msg.post_time)
        else:
            self.network.channel(self.rank, dest).put(entry)
        self.unwaited += 1
        return handle

    def wait(self, handle, timeout=None):
        """Block until the transport has accepted the payload; idempotent."""
        if handle.waited:
            return
        timeout = self.network.recv_timeout if timeout is None else timeout
        deadline = monotonic_seconds() + timeout
        while not handle.accepted.wait(0.005):
            if self.network.abort_reason is not None:
                raise RunAborted(self.network.abort_reason)
            if monotonic_seconds() > deadline:
                raise DeadlockError(
                    f"send of tag {handle.message.tag} not accepted after {timeout:.1f} s",
                    self.network.last_events(),
                )
        handle.waited = True
        self.unwaited -= 1
        if handle.message.completion_time == 0.0:
            handle.message.completion_time = handle.accepted_at
            self._record(
                "send-complete",
                handle.message.tag,
                len(handle.message.payload),
                handle.message.dest,
                t=handle.accepted_at,
            )

    def recv(self, source, tag, timeout=None):
        """Block until a message with exactly this tag arrives from source."""
        self._record("recv-post", tag, 0, source)
        timeout = self.network.recv_timeout if timeout is None else timeout
        msg = self.network.channel(source, self.rank).take(tag, timeout)
        self._record("recv-complete", tag, len(msg.payload), source)
        return msg


def pack_array(arr):
    buf = io.BytesIO()
    np.save(buf, np.asarray(arr), allow_pickle=False)
    return buf.getvalue()


def unpack_array(payload):
    return np.load(io.BytesIO(payload), allow_pickle=False)


def pack_status(stopped, final_value=None):
    head = b"\x01" if stopped else b"\x00"
    if final_value is None:
        return head
    return head + pack_array(final_value)


def unpack_status(payload):
    stopped = payload[:1] == b"\x01"
    final = unpack_array(payload[1:]) if len(payload) > 1 else None
    return stopped, final
