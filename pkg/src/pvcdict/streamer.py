"""Beat-trio transmission state machine.

A PVC at beat ``n-1`` raises the communication flag of beats ``n-2``,
``n-1`` and ``n``. A beat's flag can still change until two newer beats
have arrived, so every decision is emitted with a two-beat delay.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, List, Optional, Sequence

from .sparse_core import Label


class Decision(str, enum.Enum):
    CONTINUE = "continue"
    NOTIFY_AND_TRANSMIT = "notify_and_transmit"
    STOP_MONITORING = "stop_monitoring"


@dataclass
class Emission:
    index: int
    beat: Any
    label: Label
    timestamp: int
    flag: int


@dataclass
class _Pending:
    index: int
    beat: Any
    label: Label
    timestamp: int
    flag: int = 0


def _as_two_class(label) -> Label:
    label = Label.parse(label)
    return Label.NORMAL if label is Label.OTHER else label


class Streamer:
    """Sequential per-record state machine.

    Parameters
    ----------
    th : int
        Transmission fires once the PVC accumulator exceeds ``th``.
    n_th : int or None
        Monitoring stops after this many beats (``None`` for no limit).
    """

    def __init__(self, th: int = 0, n_th: Optional[int] = None):
        self.th = th
        self.n_th = math.inf if n_th is None else n_th
        self.window: Deque[_Pending] = deque()
        self.acc = 0
        self.n = 0
        self.queue: List[Emission] = []
        self.finalized: List[Emission] = []
        self.transmitted: List[Emission] = []
        self.notified = False
        self._flushed = False

    def _finalize(self, p: _Pending) -> Optional[Emission]:
        e = Emission(p.index, p.beat, p.label, p.timestamp, p.flag)
        self.finalized.append(e)
        if p.flag:
            self.queue.append(e)
        return e

    def step(self, beat, label, timestamp: Optional[int] = None) -> List[Emission]:
        """Ingest one labelled beat; return the beats whose flag became final."""
        if self._flushed:
            raise RuntimeError("stream already flushed")
        label = _as_two_class(label)
        if timestamp is None:
            timestamp = int(getattr(beat, "timestamp", self.n))
        self.window.append(_Pending(self.n, beat, label, int(timestamp)))
        self.n += 1
        if label is Label.PVC:
            self.acc += 1
        if len(self.window) >= 2 and self.window[-2].label is Label.PVC:
            for p in list(self.window)[-3:]:
                p.flag = 1
        out = []
        while len(self.window) > 2:
            out.append(self._finalize(self.window.popleft()))
        return out

    def flush(self) -> List[Emission]:
        """End of record: a trailing PVC flags its left neighbour, then everything is final."""
        if self._flushed:
            return []
        self._flushed = True
        if self.window and self.window[-1].label is Label.PVC:
            for p in list(self.window)[-2:]:
                p.flag = 1
        out = []
        while self.window:
            out.append(self._finalize(self.window.popleft()))
        return out

    def check_transmit(self) -> Decision:
        if self.n >= self.n_th:
            return Decision.STOP_MONITORING
        if self.acc > self.th:
            self.notified = True
            return Decision.NOTIFY_AND_TRANSMIT
        return Decision.CONTINUE

    def drain(self) -> List[Emission]:
        """Hand queued flagged beats downstream."""
        out, self.queue = self.queue, []
        self.transmitted.extend(out)
        return out


@dataclass
class StreamTrace:
    labels: List[Label]
    flags: List[int]
    decisions: List[Decision]
    transmitted: List[Emission] = field(default_factory=list)
    stopped_at: Optional[int] = None

    @property
    def first_notification(self) -> Optional[int]:
        for i, d in enumerate(self.decisions):
            if d is Decision.NOTIFY_AND_TRANSMIT:
                return i
        return None


def run_stream(beats: Sequence, labels: Sequence, th: int = 0, n_th: Optional[int] = None,
               timestamps: Optional[Sequence[int]] = None) -> StreamTrace:
    """Drive a Streamer over a whole record and collect its trace."""
    s = Streamer(th, n_th)
    decisions = []
    stopped = None
    for i, (b, lab) in enumerate(zip(beats, labels)):
        ts = None if timestamps is None else timestamps[i]
        s.step(b, lab, ts)
        d = s.check_transmit()
        decisions.append(d)
        if d is Decision.NOTIFY_AND_TRANSMIT:
            s.drain()
        elif d is Decision.STOP_MONITORING:
            stopped = i
            break
    s.flush()
    if s.acc > s.th:
        s.drain()
    flags = [e.flag for e in sorted(s.finalized, key=lambda e: e.index)]
    return StreamTrace([_as_two_class(l) for l in labels[: len(flags)]], flags, decisions,
                       s.transmitted, stopped)


def offline_flags(labels: Sequence) -> List[int]:
    """Whole-sequence flag assignment: every PVC flags itself and both neighbours."""
    labels = [_as_two_class(l) for l in labels]
    flags = [0] * len(labels)
    for i, lab in enumerate(labels):
        if lab is Label.PVC:
            for j in (i - 1, i, i + 1):
                if 0 <= j < len(labels):
                    flags[j] = 1
    return flags


def worst_case_overhead(labels: Sequence) -> int:
    """Number of beats transmitted under beat-trio delimiting."""
    return sum(offline_flags(labels))


def parse_label_script(script: str) -> List[Label]:
    """``"NNVNN"`` or ``"N,N,V"`` -> labels."""
    tokens = [t for t in script.replace(",", " ").split() if t]
    if len(tokens) == 1:
        tokens = list(tokens[0])
    return [Label.parse(t) for t in tokens]
