"""FLOPs ledger and the recording context used by tensor ops.

Counting convention: one multiply-accumulate is 2 FLOPs, elementwise ops
cost 1 FLOP per output element, reductions 1 FLOP per input element,
softmax / log-softmax 4 FLOPs per element. Reshapes, indexing and
concatenation are free.
"""
from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field
from typing import Iterator

SOFTMAX_FLOPS_PER_ELEMENT = 4

_ledger: contextvars.ContextVar["FlopsLedger | None"] = contextvars.ContextVar("ledger", default=None)
_stage: contextvars.ContextVar[str] = contextvars.ContextVar("stage", default="other")


@dataclass
class FlopsLedger:
    entries: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.entries.values())

    def add(self, stage: str, count: int) -> None:
        count = int(count)
        if count < 0:
            raise ValueError(f"negative FLOP count {count} for stage {stage!r}")
        self.entries[stage] = self.entries.get(stage, 0) + count

    def get(self, stage: str) -> int:
        return self.entries.get(stage, 0)

    def merge(self, other: "FlopsLedger") -> None:
        for k, v in other.entries.items():
            self.add(k, v)

    def copy(self) -> "FlopsLedger":
        return FlopsLedger(dict(self.entries))

    def delta(self, before: "FlopsLedger") -> "FlopsLedger":
        """Per-stage counts accumulated since the ``before`` snapshot."""
        out = FlopsLedger()
        for k, v in self.entries.items():
            d = v - before.get(k)
            if d:
                out.entries[k] = d
        return out

    def as_dict(self) -> dict[str, int]:
        return dict(sorted(self.entries.items()))

    @contextlib.contextmanager
    def recording(self) -> Iterator["FlopsLedger"]:
        token = _ledger.set(self)
        try:
            yield self
        finally:
            _ledger.reset(token)


@contextlib.contextmanager
def stage(name: str) -> Iterator[None]:
    token = _stage.set(name)
    try:
        yield
    finally:
        _stage.reset(token)


@contextlib.contextmanager
def paused() -> Iterator[None]:
    token = _ledger.set(None)
    try:
        yield
    finally:
        _ledger.reset(token)


def current_stage() -> str:
    return _stage.get()


def charge(count: int) -> None:
    ledger = _ledger.get()
    if ledger is not None and count:
        ledger.add(_stage.get(), count)
