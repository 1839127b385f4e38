"""Sniffer-style trace capture.

Every medium transmission becomes exactly one structured record, mirroring
the visible columns of a radio packet debugger: an ordinal line number, a
timestamp, addressing, the command name, and what happened to the frame.
Records export to a diffable CSV suitable for golden-file comparison.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

from .wire import MacFrame

CSV_HEADER = ["line_no", "time", "home", "src", "dst", "command", "status", "note"]


class TraceStatus(Enum):
    DELIVERED = "delivered"
    LOST = "lost"
    CRC_ERROR = "crc_error"
    IGNORED_NOT_INCLUDED = "ignored_not_included"
    QUEUED_BEHIND_SLOT = "queued_behind_slot"
    DECRYPT_FAILED = "decrypt_failed"


@dataclass(frozen=True)
class TraceRecord:
    line_no: int
    time: float
    home: int
    src: int
    dst: int
    command: str
    status: str
    note: str = ""


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)

    def record(
        self, frame: MacFrame, status: TraceStatus, now: float, note: str = ""
    ) -> TraceRecord:
        """Append one record; line numbers start at 1 and never repeat."""
        if self.records and now < self.records[-1].time:
            raise ValueError("trace time went backwards")
        rec = TraceRecord(
            line_no=len(self.records) + 1,
            time=round(now, 3),
            home=frame.home,
            src=frame.src,
            dst=frame.dst,
            command=frame.payload.label,
            status=status.value,
            note=note,
        )
        self.records.append(rec)
        return rec


def export_csv(records: list[TraceRecord], path) -> None:
    """Write records as UTF-8 CSV with LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow(
                [r.line_no, f"{r.time:.3f}", f"{r.home:08X}", r.src, r.dst,
                 r.command, r.status, r.note]
            )


def load_csv(path) -> list[TraceRecord]:
    """Parse a file written by export_csv back into records."""
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected trace header {header!r}")
        for row in reader:
            records.append(
                TraceRecord(
                    line_no=int(row[0]),
                    time=float(row[1]),
                    home=int(row[2], 16),
                    src=int(row[3]),
                    dst=int(row[4]),
                    command=row[5],
                    status=row[6],
                    note=row[7],
                )
            )
    return records
