"""Run summaries: the key=value report file, trace-derived cross-checks,
and the figures rendered alongside the delimited output."""

from __future__ import annotations

from pathlib import Path

from .sniff import TraceRecord
from .wire import CONTROLLER_NODE_ID

_FLOAT_KEYS = ("blocked_interval", "backlog_drain_seconds", "run_until")


def render_report(report: dict) -> str:
    lines = []
    for key, value in report.items():
        if key in _FLOAT_KEYS:
            lines.append(f"{key} = {float(value):.3f}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_report(path, report: dict) -> None:
    Path(path).write_text(render_report(report), encoding="utf-8")


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        key, _, value = line.partition(" = ")
        if key:
            out[key] = value
    return out


def report_from_trace(records: list[TraceRecord], run_until: float) -> dict:
    """Recompute the trace-derivable report numbers, for consistency checks."""
    attacker_times = [r.time for r in records if "spoofed" in r.note]
    deliveries = [
        r.time
        for r in records
        if r.dst == CONTROLLER_NODE_ID
        and r.status == "delivered"
        and r.note.split("; ")[-1].startswith("event")
    ]
    attack_start = attacker_times[0] if attacker_times else None
    attack_end = attacker_times[-1] if attacker_times else None
    if attack_start is None:
        blocked = 0.0
    else:
        after = [t for t in deliveries if t > attack_end]
        blocked = (after[0] - attack_start) if after else (run_until - attack_start)
    return {
        "events_delivered": len(deliveries),
        "attacker_frames_sent": len(attacker_times),
        "frames_sent": len(records),
        "frames_lost": sum(r.status == "lost" for r in records),
        "frames_corrupted": sum(r.status == "crc_error" for r in records),
        "frames_delivered": sum(r.status not in ("lost", "crc_error") for r in records),
        "blocked_interval": round(blocked, 3),
    }


def render_figures(records: list[TraceRecord], report: dict, outdir) -> list[Path]:
    """Write PNG figures next to the trace: a per-node traffic timeline and
    the attack-vs-delivery progress view."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    status_colors = {
        "delivered": "tab:green",
        "queued_behind_slot": "tab:orange",
        "decrypt_failed": "tab:red",
        "ignored_not_included": "tab:gray",
        "lost": "black",
        "crc_error": "tab:purple",
    }

    fig, ax = plt.subplots(figsize=(10, 4.5))
    seen = set()
    for rec in records:
        color = status_colors.get(rec.status, "tab:blue")
        label = rec.status if rec.status not in seen else None
        seen.add(rec.status)
        marker = "x" if "spoofed" in rec.note else "o"
        ax.scatter(rec.time, rec.src, s=14, c=color, marker=marker, label=label)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("transmitting node id")
    ax.set_title(f"traffic timeline: {report.get('scenario', '')}")
    if seen:
        ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    timeline = outdir / "traffic_timeline.png"
    fig.savefig(timeline, dpi=120)
    plt.close(fig)
    written.append(timeline)

    fig, ax = plt.subplots(figsize=(10, 4.5))
    attacker_times = [r.time for r in records if "spoofed" in r.note]
    delivery_times = [
        r.time
        for r in records
        if r.dst == CONTROLLER_NODE_ID
        and r.status == "delivered"
        and r.note.split("; ")[-1].startswith("event")
    ]
    if attacker_times:
        ax.step(
            attacker_times, range(1, len(attacker_times) + 1),
            where="post", color="tab:red", label="spoofed nonce requests",
        )
    if delivery_times:
        ax.step(
            delivery_times, range(1, len(delivery_times) + 1),
            where="post", color="tab:green", label="delivered events",
        )
    if attacker_times:
        drain = float(report.get("backlog_drain_seconds", 0) or 0)
        ax.axvspan(
            attacker_times[0], attacker_times[-1] + drain,
            alpha=0.15, color="tab:red", label="blocked window",
        )
    ax.set_xlabel("time [s]")
    ax.set_ylabel("cumulative count")
    ax.set_title("flood vs. event delivery")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    blocking = outdir / "blocking_overview.png"
    fig.savefig(blocking, dpi=120)
    plt.close(fig)
    written.append(blocking)
    return written
