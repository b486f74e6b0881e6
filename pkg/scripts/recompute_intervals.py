#!/usr/bin/env python3
"""Independent recomputation of task-clock interval aggregates.

Reads a raw event export (NDJSON) and, optionally, a label file (NDJSON, one
label per line as printed by `srlengine replay-session`), and recomputes the
per-interval action-time proportions and label counts from scratch. This
script deliberately imports nothing from srlengine: it is the cross-check
for the engine's aggregation, not a wrapper around it.

Attribution rule: an event owns the time from its timestamp to the next
event, capped at --cap-ms and clipped at the end of its interval; the last
event owns min(cap, interval end - t).

Usage:
    python scripts/recompute_intervals.py EXPORT SESSION_ID [--labels FILE]
"""

import argparse
import json
import sys
from collections import Counter, defaultdict


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("export_file")
    parser.add_argument("session_id")
    parser.add_argument("--labels", default=None)
    parser.add_argument("--interval-ms", type=int, default=420000)
    parser.add_argument("--cap-ms", type=int, default=60000)
    args = parser.parse_args()

    events = []
    with open(args.export_file, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc["session_id"] == args.session_id:
                events.append(doc)
    events.sort(key=lambda d: d["server_seq"])

    L = args.interval_ms
    cap = args.cap_ms
    times = [e["server_ms"] for e in events]
    actions = [e["action"] for e in events]

    proportions: dict[int, Counter] = defaultdict(Counter)
    for i, t in enumerate(times):
        if t is None or t < 0:
            continue
        k = t // L
        interval_end = (k + 1) * L
        if i + 1 < len(times):
            gap = times[i + 1] - t
            span = min(gap, cap, interval_end - t)
        else:
            span = min(cap, interval_end - t)
        proportions[k][actions[i]] += span

    label_counts: dict[int, Counter] = defaultdict(Counter)
    if args.labels:
        ms_by_seq = {e["server_seq"]: e["server_ms"] for e in events}
        with open(args.labels, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                label = json.loads(line)
                if label["session_id"] != args.session_id:
                    continue
                start_ms = ms_by_seq.get(label["window"][0])
                if start_ms is None or start_ms < 0:
                    continue
                label_counts[start_ms // L][label["process"]] += 1

    intervals = sorted(set(proportions) | set(label_counts))
    out = {
        "session_id": args.session_id,
        "interval_length_ms": L,
        "intervals": [
            {
                "interval_index": k,
                "action_time_proportions": {a: ms / L for a, ms in sorted(proportions[k].items())},
                "process_counts": dict(sorted(label_counts[k].items())),
            }
            for k in intervals
        ],
    }
    json.dump(out, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
