"""Session-log ingestion, serialization and the leakage-avoiding time split.

Log format (one record per line, UTF-8, tab-separated):

    CLICK <session_id> <epoch> <ordinal> <item_id> <title>
    IMPR  <session_id> <epoch> <ordinal> <query_text> <items>

where <items> is a semicolon-separated list of ``item_id|title|label|f1,...,f8``
entries. Free text (titles, query) is escaped so the raw separator characters
never appear inside a field: ``\\`` backslash, ``\\t`` tab, ``\\n`` newline,
``\\p`` pipe, ``\\s`` semicolon. Field order is fixed; serialization is
bit-exact under round-trip.

Each impression's click context is rebuilt at parse time as the up-to-5 most
recent prior clicks of the same session.
"""

from __future__ import annotations

import warnings

from sessionrank.data import (
    CONTEXT_WINDOW,
    ClickContext,
    ClickEvent,
    EngagementLabel,
    Item,
    Query,
    SerpImpression,
    SerpItem,
    Session,
    event_ordinal,
)


class SessionLogError(ValueError):
    """Malformed session log; carries the offending 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "|": "\\p", ";": "\\s"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "p": "|", "s": ";"}


def _escape(text: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in text)


def _unescape(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text) or text[i + 1] not in _UNESCAPES:
                raise ValueError("invalid escape sequence")
            out.append(_UNESCAPES[text[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _parse_impression_items(payload: str) -> list[SerpItem]:
    items = []
    for entry in payload.split(";"):
        parts = entry.split("|")
        if len(parts) != 4:
            raise ValueError(f"impression item needs 4 fields, got {len(parts)}")
        item_id, title, label_s, feats_s = parts
        features = tuple(float(v) for v in feats_s.split(","))
        items.append(
            SerpItem(
                item=Item(id=_unescape(item_id), title=_unescape(title)),
                base_features=features,
                label=EngagementLabel(int(label_s)),
            )
        )
    return items


def parse_session_log(text: str) -> list[Session]:
    """Parse a session log into Session objects, rebuilding click contexts.

    Sessions come back in order of first appearance, events sorted by
    ordinal. Raises SessionLogError (with line number) on malformed lines,
    duplicate (session, ordinal) pairs, or inconsistent per-session epochs.
    """
    # session_id -> (epoch, {ordinal: (line_no, record)})
    raw: dict[str, tuple[int, dict[int, tuple[int, str, tuple]]]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line or line.startswith("#"):  # '#' lines carry artifact metadata
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise SessionLogError(line_no, f"expected 6 fields, got {len(fields)}")
        kind, sid, epoch_s, ordinal_s = fields[0], fields[1], fields[2], fields[3]
        try:
            epoch = int(epoch_s)
            ordinal = int(ordinal_s)
        except ValueError:
            raise SessionLogError(line_no, "epoch/ordinal not integers") from None
        try:
            if kind == "CLICK":
                record = ("CLICK", Item(id=_unescape(fields[4]), title=_unescape(fields[5])))
            elif kind == "IMPR":
                record = ("IMPR", _unescape(fields[4]), _parse_impression_items(fields[5]))
            else:
                raise ValueError(f"unknown record kind {kind!r}")
        except SessionLogError:
            raise
        except ValueError as exc:
            raise SessionLogError(line_no, str(exc)) from None
        if sid not in raw:
            raw[sid] = (epoch, {})
        sess_epoch, events = raw[sid]
        if epoch != sess_epoch:
            raise SessionLogError(
                line_no, f"session {sid!r}: epoch {epoch} conflicts with {sess_epoch}"
            )
        if ordinal in events:
            raise SessionLogError(
                line_no, f"duplicate ordinal {ordinal} in session {sid!r}"
            )
        events[ordinal] = (line_no, *record)

    sessions = []
    for sid, (epoch, by_ordinal) in raw.items():
        events: list = []
        clicks_so_far: list[ClickEvent] = []
        for ordinal in sorted(by_ordinal):
            entry = by_ordinal[ordinal]
            line_no, kind = entry[0], entry[1]
            if kind == "CLICK":
                click = ClickEvent(ordinal=ordinal, item=entry[2])
                clicks_so_far.append(click)
                events.append(click)
            else:
                context = ClickContext(tuple(reversed(clicks_so_far[-CONTEXT_WINDOW:])))
                try:
                    events.append(
                        SerpImpression(
                            session_id=sid,
                            query=Query(text=entry[2], session_id=sid, ordinal=ordinal),
                            items=tuple(entry[3]),
                            context=context,
                        )
                    )
                except ValueError as exc:
                    raise SessionLogError(line_no, str(exc)) from None
        sessions.append(Session(id=sid, epoch=epoch, events=tuple(events)))
    return sessions


def serialize_sessions(sessions: list[Session]) -> str:
    """Render sessions back to the log format; inverse of parse_session_log."""
    lines = []
    for session in sessions:
        for event in session.events:
            prefix = f"{session.id}\t{session.epoch}\t{event_ordinal(event)}"
            if isinstance(event, ClickEvent):
                lines.append(
                    f"CLICK\t{prefix}\t{_escape(event.item.id)}\t{_escape(event.item.title)}"
                )
            else:
                entries = ";".join(
                    "|".join(
                        (
                            _escape(si.item.id),
                            _escape(si.item.title),
                            str(int(si.label)),
                            ",".join(repr(v) for v in si.base_features),
                        )
                    )
                    for si in event.items
                )
                lines.append(f"IMPR\t{prefix}\t{_escape(event.query.text)}\t{entries}")
    return "\n".join(lines) + ("\n" if lines else "")


def read_session_log(path: str) -> list[Session]:
    with open(path, encoding="utf-8") as fh:
        return parse_session_log(fh.read())


def write_session_log(sessions: list[Session], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_sessions(sessions))


def split_by_epoch(
    sessions: list[Session], boundary: int
) -> tuple[list[Session], list[Session]]:
    """Partition sessions into (encoder_train, ranker_data) by epoch.

    Sessions with epoch < boundary feed sequence-encoder training; the rest
    feed the ranker. The partitions are disjoint and exhaustive. An empty
    side is legal but warns, since it usually means a misconfigured boundary.
    """
    encoder_side = [s for s in sessions if s.epoch < boundary]
    ranker_side = [s for s in sessions if s.epoch >= boundary]
    if sessions and not encoder_side:
        warnings.warn(f"epoch split at {boundary}: encoder side is empty", stacklevel=2)
    if sessions and not ranker_side:
        warnings.warn(f"epoch split at {boundary}: ranker side is empty", stacklevel=2)
    return encoder_side, ranker_side
