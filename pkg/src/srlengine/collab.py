"""Multi-writer plain-text documents with server-serialized transformation.

The server is the single transformation authority: an op submitted against a
stale base revision is rebased over every op committed since, then appended
to the log. All readers apply the committed log in order, so replicas
converge by construction and the log doubles as keystroke-granular research
data. Transform rules: concurrent inserts at one position are ordered by
author id; delete ranges are clipped against prior deletes; an insert into a
prior-deleted range lands at the deletion point; a delete straddling a prior
insert swallows it, keeping committed deletes contiguous.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping

from .model import canonical_json


class DocUnknown(KeyError):
    pass


class StaleBase(ValueError):
    pass


class OutOfBounds(ValueError):
    pass


class RevisionUnknown(ValueError):
    pass


class UnknownAuthor(KeyError):
    pass


@dataclass(frozen=True)
class DocOp:
    op_id: str
    doc_id: str
    author: str
    base_revision: int
    kind: str  # "insert" | "delete"
    position: int
    text: str = ""  # insert payload
    length: int = 0  # delete length; 0 after clipping to a no-op

    def __post_init__(self):
        if self.kind not in ("insert", "delete"):
            raise ValueError(f"unsupported op kind {self.kind!r}")
        if self.kind == "insert" and not self.text:
            raise ValueError("insert text must be non-empty")
        if self.base_revision < 0 or self.position < 0:
            raise ValueError("base_revision and position must be non-negative")

    def to_doc(self) -> dict:
        doc = {
            "op_id": self.op_id,
            "doc_id": self.doc_id,
            "author": self.author,
            "base_revision": self.base_revision,
            "kind": self.kind,
            "position": self.position,
        }
        if self.kind == "insert":
            doc["text"] = self.text
        else:
            doc["length"] = self.length
        return doc

    @classmethod
    def from_doc(cls, doc: Mapping) -> "DocOp":
        return cls(
            op_id=str(doc["op_id"]),
            doc_id=str(doc["doc_id"]),
            author=str(doc["author"]),
            base_revision=int(doc["base_revision"]),
            kind=str(doc["kind"]),
            position=int(doc["position"]),
            text=str(doc.get("text", "")),
            length=int(doc.get("length", 0)),
        )


def transform_against(op: DocOp, prior: DocOp) -> DocOp:
    """Rebase `op` over one already-committed concurrent op."""
    if prior.kind == "insert":
        shift = len(prior.text)
        if op.kind == "insert":
            if prior.position < op.position or (prior.position == op.position and op.author > prior.author):
                return replace(op, position=op.position + shift)
            return op
        # delete vs prior insert
        if prior.position <= op.position:
            return replace(op, position=op.position + shift)
        if prior.position >= op.position + op.length:
            return op
        return replace(op, length=op.length + shift)  # swallow the insert, stay contiguous
    # prior is a delete
    p2, l2 = prior.position, prior.length
    if l2 == 0:
        return op
    if op.kind == "insert":
        if op.position <= p2:
            return op
        if op.position >= p2 + l2:
            return replace(op, position=op.position - l2)
        return replace(op, position=p2)  # inside the deleted range: land at the deletion point
    # delete vs prior delete: clip the overlap away
    if p2 + l2 <= op.position:
        return replace(op, position=op.position - l2)
    if p2 >= op.position + op.length:
        return op
    overlap = min(op.position + op.length, p2 + l2) - max(op.position, p2)
    new_pos = op.position if op.position <= p2 else max(p2, op.position - l2)
    return replace(op, position=new_pos, length=op.length - overlap)


def apply_op(content: str, op: DocOp) -> str:
    if op.kind == "insert":
        return content[: op.position] + op.text + content[op.position :]
    return content[: op.position] + content[op.position + op.length :]


class _Document:
    __slots__ = ("doc_id", "experiment_id", "participants", "content", "op_log", "lengths", "lock", "subscribers", "path")

    def __init__(self, doc_id: str, experiment_id: str, participants: dict[str, str], path: Path | None):
        self.doc_id = doc_id
        self.experiment_id = experiment_id
        self.participants = participants  # learner_id -> session_id
        self.content = ""
        self.op_log: list[DocOp] = []
        self.lengths: list[int] = [0]  # document length at each revision
        self.lock = threading.Lock()
        self.subscribers: list[queue.Queue] = []
        self.path = path

    @property
    def revision(self) -> int:
        return len(self.op_log)


class CollabStore:
    def __init__(self, data_dir: str | Path | None = None,
                 trace_sink: Callable[[str, str, str, dict], None] | None = None):
        # trace_sink(session_id, action, target, payload)
        self.data_dir = Path(data_dir) / "docs" if data_dir else None
        if self.data_dir:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        self._docs: dict[str, _Document] = {}
        self._lock = threading.Lock()
        self._trace_sink = trace_sink
        if self.data_dir:
            self._scan()

    def _scan(self) -> None:
        for path in sorted(self.data_dir.glob("*.doclog")):
            with open(path, "r", encoding="utf-8") as fh:
                header = json.loads(fh.readline())
                doc = _Document(header["doc_id"], header["experiment_id"], dict(header["participants"]), path)
                for line in fh:
                    op = DocOp.from_doc(json.loads(line))
                    doc.content = apply_op(doc.content, op)
                    doc.op_log.append(op)
                    doc.lengths.append(len(doc.content))
            self._docs[doc.doc_id] = doc

    def create_doc(self, experiment_id: str, participants: Mapping[str, str], doc_id: str | None = None) -> str:
        doc_id = doc_id or f"doc-{uuid.uuid4().hex[:12]}"
        path = self.data_dir / f"{doc_id}.doclog" if self.data_dir else None
        doc = _Document(doc_id, experiment_id, dict(participants), path)
        with self._lock:
            if doc_id in self._docs:
                raise ValueError(f"doc {doc_id} already exists")
            self._docs[doc_id] = doc
        if path:
            header = {"doc_id": doc_id, "experiment_id": experiment_id, "participants": dict(participants)}
            with open(path, "wb") as fh:
                fh.write(canonical_json(header) + b"\n")
        return doc_id

    def doc(self, doc_id: str) -> _Document:
        doc = self._docs.get(doc_id)
        if doc is None:
            raise DocUnknown(doc_id)
        return doc

    def content(self, doc_id: str) -> str:
        return self.doc(doc_id).content

    def revision(self, doc_id: str) -> int:
        return self.doc(doc_id).revision

    def add_participant(self, doc_id: str, learner_id: str, session_id: str) -> None:
        doc = self.doc(doc_id)
        with doc.lock:
            doc.participants[learner_id] = session_id

    def submit_op(self, op: DocOp) -> tuple[DocOp, int]:
        """Transform against everything since op.base_revision, commit, fan out."""
        doc = self.doc(op.doc_id)
        with doc.lock:
            if op.author not in doc.participants:
                raise UnknownAuthor(op.author)
            if op.base_revision > doc.revision:
                raise StaleBase(f"base_revision {op.base_revision} is ahead of revision {doc.revision}")
            base_len = doc.lengths[op.base_revision]
            if op.kind == "insert":
                if op.position > base_len:
                    raise OutOfBounds(f"insert at {op.position} outside document of length {base_len}")
            else:
                # Deletes never error: clip to the base document, possibly to a no-op.
                pos = min(op.position, base_len)
                length = max(0, min(op.length, base_len - pos))
                op = replace(op, position=pos, length=length)
            for prior in doc.op_log[op.base_revision :]:
                op = transform_against(op, prior)
            content_len = len(doc.content)
            if op.kind == "insert":
                op = replace(op, position=min(op.position, content_len))
            else:
                pos = min(op.position, content_len)
                op = replace(op, position=pos, length=max(0, min(op.length, content_len - pos)))
            doc.content = apply_op(doc.content, op)
            doc.op_log.append(op)
            doc.lengths.append(len(doc.content))
            revision = doc.revision
            if doc.path:
                with open(doc.path, "ab") as fh:
                    fh.write(canonical_json(op.to_doc()) + b"\n")
            for sub in doc.subscribers:
                sub.put((op, revision))
            if self._trace_sink:
                session_id = doc.participants[op.author]
                payload = dict(op.to_doc())
                payload["revision"] = revision
                self._trace_sink(session_id, "DOC_OP", op.doc_id, payload)
        return op, revision

    def replay(self, doc_id: str, up_to_revision: int) -> str:
        doc = self.doc(doc_id)
        with doc.lock:
            if not (0 <= up_to_revision <= doc.revision):
                raise RevisionUnknown(f"revision {up_to_revision} out of range 0..{doc.revision}")
            ops = doc.op_log[:up_to_revision]
        content = ""
        for op in ops:
            content = apply_op(content, op)
        return content

    def subscribe(self, doc_id: str, from_revision: int = 0) -> queue.Queue:
        """Committed ops (op, revision) from from_revision+1 on; gap-free."""
        doc = self.doc(doc_id)
        sub: queue.Queue = queue.Queue()
        with doc.lock:
            if from_revision > doc.revision:
                raise RevisionUnknown(f"from_revision {from_revision} ahead of {doc.revision}")
            for i, op in enumerate(doc.op_log[from_revision:], start=from_revision + 1):
                sub.put((op, i))
            doc.subscribers.append(sub)
        return sub

    def unsubscribe(self, doc_id: str, sub: queue.Queue) -> None:
        doc = self.doc(doc_id)
        with doc.lock:
            if sub in doc.subscribers:
                doc.subscribers.remove(sub)

    def op_log(self, doc_id: str) -> list[DocOp]:
        doc = self.doc(doc_id)
        with doc.lock:
            return list(doc.op_log)
