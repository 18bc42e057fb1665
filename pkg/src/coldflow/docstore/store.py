"""File-backed document store: NDJSON collections, advisory lock, hash indexes.

Layout: a store is a directory; each collection ``name`` lives in
``<store>/name.ndjson`` with one canonical document per line in insertion
order. ``<store>/.lock`` holds the writer pid while a writer handle is open.

Concurrency contract: one writer process at a time (advisory lock file),
any number of readers. Within a process the lock is reentrant: several
writer handles may coexist (e.g. parallel pipeline tasks), their file
appends serialized through a shared per-store mutex. A handle's in-memory
view is the flushed state at open time plus its own writes; reopen to see
other handles' output.
"""

from __future__ import annotations

import logging
import os
import threading
import time
import uuid

from coldflow.docstore.documents import (
    CorruptCollection,
    canonical_dumps,
    get_path,
    is_scalar,
    parse_document_line,
    scalar_key,
)
from coldflow.docstore.pipeline import AggregationPipeline, parse_pipeline

log = logging.getLogger(__name__)


class LockHeld(Exception):
    """Another live writer process holds the store's lock file."""


class DuplicateId(Exception):
    """An _id in the batch collides with the collection or the batch itself."""


class NotFound(Exception):
    """No document/model with the requested id."""


class ReadOnlyStore(Exception):
    """Write attempted through a read-only handle."""


_LOCK_POLL_S = 0.05


class _ProcessLockRegistry:
    """Per-process bookkeeping that makes the writer lock reentrant.

    Maps canonical store path -> [refcount, append_mutex]. The append mutex
    is shared by every writer handle of this process so concurrent
    insert_many calls append whole lines, never interleaved fragments.
    """

    def __init__(self):
        self._guard = threading.Lock()
        self._held: dict[str, list] = {}

    def acquire(self, store_dir: str, lock_path: str, wait_s: float) -> threading.Lock:
        deadline = time.monotonic() + wait_s
        while True:
            with self._guard:
                state = self._held.get(store_dir)
                if state is not None:
                    state[0] += 1
                    return state[1]
                if self._try_create(lock_path):
                    mutex = threading.Lock()
                    self._held[store_dir] = [1, mutex]
                    return mutex
            if time.monotonic() >= deadline:
                raise LockHeld(f"writer lock busy: {lock_path}")
            time.sleep(_LOCK_POLL_S)

    def release(self, store_dir: str, lock_path: str):
        with self._guard:
            state = self._held.get(store_dir)
            if state is None:
                return
            state[0] -= 1
            if state[0] <= 0:
                del self._held[store_dir]
                try:
                    os.unlink(lock_path)
                except FileNotFoundError:
                    pass

    def _try_create(self, lock_path: str) -> bool:
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            if self._is_stale(lock_path):
                try:
                    os.unlink(lock_path)
                except FileNotFoundError:
                    pass
                return self._try_create(lock_path)
            return False
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return True

    @staticmethod
    def _is_stale(lock_path: str) -> bool:
        try:
            with open(lock_path) as fh:
                pid = int(fh.read().strip())
        except (OSError, ValueError):
            return True
        if pid == os.getpid():
            # Not in the registry yet claims our pid: leftover from a
            # previous process with a recycled pid, or a crashed run.
            return True
        try:
            os.kill(pid, 0)
        except ProcessLookupError:
            return True
        except PermissionError:
            return False
        return False


_REGISTRY = _ProcessLockRegistry()


class _HashIndex:
    """Equality index over one dotted field path.

    Buckets scalar values (via scalar_key) to insertion-order position
    lists. Documents whose path is missing or non-scalar are not bucketed;
    a scalar equality can never match them, so lookups stay exact.
    """

    def __init__(self, field_path: str):
        self.field_path = field_path
        self.buckets: dict[tuple, list[int]] = {}

    def add(self, position: int, doc: dict):
        found, value = get_path(doc, self.field_path)
        if found and is_scalar(value):
            self.buckets.setdefault(scalar_key(value), []).append(position)

    def positions_for(self, value) -> list[int]:
        if not is_scalar(value):
            return []
        return self.buckets.get(scalar_key(value), [])


class _Collection:
    def __init__(self, name: str):
        self.name = name
        self.docs: list[dict] = []
        self.ids: set[str] = set()
        self.by_id: dict[str, int] = {}
        self.indexes: dict[str, _HashIndex] = {}

    def append(self, doc: dict):
        position = len(self.docs)
        self.docs.append(doc)
        self.ids.add(doc["_id"])
        self.by_id[doc["_id"]] = position
        for index in self.indexes.values():
            index.add(position, doc)


class DocumentStore:
    """Handle over one store directory. Use :func:`open_store`."""

    def __init__(self, path: str, read_only: bool, wait_for_lock_s: float):
        self.path = os.path.abspath(path)
        self.read_only = read_only
        self._closed = False
        self._state_lock = threading.RLock()
        self._append_mutex = None
        os.makedirs(self.path, exist_ok=True)
        if not read_only:
            self._append_mutex = _REGISTRY.acquire(
                self.path, os.path.join(self.path, ".lock"), wait_for_lock_s
            )
        try:
            self._collections = self._load_all()
        except Exception:
            if not read_only:
                _REGISTRY.release(self.path, os.path.join(self.path, ".lock"))
            raise

    # ------------------------------------------------------------ lifecycle

    def close(self):
        with self._state_lock:
            if self._closed:
                return
            self._closed = True
        if not self.read_only:
            _REGISTRY.release(self.path, os.path.join(self.path, ".lock"))

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    # -------------------------------------------------------------- loading

    def _load_all(self) -> dict[str, _Collection]:
        collections = {}
        for entry in sorted(os.listdir(self.path)):
            if not entry.endswith(".ndjson"):
                continue
            name = entry[: -len(".ndjson")]
            collections[name] = self._load_collection(name)
        return collections

    def _load_collection(self, name: str) -> _Collection:
        coll = _Collection(name)
        file_path = self._file_for(name)
        with open(file_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                doc = parse_document_line(line, file_path, line_no)
                if "_id" not in doc:
                    raise CorruptCollection(file_path, line_no, "document lacks _id")
                if doc["_id"] in coll.ids:
                    raise CorruptCollection(
                        file_path, line_no, f"duplicate _id {doc['_id']!r}"
                    )
                coll.append(doc)
        return coll

    def _file_for(self, name: str) -> str:
        if not name or "/" in name or "\\" in name or name.startswith("."):
            raise ValueError(f"bad collection name {name!r}")
        return os.path.join(self.path, f"{name}.ndjson")

    # ------------------------------------------------------------------ api

    def collection_names(self) -> list[str]:
        with self._state_lock:
            return sorted(self._collections)

    def count(self, collection: str) -> int:
        with self._state_lock:
            coll = self._collections.get(collection)
            return len(coll.docs) if coll else 0

    def insert_many(self, collection: str, docs: list[dict]) -> list[str]:
        """Insert a batch atomically; returns the assigned ids.

        Validates the whole batch first (shape, canonical serializability,
        _id uniqueness against both the collection and the batch); only then
        are lines appended and flushed, so a failed call inserts nothing.
        Missing _id fields are assigned fresh unique ids.
        """
        if self.read_only:
            raise ReadOnlyStore("insert_many on a read-only handle")
        prepared = []
        with self._state_lock:
            coll = self._collections.get(collection)
            existing = set(coll.ids) if coll else set()
            self._file_for(collection)
            for doc in docs:
                if not isinstance(doc, dict):
                    raise TypeError("documents must be JSON objects")
                doc = dict(doc)
                if "_id" not in doc:
                    doc["_id"] = uuid.uuid4().hex
                if not isinstance(doc["_id"], str):
                    raise TypeError("_id must be a string")
                if doc["_id"] in existing:
                    raise DuplicateId(f"{collection}: _id {doc['_id']!r} already present")
                existing.add(doc["_id"])
                prepared.append((doc, canonical_dumps(doc)))

            payload = "".join(line + "\n" for _, line in prepared)
            with self._append_mutex:
                with open(self._file_for(collection), "a", encoding="utf-8") as fh:
                    fh.write(payload)
                    fh.flush()
                    os.fsync(fh.fileno())
            if coll is None:
                coll = _Collection(collection)
                self._collections[collection] = coll
            for doc, _ in prepared:
                coll.append(doc)
        return [doc["_id"] for doc, _ in prepared]

    def get(self, collection: str, doc_id: str) -> dict:
        with self._state_lock:
            coll = self._collections.get(collection)
            if coll is None or doc_id not in coll.by_id:
                raise NotFound(f"{collection}/{doc_id}")
            return dict(coll.docs[coll.by_id[doc_id]])

    def create_index(self, collection: str, field_path: str):
        """Declare a hash index over a dotted path; built immediately.

        Indexes are runtime structures on this handle (files stay the
        canonical persistence) and are kept consistent by every insert.
        """
        with self._state_lock:
            coll = self._collections.get(collection)
            if coll is None:
                coll = _Collection(collection)
                self._collections[collection] = coll
            if field_path in coll.indexes:
                return
            index = _HashIndex(field_path)
            for position, doc in enumerate(coll.docs):
                index.add(position, doc)
            coll.indexes[field_path] = index

    def index_fields(self, collection: str) -> list[str]:
        with self._state_lock:
            coll = self._collections.get(collection)
            return sorted(coll.indexes) if coll else []

    def aggregate(self, collection: str, pipeline) -> list[dict]:
        """Run an aggregation pipeline (list of stage dicts or a parsed
        AggregationPipeline) over one collection.

        When the first stage is a $match with an equality condition on an
        indexed path, candidates come from the index instead of a full scan;
        the complete predicate is still applied, so results are identical
        either way.
        """
        if not isinstance(pipeline, AggregationPipeline):
            pipeline = parse_pipeline(pipeline)
        with self._state_lock:
            coll = self._collections.get(collection)
            docs = list(coll.docs) if coll else []
            if coll and pipeline.stages:
                docs = self._narrow_by_index(coll, pipeline, docs)
        return pipeline.run(docs)

    @staticmethod
    def _narrow_by_index(coll: _Collection, pipeline: AggregationPipeline, docs):
        name, body = pipeline.stages[0]
        if name != "$match":
            return docs
        for field, cond in body.items():
            if field not in coll.indexes:
                continue
            if isinstance(cond, dict) and any(k.startswith("$") for k in cond):
                if "$eq" not in cond:
                    continue
                literal = cond["$eq"]
            else:
                literal = cond
            if not is_scalar(literal):
                continue
            positions = coll.indexes[field].positions_for(literal)
            return [coll.docs[p] for p in positions]
        return docs

    def find_all(self, collection: str) -> list[dict]:
        return self.aggregate(collection, [])

    # Model blob storage lives in blobs.py; bound here for ergonomics.

    def put_model(self, meta: dict, weights: bytes) -> str:
        from coldflow.docstore import blobs

        return blobs.put_model(self, meta, weights)

    def get_model(self, model_id: str) -> tuple[dict, bytes]:
        from coldflow.docstore import blobs

        return blobs.get_model(self, model_id)


def open_store(path: str, read_only: bool = False, wait_for_lock_s: float = 0.0) -> DocumentStore:
    """Open (creating if needed) a store directory.

    Writers acquire the advisory lock file, failing with LockHeld if another
    live process holds it and it stays busy past ``wait_for_lock_s``.
    Readers never touch the lock.
    """
    return DocumentStore(path, read_only=read_only, wait_for_lock_s=wait_for_lock_s)
