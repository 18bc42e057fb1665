"""Embedded, file-backed document store with a MongoDB-subset query dialect.

Collections are newline-delimited JSON files inside a store directory, one
canonically serialized document per line. A single writer per store is
enforced through an advisory lock file; readers open without locking and see
whatever was flushed at open time. Aggregation pipelines use the familiar
list-of-stage-dicts syntax (``[{"$match": ...}, {"$sort": ...}]``) over an
explicitly documented subset of operators. Large binary model artifacts are
chunked into a companion collection with a manifest and checksum.
"""

from coldflow.docstore.documents import (
    canonical_dumps,
    get_path,
    json_equals,
    parse_document_line,
    CorruptCollection,
)
from coldflow.docstore.pipeline import (
    AggregationPipeline,
    BadFieldPath,
    PipelineSyntaxError,
    parse_pipeline,
)
from coldflow.docstore.store import (
    DocumentStore,
    DuplicateId,
    LockHeld,
    NotFound,
    ReadOnlyStore,
    open_store,
)
from coldflow.docstore.blobs import ChecksumMismatch, MODEL_CHUNK_BYTES

__all__ = [
    "AggregationPipeline",
    "BadFieldPath",
    "ChecksumMismatch",
    "CorruptCollection",
    "DocumentStore",
    "DuplicateId",
    "LockHeld",
    "MODEL_CHUNK_BYTES",
    "NotFound",
    "PipelineSyntaxError",
    "ReadOnlyStore",
    "canonical_dumps",
    "get_path",
    "json_equals",
    "open_store",
    "parse_document_line",
    "parse_pipeline",
]
