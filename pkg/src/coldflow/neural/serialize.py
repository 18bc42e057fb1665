"""Self-describing binary weight format (nn-weights/1).

Layout: a magic line, an 8-byte little-endian header length, a canonical
JSON header, then the arrays as raw little-endian float64 in C order, in
the header's entry order. Canonical JSON plus fixed byte order makes
serialization a pure function of the artifact: equal artifacts produce
equal bytes on any platform.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from coldflow.docstore.documents import canonical_dumps
from coldflow.neural.network import NetworkSpec

MAGIC = b"nn-weights/1\n"
_STAT_PREFIX = "stat:"


@dataclass
class ModelArtifact:
    """A trained model plus everything needed to run it on raw inputs.

    Feature (and, for regression, target) standardization happens inside
    predict using the stats stored here, so callers never see z-scores.
    """

    spec: NetworkSpec
    params: dict
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float = 0.0
    target_std: float = 1.0
    classes: tuple | None = None
    meta: dict = field(default_factory=dict)


def to_bytes(artifact: ModelArtifact) -> bytes:
    """Serialize deterministically; see the module docstring for layout."""
    arrays = dict(sorted(artifact.params.items()))
    for name in arrays:
        if name.startswith(_STAT_PREFIX):
            raise ValueError(f"parameter name {name!r} collides with stat entries")
    arrays[_STAT_PREFIX + "feature_mean"] = np.asarray(artifact.feature_mean, dtype=float)
    arrays[_STAT_PREFIX + "feature_std"] = np.asarray(artifact.feature_std, dtype=float)
    entries = [{"name": name, "shape": list(value.shape)} for name, value in arrays.items()]
    header = {
        "format": "nn-weights/1",
        "spec": asdict(artifact.spec),
        "target_mean": float(artifact.target_mean),
        "target_std": float(artifact.target_std),
        "classes": list(artifact.classes) if artifact.classes is not None else None,
        "meta": artifact.meta,
        "entries": entries,
    }
    head = canonical_dumps(header).encode("utf-8")
    chunks = [MAGIC, len(head).to_bytes(8, "little"), head]
    chunks.extend(
        np.ascontiguousarray(value, dtype="<f8").tobytes() for value in arrays.values()
    )
    return b"".join(chunks)


def from_bytes(data: bytes) -> ModelArtifact:
    """Parse nn-weights/1 bytes back into an artifact, validating sizes."""
    import json

    if not data.startswith(MAGIC):
        raise ValueError("not an nn-weights/1 blob")
    offset = len(MAGIC)
    head_len = int.from_bytes(data[offset : offset + 8], "little")
    offset += 8
    header = json.loads(data[offset : offset + head_len].decode("utf-8"))
    offset += head_len

    arrays = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(data):
            raise ValueError(f"truncated blob at entry {entry['name']!r}")
        arrays[entry["name"]] = (
            np.frombuffer(data[offset : offset + nbytes], dtype="<f8")
            .reshape(shape)
            .copy()
        )
        offset += nbytes
    if offset != len(data):
        raise ValueError(f"{len(data) - offset} trailing bytes after last entry")

    feature_mean = arrays.pop(_STAT_PREFIX + "feature_mean")
    feature_std = arrays.pop(_STAT_PREFIX + "feature_std")
    classes = header["classes"]
    return ModelArtifact(
        spec=NetworkSpec(**header["spec"]),
        params=arrays,
        feature_mean=feature_mean,
        feature_std=feature_std,
        target_mean=header["target_mean"],
        target_std=header["target_std"],
        classes=tuple(classes) if classes is not None else None,
        meta=header["meta"],
    )
