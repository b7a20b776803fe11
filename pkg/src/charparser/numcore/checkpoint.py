"""Parameter archives.

Layout: an uncompressed ``.npz`` (zip of ``.npy`` members).  Each member is
named by a parameter's hierarchical name and stores its shape and raw
little-endian values (``<f4`` or ``<f8``).  One extra member, ``__meta__``,
is a ``uint8`` array holding UTF-8 JSON: ``{"precision": "float32",
"config_hash": "...", "names": [...], ...}``.  Nothing is pickled, so
loading never executes code, and a save/load cycle at the stored precision
is bit-exact.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

META_KEY = "__meta__"


def config_hash(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def save_checkpoint(path, params, meta=None):
    """Write ``params`` (iterable of Parameters, or a name->array mapping)."""
    if isinstance(params, dict):
        arrays = dict(params)
    else:
        arrays = {p.name: p.value for p in params}
    if META_KEY in arrays:
        raise ValueError(f"parameter name {META_KEY!r} is reserved")
    dtypes = {np.asarray(a).dtype for a in arrays.values()}
    precision = dtypes.pop().name if len(dtypes) == 1 else "mixed"
    out = {}
    for name, a in arrays.items():
        a = np.asarray(a)
        out[name] = a.astype(a.dtype.newbyteorder("<"), copy=False)
    record = {"precision": precision, "names": sorted(arrays)}
    record.update(meta or {})
    out[META_KEY] = np.frombuffer(json.dumps(record, ensure_ascii=False).encode("utf-8"),
                                  dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **out)


def load_checkpoint(path):
    """Return ``(arrays, meta)``: name -> ndarray, and the metadata record."""
    with np.load(path, allow_pickle=False) as archive:
        arrays = {name: archive[name] for name in archive.files if name != META_KEY}
        meta = json.loads(archive[META_KEY].tobytes().decode("utf-8"))
    return arrays, meta


def assign(params, arrays, strict=True):
    """Copy archived arrays into Parameters with matching names."""
    params = list(params)
    names = {p.name for p in params}
    if strict:
        missing = names - set(arrays)
        extra = set(arrays) - names
        if missing or extra:
            raise KeyError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for p in params:
        if p.name in arrays:
            a = arrays[p.name]
            if a.shape != p.value.shape:
                raise ValueError(f"{p.name}: checkpoint shape {a.shape} != parameter shape {p.value.shape}")
            p.value[...] = a
