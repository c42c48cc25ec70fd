"""Binary transition datasets.

Layout (little endian)::

    b"SWRL1" | u32 header length | header JSON (utf-8)
    repeated: u32 payload length | payload of float64 values
    b"END1"  | u64 record count | sha256 over all payloads (32 bytes)

A payload is ``obs, a_K, a_R, r_K, r_R, next_obs, done, cause code``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ArtifactMismatch
from .replay import Transition

MAGIC = b"SWRL1"
TRAILER = b"END1"
SCHEMA_VERSION = 1
CAUSE_CODES = {"": 0, "joint_limit": 1, "grasp_loss": 2, "timeout": 3}
_CAUSE_NAMES = {v: k for k, v in CAUSE_CODES.items()}


def _payload(t: Transition) -> bytes:
    vals = np.concatenate([np.asarray(t.obs, dtype=float).ravel(), [float(t.a_K)],
                           np.asarray(t.a_R, dtype=float).ravel(), [t.r_K, t.r_R],
                           np.asarray(t.next_obs, dtype=float).ravel(),
                           [float(t.done), float(CAUSE_CODES[t.cause])]])
    return vals.astype("<f8").tobytes()


def write_dataset(path: str | Path, transitions: list[Transition], obs_dim: int, n_redundant: int,
                  meta: dict | None = None) -> str:
    """Write ``transitions``; returns the hex digest stored in the trailer."""
    header = {"schema_version": SCHEMA_VERSION, "obs_dim": int(obs_dim), "n_redundant": int(n_redundant),
              "fields": ["obs", "a_K", "a_R", "r_K", "r_R", "next_obs", "done", "cause"]}
    header.update(meta or {})
    hbytes = json.dumps(header, sort_keys=True).encode()
    digest = hashlib.sha256()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for t in transitions:
            if np.asarray(t.obs).size != obs_dim or np.asarray(t.a_R).size != n_redundant:
                raise ValueError("transition does not match the dataset schema")
            p = _payload(t)
            digest.update(p)
            fh.write(struct.pack("<I", len(p)))
            fh.write(p)
        fh.write(TRAILER)
        fh.write(struct.pack("<Q", len(transitions)))
        fh.write(digest.digest())
    return digest.hexdigest()


def read_dataset(path: str | Path) -> tuple[dict, list[Transition], str]:
    """Returns ``(header, transitions, sha256 hex)``; corrupt files raise ArtifactMismatch."""
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise ArtifactMismatch(f"dataset not found: {path}") from None
    if data[:5] != MAGIC:
        raise ArtifactMismatch("not a transition dataset (bad magic)")
    (hlen,) = struct.unpack_from("<I", data, 5)
    header = json.loads(data[9:9 + hlen].decode())
    if header.get("schema_version") != SCHEMA_VERSION:
        raise ArtifactMismatch(f"unsupported dataset schema {header.get('schema_version')}")
    d, n = header["obs_dim"], header["n_redundant"]
    expected = 2 * d + n + 5
    pos = 9 + hlen
    digest = hashlib.sha256()
    out = []
    while data[pos:pos + 4] != TRAILER:
        if pos + 4 > len(data):
            raise ArtifactMismatch("dataset truncated")
        (plen,) = struct.unpack_from("<I", data, pos)
        pos += 4
        p = data[pos:pos + plen]
        pos += plen
        if plen != 8 * expected or len(p) != plen:
            raise ArtifactMismatch("record length does not match the schema")
        digest.update(p)
        v = np.frombuffer(p, dtype="<f8").astype(float)
        out.append(Transition(obs=v[:d].copy(), a_K=int(v[d]), a_R=v[d + 1:d + 1 + n].copy(),
                              r_K=float(v[d + 1 + n]), r_R=float(v[d + 2 + n]),
                              next_obs=v[d + 3 + n:2 * d + 3 + n].copy(), done=bool(v[-2]),
                              cause=_CAUSE_NAMES[int(v[-1])]))
    count, = struct.unpack_from("<Q", data, pos + 4)
    stored = data[pos + 12:pos + 44]
    if count != len(out) or stored != digest.digest():
        raise ArtifactMismatch("dataset checksum or record count mismatch")
    return header, out, digest.hexdigest()
