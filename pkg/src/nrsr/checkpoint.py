"""Model checkpoint container.

Binary layout, little endian throughout::

    magic   5 bytes  b"NRSR1"
    count   uint32   number of records
    record  repeated:
        name_len  uint16
        name      utf-8 bytes
        ndim      uint8
        dims      uint32 * ndim
        payload   float32 * prod(dims)

Network parameters use their layer names ("lfcr/fc00/weights",
"vdsr/conv01/bias", ...); the fixed vectorizing kernel is stored as
"lfcr/vec/weights". Sensor metadata rides along as scalar or small
records under "meta/" (sensor kind code, mask pattern, mask seed), and
optimizer state saved mid-training uses "opt/step" plus
"opt/<param>/m" and "opt/<param>/v" records.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lfcr import DECONV_IN, HIDDEN_CHANNELS, NUM_FC_LAYERS, FcBlock, LfcrModel
from .masks import LOW_RESOLUTION, QUARTER, THREE_QUARTER, SamplingMask
from .optim import AdamState
from .tensor import Tensor
from .vdsr import ConvLayer, VdsrModel

MAGIC = b"NRSR1"

SENSOR_CODES = {QUARTER: 0, THREE_QUARTER: 1, LOW_RESOLUTION: 2}
SENSOR_FROM_CODE = {v: k for k, v in SENSOR_CODES.items()}


class CheckpointError(ValueError):
    """Raised for malformed checkpoint files or incompatible contents."""


def write_records(path: str | Path, records: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(records)))
        for name, arr in records.items():
            a = np.asarray(arr, dtype="<f4")  # tobytes() serializes C-order
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", a.ndim))
            for d in a.shape:
                fh.write(struct.pack("<I", d))
            fh.write(a.tobytes())


def read_records(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not an NRSR1 checkpoint")
    off = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = data[off : off + n]
        off += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    records: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        size = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims).copy()
        records[name] = arr
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return records


@dataclass
class Checkpoint:
    """Decoded checkpoint contents; either model may be absent."""

    sensor_kind: str | None = None
    mask: SamplingMask | None = None
    lfcr: LfcrModel | None = None
    vdsr: VdsrModel | None = None
    adam: AdamState | None = None
    epoch: int = 0
    phase: str | None = None


def _meta_records(sensor_kind: str | None, mask: SamplingMask | None,
                  epoch: int, phase: str | None) -> dict[str, np.ndarray]:
    recs: dict[str, np.ndarray] = {}
    if sensor_kind is not None:
        recs["meta/sensor_kind"] = np.float32(SENSOR_CODES[sensor_kind])
    if mask is not None:
        recs["meta/mask_pattern"] = mask.pattern.astype(np.float32)
        seed = mask.seed if isinstance(mask.seed, int) else -1
        recs["meta/mask_seed"] = np.float32(seed)
    if epoch:
        recs["meta/epoch"] = np.float32(epoch)
    if phase is not None:
        recs["meta/phase"] = np.float32({"lfcr": 0, "vdsr": 1}[phase])
    return recs


def save_checkpoint(path: str | Path, lfcr: LfcrModel | None = None,
                    vdsr: VdsrModel | None = None, adam: AdamState | None = None,
                    epoch: int = 0, phase: str | None = None) -> None:
    records: dict[str, np.ndarray] = {}
    sensor_kind = None
    mask = None
    if lfcr is not None:
        sensor_kind = lfcr.sensor_kind
        mask = lfcr.mask
        records["lfcr/vec/weights"] = lfcr.vec_kernel
        for name, p in lfcr.named_parameters():
            records[name] = p.data
    if vdsr is not None:
        for name, p in vdsr.named_parameters():
            records[name] = p.data
    records.update(_meta_records(sensor_kind, mask, epoch, phase))
    if adam is not None:
        records["opt/step"] = np.float32(adam.step)
        for name, m in adam.m.items():
            records[f"opt/{name}/m"] = m
            records[f"opt/{name}/v"] = adam.v[name]
    write_records(path, records)


def _rebuild_lfcr(records: dict[str, np.ndarray], sensor_kind: str,
                  mask: SamplingMask | None) -> LfcrModel:
    from .sensors import VEC_SPEC

    try:
        vec = records["lfcr/vec/weights"]
        blocks = []
        for i in range(NUM_FC_LAYERS):
            prefix = f"lfcr/fc{i:02d}"
            blocks.append(FcBlock(
                weights=Tensor(records[f"{prefix}/weights"], requires_grad=True),
                bias=Tensor(records[f"{prefix}/bias"], requires_grad=True),
                slopes=Tensor(records[f"{prefix}/slopes"], requires_grad=True),
            ))
        model = LfcrModel(
            sensor_kind=sensor_kind, mask=mask, vec_kernel=vec, vec_spec=VEC_SPEC,
            blocks=blocks,
            deconv_weights=Tensor(records["lfcr/deconv/weights"], requires_grad=True),
            deconv_bias=Tensor(records["lfcr/deconv/bias"], requires_grad=True),
        )
    except KeyError as exc:
        raise CheckpointError(f"missing LFCR record {exc}") from exc
    if model.blocks[0].weights.shape != (HIDDEN_CHANNELS, 64, 1, 1):
        raise CheckpointError("unexpected LFCR layer shapes")
    if model.deconv_weights.shape[0] != DECONV_IN:
        raise CheckpointError("unexpected LFCR deconv shape")
    return model


def _rebuild_vdsr(records: dict[str, np.ndarray]) -> VdsrModel:
    layers = []
    i = 1
    while f"vdsr/conv{i:02d}/weights" in records:
        prefix = f"vdsr/conv{i:02d}"
        slopes = records.get(f"{prefix}/slopes")
        layers.append(ConvLayer(
            weights=Tensor(records[f"{prefix}/weights"], requires_grad=True),
            bias=Tensor(records[f"{prefix}/bias"], requires_grad=True),
            slopes=None if slopes is None else Tensor(slopes, requires_grad=True),
        ))
        i += 1
    if not layers:
        raise CheckpointError("no VDSR records present")
    return VdsrModel(layers=layers)


def load_checkpoint(path: str | Path) -> Checkpoint:
    records = read_records(path)
    ck = Checkpoint()
    if "meta/sensor_kind" in records:
        ck.sensor_kind = SENSOR_FROM_CODE[int(records["meta/sensor_kind"])]
    if "meta/mask_pattern" in records and ck.sensor_kind != LOW_RESOLUTION:
        seed = int(records.get("meta/mask_seed", np.float32(-1)))
        ck.mask = SamplingMask(
            kind=ck.sensor_kind,
            pattern=records["meta/mask_pattern"].astype(np.int64),
            seed=seed if seed >= 0 else "external",
        )
    if "meta/epoch" in records:
        ck.epoch = int(records["meta/epoch"])
    if "meta/phase" in records:
        ck.phase = {0: "lfcr", 1: "vdsr"}[int(records["meta/phase"])]
    if "lfcr/vec/weights" in records:
        ck.lfcr = _rebuild_lfcr(records, ck.sensor_kind, ck.mask)
    if "vdsr/conv01/weights" in records:
        ck.vdsr = _rebuild_vdsr(records)
    if "opt/step" in records:
        st = AdamState(step=int(records["opt/step"]))
        for name, arr in records.items():
            if name.startswith("opt/") and name.endswith("/m"):
                pname = name[len("opt/") : -len("/m")]
                st.m[pname] = arr
                st.v[pname] = records[f"opt/{pname}/v"]
        ck.adam = st
    return ck
