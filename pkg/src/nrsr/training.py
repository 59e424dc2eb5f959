"""Patch extraction, augmentation and the two-phase training loop.

Phase 1 fits the LFCR alone (loss between its output and the
reference); phase 2 freezes the LFCR and fits the VDSR on the combined
output at a tenfold reduced initial learning rate. The joint
fine-tuning phase is intentionally absent.

Shift augmentation is realized by cropping the reference at small even
offsets before patch extraction. The sensor mask stays anchored to the
crop origin, so the same content meets the mask in up to 16 different
alignments while every extracted patch keeps mask phase (0, 0).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .lfcr import LfcrModel
from .optim import AdamState, adam_step
from .tensor import Tensor, mse_loss
from .vdsr import VdsrModel

DEFAULT_SHIFTS = tuple((dy, dx) for dy in (0, 2, 4, 6) for dx in (0, 2, 4, 6))

# Shift sets for reduced augmentation factors (the full factor-16 set is
# the {0,2,4,6}^2 grid; smaller factors use even sub-grids / diagonals).
SHIFT_FACTORS: dict[int, tuple[tuple[int, int], ...]] = {
    1: ((0, 0),),
    2: ((0, 0), (4, 4)),
    4: tuple((dy, dx) for dy in (0, 4) for dx in (0, 4)),
    8: tuple((dy, dx) for dy in (0, 2, 4, 6) for dx in (0, 2, 4, 6) if (dy + dx) % 4 == 0),
    16: DEFAULT_SHIFTS,
}


class ConfigError(ValueError):
    """Raised for invalid or unknown training-config entries."""


class NonFiniteLossError(RuntimeError):
    """Raised when the training loss turns NaN/inf; carries the last good checkpoint."""

    def __init__(self, step: int, last_checkpoint: str | None):
        msg = f"non-finite loss at step {step}"
        if last_checkpoint:
            msg += f"; last good checkpoint: {last_checkpoint}"
        super().__init__(msg)
        self.step = step
        self.last_checkpoint = last_checkpoint


@dataclass(frozen=True)
class TrainConfig:
    patch_size: int = 48
    patch_stride: int = 40
    shift_set: tuple[tuple[int, int], ...] = DEFAULT_SHIFTS
    flips_rotations: bool = True
    epochs: int = 100
    initial_lr: float = 1e-4
    lr_decay_every: int = 10
    lr_decay_factor: float = 10.0
    lr_floor: float = 1e-8
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.patch_size % 8 or self.patch_stride % 8:
            raise ConfigError("patch_size and patch_stride must be multiples of 8")
        if self.patch_size < 8 or self.patch_stride < 8:
            raise ConfigError("patch_size and patch_stride must be >= 8")
        for dy, dx in self.shift_set:
            if dy % 2 or dx % 2 or dy < 0 or dx < 0:
                raise ConfigError(f"shifts must be non-negative and even, got ({dy},{dx})")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.initial_lr <= 0 or self.lr_decay_every < 1 or self.lr_decay_factor <= 0:
            raise ConfigError("learning-rate schedule values must be positive")


_CONFIG_FIELDS = {
    "patch_size": int, "patch_stride": int, "epochs": int, "lr_decay_every": int,
    "batch_size": int, "seed": int, "initial_lr": float, "lr_decay_factor": float,
    "lr_floor": float, "flips_rotations": None, "shift_set": None,
}


def save_config(config: TrainConfig, path: str | Path) -> None:
    lines = []
    for name in _CONFIG_FIELDS:
        value = getattr(config, name)
        if name == "shift_set":
            value = ",".join(f"{dy}:{dx}" for dy, dx in value)
        elif name == "flips_rotations":
            value = "true" if value else "false"
        lines.append(f"{name}={value}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_config(path: str | Path) -> TrainConfig:
    kwargs = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got '{line}'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        if key == "shift_set":
            try:
                pairs = tuple(tuple(int(p) for p in item.split(":")) for item in value.split(","))
                kwargs[key] = tuple((dy, dx) for dy, dx in pairs)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad shift_set '{value}'") from exc
        elif key == "flips_rotations":
            if value not in ("true", "false"):
                raise ConfigError(f"{path}:{lineno}: flips_rotations must be true/false")
            kwargs[key] = value == "true"
        else:
            try:
                kwargs[key] = _CONFIG_FIELDS[key](value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: '{value}'") from exc
    return TrainConfig(**kwargs)


@dataclass(frozen=True)
class PatchInfo:
    image_id: str
    offset: tuple[int, int]
    shift: tuple[int, int] = (0, 0)
    transform: int = 0  # dihedral tag: 0..3 rotations, 4..7 flipped rotations


@dataclass
class PatchSet:
    patches: np.ndarray  # (N, patch_size, patch_size) float32
    provenance: list[PatchInfo] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.patches)


def extract_patches(images: list[np.ndarray], config: TrainConfig,
                    image_ids: list[str] | None = None,
                    shift: tuple[int, int] = (0, 0)) -> PatchSet:
    """Patches at stride-multiple offsets; undersized images are skipped with a warning."""
    ids = image_ids or [f"image{i:03d}" for i in range(len(images))]
    out = []
    prov = []
    ps, stride = config.patch_size, config.patch_stride
    for img, image_id in zip(images, ids):
        img = np.asarray(img, dtype=np.float32)
        h, w = img.shape
        if h < ps or w < ps:
            warnings.warn(f"{image_id}: {h}x{w} smaller than patch size {ps}, skipped")
            continue
        for y in range(0, h - ps + 1, stride):
            for x in range(0, w - ps + 1, stride):
                out.append(img[y : y + ps, x : x + ps])
                prov.append(PatchInfo(image_id=image_id, offset=(y, x), shift=shift))
    patches = np.stack(out) if out else np.zeros((0, ps, ps), dtype=np.float32)
    return PatchSet(patches=patches, provenance=prov)


def augment_flip_rotate(patch: np.ndarray) -> list[np.ndarray]:
    """The 8 dihedral-group images of a square patch (duplicates kept)."""
    patch = np.asarray(patch)
    if patch.shape[0] != patch.shape[1]:
        raise ConfigError(f"flip/rotate augmentation needs square patches, got {patch.shape}")
    rots = [np.rot90(patch, k) for k in range(4)]
    return rots + [np.fliplr(r) for r in rots]


def augment_shift(image: np.ndarray, shift_set) -> list[np.ndarray]:
    """Crop at each (dy, dx), trimming so dims stay multiples of 8."""
    image = np.asarray(image)
    h, w = image.shape
    out = []
    for dy, dx in shift_set:
        if dy >= h or dx >= w:
            raise ConfigError(f"shift ({dy},{dx}) exceeds image dims {h}x{w}")
        ch, cw = (h - dy) // 8 * 8, (w - dx) // 8 * 8
        out.append(image[dy : dy + ch, dx : dx + cw])
    return out


def build_patch_set(images: list[np.ndarray], config: TrainConfig,
                    image_ids: list[str] | None = None) -> PatchSet:
    """Full data pipeline: shift crops, patch extraction, then flip/rotate."""
    ids = image_ids or [f"image{i:03d}" for i in range(len(images))]
    patches = []
    prov = []
    for img, image_id in zip(images, ids):
        for shift, shifted in zip(config.shift_set, augment_shift(img, config.shift_set)):
            base = extract_patches([shifted], config, image_ids=[image_id], shift=shift)
            for p, info in zip(base.patches, base.provenance):
                if config.flips_rotations:
                    for tag, aug in enumerate(augment_flip_rotate(p)):
                        patches.append(np.ascontiguousarray(aug))
                        prov.append(replace(info, transform=tag))
                else:
                    patches.append(p)
                    prov.append(info)
    ps = config.patch_size
    stacked = np.stack(patches) if patches else np.zeros((0, ps, ps), dtype=np.float32)
    return PatchSet(patches=stacked, provenance=prov)


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """lr = max(initial * factor^-floor((epoch-1)/every), floor), epochs counted from 1."""
    if epoch < 1:
        raise ConfigError(f"epoch must be >= 1, got {epoch}")
    decays = (epoch - 1) // config.lr_decay_every
    return max(config.initial_lr * config.lr_decay_factor ** (-decays), config.lr_floor)


@dataclass(frozen=True)
class LogRow:
    epoch: int
    step: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    rows: list[LogRow]
    epoch_losses: list[float]
    checkpoints: list[str] = field(default_factory=list)


def write_log_csv(path: str | Path, rows: list[LogRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "lr", "loss"])
        for row in rows:
            writer.writerow([row.epoch, row.step, repr(row.lr), repr(row.loss)])


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def _run_phase(step_fn, patches: np.ndarray, config: TrainConfig, lr_scale: float,
               save_fn, start_epoch: int, state: AdamState) -> TrainResult:
    if len(patches) == 0:
        raise ConfigError("empty patch set")
    rng = np.random.default_rng(config.seed)
    rows: list[LogRow] = []
    epoch_losses: list[float] = []
    saved: list[str] = []
    for epoch in range(1, config.epochs + 1):
        lr = lr_schedule(epoch, config) * lr_scale
        if epoch <= start_epoch:
            # keep the data-order stream aligned when resuming
            for _ in _epoch_batches(len(patches), config.batch_size, rng):
                pass
            continue
        losses = []
        for batch_idx in _epoch_batches(len(patches), config.batch_size, rng):
            loss = step_fn(patches[batch_idx], lr)
            if not np.isfinite(loss):
                raise NonFiniteLossError(state.step, saved[-1] if saved else None)
            rows.append(LogRow(epoch=epoch, step=state.step, lr=lr, loss=loss))
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
        if save_fn is not None:
            saved.append(save_fn(epoch))
    return TrainResult(rows=rows, epoch_losses=epoch_losses, checkpoints=saved)


def train_lfcr(model: LfcrModel, patch_set: PatchSet, config: TrainConfig,
               checkpoint_dir: str | Path | None = None,
               state: AdamState | None = None, start_epoch: int = 0) -> TrainResult:
    """Phase 1: fit the LFCR to reproduce reference patches from its own sampling."""
    params = model.named_parameters()
    state = state or AdamState.for_params(params)

    def step(batch: np.ndarray, lr: float) -> float:
        x = Tensor(batch[:, None])
        pred = model.forward_t(x)
        loss = mse_loss(pred, Tensor(batch[:, None]))
        lv = float(loss.data.reshape(()))
        if not np.isfinite(lv):
            return lv  # the phase loop aborts with the last good checkpoint
        for _, p in params:
            p.zero_grad()
        loss.backward()
        adam_step(params, state, lr)
        return lv

    save_fn = None
    if checkpoint_dir is not None:
        ckdir = Path(checkpoint_dir)
        ckdir.mkdir(parents=True, exist_ok=True)

        def save_fn(epoch: int) -> str:
            path = ckdir / f"lfcr-epoch{epoch:04d}.nrsr"
            save_checkpoint(path, lfcr=model, adam=state, epoch=epoch, phase="lfcr")
            return str(path)

    return _run_phase(step, patch_set.patches, config, 1.0, save_fn, start_epoch, state)


def train_vdsr(lfcr_model: LfcrModel, vdsr_model: VdsrModel, patch_set: PatchSet,
               config: TrainConfig, checkpoint_dir: str | Path | None = None,
               state: AdamState | None = None, start_epoch: int = 0) -> TrainResult:
    """Phase 2: freeze the LFCR, fit the VDSR on its outputs at a tenth of the base lr."""
    params = vdsr_model.named_parameters()
    state = state or AdamState.for_params(params)

    def step(batch: np.ndarray, lr: float) -> float:
        x = batch[:, None]
        f_hat = lfcr_model.forward_t(Tensor(x)).data  # frozen: plain values, no graph
        _, f_tilde = vdsr_model.forward_t(Tensor(f_hat))
        loss = mse_loss(f_tilde, Tensor(x))
        lv = float(loss.data.reshape(()))
        if not np.isfinite(lv):
            return lv
        for _, p in params:
            p.zero_grad()
        loss.backward()
        adam_step(params, state, lr)
        return lv

    save_fn = None
    if checkpoint_dir is not None:
        ckdir = Path(checkpoint_dir)
        ckdir.mkdir(parents=True, exist_ok=True)

        def save_fn(epoch: int) -> str:
            path = ckdir / f"vdsr-epoch{epoch:04d}.nrsr"
            save_checkpoint(path, lfcr=lfcr_model, vdsr=vdsr_model, adam=state,
                            epoch=epoch, phase="vdsr")
            return str(path)

    return _run_phase(step, patch_set.patches, config, 0.1, save_fn, start_epoch, state)
