"""Shared helpers: synthetic image generation and independent oracles.

Oracles here are deliberately written as plain nested loops in float64,
with no code shared with the library paths they check.
"""

from __future__ import annotations

import numpy as np
import pytest

from nrsr.masks import LOW_RESOLUTION, QUARTER, THREE_QUARTER, SamplingMask


def synth_image(seed: int, h: int = 96, w: int = 96) -> np.ndarray:
    """Natural-looking grayscale test content: smooth waves plus blocky structure."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.full((h, w), 110.0)
    for _ in range(3):
        fy, fx = rng.uniform(0.05, 0.5, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(15, 45) * np.sin(fy * yy + fx * xx + phase)
    cell = int(rng.integers(6, 14))
    img += rng.uniform(10, 35) * (((yy // cell) + (xx // cell)) % 2)
    return np.clip(img, 0.0, 255.0).astype(np.float32)


def smooth_image(seed: int, h: int = 96, w: int = 96) -> np.ndarray:
    """Band-limited wave content (no block edges), for optimization-capacity checks."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.full((h, w), 120.0)
    for _ in range(4):
        fy, fx = rng.uniform(0.03, 0.25, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(20, 45) * np.sin(fy * yy + fx * xx + phase)
    return np.clip(img, 0.0, 255.0).astype(np.float32)


# ------------------------------------------------- acceptance reporting

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def synth_image_u8(seed: int, h: int = 96, w: int = 96) -> np.ndarray:
    return np.clip(np.rint(synth_image(seed, h, w)), 0, 255).astype(np.uint8)


def integer_image(seed: int, h: int, w: int) -> np.ndarray:
    """Random integer-valued float32 image (values exactly representable)."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w)).astype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- oracles


def conv2d_oracle(x: np.ndarray, w: np.ndarray, b: np.ndarray | None,
                  stride: tuple[int, int], pad: int) -> np.ndarray:
    """Nested-loop cross-correlation in float64."""
    bsz, cin, h, wdt = x.shape
    cout, _, kh, kw = w.shape
    sh, sw = stride
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // sh + 1
    ow = (wdt + 2 * pad - kw) // sw + 1
    out = np.zeros((bsz, cout, oh, ow))
    for n in range(bsz):
        for o in range(cout):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for c in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += w[o, c, u, v] * xp[n, c, i * sh + u, j * sw + v]
                    out[n, o, i, j] = acc + (b[o] if b is not None else 0.0)
    return out


def window_quadrant_oracle(mask: SamplingMask, out_i: int, out_j: int,
                           cell_r: int, cell_c: int) -> int:
    """Mask digit for support-window cell (cell_r, cell_c) at output (out_i, out_j).

    Derived from global coordinates: the window starts at HR
    (8*out_i - 4, 8*out_j - 4), so its cell (r, c) is the global cell
    (4*out_i - 2 + r, 4*out_j - 2 + c); the stored pattern tiles the
    plane with period 8 cells.
    """
    gr = 4 * out_i - 2 + cell_r
    gc = 4 * out_j - 2 + cell_c
    return int(mask.pattern[gr % 8, gc % 8])


def vectorize_oracle(f: np.ndarray, mask: SamplingMask | None, kind: str) -> np.ndarray:
    """Brute-force sliding-window gather/average, float64 nested loops."""
    h, w = f.shape
    fp = np.pad(f.astype(np.float64), 4)
    out = np.zeros((64, h // 8, w // 8))
    for i in range(h // 8):
        for j in range(w // 8):
            for r in range(8):
                for c in range(8):
                    s = 0.0
                    n = 0
                    covered = None
                    if kind != LOW_RESOLUTION:
                        covered = window_quadrant_oracle(mask, i, j, r, c)
                    for q in range(4):
                        if kind == QUARTER and q != covered:
                            continue
                        if kind == THREE_QUARTER and q == covered:
                            continue
                        y = 8 * i - 4 + 2 * r + q // 2
                        x = 8 * j - 4 + 2 * c + q % 2
                        s += fp[y + 4, x + 4]
                        n += 1
                    out[r * 8 + c, i, j] = s / n
    return out


def sample_three_quarter_oracle(f: np.ndarray, mask: SamplingMask) -> np.ndarray:
    h, w = f.shape
    out = np.zeros((h // 2, w // 2))
    for ci in range(h // 2):
        for cj in range(w // 2):
            covered = int(mask.pattern[ci % 8, cj % 8])
            s = 0.0
            for q in range(4):
                if q == covered:
                    continue
                s += float(f[2 * ci + q // 2, 2 * cj + q % 2])
            out[ci, cj] = s / 3.0
    return out


def sample_low_resolution_oracle(f: np.ndarray) -> np.ndarray:
    h, w = f.shape
    out = np.zeros((h // 2, w // 2))
    for ci in range(h // 2):
        for cj in range(w // 2):
            s = 0.0
            for q in range(4):
                s += float(f[2 * ci + q // 2, 2 * cj + q % 2])
            out[ci, cj] = s / 4.0
    return out
