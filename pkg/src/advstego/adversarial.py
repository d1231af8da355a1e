"""Adversarial stego generation.

1. Gradient of the cover-class probability on the cover image (always the
   cover label, even if the model currently calls the cover "stego").
2. STC chooses which pixels change, from the cost map alone.
3. Each chosen pixel moves by the sign of its gradient; pixels at 0 move +1
   and pixels at 255 move -1 regardless.

Both ±1 toggle the LSB, so steering the direction never disturbs the
syndrome and the message stays extractable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import cnn
from .distortion import CostMap, CostProfile, compute_costs
from .image import GrayImage, apply_changes
from .stc import (DEFAULT_HEIGHT, EmbedResult, bits_to_bytes, build_code, message_length,
                  stc_embed, stc_extract)


@dataclass(frozen=True)
class CodeParams:
    h: int = DEFAULT_HEIGHT
    seed: int = 0


@dataclass(frozen=True, eq=False)
class AdversarialPlan:
    positions: np.ndarray   # row-major pixel indices, ascending
    directions: np.ndarray  # ±1 per position, after the wet-pixel override
    payload_rate: float
    message_digest: str

    def to_json(self, shape) -> str:
        w = shape[1]
        return json.dumps({
            "shape": list(shape),
            "payload_rate": self.payload_rate,
            "message_digest": self.message_digest,
            "positions": [[int(p // w), int(p % w)] for p in self.positions],
            "directions": [int(d) for d in self.directions],
        })


def message_digest(bits) -> str:
    bits = np.asarray(bits, dtype=np.uint8)
    return hashlib.sha256(len(bits).to_bytes(8, "big") + bits_to_bytes(bits)).hexdigest()


def apply_wet_rule(cover: GrayImage, positions, directions) -> np.ndarray:
    flat = cover.pixels.ravel()[positions]
    directions = np.array(directions, dtype=np.int64)
    directions[flat == 0] = 1
    directions[flat == 255] = -1
    return directions


def select_positions(cover: GrayImage, bits, costs: CostMap | CostProfile | str,
                     code: CodeParams = CodeParams()) -> EmbedResult:
    """STC position selection; depends only on cover LSBs, message and costs."""
    if not isinstance(costs, CostMap):
        costs = compute_costs(cover, costs)
    if costs.shape != cover.shape:
        raise ValueError("cost map and cover differ in shape")
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    stc_code = build_code(cover.size, len(bits), code.h, code.seed)
    return stc_embed(cover.lsb(), bits, costs.costs.ravel(), stc_code)


def _finish(cover, bits, result, directions):
    positions = result.positions
    directions = apply_wet_rule(cover, positions, directions)
    stego = apply_changes(cover, positions, directions)
    plan = AdversarialPlan(positions, directions, len(bits) / cover.size, message_digest(bits))
    return stego, plan


def steer_directions(cover: GrayImage, grad: np.ndarray, positions) -> np.ndarray:
    signs = cnn.sign_map(grad, cover).ravel()
    return signs[positions].astype(np.int64)


def generate_adversarial_stego(cover: GrayImage, bits, model: cnn.CnnModel,
                               profile: CostProfile | str = "hill",
                               code: CodeParams = CodeParams(),
                               costs: CostMap | None = None,
                               grad: np.ndarray | None = None):
    """Returns (stego, plan). ``costs``/``grad`` may be passed in precomputed."""
    if tuple(model.input_shape) != cover.shape:
        raise ValueError(f"cover shape {cover.shape} does not match model input {tuple(model.input_shape)}")
    if grad is None:
        grad = cnn.input_gradient(model, cover, cnn.COVER)
    result = select_positions(cover, bits, costs if costs is not None else profile, code)
    return _finish(cover, bits, result, steer_directions(cover, grad, result.positions))


def generate_plain_stego(cover: GrayImage, bits, profile: CostProfile | str = "hill",
                         code: CodeParams = CodeParams(), direction_seed: int = 0,
                         costs: CostMap | None = None):
    """Baseline: same STC positions, fair-coin ±1 directions. Returns (stego, plan)."""
    result = select_positions(cover, bits, costs if costs is not None else profile, code)
    rng = np.random.default_rng(direction_seed)
    dirs = rng.choice(np.array([-1, 1]), size=len(result.positions))
    return _finish(cover, bits, result, dirs)


def stego_pair(cover: GrayImage, bits, costs: CostMap, grad, code: CodeParams, direction_seed: int):
    """Plain and adversarial stegos sharing one STC pass."""
    result = select_positions(cover, bits, costs, code)
    rng = np.random.default_rng(direction_seed)
    plain, _ = _finish(cover, bits, result, rng.choice(np.array([-1, 1]), size=len(result.positions)))
    adv, _ = _finish(cover, bits, result, steer_directions(cover, grad, result.positions))
    return plain, adv


def extract_message(stego: GrayImage, n_bits: int, code: CodeParams = CodeParams()) -> np.ndarray:
    stc_code = build_code(stego.size, n_bits, code.h, code.seed)
    return stc_extract(stego.lsb(), stc_code)


def random_message(n_pixels: int, alpha: float, rng) -> np.ndarray:
    return rng.integers(0, 2, size=message_length(alpha, n_pixels)).astype(np.uint8)


def attack_delta(model: cnn.CnnModel, cover: GrayImage, stego: GrayImage, adversarial: GrayImage):
    """Cover-class probability of (cover, stego, adversarial)."""
    p = cnn.predict_proba(model, [cover, stego, adversarial])[:, cnn.COVER]
    return float(p[0]), float(p[1]), float(p[2])
