"""Adversarial stego images: STC embedding steered by a CNN steganalyzer's gradient sign."""

from .adversarial import (AdversarialPlan, CodeParams, attack_delta, extract_message,
                          generate_adversarial_stego, generate_plain_stego)
from .cnn import CnnModel, TrainConfig, forward, input_gradient, load_model, save_model, sign_map, train
from .distortion import CostMap, CostProfile, compute_costs, hill_cost, suniward_cost
from .harness import DatasetSpec, DetectionReport, emit_report, run_protocol, synthesize_corpus
from .image import GrayImage, PixelFlip, apply_flips, load_pgm, save_pgm, wet_mask
from .stc import StcCode, brute_force_embed, build_code, stc_embed, stc_extract

__version__ = "0.1.0"
