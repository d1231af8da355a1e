"""Detection-error experiments: cover/plain-stego vs cover/adversarial-stego.

For each payload rate, a steganalyzer is trained on plain stegos made from
the training half of the covers. The held-out covers yield two paired test
sets that share their cover half: cover/plain and cover/adversarial, where
the adversarial stegos are steered by that same rate's model.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from . import cnn
from .adversarial import CodeParams, generate_plain_stego, random_message, stego_pair
from .distortion import CostProfile, compute_costs
from .errors import NumericError
from .image import GrayImage, load_pgm

DEFAULT_RATES = (0.05, 0.1, 0.2, 0.3, 0.4)
CSV_HEADER = ["algo", "alpha", "set", "p_fa", "p_md", "p_e", "n_cover", "n_stego", "seed"]
SENSOR_NOISE = 0.5


@dataclass(frozen=True)
class DatasetSpec:
    corpus_size: int = 500
    image_size: int = 64
    payload_rates: tuple[float, ...] = DEFAULT_RATES
    split_seed: int = 0
    train_fraction: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "payload_rates", tuple(float(a) for a in self.payload_rates))
        if any(not 0 < a <= 0.5 for a in self.payload_rates):
            raise ValueError("payload rates must lie in (0, 0.5]")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class DetectionRow:
    algo: str
    alpha: float
    set: str
    p_fa: float
    p_md: float
    p_e: float
    n_cover: int
    n_stego: int
    seed: int
    false_alarms: int = 0
    missed: int = 0


@dataclass
class DetectionReport:
    rows: list[DetectionRow] = field(default_factory=list)
    models: dict[float, str] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)

    def row(self, alpha: float, set_name: str) -> DetectionRow:
        for r in self.rows:
            if r.alpha == alpha and r.set == set_name:
                return r
        raise KeyError((alpha, set_name))


@dataclass
class Experiment:
    """Everything ``evaluate`` needs, as read from a JSON spec file."""
    dataset: DatasetSpec
    train: cnn.TrainConfig
    algo: str = "hill"
    code: CodeParams = CodeParams()

    @classmethod
    def from_dict(cls, d: dict) -> Experiment:
        ds_keys = ("corpus_size", "image_size", "payload_rates", "split_seed", "train_fraction")
        dataset = DatasetSpec(**{k: d[k] for k in ds_keys if k in d})
        t = dict(d.get("train", {}))
        rename = {"batch": "batch_size"}
        t = {rename.get(k, k): v for k, v in t.items()}
        if "channels" in t:
            t["channels"] = tuple(t["channels"])
        stc = d.get("stc", {})
        return cls(dataset, cnn.TrainConfig(**t), d.get("algo", "hill"), CodeParams(**stc))

    @classmethod
    def from_json(cls, path) -> Experiment:
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in key])


def synth_cover(rng: np.random.Generator, size: int) -> GrayImage:
    """Smooth ramp + low-frequency wave, band-limited noise patches, optional flat strip."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = rng.uniform(60, 190) + rng.uniform(-50, 50) * xx + rng.uniform(-50, 50) * yy
    freq = rng.uniform(0.5, 2.0)
    ca, sa = np.cos(rng.uniform(0, 2 * np.pi)), np.sin(rng.uniform(0, 2 * np.pi))
    img = img + rng.uniform(0, 25) * np.sin(2 * np.pi * freq * (xx * ca + yy * sa))
    for _ in range(rng.integers(1, 4)):
        h, w = rng.integers(size // 4, size // 2 + 1, size=2)
        r, c = rng.integers(0, size - h + 1), rng.integers(0, size - w + 1)
        noise = ndimage.gaussian_filter(rng.standard_normal((h, w)), rng.uniform(0.6, 1.5))
        noise /= noise.std() + 1e-12
        img[r:r + h, c:c + w] += rng.uniform(6, 30) * noise
    img = img + rng.uniform(0, SENSOR_NOISE) * rng.standard_normal(img.shape)
    img = np.clip(np.round(img), 0, 255)
    if rng.random() < 0.7:
        t = rng.integers(2, max(3, size // 10) + 1)
        p = rng.integers(0, size - t + 1)
        val = rng.choice([0, 255, int(rng.integers(1, 255))])
        if rng.random() < 0.5:
            img[p:p + t, :] = val
        else:
            img[:, p:p + t] = val
    return GrayImage(img.astype(np.uint8))


def synthesize_corpus(spec: DatasetSpec) -> list[GrayImage]:
    if spec.corpus_size < 20:
        raise ValueError("corpus_size must be at least 20")
    return [synth_cover(_rng(spec.split_seed, 0, i), spec.image_size) for i in range(spec.corpus_size)]


def load_corpus(directory) -> list[GrayImage]:
    names = sorted(f for f in os.listdir(directory) if f.lower().endswith(".pgm"))
    if not names:
        raise ValueError(f"no .pgm files in {directory}")
    images = [load_pgm(os.path.join(directory, f)) for f in names]
    if len({im.shape for im in images}) != 1:
        raise ValueError("corpus images differ in shape")
    return images


def split_indices(spec: DatasetSpec, n: int) -> tuple[np.ndarray, np.ndarray]:
    perm = _rng(spec.split_seed, 1).permutation(n)
    n_train = int(round(spec.train_fraction * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def detection_rates(cover_flagged, stego_flagged) -> tuple[float, float, float]:
    """(P_FA, P_MD, P_E) from per-image "flagged as stego" decisions."""
    cover_flagged = np.asarray(cover_flagged, dtype=bool)
    stego_flagged = np.asarray(stego_flagged, dtype=bool)
    p_fa = cover_flagged.sum() / cover_flagged.size
    p_md = (~stego_flagged).sum() / stego_flagged.size
    return float(p_fa), float(p_md), float((p_fa + p_md) / 2)


def flag_stego(model: cnn.CnnModel, images, batch: int = 128) -> np.ndarray:
    out = [cnn.predict_proba(model, images[i:i + batch])[:, cnn.STEGO] > 0.5
           for i in range(0, len(images), batch)]
    return np.concatenate(out)


def _message_rng(spec, ai, i):
    return _rng(spec.split_seed, 2, ai, i)


def _direction_seed(spec, ai, i):
    return int(_rng(spec.split_seed, 3, ai, i).integers(2**63))


def _plain_job(args):
    cover, bits, costs, code, seed = args
    return generate_plain_stego(cover, bits, costs=costs, code=code, direction_seed=seed)[0]


def _pair_job(args):
    cover, bits, costs, grad, code, seed = args
    return stego_pair(cover, bits, costs, grad, code, seed)


def _map(fn, items, jobs):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def run_protocol(spec: DatasetSpec, train_config: cnn.TrainConfig, algo: str = "hill",
                 covers: list[GrayImage] | None = None, code: CodeParams = CodeParams(),
                 jobs: int = 1, log=None) -> DetectionReport:
    covers = synthesize_corpus(spec) if covers is None else list(covers)
    profile = CostProfile(algo)
    train_idx, test_idx = split_indices(spec, len(covers))
    costs = [compute_costs(c, profile) for c in covers]
    n_pix = covers[0].size
    report = DetectionReport(seeds={"split_seed": spec.split_seed, "train_seed": train_config.seed,
                                    "stc_seed": code.seed})

    for ai, alpha in enumerate(spec.payload_rates):
        msgs = {i: random_message(n_pix, alpha, _message_rng(spec, ai, i)) for i in range(len(covers))}
        train_stegos = _map(_plain_job, [(covers[i], msgs[i], costs[i], code, _direction_seed(spec, ai, i))
                                         for i in train_idx], jobs)
        if log:
            log(f"[{algo} a={alpha}] training on {len(train_idx)} pairs")
        try:
            model = cnn.train(train_config, [covers[i] for i in train_idx], train_stegos)
        except NumericError as e:
            raise NumericError(f"{e} (algo={algo}, alpha={alpha})", epoch=e.epoch) from e
        report.models[alpha] = hashlib.sha256(cnn.model_bytes(model)).hexdigest()[:16]

        test_covers = [covers[i] for i in test_idx]
        grads = cnn.input_gradients(model, test_covers, cnn.COVER)
        pairs = _map(_pair_job, [(covers[i], msgs[i], costs[i], grads[k], code, _direction_seed(spec, ai, i))
                                 for k, i in enumerate(test_idx)], jobs)
        cover_flags = flag_stego(model, test_covers)
        for set_name, images in (("plain", [p for p, _ in pairs]), ("adversarial", [a for _, a in pairs])):
            stego_flags = flag_stego(model, images)
            p_fa, p_md, p_e = detection_rates(cover_flags, stego_flags)
            report.rows.append(DetectionRow(algo, alpha, set_name, p_fa, p_md, p_e,
                                            len(test_covers), len(images), spec.split_seed,
                                            int(cover_flags.sum()), int((~stego_flags).sum())))
            if log:
                log(f"[{algo} a={alpha}] {set_name}: P_FA={p_fa:.3f} P_MD={p_md:.3f} P_E={p_e:.3f}")
    return report


def emit_report(report: DetectionReport, path) -> None:
    rows = sorted(report.rows, key=lambda r: (r.algo, r.alpha, r.set))
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.algo, f"{r.alpha:g}", r.set, f"{r.p_fa:.6f}", f"{r.p_md:.6f}",
                        f"{r.p_e:.6f}", r.n_cover, r.n_stego, r.seed])


def read_report(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        for k in ("alpha", "p_fa", "p_md", "p_e"):
            r[k] = float(r[k])
        for k in ("n_cover", "n_stego", "seed"):
            r[k] = int(r[k])
    return rows


def experiment_to_dict(exp: Experiment) -> dict:
    d = asdict(exp.dataset)
    d["payload_rates"] = list(exp.dataset.payload_rates)
    t = asdict(exp.train)
    t["batch"] = t.pop("batch_size")
    t["channels"] = list(t["channels"])
    d["train"] = t
    d["algo"] = exp.algo
    d["stc"] = asdict(exp.code)
    return d
