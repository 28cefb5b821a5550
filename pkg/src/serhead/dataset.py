"""Dataset manifest and the imbalanced synthetic feature generator.

A manifest is a JSON-lines file, one utterance per line, with exactly the
fields ``id``, ``feature_path``, ``gender_id``, ``label_id`` and
``text_embedding_path``. Paths may be relative to the manifest's directory.

The synthetic generator stands in for real upstream-encoded data: each class
gets a mean direction of configurable magnitude in feature space and in text
space, so class separability (and hence trainability) is a dial.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError
from .tensorfile import read_tensor, write_tensor

EMOTIONS = ["Neutral", "Happy", "Angry", "Contempt", "Sad", "Surprise", "Disgust", "Fear"]
NUM_CLASSES = len(EMOTIONS)
TEXT_DIM = 384

_FIELDS = {"id", "feature_path", "gender_id", "label_id", "text_embedding_path"}


@dataclass
class Utterance:
    utt_id: str
    feature_path: Path
    gender_id: int
    label_id: int
    text_embedding_path: Path


@dataclass
class Manifest:
    records: list[Utterance]

    def __len__(self):
        return len(self.records)

    def class_histogram(self) -> np.ndarray:
        counts = np.zeros(NUM_CLASSES, dtype=np.int64)
        for r in self.records:
            counts[r.label_id] += 1
        return counts

    def save(self, path) -> None:
        path = Path(path)
        base = path.parent
        lines = []
        for r in self.records:
            lines.append(json.dumps({
                "id": r.utt_id,
                "feature_path": _relativize(r.feature_path, base),
                "gender_id": r.gender_id,
                "label_id": r.label_id,
                "text_embedding_path": _relativize(r.text_embedding_path, base),
            }, sort_keys=True))
        path.write_text("\n".join(lines) + ("\n" if lines else ""))


def _relativize(p: Path, base: Path) -> str:
    try:
        return Path(p).relative_to(base).as_posix()
    except ValueError:
        return Path(p).as_posix()


def load_manifest(path) -> Manifest:
    """Parse and validate a JSON-lines manifest; empty files give an empty manifest.

    All invalid lines are reported at once, by line number.
    """
    path = Path(path)
    base = path.parent
    records = []
    problems = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            problems.append(f"line {lineno}: not valid JSON ({e.msg})")
            continue
        if set(obj) != _FIELDS:
            missing = _FIELDS - set(obj)
            extra = set(obj) - _FIELDS
            detail = "; ".join(filter(None, [
                f"missing {sorted(missing)}" if missing else "",
                f"unknown {sorted(extra)}" if extra else "",
            ]))
            problems.append(f"line {lineno}: {detail}")
            continue
        label = obj["label_id"]
        gender = obj["gender_id"]
        if not isinstance(label, int) or not 0 <= label < NUM_CLASSES:
            problems.append(f"line {lineno}: label_id {label!r} not in 0..{NUM_CLASSES - 1}")
            continue
        if gender not in (0, 1):
            problems.append(f"line {lineno}: gender_id {gender!r} not in {{0, 1}}")
            continue
        records.append(Utterance(
            utt_id=str(obj["id"]),
            feature_path=_resolve(obj["feature_path"], base),
            gender_id=gender,
            label_id=label,
            text_embedding_path=_resolve(obj["text_embedding_path"], base),
        ))
    if problems:
        raise ManifestError(f"{path}: " + "; ".join(problems))
    return Manifest(records)


def _resolve(p: str, base: Path) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def verify_manifest_files(manifest: Manifest) -> tuple[int, int]:
    """Check referenced tensors exist and have the contracted shapes.

    Features must be rank 3 with identical [l, h] across utterances; text
    embeddings must be rank 1 of length 384. Returns the common (l, h).
    """
    lh = None
    for r in manifest.records:
        feats = read_tensor(r.feature_path)
        if feats.ndim != 3:
            raise ManifestError(f"{r.utt_id}: features must be rank 3, got {feats.shape}")
        this_lh = (feats.shape[0], feats.shape[2])
        if lh is None:
            lh = this_lh
        elif lh != this_lh:
            raise ManifestError(f"{r.utt_id}: layer/hidden dims {this_lh} != {lh}")
        text = read_tensor(r.text_embedding_path)
        if text.shape != (TEXT_DIM,):
            raise ManifestError(f"{r.utt_id}: text embedding must be [{TEXT_DIM}], got {text.shape}")
    if lh is None:
        raise ManifestError("manifest has no records")
    return lh


@dataclass
class SyntheticSpec:
    """Recipe for a synthetic dataset; a pure function of its fields and seed."""

    counts: list[int] = field(default_factory=lambda: [50] * NUM_CLASSES)
    num_layers: int = 4
    hidden: int = 32
    frames_min: int = 30
    frames_max: int = 50
    mean_separation: float = 5.0
    noise_scale: float = 1.0
    gender_bias: list[float] = field(default_factory=lambda: [0.5] * NUM_CLASSES)
    seed: int = 0

    def validate(self) -> None:
        if len(self.counts) != NUM_CLASSES or any(c < 0 for c in self.counts):
            raise ValueError(f"counts must be {NUM_CLASSES} non-negative ints")
        if sum(self.counts) == 0:
            raise ValueError("at least one class count must be positive")
        if self.num_layers < 1 or self.hidden < 1:
            raise ValueError("num_layers and hidden must be positive")
        if not 1 <= self.frames_min <= self.frames_max:
            raise ValueError("need 1 <= frames_min <= frames_max")
        if self.mean_separation < 0 or self.noise_scale <= 0:
            raise ValueError("mean_separation must be >= 0, noise_scale > 0")
        if len(self.gender_bias) != NUM_CLASSES:
            raise ValueError(f"gender_bias must have {NUM_CLASSES} entries")


def generate_synthetic_dataset(spec: SyntheticSpec, out_dir) -> Manifest:
    """Write feature/text tensors plus a manifest under ``out_dir``.

    Features for class c are Gaussian noise (scale sigma) around a random
    unit direction scaled to ``mean_separation``, constant across layers and
    frames; text embeddings get their own class mean so text carries signal.
    Gender is Bernoulli per utterance with per-class bias. Deterministic in
    (spec, seed), byte-for-byte.
    """
    spec.validate()
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    text_dir = out_dir / "text"
    feat_dir.mkdir(parents=True, exist_ok=True)
    text_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    delta, sigma = spec.mean_separation, spec.noise_scale
    feat_means = [_class_mean(c, spec.hidden) * delta for c in range(NUM_CLASSES)]
    text_means = [_class_mean(c, TEXT_DIM) * delta for c in range(NUM_CLASSES)]

    records = []
    for c in range(NUM_CLASSES):
        for k in range(spec.counts[c]):
            utt_id = f"{EMOTIONS[c].lower()}-{k:04d}"
            m = int(rng.integers(spec.frames_min, spec.frames_max + 1))
            feats = feat_means[c] + sigma * rng.normal(size=(spec.num_layers, m, spec.hidden))
            text = text_means[c] + sigma * rng.normal(size=TEXT_DIM)
            gender = int(rng.random() < spec.gender_bias[c])
            feat_path = feat_dir / f"{utt_id}.sert"
            text_path = text_dir / f"{utt_id}.sert"
            write_tensor(feats, feat_path)
            write_tensor(text, text_path)
            records.append(Utterance(utt_id, feat_path, gender, c, text_path))

    manifest = Manifest(records)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest


def _class_mean(label: int, dim: int) -> np.ndarray:
    """Canonical unit direction for a class, fixed per (label, dim).

    Keeping class geometry independent of the sample seed means datasets
    generated with different seeds (train vs dev) share one distribution.
    """
    v = np.random.default_rng(np.random.SeedSequence([0x5EE7, label, dim])).normal(size=dim)
    return v / np.linalg.norm(v)
