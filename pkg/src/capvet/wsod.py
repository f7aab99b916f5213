"""Two-stream weakly-supervised object detector.

Region embeddings come from a small convolutional encoder plus ROI pooling
and a shared fully-connected neck. Two parallel heads score each region:
a per-class sigmoid classification stream and a per-class softmax over
regions (detection stream). The image-level prediction aggregates their
elementwise product over regions; training minimizes binary cross entropy
against image-level label sets, with frequency-weighted image sampling.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np
import torch
from torch import nn
from torchvision.ops import roi_pool

from .validation import ValidationError, check_box
from .vetting import VettingDecision

logger = logging.getLogger(__name__)

EPS = 1e-7


@dataclass
class WsodConfig:
    image_size: int = 96
    embed_dim: int = 128
    steps: int = 800
    batch_size: int = 8
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    prediction_variant: str = "sigmoid"
    sampler_alpha: float = 1.0
    score_thresh: float = 1e-3
    nms_iou: float = 0.3

    def __post_init__(self):
        if self.prediction_variant not in ("sigmoid", "clamp_sum"):
            raise ValidationError(
                f"prediction_variant must be sigmoid or clamp_sum, got {self.prediction_variant!r}"
            )
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if self.sampler_alpha < 0.0:
            raise ValidationError(f"sampler_alpha must be >= 0, got {self.sampler_alpha}")
        if not 0.0 <= self.nms_iou < 1.0:
            raise ValidationError(f"nms_iou must be in [0,1), got {self.nms_iou}")


@dataclass
class ImageLabelSet:
    """Image-level training targets after vetting."""

    record_id: str
    categories: set[str]

    def __post_init__(self):
        if not self.categories:
            raise ValidationError(
                f"image {self.record_id!r} has no labels; drop empty images before training"
            )


class ImageProvider(Protocol):
    def image(self, record_id: str) -> np.ndarray: ...
    def proposals(self, record_id: str) -> np.ndarray: ...


class CachedProvider:
    """Memoizes image/proposal tensors around any provider."""

    def __init__(self, provider: ImageProvider):
        self.provider = provider
        self._images: dict[str, torch.Tensor] = {}
        self._props: dict[str, torch.Tensor] = {}

    def image_tensor(self, record_id: str) -> torch.Tensor:
        if record_id not in self._images:
            arr = self.provider.image(record_id)
            self._images[record_id] = torch.from_numpy(
                np.ascontiguousarray(arr.transpose(2, 0, 1), dtype=np.float32)
            )
        return self._images[record_id]

    def proposal_tensor(self, record_id: str) -> torch.Tensor:
        if record_id not in self._props:
            self._props[record_id] = torch.from_numpy(
                np.asarray(self.provider.proposals(record_id), dtype=np.float32)
            )
        return self._props[record_id]


class FileImageProvider:
    """Images from disk (image_ref = path) and proposals from JSONL."""

    def __init__(self, image_root: str | Path, proposal_path: str | Path):
        self.image_root = Path(image_root)
        self._proposals: dict[str, np.ndarray] = {}
        with open(proposal_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    doc = json.loads(line)
                    self._proposals[doc["record_id"]] = np.asarray(doc["boxes"], dtype=np.float32)

    def image(self, record_id: str) -> np.ndarray:
        import matplotlib.image as mpimg

        arr = mpimg.imread(self.image_root / record_id)
        if arr.dtype == np.uint8:
            arr = arr.astype(np.float32) / 255.0
        return arr[..., :3]

    def proposals(self, record_id: str) -> np.ndarray:
        return self._proposals[record_id]


class WsodModel(nn.Module):
    """Conv encoder (stride 8) + ROI pool + shared neck + parallel heads."""

    def __init__(self, categories: Sequence[str], config: WsodConfig):
        super().__init__()
        if not categories:
            raise ValidationError("need at least one category")
        self.categories = list(categories)
        self.config = config
        self.conv = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.ReLU(),
        )
        self.pool_size = 3
        self.spatial_scale = 1.0 / 8.0
        self.neck = nn.Sequential(
            nn.Linear(64 * self.pool_size * self.pool_size, config.embed_dim), nn.ReLU()
        )
        self.f_c = nn.Linear(config.embed_dim, len(categories))
        self.f_d = nn.Linear(config.embed_dim, len(categories))

    def features(self, images: torch.Tensor) -> torch.Tensor:
        return self.conv(images)

    def region_embeddings_from_features(
        self, features: torch.Tensor, boxes: list[torch.Tensor]
    ) -> torch.Tensor:
        pooled = roi_pool(features, boxes, output_size=self.pool_size, spatial_scale=self.spatial_scale)
        return self.neck(pooled.flatten(1))


def clip_proposals(boxes: np.ndarray, image_size: int) -> np.ndarray:
    """Clip out-of-bounds proposals, warning once per call."""
    boxes = np.asarray(boxes, dtype=np.float32)
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise ValidationError(f"proposals must be M x 4, got shape {boxes.shape}")
    if boxes.shape[0] < 1:
        raise ValidationError("need at least one proposal")
    clipped = np.clip(boxes, 0, image_size)
    if not np.array_equal(clipped, boxes):
        logger.warning("clipped %d proposals to image bounds", int((clipped != boxes).any(1).sum()))
    for box in clipped:
        check_box(box)
    return clipped


def region_embeddings(model: WsodModel, image: np.ndarray, proposals: np.ndarray) -> torch.Tensor:
    """Embeddings for one image's proposals, M x embed_dim."""
    boxes = clip_proposals(proposals, model.config.image_size)
    img = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1), dtype=np.float32))
    features = model.features(img.unsqueeze(0))
    return model.region_embeddings_from_features(features, [torch.from_numpy(boxes)])


def two_stream_scores(model: WsodModel, phi: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """(p_cls, p_det) for one image's region embeddings.

    p_cls is an independent sigmoid per (region, class); p_det normalizes
    each class column over the image's regions.
    """
    p_cls = torch.sigmoid(model.f_c(phi))
    p_det = torch.softmax(model.f_d(phi), dim=0)
    return p_cls, p_det


def image_level_prediction(
    p_cls: torch.Tensor, p_det: torch.Tensor, variant: str = "sigmoid"
) -> torch.Tensor:
    """Aggregate region scores to one probability per class."""
    if p_cls.shape != p_det.shape:
        raise ValidationError(f"shape mismatch {tuple(p_cls.shape)} vs {tuple(p_det.shape)}")
    summed = (p_cls * p_det).sum(dim=0)
    if variant == "sigmoid":
        return torch.sigmoid(summed)
    if variant == "clamp_sum":
        return summed.clamp(EPS, 1.0 - EPS)
    raise ValidationError(f"unknown prediction variant {variant!r}")


def mid_loss(p_hat: torch.Tensor, y: torch.Tensor, positive_weight: torch.Tensor | None = None) -> torch.Tensor:
    """Mean per-class BCE between image-level prediction and targets.

    positive_weight, when given, scales each class's positive term; the
    loss-based rejection baseline uses it to zero out flagged labels.
    """
    if p_hat.shape != y.shape:
        raise ValidationError(f"shape mismatch {tuple(p_hat.shape)} vs {tuple(y.shape)}")
    p = p_hat.clamp(EPS, 1.0 - EPS)
    w = torch.ones_like(y) if positive_weight is None else positive_weight
    terms = w * y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p)
    return -terms.mean()


def weighted_sampler(label_sets: Sequence[ImageLabelSet], alpha: float = 1.0) -> np.ndarray:
    """Per-image sampling weights flattening the category distribution.

    weight_i = (1/|L_i|) * sum over the image's categories of freq^(-alpha),
    normalized to sum 1.
    """
    if not label_sets:
        raise ValidationError("no label sets")
    freq: dict[str, int] = {}
    for ls in label_sets:
        for cat in ls.categories:
            freq[cat] = freq.get(cat, 0) + 1
    weights = np.array(
        [
            sum(freq[c] ** (-alpha) for c in ls.categories) / len(ls.categories)
            for ls in label_sets
        ],
        dtype=np.float64,
    )
    return weights / weights.sum()


def _batch_forward(
    model: WsodModel,
    provider: CachedProvider,
    record_ids: Sequence[str],
    variant: str,
) -> torch.Tensor:
    """Image-level predictions for a batch, stacked (B, C)."""
    images = torch.stack([provider.image_tensor(rid) for rid in record_ids])
    boxes = [provider.proposal_tensor(rid) for rid in record_ids]
    features = model.features(images)
    phi = model.region_embeddings_from_features(features, boxes)
    counts = [b.shape[0] for b in boxes]
    preds = []
    offset = 0
    for count in counts:
        p_cls, p_det = two_stream_scores(model, phi[offset : offset + count])
        preds.append(image_level_prediction(p_cls, p_det, variant))
        offset += count
    return torch.stack(preds)


def train_wsod(
    config: WsodConfig,
    categories: Sequence[str],
    label_sets: Sequence[ImageLabelSet],
    provider: ImageProvider,
    positive_weights: Mapping[tuple[str, str], float] | None = None,
    model: WsodModel | None = None,
) -> tuple[WsodModel, list[float]]:
    """Train on image-level label sets; returns (model, per-100-step loss log).

    Deterministic per config.seed. positive_weights optionally scales the
    positive loss term of specific (record_id, category) pairs. Passing an
    existing model continues training it instead of starting fresh.
    """
    if not label_sets:
        raise ValidationError("empty training set")
    torch.manual_seed(config.seed)
    if model is None:
        model = WsodModel(categories, config)
    elif model.categories != list(categories):
        raise ValidationError("continued model has a different category list")
    cat_index = {c: i for i, c in enumerate(model.categories)}
    for ls in label_sets:
        unknown = ls.categories - set(cat_index)
        if unknown:
            raise ValidationError(f"image {ls.record_id!r} has unknown categories {unknown}")
    y_all = torch.zeros((len(label_sets), len(model.categories)))
    w_all = torch.ones_like(y_all)
    for i, ls in enumerate(label_sets):
        for cat in ls.categories:
            y_all[i, cat_index[cat]] = 1.0
            if positive_weights is not None:
                w_all[i, cat_index[cat]] = positive_weights.get((ls.record_id, cat), 1.0)
    weights = weighted_sampler(label_sets, config.sampler_alpha)
    cached = provider if isinstance(provider, CachedProvider) else CachedProvider(provider)
    if config.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    else:
        opt = torch.optim.SGD(model.parameters(), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    history = []
    window = 0.0
    model.train()
    for step in range(config.steps):
        idx = rng.choice(len(label_sets), size=config.batch_size, replace=True, p=weights)
        rids = [label_sets[i].record_id for i in idx]
        p_hat = _batch_forward(model, cached, rids, config.prediction_variant)
        loss = mid_loss(p_hat, y_all[idx], w_all[idx])
        if not torch.isfinite(loss):
            raise RuntimeError(f"training diverged at step {step}: loss={loss.item()}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        window += loss.item()
        if (step + 1) % 100 == 0:
            history.append(window / 100.0)
            logger.info("step %d: loss %.4f", step + 1, history[-1])
            window = 0.0
    model.eval()
    return model, history


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU with the continuous-coordinate convention (no +1)."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    ix1 = np.maximum(a[:, None, 0], b[None, :, 0])
    iy1 = np.maximum(a[:, None, 1], b[None, :, 1])
    ix2 = np.minimum(a[:, None, 2], b[None, :, 2])
    iy2 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(ix2 - ix1, 0, None) * np.clip(iy2 - iy1, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


def greedy_nms(boxes: np.ndarray, scores: np.ndarray, iou_thresh: float) -> list[int]:
    """Indices kept by greedy NMS: descending score, suppress IoU > thresh.

    Ties broken by original index for determinism.
    """
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    kept: list[int] = []
    for i in order:
        if all(iou_matrix(boxes[i], boxes[j])[0, 0] <= iou_thresh for j in kept):
            kept.append(i)
    return kept


@dataclass
class Detection:
    record_id: str
    category: str
    box: np.ndarray
    score: float


@torch.no_grad()
def detect(
    model: WsodModel,
    image: np.ndarray,
    proposals: np.ndarray,
    score_thresh: float | None = None,
    nms_iou: float | None = None,
    record_id: str = "",
) -> list[Detection]:
    """Per-class scored boxes: p_cls * p_det, thresholded, greedy NMS."""
    score_thresh = model.config.score_thresh if score_thresh is None else score_thresh
    nms_iou = model.config.nms_iou if nms_iou is None else nms_iou
    model.eval()
    boxes = clip_proposals(proposals, model.config.image_size)
    phi = region_embeddings(model, image, boxes)
    p_cls, p_det = two_stream_scores(model, phi)
    scores = (p_cls * p_det).numpy().astype(np.float64)
    out: list[Detection] = []
    for ci, category in enumerate(model.categories):
        col = scores[:, ci]
        keep = np.flatnonzero(col > score_thresh)
        if keep.size == 0:
            continue
        kept = greedy_nms(boxes[keep], col[keep], nms_iou)
        for k in kept:
            out.append(
                Detection(
                    record_id=record_id,
                    category=category,
                    box=boxes[keep[k]].astype(np.float64),
                    score=float(col[keep[k]]),
                )
            )
    return out


@torch.no_grad()
def collect_detections(
    model: WsodModel,
    record_ids: Sequence[str],
    provider: ImageProvider,
    score_thresh: float | None = None,
    nms_iou: float | None = None,
) -> list[Detection]:
    out = []
    for rid in record_ids:
        out.extend(
            detect(
                model,
                provider.image(rid),
                provider.proposals(rid),
                score_thresh=score_thresh,
                nms_iou=nms_iou,
                record_id=rid,
            )
        )
    return out


@torch.no_grad()
def positive_loss_terms(
    model: WsodModel,
    label_sets: Sequence[ImageLabelSet],
    provider: CachedProvider,
    batch_size: int = 32,
) -> dict[tuple[str, str], float]:
    """Per-(image, label) positive MID loss terms, -log p_hat_c."""
    model.eval()
    cat_index = {c: i for i, c in enumerate(model.categories)}
    out: dict[tuple[str, str], float] = {}
    for start in range(0, len(label_sets), batch_size):
        chunk = label_sets[start : start + batch_size]
        p_hat = _batch_forward(
            model, provider, [ls.record_id for ls in chunk], model.config.prediction_variant
        )
        p = p_hat.clamp(EPS, 1.0 - EPS)
        for b, ls in enumerate(chunk):
            for cat in ls.categories:
                out[(ls.record_id, cat)] = float(-torch.log(p[b, cat_index[cat]]))
    return out


def save_model(model: WsodModel, path: str | Path) -> None:
    torch.save(
        {"config": asdict(model.config), "categories": model.categories, "state": model.state_dict()},
        path,
    )


def load_model(path: str | Path) -> WsodModel:
    blob = torch.load(path, weights_only=False)
    model = WsodModel(blob["categories"], WsodConfig(**blob["config"]))
    model.load_state_dict(blob["state"])
    model.eval()
    return model


def save_detections(detections: Sequence[Detection], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in detections:
            fh.write(
                json.dumps(
                    {
                        "record_id": d.record_id,
                        "category": d.category,
                        "box": [round(float(v), 4) for v in d.box],
                        "score": round(d.score, 6),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_detections(path: str | Path) -> list[Detection]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            out.append(
                Detection(
                    record_id=doc["record_id"],
                    category=doc["category"],
                    box=np.asarray(doc["box"], dtype=np.float64),
                    score=float(doc["score"]),
                )
            )
    return out


def decisions_to_label_sets(decisions: Sequence[VettingDecision]) -> list[ImageLabelSet]:
    """Accepted categories per record; records emptied by vetting dropped."""
    grouped: dict[str, set[str]] = {}
    for d in decisions:
        if d.accepted:
            grouped.setdefault(d.record_id, set()).add(d.category)
    dropped = len({d.record_id for d in decisions}) - len(grouped)
    if dropped:
        logger.info("dropped %d images emptied by vetting", dropped)
    return [ImageLabelSet(rid, cats) for rid, cats in sorted(grouped.items())]
