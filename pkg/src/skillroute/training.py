"""Weighted multi-label training with partial unfreezing and threshold tuning.

One training run is deterministic given its seed: the inner validation split,
batch order, dropout draws, and initialization all derive from it. The best
checkpoint is chosen by inner-validation exact match (ties keep the earlier
epoch), and optional per-skill thresholds are tuned on the same inner split.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import torch
import torch.nn.functional as F

from skillroute import evaluation
from skillroute.core import (
    NUM_SKILLS,
    SKILLS,
    ArgumentError,
    SkillrouteError,
    SkillVector,
    TaskRecord,
    stratified_split,
)
from skillroute.model import (
    ClassifierHead,
    EncoderBackend,
    MemberModel,
    apply_thresholds,
    embed,
)


class TrainingError(SkillrouteError):
    """Training aborted (non-finite loss, unusable dataset, ...)."""


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of one training run; all fields surface as CLI flags."""

    seed: int = 0
    epochs: int = 200
    batch_size: int = 32
    head_lr: float = 1e-3
    encoder_lr: float = 2e-5
    unfrozen_blocks: int = 2
    dropout: float = 0.3
    inner_val_fraction: float = 0.15
    patience: int = 20
    weight_decay: float = 0.01
    tune_thresholds: bool = False
    threshold_grid_step: float = 0.05
    pos_weight_min: float = 0.1
    pos_weight_max: float = 100.0

    def __post_init__(self) -> None:
        if not 0.0 < self.inner_val_fraction < 0.5:
            raise ArgumentError("inner_val_fraction must lie in (0, 0.5)")
        if self.epochs < 1:
            raise ArgumentError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be >= 1")
        if self.unfrozen_blocks < 0:
            raise ArgumentError("unfrozen_blocks must be >= 0")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class PosWeightResult:
    """Per-skill positive-class weights (negatives/positives, clamped)."""

    weights: tuple[float, ...]
    warnings: tuple[str, ...]


def compute_pos_weights(
    records: Sequence[TaskRecord],
    clamp: tuple[float, float] = (0.1, 100.0),
) -> PosWeightResult:
    """weight[s] = negatives[s] / positives[s], clamped; zero positives default to 1.0."""
    if not records:
        raise ArgumentError("cannot compute class weights from an empty record list")
    low, high = clamp
    total = len(records)
    weights: list[float] = []
    warnings: list[str] = []
    for i, name in enumerate(SKILLS):
        positives = sum(1 for r in records if r.skills.bits[i])
        if positives == 0:
            weights.append(1.0)
            warnings.append(f'skill "{name}" has no positive examples; weight defaulted to 1.0')
            continue
        weights.append(min(max((total - positives) / positives, low), high))
    return PosWeightResult(weights=tuple(weights), warnings=tuple(warnings))


def weighted_bce_loss(
    logits: torch.Tensor, targets: torch.Tensor, weights: torch.Tensor
) -> torch.Tensor:
    """Mean binary cross-entropy with the positive term scaled per skill.

    Computed via softplus so it stays finite for |logit| up to several hundred.
    With all-ones weights this is exactly the unweighted loss.
    """
    if logits.shape != targets.shape:
        raise ArgumentError(f"logits shape {tuple(logits.shape)} != targets {tuple(targets.shape)}")
    if weights.shape != logits.shape[-1:]:
        raise ArgumentError(
            f"weights must have shape {tuple(logits.shape[-1:])}, got {tuple(weights.shape)}"
        )
    positive_term = F.softplus(-logits)  # -log sigmoid(z)
    negative_term = F.softplus(logits)  # -log(1 - sigmoid(z))
    per_element = weights * targets * positive_term + (1.0 - targets) * negative_term
    return per_element.mean()


# -- training loop -------------------------------------------------------


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch curves plus the selection outcome of one run."""

    epochs_run: int
    best_epoch: int
    best_inner_em: float
    train_loss: tuple[float, ...]
    inner_em: tuple[float, ...]
    inner_macro_f1: tuple[float, ...]
    pos_weights: tuple[float, ...]
    pos_weight_warnings: tuple[str, ...]
    wall_time_s: float
    config_hash: str

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_inner_em": self.best_inner_em,
            "train_loss": list(self.train_loss),
            "inner_em": list(self.inner_em),
            "inner_macro_f1": list(self.inner_macro_f1),
            "pos_weights": list(self.pos_weights),
            "pos_weight_warnings": list(self.pos_weight_warnings),
            "wall_time_s": self.wall_time_s,
            "config_hash": self.config_hash,
        }


def _pooled_matrix(backend: EncoderBackend, records: Sequence[TaskRecord]) -> torch.Tensor:
    with torch.no_grad():
        return torch.stack([embed(backend, r.text).vector for r in records])


def _targets(records: Sequence[TaskRecord]) -> torch.Tensor:
    return torch.tensor([r.skills.to_int_list() for r in records], dtype=torch.float32)


def _vectors_from_matrix(matrix: torch.Tensor) -> list[SkillVector]:
    return [SkillVector.from_bits([bool(b) for b in row]) for row in matrix]


def train_member(
    config: TrainConfig, records: Sequence[TaskRecord], backend: EncoderBackend
) -> tuple[MemberModel, TrainReport]:
    """Train one member model; deterministic for a fixed (config, records, backend).

    The inner validation fraction is split off first (stratified by skill
    combination), class weights come from the remaining optimization split,
    and the checkpoint with the best inner-validation exact match is kept.

    Raises:
        ArgumentError: dataset smaller than two batches.
        TrainingError: non-finite loss.
    """
    if len(records) < 2 * config.batch_size:
        raise ArgumentError(
            f"need at least two batches of data ({2 * config.batch_size} records), got {len(records)}"
        )
    start = time.perf_counter()
    torch.manual_seed(config.seed)

    inner_count = max(1, round(config.inner_val_fraction * len(records)))
    fit_records, inner_records = stratified_split(records, inner_count, seed=config.seed)

    pos = compute_pos_weights(fit_records, clamp=(config.pos_weight_min, config.pos_weight_max))
    weights = torch.tensor(pos.weights, dtype=torch.float32)

    trainable_modules = backend.trainable_modules(config.unfrozen_blocks)
    if trainable_modules and hasattr(backend, "mark_trainable"):
        backend.mark_trainable(config.unfrozen_blocks)
    static_encoder = not trainable_modules

    head = ClassifierHead(backend.dim, dropout=config.dropout)
    param_groups = [{"params": list(head.parameters()), "lr": config.head_lr}]
    encoder_params = [p for m in trainable_modules for p in m.parameters()]
    if encoder_params:
        param_groups.append({"params": encoder_params, "lr": config.encoder_lr})
    optimizer = torch.optim.AdamW(param_groups, weight_decay=config.weight_decay)

    fit_targets = _targets(fit_records)
    inner_truths = [r.skills for r in inner_records]
    if static_encoder:
        fit_x = _pooled_matrix(backend, fit_records)
        inner_x = _pooled_matrix(backend, inner_records)

    def _forward_fit(indices: torch.Tensor, mode: str) -> torch.Tensor:
        head.train(mode == "train")
        if static_encoder:
            return head(fit_x[indices])
        texts = [fit_records[i].text for i in indices.tolist()]
        token_embeddings, mask = backend.forward_batch(texts)
        weights_ = mask.unsqueeze(-1)
        pooled = (token_embeddings * weights_).sum(dim=1) / mask.sum(dim=1, keepdim=True)
        return head(pooled)

    def _inner_predictions() -> list[SkillVector]:
        head.eval()
        with torch.no_grad():
            if static_encoder:
                logits = head(inner_x)
            else:
                token_embeddings, mask = backend.forward_batch([r.text for r in inner_records])
                pooled = (token_embeddings * mask.unsqueeze(-1)).sum(dim=1) / mask.sum(
                    dim=1, keepdim=True
                )
                logits = head(pooled)
        return _vectors_from_matrix(torch.sigmoid(logits) >= 0.5)

    generator = torch.Generator().manual_seed(config.seed)
    losses: list[float] = []
    inner_em: list[float] = []
    inner_macro: list[float] = []
    best_em = -1.0
    best_epoch = 0
    best_state: dict | None = None
    best_encoder_state: dict | None = None
    n_fit = len(fit_records)

    for epoch in range(1, config.epochs + 1):
        order = torch.randperm(n_fit, generator=generator)
        epoch_loss = 0.0
        batches = 0
        for offset in range(0, n_fit, config.batch_size):
            indices = order[offset : offset + config.batch_size]
            if len(indices) < 2:
                continue  # batch-norm needs more than one sample in train mode
            optimizer.zero_grad()
            logits = _forward_fit(indices, "train")
            loss = weighted_bce_loss(logits, fit_targets[indices], weights)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} (batch {batches}); "
                    f"check learning rates and input scaling"
                )
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            batches += 1
        losses.append(epoch_loss / max(batches, 1))

        preds = _inner_predictions()
        em = evaluation.exact_match(inner_truths, preds)
        _, _, _, macro = evaluation.per_skill_prf(inner_truths, preds)
        inner_em.append(em)
        inner_macro.append(macro)

        if em > best_em:  # strict: ties keep the earlier epoch
            best_em = em
            best_epoch = epoch
            best_state = copy.deepcopy(head.state_dict())
            if not static_encoder:
                best_encoder_state = copy.deepcopy(backend.trained_state_dict())
        elif epoch - best_epoch >= config.patience:
            break

    assert best_state is not None
    head.load_state_dict(best_state)
    if best_encoder_state is not None:
        backend.load_trained_state_dict(best_encoder_state)
    head.eval()

    report = TrainReport(
        epochs_run=len(losses),
        best_epoch=best_epoch,
        best_inner_em=best_em,
        train_loss=tuple(losses),
        inner_em=tuple(inner_em),
        inner_macro_f1=tuple(inner_macro),
        pos_weights=pos.weights,
        pos_weight_warnings=pos.warnings,
        wall_time_s=time.perf_counter() - start,
        config_hash=config.config_hash(),
    )
    model = MemberModel(
        backend=backend,
        head=head,
        thresholds=(0.5,) * NUM_SKILLS,
        metadata={
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "best_epoch": best_epoch,
        },
        name=f"{backend.name}-member-seed{config.seed}",
    )
    return model, report


# -- threshold tuning ------------------------------------------------------


@dataclass(frozen=True)
class ThresholdSet:
    """Tuned per-skill thresholds plus the tuning-split metric snapshot."""

    thresholds: tuple[float, ...]
    objective: str
    snapshot: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "objective": self.objective,
            "snapshot": self.snapshot,
        }


def _binary_f1(labels: Sequence[bool], predictions: Sequence[bool]) -> float:
    tp = sum(1 for y, p in zip(labels, predictions) if y and p)
    fp = sum(1 for y, p in zip(labels, predictions) if not y and p)
    fn = sum(1 for y, p in zip(labels, predictions) if y and not p)
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator else 1.0


def threshold_grid(step: float) -> tuple[float, ...]:
    """{step, 2*step, ..., 1-step} plus 0.5, sorted ascending."""
    if not 0.0 < step <= 0.1:
        raise ArgumentError("grid step must lie in (0, 0.1]")
    upper = math.floor((1.0 - step) / step + 1e-9)
    values = {round(i * step, 10) for i in range(1, upper + 1)}
    values.add(0.5)
    return tuple(sorted(values))


def tune_thresholds_on_probabilities(
    probabilities: Sequence[Sequence[float]],
    labels: Sequence[SkillVector],
    step: float = 0.05,
) -> ThresholdSet:
    """Pick each skill's threshold independently to maximize its F1 on the split.

    Ties prefer the threshold closest to 0.5, then the smaller one, so tuning
    on an already-separated skill returns exactly 0.5.
    """
    if not probabilities:
        raise ArgumentError("tuning split must be non-empty")
    if len(probabilities) != len(labels):
        raise ArgumentError("probabilities and labels must align")
    grid = threshold_grid(step)
    chosen: list[float] = []
    snapshot: dict = {"n": len(labels), "per_skill": {}}
    for i, name in enumerate(SKILLS):
        column = [row[i] for row in probabilities]
        truth = [vec.bits[i] for vec in labels]
        best_key: tuple[float, float, float] | None = None
        best_tau = 0.5
        for tau in grid:
            f1 = _binary_f1(truth, [p >= tau for p in column])
            key = (f1, -abs(tau - 0.5), -tau)
            if best_key is None or key > best_key:
                best_key = key
                best_tau = tau
        chosen.append(best_tau)
        snapshot["per_skill"][name] = {
            "threshold": best_tau,
            "f1_tuned": best_key[0] if best_key else 1.0,
            "f1_at_0.5": _binary_f1(truth, [p >= 0.5 for p in column]),
        }
    return ThresholdSet(thresholds=tuple(chosen), objective="per-skill F1", snapshot=snapshot)


def tune_thresholds(model, records: Sequence[TaskRecord], step: float = 0.05) -> ThresholdSet:
    """Tune thresholds for a model on a validation record list."""
    if not records:
        raise ArgumentError("tuning split must be non-empty")
    probabilities = [model.predict(r.text).probabilities for r in records]
    return tune_thresholds_on_probabilities(probabilities, [r.skills for r in records], step)


def threshold_comparison(model, records: Sequence[TaskRecord], tuned: Sequence[float]) -> dict:
    """Held-out exact match under fixed 0.5 thresholds vs a tuned set, side by side."""
    if not records:
        raise ArgumentError("held-out split must be non-empty")
    truths = [r.skills for r in records]
    probabilities = [model.predict(r.text).probabilities for r in records]
    fixed_preds = [apply_thresholds(p, (0.5,) * NUM_SKILLS) for p in probabilities]
    tuned_preds = [apply_thresholds(p, tuple(tuned)) for p in probabilities]
    return {
        "n": len(records),
        "exact_match_fixed_0.5": evaluation.exact_match(truths, fixed_preds),
        "exact_match_tuned": evaluation.exact_match(truths, tuned_preds),
        "tuned_thresholds": [float(t) for t in tuned],
    }
