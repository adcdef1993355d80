"""Encoder backends, mask-weighted mean pooling, classifier head, and ensembles.

A member model = one encoder backend + a four-layer classifier head emitting
six logits. An ensemble averages its members' sigmoid probabilities
element-wise and applies its own thresholds (probability >= threshold predicts
positive; the tie at equality is positive by contract).

The default offline backend is a deterministic signed-hash bag-of-words
encoder, so the full pipeline runs without downloading any pretrained
checkpoint. Adapters for pretrained transformer encoders plug into the same
interface and support partial unfreezing of the top blocks.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np
import torch
from torch import nn

from skillroute.core import NUM_SKILLS, ArgumentError, SkillrouteError, SkillVector

BUNDLE_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_DTYPES = {
    "float32": (torch.float32, "<f4"),
    "float64": (torch.float64, "<f8"),
    "int64": (torch.int64, "<i8"),
}
_TORCH_TO_NAME = {torch_dtype: name for name, (torch_dtype, _) in _DTYPES.items()}


class BundleError(SkillrouteError):
    """A model bundle failed to save or load (missing backend, bad checksum, ...)."""


# -- backends ----------------------------------------------------------


@dataclass(frozen=True)
class TokenEncoding:
    """Per-token embeddings plus the attention mask used for pooling."""

    embeddings: torch.Tensor  # [T, dim] float32
    mask: torch.Tensor  # [T] float32, 0/1
    truncated: bool = False


class EncoderBackend(Protocol):
    name: str
    dim: int
    max_tokens: int

    def encode(self, text: str) -> TokenEncoding: ...

    def trainable_modules(self, k: int) -> list[nn.Module]: ...

    def trained_state_dict(self) -> dict[str, torch.Tensor]: ...

    def load_trained_state_dict(self, state: Mapping[str, torch.Tensor]) -> None: ...

    def spec(self) -> dict: ...


class HashingBackend:
    """Deterministic signed-hash bag-of-words encoder.

    Each lowercased alphanumeric token maps to one signed basis vector
    (index and sign from a keyless blake2b digest), the attention mask is
    all-ones, and mean pooling therefore yields a normalized hashed
    bag-of-words. No trainable layers; identical output across processes.
    """

    def __init__(self, dim: int = 256, max_tokens: int = 256):
        self.name = "hashing"
        self.dim = int(dim)
        self.max_tokens = int(max_tokens)

    def encode(self, text: str) -> TokenEncoding:
        tokens = _TOKEN_RE.findall(text.lower())
        truncated = len(tokens) > self.max_tokens
        tokens = tokens[: self.max_tokens]
        count = max(len(tokens), 1)  # keep one (zero) slot so the mask never sums to 0
        embeddings = torch.zeros((count, self.dim), dtype=torch.float32)
        for row, token in enumerate(tokens):
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            value = int.from_bytes(digest, "little")
            sign = 1.0 if (value >> 63) & 1 == 0 else -1.0
            embeddings[row, value % self.dim] = sign
        return TokenEncoding(
            embeddings=embeddings,
            mask=torch.ones(count, dtype=torch.float32),
            truncated=truncated,
        )

    def trainable_modules(self, k: int) -> list[nn.Module]:
        return []

    def trained_state_dict(self) -> dict[str, torch.Tensor]:
        return {}

    def load_trained_state_dict(self, state: Mapping[str, torch.Tensor]) -> None:
        if state:
            raise BundleError("hashing backend carries no trainable weights")

    def spec(self) -> dict:
        return {"name": "hashing", "dim": self.dim, "max_tokens": self.max_tokens}


class TransformerBackend:
    """Adapter over a pretrained transformer sentence encoder.

    The checkpoint must be available to the ``transformers`` library (local
    cache or hub). ``mark_trainable(k)`` freezes the backbone and unfreezes the
    top k transformer blocks, which then travel with the model bundle.
    """

    def __init__(self, model_name: str, max_tokens: int = 256):
        try:
            from transformers import AutoModel, AutoTokenizer  # heavyweight, import lazily
        except ImportError as err:  # pragma: no cover - optional dependency
            raise BundleError(f"transformers is required for backend {model_name!r}") from err
        self.name = model_name
        self.max_tokens = int(max_tokens)
        self._tokenizer = AutoTokenizer.from_pretrained(model_name)
        self._model = AutoModel.from_pretrained(model_name)
        self._model.eval()
        self.dim = int(self._model.config.hidden_size)
        self._unfrozen_k = 0

    def _blocks(self) -> list[nn.Module]:
        encoder = getattr(self._model, "encoder", None)
        layers = getattr(encoder, "layer", None)
        if layers is None:
            raise BundleError(f"backend {self.name!r} does not expose transformer blocks")
        return list(layers)

    def encode(self, text: str) -> TokenEncoding:
        full = self._tokenizer(text, return_tensors="pt")
        truncated = full["input_ids"].shape[1] > self.max_tokens
        batch = self._tokenizer(
            text, truncation=True, max_length=self.max_tokens, return_tensors="pt"
        )
        with torch.no_grad():
            output = self._model(**batch)
        return TokenEncoding(
            embeddings=output.last_hidden_state[0],
            mask=batch["attention_mask"][0].to(torch.float32),
            truncated=truncated,
        )

    def forward_batch(self, texts: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
        """Gradient-enabled batch forward for training; [B, T, dim] plus mask."""
        batch = self._tokenizer(
            list(texts),
            truncation=True,
            max_length=self.max_tokens,
            padding=True,
            return_tensors="pt",
        )
        output = self._model(**batch)
        return output.last_hidden_state, batch["attention_mask"].to(torch.float32)

    def trainable_modules(self, k: int) -> list[nn.Module]:
        blocks = self._blocks()
        return blocks[-k:] if k > 0 else []

    def mark_trainable(self, k: int) -> None:
        for param in self._model.parameters():
            param.requires_grad_(False)
        for module in self.trainable_modules(k):
            for param in module.parameters():
                param.requires_grad_(True)
        self._unfrozen_k = k

    def trained_state_dict(self) -> dict[str, torch.Tensor]:
        return {
            name: param.detach().clone()
            for name, param in self._model.named_parameters()
            if param.requires_grad
        }

    def load_trained_state_dict(self, state: Mapping[str, torch.Tensor]) -> None:
        known = dict(self._model.named_parameters())
        missing = [name for name in state if name not in known]
        if missing:
            raise BundleError(f"backend {self.name!r} has no parameters named {missing}")
        with torch.no_grad():
            for name, tensor in state.items():
                known[name].copy_(tensor)

    def spec(self) -> dict:
        return {
            "name": "transformer",
            "model_name": self.name,
            "max_tokens": self.max_tokens,
            "unfrozen_blocks": self._unfrozen_k,
        }


_BACKEND_FACTORIES: dict[str, Callable[[dict], object]] = {
    "hashing": lambda spec: HashingBackend(
        dim=spec.get("dim", 256), max_tokens=spec.get("max_tokens", 256)
    ),
    "transformer": lambda spec: TransformerBackend(
        model_name=spec["model_name"], max_tokens=spec.get("max_tokens", 256)
    ),
}


def register_backend(name: str, factory: Callable[[dict], object]) -> None:
    _BACKEND_FACTORIES[name] = factory


def build_backend(spec: Mapping) -> EncoderBackend:
    name = spec.get("name")
    factory = _BACKEND_FACTORIES.get(name)
    if factory is None:
        raise BundleError(f'backend "{name}" is not registered')
    return factory(dict(spec))


# -- pooling -----------------------------------------------------------


@dataclass(frozen=True)
class PooledEmbedding:
    vector: torch.Tensor  # [dim]
    truncated: bool


def mean_pool(token_embeddings: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Attention-mask-weighted mean over token embeddings: sum(m_i * t_i) / sum(m_i)."""
    if token_embeddings.dim() != 2 or mask.dim() != 1:
        raise ArgumentError("expected [T, dim] embeddings and a [T] mask")
    if token_embeddings.shape[0] != mask.shape[0]:
        raise ArgumentError("mask length must equal token count")
    weights = mask.to(token_embeddings.dtype)
    total = weights.sum()
    if total.item() <= 0:
        raise ArgumentError("attention mask selects no tokens")
    return (token_embeddings * weights.unsqueeze(-1)).sum(dim=0) / total


def embed(backend: EncoderBackend, text: str) -> PooledEmbedding:
    """Pool one text into a fixed [dim] vector; flags truncation, never errors on length."""
    if not isinstance(text, str) or not text.strip():
        raise ArgumentError("text must be non-empty")
    encoding = backend.encode(text)
    return PooledEmbedding(
        vector=mean_pool(encoding.embeddings, encoding.mask), truncated=encoding.truncated
    )


# -- classifier head ---------------------------------------------------


def default_hidden_dims(input_dim: int) -> tuple[int, int, int]:
    # Funnel capped at twice the embedding width for small backends.
    h1 = min(512, 2 * input_dim)
    h2 = min(256, h1)
    h3 = min(128, h2)
    return (h1, h2, h3)


class ClassifierHead(nn.Module):
    """Four affine layers; batch-norm, GELU, and dropout after each hidden layer."""

    def __init__(
        self,
        input_dim: int,
        hidden_dims: Sequence[int] | None = None,
        dropout: float = 0.3,
    ):
        super().__init__()
        self.input_dim = int(input_dim)
        self.hidden_dims = tuple(hidden_dims) if hidden_dims else default_hidden_dims(input_dim)
        self.dropout_rate = float(dropout)
        layers: list[nn.Module] = []
        previous = self.input_dim
        for width in self.hidden_dims:
            layers.append(nn.Linear(previous, width))
            layers.append(nn.BatchNorm1d(width))
            layers.append(nn.GELU())
            layers.append(nn.Dropout(self.dropout_rate))
            previous = width
        layers.append(nn.Linear(previous, NUM_SKILLS))
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        squeeze = x.dim() == 1
        if squeeze:
            x = x.unsqueeze(0)
        out = self.net(x)
        return out.squeeze(0) if squeeze else out

    def arch_spec(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "dropout": self.dropout_rate,
        }


def head_forward(head: ClassifierHead, embedding: torch.Tensor, mode: str = "eval") -> torch.Tensor:
    """Run the head in the requested mode; eval mode is deterministic and grad-free."""
    if mode not in ("train", "eval"):
        raise ArgumentError(f'mode must be "train" or "eval", got {mode!r}')
    if embedding.shape[-1] != head.input_dim:
        raise ArgumentError(
            f"embedding dim {embedding.shape[-1]} does not match head input dim {head.input_dim}"
        )
    was_training = head.training
    head.train(mode == "train")
    try:
        if mode == "eval":
            with torch.no_grad():
                return head(embedding)
        return head(embedding)
    finally:
        head.train(was_training)


# -- thresholding and prediction ----------------------------------------


def _validate_thresholds(thresholds: Sequence[float]) -> tuple[float, ...]:
    if len(thresholds) != NUM_SKILLS:
        raise ArgumentError(f"thresholds must have length {NUM_SKILLS}, got {len(thresholds)}")
    values = tuple(float(t) for t in thresholds)
    for value in values:
        if not 0.0 < value < 1.0:
            raise ArgumentError(f"thresholds must lie strictly inside (0, 1), got {value}")
    return values


def apply_thresholds(probabilities: Sequence[float], thresholds: Sequence[float]) -> SkillVector:
    """bit[i] = probabilities[i] >= thresholds[i]; equality predicts positive."""
    if len(probabilities) != NUM_SKILLS:
        raise ArgumentError(
            f"probabilities must have length {NUM_SKILLS}, got {len(probabilities)}"
        )
    values = _validate_thresholds(thresholds)
    return SkillVector.from_bits(
        [float(p) >= t for p, t in zip(probabilities, values)]
    )


@dataclass(frozen=True)
class PredictionResult:
    """Probabilities plus the thresholded skill vector for one text."""

    probabilities: tuple[float, ...]
    skills: SkillVector
    member_probabilities: tuple[tuple[float, ...], ...]
    latency_ms: float
    truncated: bool = False


@dataclass
class MemberModel:
    """One encoder backend plus classifier head plus per-skill thresholds."""

    backend: EncoderBackend
    head: ClassifierHead
    thresholds: tuple[float, ...] = (0.5,) * NUM_SKILLS
    metadata: dict = field(default_factory=dict)
    name: str = "member"

    def __post_init__(self) -> None:
        self.thresholds = _validate_thresholds(self.thresholds)
        self.head.eval()

    def probabilities(self, text: str) -> tuple[tuple[float, ...], bool]:
        pooled = embed(self.backend, text)
        logits = head_forward(self.head, pooled.vector, "eval")
        probs = torch.sigmoid(logits)
        return tuple(float(p) for p in probs), pooled.truncated

    def predict(self, text: str) -> PredictionResult:
        start = time.perf_counter()
        probs, truncated = self.probabilities(text)
        skills = apply_thresholds(probs, self.thresholds)
        return PredictionResult(
            probabilities=probs,
            skills=skills,
            member_probabilities=(probs,),
            latency_ms=(time.perf_counter() - start) * 1000.0,
            truncated=truncated,
        )


@dataclass
class EnsembleModel:
    """Averages members' sigmoid probabilities element-wise, then thresholds."""

    members: Sequence
    thresholds: tuple[float, ...] = (0.5,) * NUM_SKILLS
    name: str = "ensemble"

    def __post_init__(self) -> None:
        if not self.members:
            raise ArgumentError("ensemble needs at least one member")
        self.members = list(self.members)
        self.thresholds = _validate_thresholds(self.thresholds)

    def predict(self, text: str) -> PredictionResult:
        start = time.perf_counter()
        results = [member.predict(text) for member in self.members]
        count = len(results)
        probs = tuple(
            sum(r.probabilities[i] for r in results) / count for i in range(NUM_SKILLS)
        )
        return PredictionResult(
            probabilities=probs,
            skills=apply_thresholds(probs, self.thresholds),
            member_probabilities=tuple(r.probabilities for r in results),
            latency_ms=(time.perf_counter() - start) * 1000.0,
            truncated=any(r.truncated for r in results),
        )


# -- bundle persistence --------------------------------------------------


def _write_tensor(tensor: torch.Tensor, path: Path) -> dict:
    dtype_name = _TORCH_TO_NAME.get(tensor.dtype)
    if dtype_name is None:
        raise BundleError(f"unsupported tensor dtype {tensor.dtype}")
    _, np_dtype = _DTYPES[dtype_name]
    array = tensor.detach().cpu().numpy().astype(np_dtype, copy=False)
    data = array.tobytes(order="C")
    path.write_bytes(data)
    return {
        "dtype": dtype_name,
        "shape": list(tensor.shape),
        "sha256": hashlib.sha256(data).hexdigest(),
    }


def _read_tensor(path: Path, entry: Mapping) -> torch.Tensor:
    if entry["dtype"] not in _DTYPES:
        raise BundleError(f"unsupported tensor dtype {entry['dtype']!r} in manifest")
    torch_dtype, np_dtype = _DTYPES[entry["dtype"]]
    try:
        data = path.read_bytes()
    except OSError as err:
        raise BundleError(f"missing tensor blob {path.name}: {err}") from err
    if hashlib.sha256(data).hexdigest() != entry["sha256"]:
        raise BundleError(f"checksum mismatch for {path.name}")
    shape = tuple(int(d) for d in entry["shape"])
    expected = int(np.prod(shape, dtype=np.int64)) * np.dtype(np_dtype).itemsize
    if len(data) != expected:
        raise BundleError(f"tensor blob {path.name} has {len(data)} bytes, expected {expected}")
    array = np.frombuffer(data, dtype=np_dtype).reshape(shape).copy()
    return torch.from_numpy(array).to(torch_dtype)


def _save_member(model: MemberModel, path: Path) -> None:
    tensor_dir = path / "tensors"
    tensor_dir.mkdir(parents=True, exist_ok=True)
    tensors: dict[str, dict] = {}
    named: dict[str, torch.Tensor] = {
        f"head.{key}": value for key, value in model.head.state_dict().items()
    }
    named.update(
        {f"encoder.{key}": value for key, value in model.backend.trained_state_dict().items()}
    )
    for key, tensor in named.items():
        filename = f"{key}.bin"
        entry = _write_tensor(tensor, tensor_dir / filename)
        entry["file"] = f"tensors/{filename}"
        tensors[key] = entry
    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "kind": "member",
        "name": model.name,
        "backend": model.backend.spec(),
        "head": model.head.arch_spec(),
        "thresholds": list(model.thresholds),
        "config_hash": model.metadata.get("config_hash", ""),
        "metadata": model.metadata,
        "tensor_layout": "raw little-endian binary, C-order; dtype/shape/sha256 per entry",
        "tensors": tensors,
    }
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_member(path: Path, manifest: Mapping) -> MemberModel:
    backend = build_backend(manifest["backend"])
    head = ClassifierHead(**manifest["head"])
    head_state: dict[str, torch.Tensor] = {}
    encoder_state: dict[str, torch.Tensor] = {}
    for key, entry in manifest["tensors"].items():
        tensor = _read_tensor(path / entry["file"], entry)
        if key.startswith("head."):
            head_state[key[len("head.") :]] = tensor
        elif key.startswith("encoder."):
            encoder_state[key[len("encoder.") :]] = tensor
        else:
            raise BundleError(f"unrecognized tensor key {key!r}")
    try:
        head.load_state_dict(head_state, strict=True)
    except RuntimeError as err:
        raise BundleError(f"head weights do not match manifest architecture: {err}") from err
    if encoder_state:
        backend.load_trained_state_dict(encoder_state)
    head.eval()
    return MemberModel(
        backend=backend,
        head=head,
        thresholds=tuple(manifest["thresholds"]),
        metadata=dict(manifest.get("metadata", {})),
        name=manifest.get("name", "member"),
    )


def save_bundle(model: MemberModel | EnsembleModel, path: str | Path) -> None:
    """Write a model bundle directory (manifest + checksummed weight blobs)."""
    path = Path(path)
    if isinstance(model, MemberModel):
        _save_member(model, path)
        return
    if isinstance(model, EnsembleModel):
        path.mkdir(parents=True, exist_ok=True)
        member_dirs = []
        for index, member in enumerate(model.members):
            relative = f"members/{index}"
            _save_member(member, path / relative)
            member_dirs.append(relative)
        manifest = {
            "format_version": BUNDLE_FORMAT_VERSION,
            "kind": "ensemble",
            "name": model.name,
            "thresholds": list(model.thresholds),
            "members": member_dirs,
        }
        (path / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        return
    raise ArgumentError(f"cannot bundle object of type {type(model).__name__}")


def load_bundle(path: str | Path) -> MemberModel | EnsembleModel:
    """Load a bundle saved by :func:`save_bundle`; verifies every checksum.

    Raises:
        BundleError: unknown backend, corrupted blob, or malformed manifest.
    """
    path = Path(path)
    manifest_path = path / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as err:
        raise BundleError(f"cannot read bundle manifest at {manifest_path}: {err}") from err
    except json.JSONDecodeError as err:
        raise BundleError(f"bundle manifest at {manifest_path} is not valid JSON: {err}") from err
    version = manifest.get("format_version")
    if version != BUNDLE_FORMAT_VERSION:
        raise BundleError(f"unsupported bundle format version {version!r}")
    kind = manifest.get("kind")
    if kind == "member":
        return _load_member(path, manifest)
    if kind == "ensemble":
        members = [
            load_bundle(path / relative) for relative in manifest.get("members", [])
        ]
        if not members or not all(isinstance(m, MemberModel) for m in members):
            raise BundleError("ensemble bundle must list member bundles")
        return EnsembleModel(
            members=members,
            thresholds=tuple(manifest["thresholds"]),
            name=manifest.get("name", "ensemble"),
        )
    raise BundleError(f"unknown bundle kind {kind!r}")
