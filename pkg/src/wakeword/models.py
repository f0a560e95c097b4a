"""Model architectures and the portable bundle format.

The primary architecture is res8: a small residual CNN over log-mel windows.
A trained model exports to a self-describing directory bundle (manifest.json
+ params.bin) that carries everything inference needs: architecture config,
parameters, batchnorm buffers, frontend settings, normalization stats, and
the label set. The byte format is the contract consumed by the browser demo.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .features import DatasetStats, FrontendConfig
from .layers import BatchNorm2d, Conv2d, Linear, Module
from .seeding import rng_for
from .tensor import Tensor

FORMAT_VERSION = 1


class BundleError(ValueError):
    """Unreadable or inconsistent model bundle."""


@dataclass(frozen=True)
class Res8Config:
    n_labels: int
    n_maps: int = 45
    pool: tuple[int, int] = (4, 3)
    n_blocks: int = 3

    def __post_init__(self):
        if self.n_labels < 2:
            raise ValueError(f"n_labels must be >= 2, got {self.n_labels}")
        if self.n_maps < 1 or self.n_blocks < 1:
            raise ValueError("n_maps and n_blocks must be positive")

    def to_dict(self) -> dict:
        return {
            "n_labels": self.n_labels,
            "n_maps": self.n_maps,
            "pool": list(self.pool),
            "n_blocks": self.n_blocks,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Res8Config":
        return cls(
            n_labels=d["n_labels"],
            n_maps=d["n_maps"],
            pool=tuple(d["pool"]),
            n_blocks=d["n_blocks"],
        )


class ResidualBlock(Module):
    """conv-bn-relu twice, identity skip around the pair, post-add relu."""

    def __init__(self, channels: int, rng: np.random.Generator, dtype):
        super().__init__()
        self.conv1 = Conv2d(channels, channels, 3, padding=1, bias=False, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(channels, dtype=dtype)
        self.conv2 = Conv2d(channels, channels, 3, padding=1, bias=False, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        h = T.relu(self.bn1(self.conv1(x)))
        h = T.relu(self.bn2(self.conv2(h)))
        return T.relu(T.add(x, h))


class Res8(Module):
    """Input (N, 1, T, M) log-mel windows -> (N, n_labels) log-probabilities."""

    def __init__(self, config: Res8Config, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.config = config
        self.conv0 = Conv2d(1, config.n_maps, 3, padding=1, bias=True, rng=rng, dtype=dtype)
        self.blocks = [ResidualBlock(config.n_maps, rng, dtype) for _ in range(config.n_blocks)]
        self.head = Linear(config.n_maps, config.n_labels, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv0(x)
        h = T.avg_pool2d(h, self.config.pool)
        for block in self.blocks:
            h = block(h)
        h = T.global_avg_pool(h)
        return T.log_softmax(self.head(h), axis=-1)


def build_res8(config: Res8Config, seed: int = 0, dtype=np.float32) -> Res8:
    """res8 with Kaiming-uniform convs/linear and identity batchnorms."""
    return Res8(config, rng_for(seed, "res8-init"), dtype=dtype)


def parameter_count(model: Module) -> int:
    return sum(p.data.size for _, p in model.named_parameters())


@dataclass(frozen=True)
class ModelBundle:
    """Everything needed to run the model: weights plus frontend context.

    `labels[i]` names class i; `vocabulary` is the wake phrase in firing
    order (a subset of labels) and is empty for plain classification models.
    """

    model: Res8
    config: Res8Config
    frontend: FrontendConfig
    stats: DatasetStats | None
    labels: tuple[str, ...]
    vocabulary: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) != self.config.n_labels:
            raise ValueError(
                f"{len(self.labels)} labels for a {self.config.n_labels}-class model"
            )
        missing = [w for w in self.vocabulary if w not in self.labels]
        if missing:
            raise ValueError(f"vocabulary words {missing} are not labels")

    def predict_log_probs(self, batch: np.ndarray) -> np.ndarray:
        """Eval-mode forward on a (N, 1, T, M) array, gradient-free."""
        was_training = self.model.training
        self.model.eval()
        try:
            with T.no_grad():
                return self.model(Tensor(np.asarray(batch, dtype=np.float32))).data
        finally:
            self.model.train(was_training)


def _blob_tables(model: Module):
    entries = []
    pieces = []
    offset = 0
    params_table = []
    for name, p in model.named_parameters():
        entries.append((params_table, name, p.data))
    buffers_table = []
    for name, b in model.named_buffers():
        entries.append((buffers_table, name, b))
    for table, name, arr in entries:
        flat = np.ascontiguousarray(arr, dtype="<f4").ravel()
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "len": int(flat.size)})
        pieces.append(flat)
        offset += flat.size
    blob = b"".join(piece.tobytes() for piece in pieces)
    return params_table, buffers_table, blob


def export_bundle(bundle: ModelBundle, path: str | Path) -> None:
    """Write the bundle directory: manifest.json + params.bin (LE float32)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    params_table, buffers_table, blob = _blob_tables(bundle.model)
    manifest = {
        "format_version": FORMAT_VERSION,
        "arch": "res8",
        "config": bundle.config.to_dict(),
        "params": params_table,
        "buffers": buffers_table,
        "frontend": bundle.frontend.to_dict(),
        "stats": bundle.stats.to_dict() if bundle.stats is not None else None,
        "labels": list(bundle.labels),
        "vocabulary": list(bundle.vocabulary),
        "crc32": zlib.crc32(blob) & 0xFFFFFFFF,
    }
    (path / "params.bin").write_bytes(blob)
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_named(table: list[dict], values: np.ndarray, expected: list, kind: str, path: Path):
    by_name = {entry["name"]: entry for entry in table}
    for name, target in expected:
        entry = by_name.pop(name, None)
        if entry is None:
            raise BundleError(f"{path}: manifest is missing {kind} {name!r}")
        if tuple(entry["shape"]) != target.shape:
            raise BundleError(
                f"{path}: {kind} {name!r} shape {entry['shape']} != model shape {list(target.shape)}"
            )
        start, count = entry["offset"], entry["len"]
        if count != target.size or start + count > values.size:
            raise BundleError(f"{path}: {kind} {name!r} blob slice [{start}:{start + count}] invalid")
        target[...] = values[start : start + count].reshape(target.shape)
    if by_name:
        raise BundleError(f"{path}: manifest lists unknown {kind}s {sorted(by_name)}")


def import_bundle(path: str | Path) -> ModelBundle:
    """Load and validate a bundle directory; the model comes back in eval mode."""
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise BundleError(f"{path}: missing manifest.json") from exc
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path}: unreadable manifest: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise BundleError(
            f"{path}: format_version {manifest.get('format_version')!r} unsupported "
            f"(expected {FORMAT_VERSION})"
        )
    if manifest.get("arch") != "res8":
        raise BundleError(f"{path}: unknown architecture {manifest.get('arch')!r}")
    try:
        blob = (path / "params.bin").read_bytes()
    except FileNotFoundError as exc:
        raise BundleError(f"{path}: missing params.bin") from exc
    if (zlib.crc32(blob) & 0xFFFFFFFF) != manifest["crc32"]:
        raise BundleError(f"{path}: params.bin checksum mismatch (corrupt or truncated)")

    config = Res8Config.from_dict(manifest["config"])
    model = build_res8(config)
    values = np.frombuffer(blob, dtype="<f4")
    _load_named(
        manifest["params"],
        values,
        [(name, p.data) for name, p in model.named_parameters()],
        "parameter",
        path,
    )
    _load_named(
        manifest["buffers"],
        values,
        [(name, b) for name, b in model.named_buffers()],
        "buffer",
        path,
    )
    model.eval()
    stats = manifest.get("stats")
    return ModelBundle(
        model=model,
        config=config,
        frontend=FrontendConfig.from_dict(manifest["frontend"]),
        stats=DatasetStats.from_dict(stats) if stats is not None else None,
        labels=tuple(manifest["labels"]),
        vocabulary=tuple(manifest.get("vocabulary", ())),
    )
