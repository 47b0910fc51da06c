"""The five VQA architectures and their ablation toggles.

Every model shares the same image module (three stride-2 conv/BN/ReLU
blocks), language module (embedding + LSTM, or GRU for FiLM) and
classifier; only the core that fuses the two modalities differs.
"""
from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, replace

import numpy as np

from .language import VOCABULARY
from .nn import GRU, LSTM, BatchNorm, Conv2d, Embedding, Linear, Module, Tensor, concat, relu, tanh
from .nn import functional as F
from .nn.tensor import broadcast_to
from .scene import coordinate_map

CORES = ("cnn_lstm", "san", "relnet", "film", "mc")
CORE_NAMES = {"cnnlstm": "cnn_lstm", "san": "san", "relnet": "relnet", "film": "film", "mc": "mc"}
FUSIONS = ("concat", "film")
LAYER_KINDS = ("fully_connected", "convolutional")
MODALITIES = ("both", "image", "language")


class ConfigError(ValueError):
    """Illegal model configuration."""


@dataclass(frozen=True)
class Preset:
    name: str
    image_size: int
    channels: int
    embedding: int
    recurrent: int
    relnet_recurrent: int
    classifier: int
    san_dim: int
    relnet_projection: int
    relnet_mlp: int
    film_output: int
    core_dim: int


PRESETS = {
    "full": Preset("full", 64, 128, 128, 512, 128, 1024, 256, 32, 256, 128, 512),
    "desk": Preset("desk", 32, 64, 128, 256, 128, 512, 256, 32, 128, 128, 256),
}


@dataclass(frozen=True)
class ModelConfig:
    core: str = "cnn_lstm"
    coords: bool | None = None
    fusion: str = "concat"
    core_layers: str | None = None
    early_fusion: bool = False
    film_layer_count: int = 4
    preset: str = "full"
    modality: str = "both"
    san_rounds: int = 2

    def resolved(self) -> "ModelConfig":
        """Fill core-dependent defaults: FiLM and RelNet carry coordinates, FiLM uses convolutions."""
        coords = self.coords if self.coords is not None else self.core in ("film", "relnet")
        layers = self.core_layers or ("convolutional" if self.core == "film" else "fully_connected")
        return replace(self, coords=coords, core_layers=layers)

    def validate(self) -> "ModelConfig":
        c = self.resolved()
        if c.core not in CORES:
            raise ConfigError(f"unknown core {c.core!r}")
        if c.fusion not in FUSIONS:
            raise ConfigError(f"unknown fusion {c.fusion!r}")
        if c.core_layers not in LAYER_KINDS:
            raise ConfigError(f"unknown core layer kind {c.core_layers!r}")
        if c.preset not in PRESETS:
            raise ConfigError(f"unknown preset {c.preset!r}")
        if c.modality not in MODALITIES:
            raise ConfigError(f"unknown modality {c.modality!r}")
        if c.modality != "both" and c.core != "cnn_lstm":
            raise ConfigError("unimodal baselines are built on the cnn_lstm core")
        if c.core == "relnet" and c.core_layers == "convolutional":
            raise ConfigError("relnet: pairwise combinations destroy the 2-D arrangement convolutions need")
        if c.core == "relnet" and c.fusion == "film":
            raise ConfigError("relnet does not support FiLM fusion")
        if c.core == "san" and c.fusion == "film":
            raise ConfigError("san: FiLM fusion has no place in the stacked attention layer")
        if c.core == "san" and c.core_layers == "convolutional":
            raise ConfigError("san does not support convolutional core layers")
        if c.early_fusion and c.core != "cnn_lstm":
            raise ConfigError("early fusion is a cnn_lstm toggle")
        if c.core == "cnn_lstm" and not c.early_fusion and (c.fusion == "film" or c.core_layers == "convolutional"):
            raise ConfigError("cnn_lstm: FiLM fusion and convolutions need early fusion")
        if c.film_layer_count < 1:
            raise ConfigError("film_layer_count must be at least 1")
        if c.san_rounds < 1:
            raise ConfigError("san_rounds must be at least 1")
        return c

    @property
    def recurrent_kind(self) -> str:
        return "gru" if self.core == "film" else "lstm"

    @property
    def name(self) -> str:
        """Legend-style name, e.g. ``mc+coords+FiLM+convs`` or ``film--coords``."""
        c = self.resolved()
        if c.modality == "image":
            return "cnn"
        if c.modality == "language":
            return "lstm"
        base = {v: k for k, v in CORE_NAMES.items()}[c.core]
        parts = [base]
        if c.core == "film":
            if not c.coords:
                parts.append("--coords")
            if c.film_layer_count == 1:
                parts.append("--layers")
            elif c.film_layer_count != 4:
                parts.append(f"--layers{c.film_layer_count}")
            if c.core_layers == "fully_connected":
                parts.append("--convs")
            return "".join(parts)
        if c.core == "relnet":
            return base if c.coords else base + "--coords"
        if c.early_fusion:
            parts.append("+early")
        if c.coords:
            parts.append("+coords")
        if c.fusion == "film":
            parts.append("+FiLM")
        if c.core_layers == "convolutional":
            parts.append("+convs")
        return "".join(parts)

    @classmethod
    def from_name(cls, name: str, preset: str = "full") -> "ModelConfig":
        if name == "cnn":
            return cls(core="cnn_lstm", modality="image", preset=preset).validate()
        if name == "lstm":
            return cls(core="cnn_lstm", modality="language", preset=preset).validate()
        match = re.fullmatch(r"([a-z]+)((?:(?:\+|--)[A-Za-z]+\d*)*)", name)
        if not match or match.group(1) not in CORE_NAMES:
            raise ConfigError(f"cannot parse model name {name!r}")
        config = cls(core=CORE_NAMES[match.group(1)], preset=preset)
        for sign, toggle in re.findall(r"(\+|--)([A-Za-z]+\d*)", match.group(2)):
            on = sign == "+"
            if toggle == "coords":
                config = replace(config, coords=on)
            elif toggle == "FiLM":
                config = replace(config, fusion="film" if on else "concat")
            elif toggle == "convs":
                config = replace(config, core_layers="convolutional" if on else "fully_connected")
            elif toggle == "early":
                config = replace(config, early_fusion=on)
            elif toggle.startswith("layers") and not on:
                config = replace(config, film_layer_count=int(toggle[6:] or 1))
            else:
                raise ConfigError(f"unknown toggle {sign}{toggle} in {name!r}")
        return config.validate()

    def to_dict(self) -> dict:
        return asdict(self.resolved())

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        if "name" in data:
            return cls.from_name(data["name"], data.get("preset", "full"))
        return cls(**data).validate()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# legend variants: 5 cores with and without their headline toggles
NAMED_VARIANTS = (
    "cnnlstm", "cnnlstm+coords", "cnnlstm+early+FiLM+convs",
    "san", "san+coords",
    "relnet", "relnet--coords",
    "film", "film--coords",
    "mc", "mc+coords", "mc+FiLM+convs",
)

ABLATION_VARIANTS = {
    "film": ("film", "film--coords", "film--layers", "film--convs"),
    "mc": ("mc", "mc+coords", "mc+FiLM", "mc+convs", "mc+FiLM+convs", "mc+coords+FiLM+convs"),
    "cnnlstm": ("cnnlstm", "cnnlstm+early", "cnnlstm+coords", "cnnlstm+early+FiLM",
                "cnnlstm+early+convs", "cnnlstm+early+FiLM+convs"),
}


# -- shared modules ----------------------------------------------------------------

def append_coords(features: Tensor) -> Tensor:
    """Concatenate the (x, y) coordinate map as two extra channels."""
    n, h, w, _ = features.shape
    grid = coordinate_map(h, w).astype(features.dtype)
    return concat([features, Tensor(np.broadcast_to(grid, (n, h, w, 2)))], axis=-1)


class ImageModule(Module):
    def __init__(self, channels: int, rng: np.random.Generator, in_channels: int = 3, blocks: int = 3):
        self.convs = [Conv2d(in_channels if i == 0 else channels, channels, 3, rng, stride=2, bias=False)
                      for i in range(blocks)]
        self.norms = [BatchNorm(channels) for _ in range(blocks)]

    def forward(self, images: Tensor) -> Tensor:
        x = images
        for conv, norm in zip(self.convs, self.norms):
            x = relu(norm(conv(x)))
        return x


class LanguageModule(Module):
    def __init__(self, vocab_size: int, embedding: int, size: int, kind: str, rng: np.random.Generator):
        if kind not in ("lstm", "gru"):
            raise ConfigError(f"unknown recurrent kind {kind!r}")
        self.embedding = Embedding(vocab_size, embedding, rng)
        self.rnn = (GRU if kind == "gru" else LSTM)(embedding, size, rng)
        self.kind = kind
        self.size = size

    def forward(self, ids, lengths) -> Tensor:
        return self.rnn(self.embedding(ids), lengths)


class Classifier(Module):
    def __init__(self, in_features: int, hidden: int, rng: np.random.Generator, answers: int = 2):
        self.hidden = Linear(in_features, hidden, rng)
        self.norm = BatchNorm(hidden)
        self.output = Linear(hidden, answers, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.output(relu(self.norm(self.hidden(x))))


class FiLMGenerator(Module):
    """Language -> per-channel (gamma, beta); gamma starts near 1."""

    def __init__(self, in_features: int, channels: int, count: int, rng: np.random.Generator):
        self.linear = Linear(in_features, 2 * channels * count, rng)
        self.linear.weight.data *= 0.1
        bias = self.linear.bias.data.reshape(count, 2, channels)
        bias[:, 0] = 1.0
        self.channels = channels
        self.count = count

    def forward(self, sentence: Tensor) -> list[tuple[Tensor, Tensor]]:
        out = self.linear(sentence)
        c = self.channels
        return [(out[:, 2 * c * k:2 * c * k + c], out[:, 2 * c * k + c:2 * c * (k + 1)]) for k in range(self.count)]


def _layer(kind: str, in_features: int, out_features: int, rng: np.random.Generator) -> Module:
    if kind == "convolutional":
        return Conv2d(in_features, out_features, 3, rng)
    return Linear(in_features, out_features, rng)


# -- cores ------------------------------------------------------------------------------

class CNNLSTMCore(Module):
    """Late fusion by default: per-position projection, pooling, then concatenation.

    With ``early_fusion`` the sentence is fused with every position first
    (concatenation or FiLM) and processed by an fc or 3x3 conv layer before
    pooling.
    """

    def __init__(self, config: ModelConfig, channels: int, sentence: int, dim: int, rng: np.random.Generator):
        self.early = config.early_fusion
        self.fusion = config.fusion
        if self.early:
            if self.fusion == "film":
                self.film = FiLMGenerator(sentence, channels, 1, rng)
                width = channels
            else:
                width = channels + sentence
            self.layer = _layer(config.core_layers, width, dim, rng)
            self.hidden = Linear(dim, dim, rng)
        else:
            self.layer = Linear(channels, dim, rng)
            self.hidden = Linear(dim + sentence, dim, rng)
        self.out_dim = dim

    def forward(self, features: Tensor, sentence: Tensor) -> Tensor:
        n, h, w, _ = features.shape
        if not self.early:
            pooled = F.spatial_mean_pool(relu(self.layer(features)))
            return relu(self.hidden(concat([pooled, sentence], axis=-1)))
        if self.fusion == "film":
            (gamma, beta), = self.film(sentence)
            fused = F.film(features, gamma, beta)
        else:
            fused = concat([features, F.tile_positions(sentence, h, w)], axis=-1)
        return relu(self.hidden(F.spatial_mean_pool(relu(self.layer(fused)))))


class SANCore(Module):
    """Stacked attention: a language query repeatedly attends over the feature grid."""

    def __init__(self, channels: int, sentence: int, dim: int, rounds: int, rng: np.random.Generator):
        self.query = Linear(sentence, dim, rng)
        self.values = Linear(channels, dim, rng)
        self.attend_features = [Linear(dim, dim, rng) for _ in range(rounds)]
        self.attend_query = [Linear(dim, dim, rng) for _ in range(rounds)]
        self.attend_logit = [Linear(dim, 1, rng) for _ in range(rounds)]
        self.out_dim = dim
        self.last_attention: list[np.ndarray] = []

    def forward(self, features: Tensor, sentence: Tensor) -> Tensor:
        n, h, w, _ = features.shape
        u = self.query(sentence)
        v = self.values(features).reshape(n, h * w, self.out_dim)
        self.last_attention = []
        for wf, wq, wp in zip(self.attend_features, self.attend_query, self.attend_logit):
            hidden = tanh(wf(v) + wq(u).reshape(n, 1, self.out_dim))
            weights = F.softmax(wp(hidden).reshape(n, h * w), axis=-1)
            self.last_attention.append(weights.data)
            attended = (weights.reshape(n, h * w, 1) * v).sum(axis=1)
            u = u + attended
        return u


class RelNetCore(Module):
    """Relation module over all ordered position pairs.

    The first relation layer acts on ``concat(o_i, o_j, q)``; it is computed as
    ``o_i A + o_j B + q C + b`` with ``[A; B; C]`` the layer's weight, which is
    the same function without materializing the concatenated pairs.
    """

    def __init__(self, channels: int, sentence: int, projection: int, mlp: int, rng: np.random.Generator):
        self.project = Linear(channels, projection, rng)
        self.relation_first = Linear(2 * projection + sentence, mlp, rng)
        self.relation_second = Linear(mlp, mlp, rng)
        self.post = Linear(mlp, mlp, rng)
        self.projection = projection
        self.out_dim = mlp

    def pair_inputs(self, objects: Tensor, sentence: Tensor) -> Tensor:
        """Explicit ``(N, P, P, 2d + S)`` pair tensor (reference path, memory hungry)."""
        n, p, d = objects.shape
        first = broadcast_to(objects.reshape(n, p, 1, d), (n, p, p, d))
        second = broadcast_to(objects.reshape(n, 1, p, d), (n, p, p, d))
        s = sentence.shape[-1]
        q = broadcast_to(sentence.reshape(n, 1, 1, s), (n, p, p, s))
        return concat([first, second, q], axis=-1)

    def relation_sum(self, objects: Tensor, sentence: Tensor) -> Tensor:
        n, p, d = objects.shape
        weight = self.relation_first.weight
        a = objects @ weight[:d]
        b = objects @ weight[d:2 * d]
        c = F.linear(sentence, weight[2 * d:], self.relation_first.bias)
        m = self.out_dim
        pre = a.reshape(n, p, 1, m) + b.reshape(n, 1, p, m) + c.reshape(n, 1, 1, m)
        hidden = relu(self.relation_second(relu(pre.reshape(n, p * p, m))))
        return hidden.sum(axis=1)

    def forward(self, features: Tensor, sentence: Tensor) -> Tensor:
        n, h, w, c = features.shape
        objects = self.project(features).reshape(n, h * w, self.projection)
        return relu(self.post(self.relation_sum(objects, sentence)))


class FiLMCore(Module):
    """Residual blocks: conv -> BN -> gamma * x + beta -> ReLU, plus the block input."""

    def __init__(self, config: ModelConfig, channels: int, sentence: int, out_dim: int, rng: np.random.Generator):
        self.coords = config.coords
        extra = 2 if self.coords else 0
        count = config.film_layer_count
        self.film = FiLMGenerator(sentence, channels, count, rng)
        self.layers = [_layer(config.core_layers, channels + extra, channels, rng) for _ in range(count)]
        self.norms = [BatchNorm(channels, affine=False) for _ in range(count)]
        self.final = Linear(channels + extra, out_dim, rng)
        self.out_dim = out_dim

    def blocks(self, x: Tensor, params: list[tuple[Tensor, Tensor]]) -> Tensor:
        for layer, norm, (gamma, beta) in zip(self.layers, self.norms, params):
            inp = append_coords(x) if self.coords else x
            x = x + relu(F.film(norm(layer(inp)), gamma, beta))
        return x

    def forward(self, features: Tensor, sentence: Tensor) -> Tensor:
        x = self.blocks(features, self.film(sentence))
        if self.coords:
            x = append_coords(x)
        return F.spatial_mean_pool(relu(self.final(x)))


class MCCore(Module):
    """Per-position multimodal fusion followed by two shared layers and pooling."""

    def __init__(self, config: ModelConfig, channels: int, sentence: int, dim: int, rng: np.random.Generator):
        self.fusion = config.fusion
        if self.fusion == "film":
            self.film = FiLMGenerator(sentence, channels, 1, rng)
            width = channels
        else:
            width = channels + sentence
        self.first = _layer(config.core_layers, width, dim, rng)
        self.second = _layer(config.core_layers, dim, dim, rng)
        self.out_dim = dim

    def fuse(self, features: Tensor, sentence: Tensor) -> Tensor:
        n, h, w, _ = features.shape
        if self.fusion == "film":
            (gamma, beta), = self.film(sentence)
            return F.film(features, gamma, beta)
        return concat([features, F.tile_positions(sentence, h, w)], axis=-1)

    def forward(self, features: Tensor, sentence: Tensor) -> Tensor:
        x = self.fuse(features, sentence)
        return F.spatial_mean_pool(relu(self.second(relu(self.first(x)))))


# -- full model ---------------------------------------------------------------------------

class VQAModel(Module):
    def __init__(self, config: ModelConfig, vocab_size: int | None = None, seed: int = 0):
        config = config.validate()
        preset = PRESETS[config.preset]
        rng = np.random.default_rng(seed)
        vocab_size = vocab_size or len(VOCABULARY)
        self.config = config
        self.preset = preset
        size = preset.relnet_recurrent if config.core == "relnet" else preset.recurrent
        self.image = ImageModule(preset.channels, rng)
        self.language = LanguageModule(vocab_size, preset.embedding, size, config.recurrent_kind, rng)
        channels = preset.channels + (2 if config.coords and config.core != "film" else 0)
        if config.core == "cnn_lstm":
            self.core = CNNLSTMCore(config, channels, size, preset.core_dim, rng)
        elif config.core == "san":
            self.core = SANCore(channels, size, preset.san_dim, config.san_rounds, rng)
        elif config.core == "relnet":
            self.core = RelNetCore(channels, size, preset.relnet_projection, preset.relnet_mlp, rng)
        elif config.core == "film":
            self.core = FiLMCore(config, preset.channels, size, preset.film_output, rng)
        else:
            self.core = MCCore(config, channels, size, preset.core_dim, rng)
        self.classifier = Classifier(self.core.out_dim, preset.classifier, rng)

    def features(self, images) -> Tensor:
        images = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=self.dtype))
        size = self.preset.image_size
        if images.ndim != 4 or images.shape[1:] != (size, size, 3):
            raise ValueError(f"expected images of shape (N, {size}, {size}, 3), got {images.shape}")
        return self.image(images)

    @property
    def dtype(self):
        return self.classifier.output.weight.dtype

    def pre_answer(self, images, ids, lengths) -> Tensor:
        features = self.features(images)
        sentence = self.language(ids, lengths)
        if self.config.modality == "image":
            sentence = Tensor(np.zeros(sentence.shape, dtype=sentence.dtype))
        elif self.config.modality == "language":
            features = Tensor(np.zeros(features.shape, dtype=features.dtype))
        if self.config.coords and self.config.core != "film":
            features = append_coords(features)
        return self.core(features, sentence)

    def forward(self, images, ids, lengths) -> Tensor:
        """2-way answer logits (index 1 = agreement / yes)."""
        return self.classifier(self.pre_answer(images, ids, lengths))


def build_model(config: ModelConfig | str, seed: int = 0, vocab_size: int | None = None,
                preset: str | None = None) -> VQAModel:
    if isinstance(config, str):
        config = ModelConfig.from_name(config, preset or "full")
    elif preset is not None:
        config = replace(config, preset=preset)
    return VQAModel(config, vocab_size, seed)


def parameter_count(config: ModelConfig | str, vocab_size: int | None = None, preset: str | None = None) -> int:
    return build_model(config, 0, vocab_size, preset).num_parameters()
