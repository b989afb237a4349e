"""Forward pass of the query-conditioned temporal grounding model.

Everything here is plain numpy in float64. Encoder layers use pre-norm
ordering::

    x = x + MSA(LN(x))
    x = x + FFN(LN(x))
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import DimensionMismatchError, SequenceTooLongError
from .types import ClipPrediction, ClipSequence, QueryTokens
from .weights import GrounderWeights

LN_EPS = 1e-5

Layer = tuple[np.ndarray, np.ndarray]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * gain + bias


def project_features(raw: np.ndarray, layers: Sequence[Layer]) -> np.ndarray:
    """Stacked affine maps with ReLU between them; the last layer stays linear."""
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D feature matrix, got shape {x.shape}")
    for i, (w, b) in enumerate(layers):
        if x.shape[1] != w.shape[0]:
            raise DimensionMismatchError(
                f"projection layer {i} expects {w.shape[0]} input columns, got {x.shape[1]}"
            )
        x = x @ w + b
        if i < len(layers) - 1:
            x = relu(x)
    return x


def attention_pool_weights(tokens: np.ndarray, pool_weight: np.ndarray) -> np.ndarray:
    return softmax(np.asarray(tokens, dtype=np.float64) @ pool_weight)


def attentive_pool(tokens: np.ndarray, pool_weight: np.ndarray) -> np.ndarray:
    """Softmax-weighted average of token rows, scored by ``tokens @ pool_weight``."""
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[0] < 1:
        raise DimensionMismatchError(f"expected L_q x d tokens with L_q >= 1, got {tokens.shape}")
    alpha = attention_pool_weights(tokens, pool_weight)
    return alpha @ tokens


def multi_head_attention(x: np.ndarray, weights: GrounderWeights, prefix: str) -> np.ndarray:
    n, d = x.shape
    h = weights.h
    dh = d // h

    def proj(name):
        return x @ weights[f"{prefix}.{name}.weight"] + weights[f"{prefix}.{name}.bias"]

    q = proj("q").reshape(n, h, dh).transpose(1, 0, 2)
    k = proj("k").reshape(n, h, dh).transpose(1, 0, 2)
    v = proj("v").reshape(n, h, dh).transpose(1, 0, 2)
    attn = softmax(q @ k.transpose(0, 2, 1) / np.sqrt(dh), axis=-1)
    ctx = (attn @ v).transpose(1, 0, 2).reshape(n, d)
    return ctx @ weights[f"{prefix}.out.weight"] + weights[f"{prefix}.out.bias"]


def encoder_layer(x: np.ndarray, weights: GrounderWeights, index: int) -> np.ndarray:
    p = f"encoder.{index}"
    y = layer_norm(x, weights[f"{p}.norm1.weight"], weights[f"{p}.norm1.bias"])
    x = x + multi_head_attention(y, weights, f"{p}.attn")
    y = layer_norm(x, weights[f"{p}.norm2.weight"], weights[f"{p}.norm2.bias"])
    hidden = relu(y @ weights[f"{p}.ffn.0.weight"] + weights[f"{p}.ffn.0.bias"])
    return x + hidden @ weights[f"{p}.ffn.1.weight"] + weights[f"{p}.ffn.1.bias"]


def augment(video: np.ndarray, text: np.ndarray, weights: GrounderWeights) -> np.ndarray:
    """Concatenate video and text rows after adding positional and type embeddings.

    Positions run over the joint sequence: video rows first, then text rows.
    """
    video = np.asarray(video, dtype=np.float64)
    text = np.asarray(text, dtype=np.float64)
    if video.ndim != 2 or text.ndim != 2 or video.shape[1] != weights.d or text.shape[1] != weights.d:
        raise DimensionMismatchError(
            f"encoder expects L x {weights.d} inputs, got video {video.shape} and text {text.shape}"
        )
    total = video.shape[0] + text.shape[0]
    if total > weights.max_len:
        raise SequenceTooLongError(
            f"joint sequence length {total} exceeds positional table size {weights.max_len}"
        )
    pos = weights["pos_embed"][:total]
    types = weights["type_embed"]
    z = np.concatenate([video + types[0], text + types[1]], axis=0)
    return z + pos


def encode_joint(
    video: np.ndarray, text: np.ndarray, weights: GrounderWeights
) -> tuple[np.ndarray, np.ndarray]:
    z = augment(video, text, weights)
    for i in range(weights.k):
        z = encoder_layer(z, weights, i)
    lv = np.asarray(video).shape[0]
    return z[:lv], z[lv:]


def conv1d_same(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Width-3 temporal convolution with one row of zero padding on each side.

    ``kernel`` has shape ``(3, c_in, c_out)``; output row ``t`` sees input rows
    ``t-1, t, t+1``.
    """
    width = kernel.shape[0]
    pad = width // 2
    padded = np.pad(x, ((pad, pad), (0, 0)))
    n = x.shape[0]
    out = np.broadcast_to(bias, (n, kernel.shape[2])).copy()
    for j in range(width):
        out += padded[j : j + n] @ kernel[j]
    return out


def conv_head(x: np.ndarray, weights: GrounderWeights, head: str) -> np.ndarray:
    for layer in range(3):
        x = conv1d_same(x, weights[f"{head}.{layer}.weight"], weights[f"{head}.{layer}.bias"])
        if layer < 2:
            x = relu(x)
    return x


def _cosine_rows(rows: np.ndarray, vec: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1) * np.linalg.norm(vec)
    dots = rows @ vec
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(norms > 0, dots / np.where(norms > 0, norms, 1.0), 0.0)
    return np.clip(cos, -1.0, 1.0)


def predict_heads(
    video_out: np.ndarray, sentence: np.ndarray, weights: GrounderWeights, clips: ClipSequence
) -> list[ClipPrediction]:
    """Per-clip foreground probability, clamped boundary offsets and saliency.

    Saliency maps the cosine between projected clip and sentence vectors onto
    ``[0, 1]`` via ``(cos + 1) / 2``. Offsets are clamped so that the clip
    center always lies inside its own segment.
    """
    video_out = np.asarray(video_out, dtype=np.float64)
    if video_out.shape != (clips.num_clips, weights.d):
        raise DimensionMismatchError(
            f"expected video_out of shape {(clips.num_clips, weights.d)}, got {video_out.shape}"
        )
    sentence = np.asarray(sentence, dtype=np.float64)
    if sentence.shape != (weights.d,):
        raise DimensionMismatchError(f"expected sentence vector of length {weights.d}, got {sentence.shape}")
    fg = sigmoid(conv_head(video_out, weights, "fg_head")[:, 0])
    bd = conv_head(video_out, weights, "bd_head")
    sal_v = video_out @ weights["saliency.video.weight"]
    sal_s = sentence @ weights["saliency.text.weight"]
    sal = (_cosine_rows(sal_v, sal_s) + 1.0) / 2.0
    return [
        ClipPrediction(
            foreground=float(fg[i]),
            offsets=(min(float(bd[i, 0]), 0.0), max(float(bd[i, 1]), 0.0)),
            saliency=float(sal[i]),
        )
        for i in range(clips.num_clips)
    ]


class GroundingModel:
    """Bundles weights with the full forward pass.

    ``calls`` counts forward passes, which the sweep relies on to prove that
    proposals are computed once per query.
    """

    def __init__(self, weights: GrounderWeights):
        self.weights = weights
        self.calls = 0

    def _layers(self, stream: str) -> list[Layer]:
        w = self.weights
        return [(w[f"{stream}.{i}.weight"], w[f"{stream}.{i}.bias"]) for i in range(2)]

    def forward(self, clips: ClipSequence, query: QueryTokens) -> list[ClipPrediction]:
        self.calls += 1
        w = self.weights
        if clips.features.shape[1] != w.d_in or query.tokens.shape[1] != w.d_in:
            raise DimensionMismatchError(
                f"model expects input dim {w.d_in}, got video {clips.features.shape[1]}"
                f" and text {query.tokens.shape[1]}"
            )
        video = project_features(clips.features, self._layers("video_proj"))
        text = project_features(query.tokens, self._layers("text_proj"))
        sentence = attentive_pool(text, w["pool.weight"])
        video_out, _ = encode_joint(video, text, w)
        return predict_heads(video_out, sentence, w, clips)
