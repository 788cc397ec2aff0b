"""Encoder backends: a desk-scale numpy model and a transformer wrapper.

The desk backend is a trainable bag-of-token-embeddings encoder with a small
feed-forward head. It runs in seconds on a CPU and is bit-deterministic given
a seed, which makes it the backend for tests and toy pipelines. The
transformer backend wraps an externally pretrained masked-LM encoder plus
classification head (torch/transformers, installed via the `transformer`
extra) for full-scale training; both consume the same EncodedPair inputs.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import normalize_text
from .errors import ConfigurationError, InputError
from .trainer import EncodedPair

PAD_ID = 0
START_ID = 1
SEP_ID = 2
RESERVED_IDS = 3


class HashingTokenizer:
    """Whitespace tokenizer over normalized text with a stable hashed vocabulary.

    Ids 0-2 are reserved for pad/start/separator markers; content tokens hash
    into [3, vocab_size). Hashing uses blake2b, not Python's salted hash, so
    ids are stable across processes.
    """

    pad_id = PAD_ID
    start_id = START_ID
    sep_id = SEP_ID

    def __init__(self, vocab_size: int = 8192):
        if vocab_size <= RESERVED_IDS:
            raise ConfigurationError(f"vocab_size must exceed {RESERVED_IDS}")
        self.vocab_size = vocab_size

    def token_ids(self, text: str) -> list[int]:
        span = self.vocab_size - RESERVED_IDS
        ids = []
        for token in normalize_text(text).split():
            digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
            ids.append(RESERVED_IDS + int.from_bytes(digest, "big") % span)
        return ids


def _content_ids(pair: EncodedPair) -> tuple[list[int], list[int]]:
    context, text = [], []
    for token_id, segment in zip(pair.token_ids, pair.segment_ids):
        if token_id < RESERVED_IDS:
            continue
        (context if segment == 0 else text).append(token_id)
    return context, text


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class DeskEncoderBackend:
    """Bag-of-embeddings encoder with a tanh hidden layer, trained by Adam.

    Features per pair: [context mean, text mean, elementwise product,
    elementwise absolute difference] over the embedding table. All math is
    float64 numpy, so identical seeds and data reproduce identical parameters.
    """

    kind = "desk"

    def __init__(
        self,
        vocab_size: int = 8192,
        embedding_dim: int = 48,
        hidden_dim: int = 64,
        max_sequence_length: int = 64,
        seed: int = 0,
    ):
        self.tokenizer = HashingTokenizer(vocab_size)
        self.vocab_size = vocab_size
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.max_sequence_length = max_sequence_length
        self.seed = seed
        self.trained = False

        rng = np.random.default_rng(seed)
        d, h = embedding_dim, hidden_dim
        self.params = {
            "embeddings": rng.normal(0.0, 0.05, size=(vocab_size, d)),
            "hidden_weight": rng.normal(0.0, np.sqrt(2.0 / (4 * d)), size=(4 * d, h)),
            "hidden_bias": np.zeros(h),
            "out_weight": rng.normal(0.0, np.sqrt(1.0 / h), size=(h,)),
            "out_bias": np.zeros(()),
        }
        self._adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._adam_t = 0

    # -- forward ------------------------------------------------------------

    def _features(self, pairs: Sequence[EncodedPair]):
        d = self.embedding_dim
        emb = self.params["embeddings"]
        feats = np.zeros((len(pairs), 4 * d))
        ids = []
        for i, pair in enumerate(pairs):
            ctx_ids, txt_ids = _content_ids(pair)
            c = emb[ctx_ids].mean(axis=0) if ctx_ids else np.zeros(d)
            t = emb[txt_ids].mean(axis=0) if txt_ids else np.zeros(d)
            feats[i, :d] = c
            feats[i, d : 2 * d] = t
            feats[i, 2 * d : 3 * d] = c * t
            feats[i, 3 * d :] = np.abs(c - t)
            ids.append((ctx_ids, txt_ids))
        return feats, ids

    def _forward(self, feats: np.ndarray):
        hidden = np.tanh(feats @ self.params["hidden_weight"] + self.params["hidden_bias"])
        logits = hidden @ self.params["out_weight"] + self.params["out_bias"]
        return hidden, _sigmoid(logits)

    def predict_proba(self, pairs: Sequence[EncodedPair]) -> np.ndarray:
        feats, _ = self._features(pairs)
        _, probs = self._forward(feats)
        return probs

    # -- training -----------------------------------------------------------

    def train_batch(
        self,
        pairs: Sequence[EncodedPair],
        labels: np.ndarray,
        weights: np.ndarray,
        learning_rate: float,
    ) -> float:
        if len(pairs) == 0:
            raise InputError("empty training batch")
        d = self.embedding_dim
        n = len(pairs)
        feats, ids = self._features(pairs)
        hidden, probs = self._forward(feats)

        eps = 1e-12
        clipped = np.clip(probs, eps, 1.0 - eps)
        losses = -(labels * np.log(clipped) + (1.0 - labels) * np.log(1.0 - clipped))
        loss = float(np.mean(weights * losses))

        dlogits = weights * (probs - labels) / n
        grads = {
            "out_weight": hidden.T @ dlogits,
            "out_bias": np.sum(dlogits),
        }
        dhidden = np.outer(dlogits, self.params["out_weight"])
        dpre = dhidden * (1.0 - hidden**2)
        grads["hidden_weight"] = feats.T @ dpre
        grads["hidden_bias"] = dpre.sum(axis=0)
        dfeats = dpre @ self.params["hidden_weight"].T

        demb = np.zeros_like(self.params["embeddings"])
        for i, (ctx_ids, txt_ids) in enumerate(ids):
            c = feats[i, :d]
            t = feats[i, d : 2 * d]
            sign = np.sign(c - t)
            dc = dfeats[i, :d] + dfeats[i, 2 * d : 3 * d] * t + dfeats[i, 3 * d :] * sign
            dt = dfeats[i, d : 2 * d] + dfeats[i, 2 * d : 3 * d] * c - dfeats[i, 3 * d :] * sign
            if ctx_ids:
                np.add.at(demb, ctx_ids, dc / len(ctx_ids))
            if txt_ids:
                np.add.at(demb, txt_ids, dt / len(txt_ids))
        grads["embeddings"] = demb

        self._adam_step(grads, learning_rate)
        return loss

    def _adam_step(
        self, grads: dict, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999
    ) -> None:
        self._adam_t += 1
        t = self._adam_t
        for name, grad in grads.items():
            m = self._adam_m[name]
            v = self._adam_v[name]
            m *= beta1
            m += (1 - beta1) * grad
            v *= beta2
            v += (1 - beta2) * grad**2
            m_hat = m / (1 - beta1**t)
            v_hat = v / (1 - beta2**t)
            self.params[name] -= learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)

    # -- state --------------------------------------------------------------

    def get_state(self) -> dict:
        return {
            "params": {k: v.copy() for k, v in self.params.items()},
            "adam_m": {k: v.copy() for k, v in self._adam_m.items()},
            "adam_v": {k: v.copy() for k, v in self._adam_v.items()},
            "adam_t": self._adam_t,
        }

    def set_state(self, state: dict) -> None:
        self.params = {k: v.copy() for k, v in state["params"].items()}
        self._adam_m = {k: v.copy() for k, v in state["adam_m"].items()}
        self._adam_v = {k: v.copy() for k, v in state["adam_v"].items()}
        self._adam_t = state["adam_t"]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savez(directory / "weights.npz", **self.params)
        meta = {
            "kind": self.kind,
            "vocab_size": self.vocab_size,
            "embedding_dim": self.embedding_dim,
            "hidden_dim": self.hidden_dim,
            "max_sequence_length": self.max_sequence_length,
            "seed": self.seed,
            "trained": bool(self.trained or self._adam_t > 0),
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "DeskEncoderBackend":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
        backend = cls(
            vocab_size=meta["vocab_size"],
            embedding_dim=meta["embedding_dim"],
            hidden_dim=meta["hidden_dim"],
            max_sequence_length=meta["max_sequence_length"],
            seed=meta["seed"],
        )
        with np.load(directory / "weights.npz") as data:
            backend.params = {k: data[k].copy() for k in backend.params}
        backend.trained = meta.get("trained", False)
        return backend


class _TransformerTokenizerAdapter:
    """Expose a Hugging Face tokenizer through the marker-id contract."""

    def __init__(self, hf_tokenizer):
        self._tok = hf_tokenizer
        self.start_id = hf_tokenizer.cls_token_id
        self.sep_id = hf_tokenizer.sep_token_id
        self.pad_id = hf_tokenizer.pad_token_id
        if None in (self.start_id, self.sep_id, self.pad_id):
            raise ConfigurationError(
                "transformer tokenizer must define CLS, SEP, and PAD tokens"
            )

    def token_ids(self, text: str) -> list[int]:
        return self._tok.encode(text, add_special_tokens=False)


class TransformerBackend:
    """Pretrained masked-LM encoder with a 2-class head behind the backend contract.

    Relevance probability is the softmax mass on the positive class; the
    training update is AdamW on a per-example-weighted cross entropy. Requires
    torch and transformers.
    """

    kind = "transformer"

    def __init__(
        self,
        model_name_or_path: str | None = None,
        model=None,
        hf_tokenizer=None,
        max_sequence_length: int = 256,
        seed: int = 0,
        device: str = "cpu",
    ):
        try:
            import torch
            from transformers import AutoModelForSequenceClassification, AutoTokenizer
        except ImportError as exc:
            raise ConfigurationError(
                "the transformer backend needs torch and transformers; "
                "install the 'transformer' extra"
            ) from exc

        self._torch = torch
        torch.manual_seed(seed)
        if model is None or hf_tokenizer is None:
            if not model_name_or_path:
                raise ConfigurationError(
                    "pass model_name_or_path, or both model and hf_tokenizer"
                )
            hf_tokenizer = AutoTokenizer.from_pretrained(model_name_or_path)
            model = AutoModelForSequenceClassification.from_pretrained(
                model_name_or_path, num_labels=2
            )
        self.model_name_or_path = model_name_or_path
        self.model = model.to(device)
        self.device = device
        self._hf_tokenizer = hf_tokenizer
        self.tokenizer = _TransformerTokenizerAdapter(hf_tokenizer)
        self.max_sequence_length = max_sequence_length
        self.seed = seed
        self.trained = False
        self._optimizer = None
        self._steps = 0

    def _tensors(self, pairs: Sequence[EncodedPair]):
        torch = self._torch
        width = max(len(p.token_ids) for p in pairs)
        pad = self.tokenizer.pad_id
        ids = [list(p.token_ids) + [pad] * (width - len(p.token_ids)) for p in pairs]
        segs = [list(p.segment_ids) + [0] * (width - len(p.segment_ids)) for p in pairs]
        mask = [list(p.attention_mask) + [0] * (width - len(p.attention_mask)) for p in pairs]
        return (
            torch.tensor(ids, dtype=torch.long, device=self.device),
            torch.tensor(segs, dtype=torch.long, device=self.device),
            torch.tensor(mask, dtype=torch.long, device=self.device),
        )

    def predict_proba(self, pairs: Sequence[EncodedPair]) -> np.ndarray:
        torch = self._torch
        ids, segs, mask = self._tensors(pairs)
        self.model.eval()
        with torch.no_grad():
            logits = self.model(
                input_ids=ids, token_type_ids=segs, attention_mask=mask
            ).logits
            probs = torch.softmax(logits, dim=-1)[:, 1]
        return probs.cpu().numpy().astype(np.float64)

    def train_batch(
        self,
        pairs: Sequence[EncodedPair],
        labels: np.ndarray,
        weights: np.ndarray,
        learning_rate: float,
    ) -> float:
        torch = self._torch
        if self._optimizer is None:
            self._optimizer = torch.optim.AdamW(self.model.parameters(), lr=learning_rate)
        for group in self._optimizer.param_groups:
            group["lr"] = learning_rate

        ids, segs, mask = self._tensors(pairs)
        y = torch.tensor(labels, dtype=torch.long, device=self.device)
        w = torch.tensor(weights, dtype=torch.float32, device=self.device)
        self.model.train()
        logits = self.model(input_ids=ids, token_type_ids=segs, attention_mask=mask).logits
        per_example = torch.nn.functional.cross_entropy(logits, y, reduction="none")
        loss = (per_example * w).mean()
        self._optimizer.zero_grad()
        loss.backward()
        self._optimizer.step()
        self._steps += 1
        return float(loss.item())

    def get_state(self) -> dict:
        return {k: v.detach().clone() for k, v in self.model.state_dict().items()}

    def set_state(self, state: dict) -> None:
        self.model.load_state_dict(state)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.model.save_pretrained(directory)
        self._hf_tokenizer.save_pretrained(directory)
        meta = {
            "kind": self.kind,
            "max_sequence_length": self.max_sequence_length,
            "seed": self.seed,
            "trained": bool(self.trained or self._steps > 0),
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "TransformerBackend":
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
        backend = cls(
            model=AutoModelForSequenceClassification.from_pretrained(directory),
            hf_tokenizer=AutoTokenizer.from_pretrained(directory),
            max_sequence_length=meta["max_sequence_length"],
            seed=meta.get("seed", 0),
        )
        backend.trained = meta.get("trained", False)
        return backend


def load_backend(directory: str | Path):
    """Load whichever backend kind was saved in `directory` (see its meta.json)."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise ConfigurationError(f"no checkpoint metadata at {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    kind = meta.get("kind")
    if kind == DeskEncoderBackend.kind:
        return DeskEncoderBackend.load(directory)
    if kind == TransformerBackend.kind:
        return TransformerBackend.load(directory)
    raise ConfigurationError(f"unknown backend kind {kind!r} in {meta_path}")
