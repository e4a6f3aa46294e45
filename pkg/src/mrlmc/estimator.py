"""scikit-learn style estimator wrapping the network and its training loop."""

from __future__ import annotations

import copy
import json
import logging
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.metrics import f1_score

from .augment import AugmentSpec, build_input_pairs
from .errors import ConfigError, DataError, NumericError
from .head import FocalConfig, LossWeights
from .model import Losses, MRLMCNetwork, objective
from .signals import Modality
from .validation import Mode, check_labels, check_mode, check_records

logger = logging.getLogger(__name__)

CHECKPOINT_INDEX = "checkpoint.json"
CHECKPOINT_DATA = "params.f32"
CHECKPOINT_FORMAT = "mrlmc-checkpoint"

_NETWORK_KEYS = ("d", "n_scale", "n_out", "alpha", "kernel_size", "dilation_base", "dropout", "n_trans",
                 "n_head", "mlp_ratio", "semantic_dropout", "share_semantic", "head_hidden", "head_dropout")


def _views(mode: Mode):
    if mode is Mode.MULTI:
        return Modality.FNIRS.value, Modality.EEG.value
    m = mode.modalities[0].value
    return m, m


def make_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled index batches; a trailing singleton joins the previous batch
    because the contrastive loss needs at least two pairs."""
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


class MRLMCClassifier(ClassifierMixin, BaseEstimator):
    """Multimodal contrastive depression classifier.

    ``X`` is a sequence of :class:`~mrlmc.signals.Record`; ``y`` defaults to the
    records' labels. In MULTI mode the two views are FNIRS and EEG; in the
    single-modal modes they are the raw signal and an augmented copy (at
    prediction time both views are the raw signal).

    Parameters mirror the ``model``, ``semantic``, ``head`` and ``train``
    sections of :class:`~mrlmc.config.ExperimentConfig`; ``augment`` is an
    :class:`~mrlmc.augment.AugmentSpec` field dict.
    """

    def __init__(self, mode="MULTI", d=64, n_scale=5, n_out=64, alpha=0.3, kernel_size=3, dilation_base=2,
                 dropout=0.1, temperature=0.2, n_trans=1, n_head=16, mlp_ratio=4, semantic_dropout=0.1,
                 share_semantic=True, alpha_f=0.25, gamma=2.0, lambda1=1.0, lambda2=1.0, head_hidden=None,
                 head_dropout=0.1, learning_rate=1e-3, batch_size=16, epochs=100, patience=20,
                 rmsprop_alpha=0.99, rmsprop_eps=1e-8, augment=None, random_state=0, verbose=False):
        self.mode = mode
        self.d = d
        self.n_scale = n_scale
        self.n_out = n_out
        self.alpha = alpha
        self.kernel_size = kernel_size
        self.dilation_base = dilation_base
        self.dropout = dropout
        self.temperature = temperature
        self.n_trans = n_trans
        self.n_head = n_head
        self.mlp_ratio = mlp_ratio
        self.semantic_dropout = semantic_dropout
        self.share_semantic = share_semantic
        self.alpha_f = alpha_f
        self.gamma = gamma
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.head_hidden = head_hidden
        self.head_dropout = head_dropout
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.patience = patience
        self.rmsprop_alpha = rmsprop_alpha
        self.rmsprop_eps = rmsprop_eps
        self.augment = augment
        self.random_state = random_state
        self.verbose = verbose

    # -- helpers ---------------------------------------------------------

    def _augment_spec(self) -> AugmentSpec:
        spec = dict(self.augment or {})
        spec["seed"] = int(self.random_state)
        return AugmentSpec(**spec)

    def _check_params(self):
        if not self.temperature > 0:
            raise ConfigError(f"contrastive temperature must be > 0, got {self.temperature}", "temperature")
        if int(self.batch_size) < 2:
            raise ConfigError("batch_size must be >= 2 (contrastive loss needs negatives)", "batch_size")
        if int(self.n_out) % int(self.n_head):
            raise ConfigError(f"n_head={self.n_head} does not divide the token width n_out={self.n_out}", "n_head")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0", "learning_rate")
        return check_mode(self.mode)

    def _network_kwargs(self):
        return {k: getattr(self, k) for k in _NETWORK_KEYS}

    def _tensor(self, signals, modality: str) -> torch.Tensor:
        arr = np.stack([s.data for s in signals]) / self.scales_[modality]
        return torch.from_numpy(arr.astype(np.float32))

    def _raw_views(self, records):
        xm, ym = _views(self.mode_)
        x = self._tensor([r.signals[Modality(xm)] for r in records], xm)
        y = x if xm == ym else self._tensor([r.signals[Modality(ym)] for r in records], ym)
        return x, y

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise NotFittedError("MRLMCClassifier is not fitted yet; call fit first")

    def _check_shapes(self, records):
        for rec in records:
            for m in self.mode_.modalities:
                shape = list(rec.signals[m].data.shape)
                if shape[0] != self.input_shapes_[m.value][0]:
                    raise DataError(
                        f"record {rec.subject_id} {m.value} has {shape[0]} channels, "
                        f"model expects {self.input_shapes_[m.value][0]}"
                    )

    # -- fitting ---------------------------------------------------------

    def fit(self, X, y=None, validation_data=None):
        """Train on records ``X``.

        ``validation_data`` (a record sequence) enables model selection:
        the parameters of the epoch with the best validation macro F1 are
        kept and training stops after ``patience`` epochs without
        improvement. Without it the last epoch is kept.
        """
        mode = self._check_params()
        records = check_records(X, mode)
        labels = check_labels(records, y)
        val = check_records(validation_data, mode) if validation_data is not None else None
        self.mode_ = mode
        self.classes_ = np.array([0, 1])
        xm, ym = _views(mode)
        mods = sorted({xm, ym})
        self.input_shapes_ = {m: list(records[0].signals[Modality(m)].data.shape) for m in mods}
        self.scales_ = {}
        for m in mods:
            stacked = np.stack([r.signals[Modality(m)].data for r in records])
            scale = float(stacked.std())
            self.scales_[m] = scale if scale > 0 else 1.0
        aug = self._augment_spec()
        focal = FocalConfig(self.alpha_f, self.gamma)
        weights = LossWeights(self.lambda1, self.lambda2)
        target = torch.from_numpy(labels)
        seed = int(self.random_state)

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            net = MRLMCNetwork({m: self.input_shapes_[m][0] for m in mods}, **self._network_kwargs())
            opt = torch.optim.RMSprop(net.parameters(), lr=self.learning_rate, alpha=self.rmsprop_alpha,
                                      eps=self.rmsprop_eps)
            self.network_ = net
            self.history_ = []
            best_state, best_f1, best_epoch, stale = None, -np.inf, -1, 0
            for epoch in range(int(self.epochs)):
                net.train()
                pairs = build_input_pairs(records, mode, aug, epoch=epoch)
                xs = self._tensor([p[0] for p in pairs], xm)
                ys = self._tensor([p[1] for p in pairs], ym)
                rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), 0xB47C, epoch]))
                sums = np.zeros(4)
                for b, idx in enumerate(make_batches(len(records), int(self.batch_size), rng)):
                    idx = torch.from_numpy(idx)
                    out = net(xs[idx], ys[idx], xm, ym)
                    losses = objective(out, target[idx], self.temperature, focal, weights)
                    if not torch.isfinite(losses.total):
                        raise NumericError(f"non-finite loss at epoch {epoch} batch {b}")
                    opt.zero_grad()
                    losses.total.backward()
                    opt.step()
                    sums += len(idx) * np.array([float(t.detach()) for t in losses])
                row = dict(zip(("total", "msc", "sc", "fl"), (sums / len(records)).tolist()))
                row["epoch"] = epoch
                if val is not None:
                    row["val_f1"] = float(f1_score(check_labels(val), self.predict(val), average="macro",
                                                   zero_division=0))
                    if row["val_f1"] > best_f1:
                        best_f1, best_epoch, stale = row["val_f1"], epoch, 0
                        best_state = copy.deepcopy(net.state_dict())
                    else:
                        stale += 1
                self.history_.append(row)
                if self.verbose:
                    logger.info("epoch %d %s", epoch, row)
                if val is not None and stale >= int(self.patience):
                    break
            if best_state is not None:
                net.load_state_dict(best_state)
            self.best_epoch_ = best_epoch if val is not None else len(self.history_) - 1
        net.eval()
        return self

    # -- inference -------------------------------------------------------

    @torch.no_grad()
    def _outputs(self, X, chunk=64):
        self._check_fitted()
        records = check_records(X, self.mode_)
        self._check_shapes(records)
        net = self.network_
        net.eval()
        xm, ym = _views(self.mode_)
        parts = []
        for i in range(0, len(records), chunk):
            x, y = self._raw_views(records[i:i + chunk])
            parts.append(net(x, y, xm, ym))
        return type(parts[0])(*(torch.cat(t) for t in zip(*parts)))

    def predict_proba(self, X) -> np.ndarray:
        return torch.softmax(self._outputs(X).logits, dim=-1).numpy().astype(np.float64)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        # ties go to CONTROL
        return (proba[:, 1] > proba[:, 0]).astype(np.int64)

    def embed(self, X) -> dict[str, np.ndarray]:
        """Per-record representations v, u and semantic features z_f, z_e."""
        out = self._outputs(X)
        return {k: getattr(out, k).numpy() for k in ("v", "u", "z_f", "z_e")}

    def transform(self, X) -> np.ndarray:
        """Fused semantic features [z_f, z_e], shape (n_records, 2m)."""
        e = self.embed(X)
        return np.concatenate([e["z_f"], e["z_e"]], axis=1)

    def loss_terms(self, X, y=None) -> Losses:
        """Objective terms on ``X`` in eval mode (no augmentation, no dropout)."""
        records = check_records(X, getattr(self, "mode_", None))
        labels = torch.from_numpy(check_labels(records, y))
        out = self._outputs(records)
        return objective(out, labels, self.temperature, FocalConfig(self.alpha_f, self.gamma),
                         LossWeights(self.lambda1, self.lambda2))

    # -- persistence -----------------------------------------------------

    def save(self, path, extra=None) -> Path:
        """Write the checkpoint directory: ``checkpoint.json`` (index, params,
        fitted metadata) and ``params.f32`` (float32 little-endian tensors
        concatenated in index order)."""
        self._check_fitted()
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        tensors, blobs, offset = [], [], 0
        for name, t in self.network_.state_dict().items():
            arr = t.detach().cpu().numpy().astype("<f4")
            tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
            blobs.append(arr.ravel())
            offset += arr.size
        params = self.get_params()
        index = {
            "format": CHECKPOINT_FORMAT,
            "version": 1,
            "dtype": "float32-le",
            "params": params,
            "fitted": {
                "mode": self.mode_.value,
                "input_shapes": self.input_shapes_,
                "scales": self.scales_,
                "best_epoch": self.best_epoch_,
            },
            "tensors": tensors,
            "extra": extra or {},
        }
        (path / CHECKPOINT_INDEX).write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
        np.concatenate(blobs).tofile(path / CHECKPOINT_DATA)
        return path

    @classmethod
    def load(cls, path) -> "MRLMCClassifier":
        path = Path(path)
        if path.is_file():
            path = path.parent
        index_path = path / CHECKPOINT_INDEX
        if not index_path.exists():
            raise DataError(f"missing file {index_path}")
        index = json.loads(index_path.read_text())
        if index.get("format") != CHECKPOINT_FORMAT:
            raise DataError(f"{index_path} is not an {CHECKPOINT_FORMAT} index")
        est = cls(**index["params"])
        fitted = index["fitted"]
        est.mode_ = check_mode(fitted["mode"])
        est.classes_ = np.array([0, 1])
        est.input_shapes_ = fitted["input_shapes"]
        est.scales_ = {k: float(v) for k, v in fitted["scales"].items()}
        est.best_epoch_ = fitted["best_epoch"]
        est.checkpoint_extra_ = index.get("extra", {})
        flat = np.fromfile(path / CHECKPOINT_DATA, dtype="<f4")
        expected = sum(t["count"] for t in index["tensors"])
        if flat.size != expected:
            raise DataError(f"checkpoint data holds {flat.size} values, index expects {expected}")
        state = {
            t["name"]: torch.from_numpy(flat[t["offset"]:t["offset"] + t["count"]].reshape(t["shape"]).copy())
            for t in index["tensors"]
        }
        net = MRLMCNetwork({m: s[0] for m, s in est.input_shapes_.items()}, **est._network_kwargs())
        net.load_state_dict(state)
        net.eval()
        est.network_ = net
        return est
