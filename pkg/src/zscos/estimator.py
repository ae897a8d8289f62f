"""scikit-learn style front-end over the segmenter and its training loop."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import tensor as T
from ._validation import check_captions, check_images, check_masks
from .data import CaptionProvider, ImageSample
from .errors import ModeError
from .losses import LossWeights
from .metrics import iou
from .model import ModelConfig, Segmenter
from .training import Trainer


class CamouflageSegmenter(BaseEstimator):
    """Fit on (images, masks[, caption embeddings]); predict masks without captions.

    Without explicit captions, ``fit`` derives synthetic ones from the masks.
    Prediction defaults to codebook mode, which needs no caption at all.
    """

    def __init__(self, image_size=64, patch_size=4, depth=4, d_v=96, heads=4, d_lr=16,
                 mlp_ratio=4, caption_len=16, caption_dim=48, d=64, mode="zeroshot",
                 lr=2.5e-3, weight_decay=0.05, max_steps=500, warmup_steps=12, batch_size=8,
                 hflip=True, predict_mode="codebook", caption_seed=0, random_state=0,
                 verbose=False):
        self.image_size = image_size
        self.patch_size = patch_size
        self.depth = depth
        self.d_v = d_v
        self.heads = heads
        self.d_lr = d_lr
        self.mlp_ratio = mlp_ratio
        self.caption_len = caption_len
        self.caption_dim = caption_dim
        self.d = d
        self.mode = mode
        self.lr = lr
        self.weight_decay = weight_decay
        self.max_steps = max_steps
        self.warmup_steps = warmup_steps
        self.batch_size = batch_size
        self.hflip = hflip
        self.predict_mode = predict_mode
        self.caption_seed = caption_seed
        self.random_state = random_state
        self.verbose = verbose

    def _model_config(self) -> ModelConfig:
        return ModelConfig(self.image_size, self.patch_size, self.depth, self.d_v, self.heads,
                           self.d_lr, self.mlp_ratio, self.caption_len, self.caption_dim, self.d,
                           int(self.random_state))

    def fit(self, X, y, captions=None):
        images = check_images(X, self.image_size)
        masks = check_masks(y, len(images), self.image_size)
        samples = [ImageSample(f"x{i:05d}", img, m) for i, (img, m) in enumerate(zip(images, masks))]
        shape = (self.caption_len, self.caption_dim)
        if captions is None:
            provider = CaptionProvider("synthetic", seed=self.caption_seed,
                                       caption_len=self.caption_len, caption_dim=self.caption_dim)
            caps = [provider(s) for s in samples]
        else:
            caps = list(check_captions(captions, len(samples), shape))
        self.model_ = Segmenter(self._model_config())
        trainer = Trainer(self.model_, LossWeights.profile(self.mode), lr=self.lr,
                          weight_decay=self.weight_decay, total_steps=self.max_steps,
                          warmup_steps=self.warmup_steps, batch_size=self.batch_size,
                          seed=int(self.random_state), hflip=self.hflip)
        trainer.run(samples, caps, on_step=(lambda log: print(log.line())) if self.verbose else None)
        self.loss_history_ = [log.total for log in trainer.history]
        self.n_features_in_ = self.image_size * self.image_size * 3
        return self

    def decision_function(self, X, captions=None) -> np.ndarray:
        """Mask logits, shape (N, H, W)."""
        check_is_fitted(self, "model_")
        images = check_images(X, self.image_size)
        mode = self.predict_mode
        if mode == "caption":
            if captions is None:
                raise ModeError("predict_mode='caption' needs caption embeddings")
            caps = check_captions(captions, len(images), (self.caption_len, self.caption_dim))
        elif mode == "codebook":
            caps = [None] * len(images)
        else:
            raise ModeError(f"predict_mode must be 'codebook' or 'caption', got {mode!r}")
        out = []
        with T.no_grad():
            for img, cap in zip(images, caps):
                out.append(self.model_(img, cap, mode=mode).logits.data)
        return np.stack(out)

    def predict_proba(self, X, captions=None) -> np.ndarray:
        return T.sigmoid(T.Tensor(self.decision_function(X, captions))).data

    def predict(self, X, captions=None) -> np.ndarray:
        return self.predict_proba(X, captions) >= 0.5

    def score(self, X, y, captions=None) -> float:
        """Mean IoU of the thresholded masks."""
        probs = self.predict_proba(X, captions)
        masks = check_masks(y, len(probs), self.image_size)
        return float(np.mean([iou(p, m) for p, m in zip(probs, masks)]))
