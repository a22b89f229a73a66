"""scikit-learn style wrapper around the training loop."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import core, losses, nets, trainer
from .data import NoisyDataset
from .exceptions import ConfigError
from .rng import substream


class CmrmClassifier(BaseEstimator, ClassifierMixin):
    """Linear or two-layer classifier trained with an optional
    quantile-calibrated margin regularizer.

    Parameters mirror the functional API: ``base_loss`` picks the
    classification loss, ``cmrm`` switches the regularizer on
    ("multiclass", "binary", or None), and ``alpha``/``lam``/``temp``
    (or the per-class binary variants) configure it.
    """

    def __init__(
        self,
        architecture: str = "linear",
        hidden: int = 32,
        base_loss: str = "ce",
        focal_gamma: float = 2.0,
        gce_q: float = 0.7,
        ldam_scale: float = 0.5,
        cmrm: str | None = None,
        alpha: float = 0.15,
        lam: float = 0.1,
        temp: float = 1.0,
        alpha_pos: float = 0.2,
        alpha_neg: float = 0.2,
        lambda_pos: float = 0.4,
        lambda_neg: float = 0.4,
        epochs: int = 30,
        batch_size: int = 64,
        learning_rate: float = 0.05,
        momentum: float = 0.9,
        weight_decay: float = 0.0002,
        lr_milestones: tuple[int, ...] = (),
        lr_decay_factor: float = 0.01,
        random_state: int = 0,
    ):
        self.architecture = architecture
        self.hidden = hidden
        self.base_loss = base_loss
        self.focal_gamma = focal_gamma
        self.gce_q = gce_q
        self.ldam_scale = ldam_scale
        self.cmrm = cmrm
        self.alpha = alpha
        self.lam = lam
        self.temp = temp
        self.alpha_pos = alpha_pos
        self.alpha_neg = alpha_neg
        self.lambda_pos = lambda_pos
        self.lambda_neg = lambda_neg
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.lr_milestones = lr_milestones
        self.lr_decay_factor = lr_decay_factor
        self.random_state = random_state

    def _loss_spec(self, y) -> losses.BaseLossSpec:
        counts = tuple(int(c) for c in np.bincount(y))
        return losses.BaseLossSpec(
            kind=self.base_loss,
            gamma=self.focal_gamma,
            q=self.gce_q,
            margin_scale=self.ldam_scale,
            class_counts=counts if self.base_loss == "ldam" else None,
        )

    def _cmrm_cfg(self):
        if self.cmrm is None:
            return None
        if self.cmrm == "multiclass":
            return core.CmrmConfig(alpha=self.alpha, lam=self.lam, temp=self.temp)
        if self.cmrm == "binary":
            return core.BinaryCmrmConfig(
                alpha_pos=self.alpha_pos,
                alpha_neg=self.alpha_neg,
                lambda_pos=self.lambda_pos,
                lambda_neg=self.lambda_neg,
            )
        raise ConfigError(f"cmrm must be None, 'multiclass', or 'binary', got {self.cmrm!r}")

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        K = self.classes_.size
        if K < 2:
            raise ConfigError("need at least 2 classes")
        dataset = NoisyDataset(
            features=np.asarray(X, dtype=np.float64),
            clean_labels=y_enc,
            observed_labels=y_enc.copy(),
            mask=np.zeros(y_enc.size, dtype=bool),
            num_classes=K,
            split_of=np.full(y_enc.size, "train", dtype=object),
        )
        cfg = trainer.TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            lr_milestones=tuple(self.lr_milestones),
            lr_decay_factor=self.lr_decay_factor,
            seed=self.random_state,
            base_loss=self._loss_spec(y_enc),
            cmrm=self._cmrm_cfg(),
        )
        init = nets.init_params(
            self.architecture,
            X.shape[1],
            K,
            substream(self.random_state, "init"),
            hidden=self.hidden,
        )
        self.params_, self.epoch_records_ = trainer.train(init, dataset, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X)
        return trainer.predict_proba(self.params_, X)

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X)
        return nets.forward(self.params_, X)

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
