"""Two-model uplift estimate of the intervention's effect on negative outcomes.

One ensemble is fitted per arm. The effect for a prefix is the control
arm's negative-outcome probability minus the treated arm's, so a positive
value means the intervention helps. Confounders are plain input features of
both arms; there is no orthogonalisation, so unobserved or strongly
imbalanced confounding biases the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from prpm import ensemble as ens
from prpm.errors import SchemaMismatch

MIN_ARM_SIZE = 20


@dataclass
class CausalDataset:
    X: np.ndarray
    y: np.ndarray
    treated: np.ndarray
    confounder_columns: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.treated = np.asarray(self.treated, dtype=bool)
        bad = [c for c in self.confounder_columns if not 0 <= c < self.X.shape[1]]
        if bad:
            raise SchemaMismatch(f"confounder columns outside the schema: {bad}")


@dataclass
class UpliftModel:
    model_treated: ens.Ensemble
    model_control: ens.Ensemble

    def __post_init__(self):
        if self.model_treated.n_features != self.model_control.n_features:
            raise SchemaMismatch("treated and control models disagree on the feature count")

    @property
    def n_features(self) -> int:
        return self.model_control.n_features

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.model_control.predict(X) - self.model_treated.predict(X)

    def swapped(self) -> "UpliftModel":
        return UpliftModel(self.model_control, self.model_treated)

    def to_dict(self) -> dict:
        return {"treated": self.model_treated.to_dict(), "control": self.model_control.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "UpliftModel":
        return cls(ens.Ensemble.from_dict(d["treated"]), ens.Ensemble.from_dict(d["control"]))


def fit_uplift(
    dataset: CausalDataset,
    m: int = 10,
    params: ens.TreeParams = ens.TreeParams(),
    seed: int = 0,
    min_arm_size: int = MIN_ARM_SIZE,
) -> UpliftModel:
    arms = {}
    for name, mask in (("treated", dataset.treated), ("control", ~dataset.treated)):
        n = int(mask.sum())
        if n == 0:
            raise ValueError(f"{name} arm empty")
        if n < min_arm_size:
            raise ValueError(f"{name} arm has {n} instances, need at least {min_arm_size}")
        arms[name] = mask
    # distinct master seeds keep the two arms' bootstrap streams independent
    return UpliftModel(
        model_treated=ens.train(dataset.X[arms["treated"]], dataset.y[arms["treated"]], m, params, seed * 2 + 1),
        model_control=ens.train(dataset.X[arms["control"]], dataset.y[arms["control"]], m, params, seed * 2),
    )


def cate(model: UpliftModel, features) -> float:
    x = np.asarray(features, dtype=float)
    if x.ndim != 1 or x.size != model.n_features:
        raise SchemaMismatch(f"expected {model.n_features} features, got shape {x.shape}")
    return float(model.predict(x[None, :])[0])
