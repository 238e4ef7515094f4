"""Zero-shot inference: prototype (naive Bayes) classification, conditional
sample generation, and the held-out linear softmax classifier.

Label spaces follow the two evaluation settings: the classic setting scores
queries against unseen classes only, the generalized setting against the
union of seen and unseen classes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numcore as nc
from .data import SPLIT_TEST_SEEN, SPLIT_TEST_UNSEEN, SPLIT_TRAIN_SEEN, ZslDataset
from .errors import ContractError, DimensionError
from .flow import FlowModel, LatentCode
from .numcore import Tensor
from .trainer import AdamState, TrainConfig, adam_step

SETTING_CZSL = "czsl"
SETTING_GZSL = "gzsl"
MODE_NBC = "nbc"
MODE_SOFTMAX = "softmax"


@dataclass
class PrototypeSet:
    """One visual-space prototype per class: the inverse image of the class
    embedding with a zero residual."""

    labels: np.ndarray      # (k,) int64, ascending
    prototypes: np.ndarray  # (k, visual_dim)


def build_prototypes(model: FlowModel, embeddings: np.ndarray,
                     class_ids: np.ndarray) -> PrototypeSet:
    class_ids = np.asarray(class_ids, dtype=np.int64)
    order = np.argsort(class_ids)
    class_ids = class_ids[order]
    embeddings = np.asarray(embeddings, dtype=np.float64)[order]
    with nc.no_grad():
        residual = Tensor(np.zeros((len(class_ids), model.residual_dim)))
        protos = model.inverse(LatentCode(Tensor(embeddings), residual))
    return PrototypeSet(labels=class_ids, prototypes=protos.data)


def nbc_predict(prototypes: PrototypeSet, queries: np.ndarray) -> np.ndarray:
    """Nearest-prototype labels; ties resolve to the lowest class id."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != prototypes.prototypes.shape[1]:
        raise DimensionError(
            f"query width {queries.shape[1]} != prototype width "
            f"{prototypes.prototypes.shape[1]}")
    with nc.no_grad():
        d2 = nc.sqdist(Tensor(queries), Tensor(prototypes.prototypes)).data
    return prototypes.labels[np.argmin(d2, axis=1)]


def classify_nbc(model: FlowModel, embeddings: np.ndarray, class_ids: np.ndarray,
                 queries: np.ndarray) -> np.ndarray:
    """Generate prototypes for the candidate classes and label each query by
    its Euclidean-nearest prototype."""
    if len(class_ids) == 0:
        raise ContractError("empty label space")
    return nbc_predict(build_prototypes(model, embeddings, class_ids), queries)


def generate_training_set(model: FlowModel, embeddings: np.ndarray,
                          class_ids: np.ndarray, per_class: int, seed: int,
                          zero_residual: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per class, ``per_class`` generated visual samples with seeded standard
    normal residuals (or zeros when ``zero_residual``); returns (features,
    labels)."""
    if per_class < 1:
        raise ContractError("per_class must be at least 1")
    class_ids = np.asarray(class_ids, dtype=np.int64)
    embeddings = np.asarray(embeddings, dtype=np.float64)
    rng = np.random.default_rng(seed)
    features, labels = [], []
    with nc.no_grad():
        for cid, emb in zip(class_ids, embeddings):
            if zero_residual:
                residual = np.zeros((per_class, model.residual_dim))
            else:
                residual = rng.standard_normal((per_class, model.residual_dim))
            semantic = np.repeat(emb[None, :], per_class, axis=0)
            samples = model.inverse(LatentCode(Tensor(semantic), Tensor(residual)))
            features.append(samples.data)
            labels.append(np.full(per_class, cid, dtype=np.int64))
    return np.concatenate(features, axis=0), np.concatenate(labels)


@dataclass
class SoftmaxClassifier:
    """Single linear layer scoring the active label space."""

    class_ids: np.ndarray  # (k,) ascending
    weight: np.ndarray     # (k, visual_dim)
    bias: np.ndarray       # (k,)

    def scores(self, queries: np.ndarray) -> np.ndarray:
        queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        return queries @ self.weight.T + self.bias[None, :]


@dataclass
class SoftmaxTrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 256
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


def softmax_cross_entropy(weight: Tensor, bias: Tensor, features: Tensor,
                          one_hot: Tensor) -> Tensor:
    """Mean cross-entropy of the linear scores against one-hot targets,
    computed through a max-shifted log-sum-exp for stability."""
    logits = nc.matmul(features, nc.transpose(weight)) + bias
    shift = Tensor(logits.data.max(axis=1, keepdims=True))
    log_norm = nc.log(nc.sum(nc.exp(logits - shift), axis=1, keepdims=True)) + shift
    true_logit = nc.sum(logits * one_hot, axis=1, keepdims=True)
    return nc.mean(log_norm - true_logit)


def train_softmax(features: np.ndarray, labels: np.ndarray, class_ids: np.ndarray,
                  config: SoftmaxTrainConfig | None = None) -> SoftmaxClassifier:
    """Adam-train a single linear layer under softmax cross-entropy.

    Weights start at zero, so the initial loss is exactly log(n_classes).
    Every class in ``class_ids`` must appear in ``labels``.
    """
    config = config or SoftmaxTrainConfig()
    class_ids = np.asarray(sorted(set(int(c) for c in class_ids)), dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    features = np.asarray(features, dtype=np.float64)
    present = set(labels.tolist())
    missing = [int(c) for c in class_ids if int(c) not in present]
    if missing:
        raise ContractError(f"classes absent from training set: {missing}")
    index_of = {int(c): i for i, c in enumerate(class_ids)}
    targets = np.array([index_of[int(label)] for label in labels], dtype=np.int64)
    n, width = features.shape
    k = len(class_ids)

    weight = Tensor(np.zeros((k, width)), requires_grad=True)
    bias = Tensor(np.zeros(k), requires_grad=True)
    named = [("softmax.weight", weight), ("softmax.bias", bias)]
    one_hot_all = np.zeros((n, k))
    one_hot_all[np.arange(n), targets] = 1.0

    adam_cfg = TrainConfig(learning_rate=config.learning_rate,
                           batch_size=max(2, config.batch_size),
                           adam_beta1=config.adam_beta1,
                           adam_beta2=config.adam_beta2,
                           adam_eps=config.adam_eps)
    state = AdamState()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            rows = order[start:start + config.batch_size]
            if len(rows) == 0:
                continue
            nc.reset_tape()
            weight.zero_grad()
            bias.zero_grad()
            loss = softmax_cross_entropy(weight, bias, Tensor(features[rows]),
                                         Tensor(one_hot_all[rows]))
            nc.backward(loss)
            adam_step(state, named, adam_cfg)
    nc.reset_tape()
    return SoftmaxClassifier(class_ids=class_ids, weight=weight.data, bias=bias.data)


def classify_softmax(classifier: SoftmaxClassifier, queries: np.ndarray) -> np.ndarray:
    """Argmax of the linear scores; the softmax itself is omitted because it
    does not change the argmax."""
    scores = classifier.scores(queries)
    return classifier.class_ids[np.argmax(scores, axis=1)]


# ---------------------------------------------------------------------------
# Evaluation-time orchestration


def zero_shot_predictions(model: FlowModel, dataset: ZslDataset, mode: str,
                          setting: str, per_class: int = 400, seed: int = 0,
                          softmax_config: SoftmaxTrainConfig | None = None,
                          ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Predict labels for the test split of the requested setting.

    Returns (query_indices, truths, predictions). The classic setting scores
    test_unseen queries against unseen classes; the generalized setting scores
    both test splits against the union. The softmax mode trains its classifier
    on generated unseen samples, joined by the real seen training features in
    the generalized setting so the union can be scored.
    """
    if mode not in (MODE_NBC, MODE_SOFTMAX):
        raise ContractError(f"unknown mode {mode!r}")
    if setting not in (SETTING_CZSL, SETTING_GZSL):
        raise ContractError(f"unknown setting {setting!r}")
    if setting == SETTING_CZSL:
        query_idx = dataset.indices(SPLIT_TEST_UNSEEN)
        label_space = dataset.unseen_classes
    else:
        query_idx = np.concatenate([dataset.indices(SPLIT_TEST_SEEN),
                                    dataset.indices(SPLIT_TEST_UNSEEN)])
        label_space = np.sort(np.concatenate([dataset.seen_classes,
                                              dataset.unseen_classes]))
    queries = dataset.visual[query_idx]
    truths = dataset.labels[query_idx]

    if mode == MODE_NBC:
        predictions = classify_nbc(model, dataset.embeddings_for(label_space),
                                   label_space, queries)
    else:
        synth_x, synth_y = generate_training_set(
            model, dataset.embeddings_for(dataset.unseen_classes),
            dataset.unseen_classes, per_class=per_class, seed=seed)
        if setting == SETTING_GZSL:
            train_x = np.concatenate([dataset.features_of(SPLIT_TRAIN_SEEN), synth_x])
            train_y = np.concatenate([dataset.labels_of(SPLIT_TRAIN_SEEN), synth_y])
        else:
            train_x, train_y = synth_x, synth_y
        cfg = softmax_config or SoftmaxTrainConfig(seed=seed)
        classifier = train_softmax(train_x, train_y, label_space, cfg)
        predictions = classify_softmax(classifier, queries)
    return query_idx, truths, predictions


def write_predictions_csv(path, query_indices: np.ndarray, truths: np.ndarray,
                          predictions: np.ndarray, mode: str, setting: str) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_index", "true_label", "predicted_label",
                         "mode", "setting"])
        for qi, t, p in zip(query_indices, truths, predictions):
            writer.writerow([int(qi), int(t), int(p), mode, setting])
