"""Stratified cross-validation harness, metrics and experiment orchestration."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classifiers as clf
from .data import CLASSES, POSITIVE, LabeledDataset, ProbabilityMatrix, encode_labels
from .dataset import DATASET_NAMES, discover, extract_features, read_features_csv
from .descriptors import DescriptorId, params_from_dict
from .folds import fold_assignments, split_seed
from .imaging import PREPROCESSORS
from .selection import Chi2Selector

log = logging.getLogger(__name__)

DEFAULT_SEED = 42


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# folds


@dataclass
class FoldPlan:
    k: int
    seed: int
    sample_ids: list[str]
    labels: list[str]
    assignments: np.ndarray

    def fold_of(self, sample_id: str) -> int:
        return int(self.assignments[self.sample_ids.index(sample_id)])

    def test_ids(self, fold: int) -> list[str]:
        return [s for s, a in zip(self.sample_ids, self.assignments) if a == fold]

    def label_map(self) -> dict[str, str]:
        return dict(zip(self.sample_ids, self.labels))

    def to_csv(self, path, header_comment: str | None = None):
        with Path(path).open("w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["sample_id", "label", "fold"])
            for sid, lab, f in zip(self.sample_ids, self.labels, self.assignments):
                w.writerow([sid, lab, int(f)])

    @classmethod
    def from_csv(cls, path) -> "FoldPlan":
        ids, labels, folds = [], [], []
        seed = -1
        with Path(path).open(newline="") as fh:
            lines = []
            for line in fh:
                if line.startswith("#"):
                    for tok in line[1:].split():
                        if tok.startswith("seed="):
                            seed = int(tok[5:])
                    continue
                lines.append(line)
        for rec in csv.DictReader(lines):
            ids.append(rec["sample_id"])
            labels.append(rec["label"])
            folds.append(int(rec["fold"]))
        assignments = np.array(folds, dtype=np.int64)
        return cls(int(assignments.max()) + 1, seed, ids, labels, assignments)


def stratified_kfold(labels, k: int = 10, seed: int = DEFAULT_SEED, sample_ids=None) -> FoldPlan:
    """Shuffle each class with ``seed`` and deal its members round-robin into k folds."""
    labels = list(labels)
    y = encode_labels(labels)
    assign = fold_assignments(y, k, seed)
    ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(len(labels))]
    return FoldPlan(k, seed, ids, labels, assign)


# --------------------------------------------------------------------------
# metrics


@dataclass
class MetricsRecord:
    precision: float
    recall: float
    f_measure: float
    accuracy: float
    positive_class: str = POSITIVE
    degenerate: bool = False
    macro_f_measure: float = 0.0
    confusion: dict = field(default_factory=dict)
    per_fold: list = field(default_factory=list)

    def to_dict(self):
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
            "accuracy": self.accuracy,
            "positive_class": self.positive_class,
            "degenerate": self.degenerate,
            "macro_f_measure": self.macro_f_measure,
            "confusion": self.confusion,
            "per_fold": [m.to_dict() for m in self.per_fold],
        }


def _prf(tp, fp, fn):
    degenerate = False
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision, degenerate = 0.0, True
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall, degenerate = 0.0, True
    if precision + recall > 0:
        f = 2 * precision * recall / (precision + recall)
    else:
        f, degenerate = 0.0, True
    return precision, recall, f, degenerate


def f_measure(predicted, truth, positive: str = POSITIVE) -> MetricsRecord:
    """Binary precision, recall and F-measure for ``positive``; 0 where undefined (flagged)."""
    predicted, truth = list(predicted), list(truth)
    if len(predicted) != len(truth):
        raise ValueError("predicted and truth lengths differ")
    negative = [c for c in CLASSES if c != positive][0]
    tp = sum(p == positive and t == positive for p, t in zip(predicted, truth))
    fp = sum(p == positive and t != positive for p, t in zip(predicted, truth))
    fn = sum(p != positive and t == positive for p, t in zip(predicted, truth))
    tn = len(truth) - tp - fp - fn
    precision, recall, f, degenerate = _prf(tp, fp, fn)
    f_neg = _prf(tn, fn, fp)[2]
    accuracy = (tp + tn) / len(truth) if truth else 0.0
    rec = MetricsRecord(precision, recall, f, accuracy, positive, degenerate, (f + f_neg) / 2.0,
                        {"tp": tp, "fp": fp, "fn": fn, "tn": tn, "negative_class": negative})
    return rec


# --------------------------------------------------------------------------
# configuration


CLASSIFIER_NAMES = ("svm", "knn", "gnb", "rf")


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fingerprint_of(config: dict) -> str:
    body = {k: v for k, v in config.items() if k != "fingerprint"}
    return hashlib.sha256(_canonical(body).encode()).hexdigest()[:16]


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``dataset`` is ``{"root": dir, "name": "AIA"|"TW"|"D"}`` (images under
    ``root/name/{C,S}``); alternatively ``features`` points at a feature CSV.
    """

    raw: dict

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        declared = d.pop("fingerprint", None)
        if seed is not None:
            d["seed"] = int(seed)
        norm = cls._normalize(d)
        if declared is not None and declared != fingerprint_of(norm):
            raise ConfigError(f"declared fingerprint {declared} does not match {fingerprint_of(norm)}")
        return cls(norm)

    @classmethod
    def from_json(cls, path, seed: int | None = None) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d, seed)

    @staticmethod
    def _normalize(d: dict) -> dict:
        known = {"dataset", "features", "preprocessing", "descriptor", "classifier", "selection",
                 "folds", "seed", "name"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        out: dict = {"seed": int(d.get("seed", DEFAULT_SEED))}
        if ("dataset" in d) == ("features" in d):
            raise ConfigError("config needs exactly one of 'dataset' or 'features'")
        if "dataset" in d:
            ds = d["dataset"]
            if not isinstance(ds, dict) or "root" not in ds or "name" not in ds:
                raise ConfigError("'dataset' must be an object with 'root' and 'name'")
            if ds["name"] not in DATASET_NAMES:
                raise ConfigError(f"dataset name must be one of {DATASET_NAMES}")
            out["dataset"] = {"root": str(ds["root"]), "name": ds["name"]}
            chain = list(d.get("preprocessing", []))
            for step in chain:
                if step not in PREPROCESSORS:
                    raise ConfigError(f"unknown preprocessing step {step!r}")
            out["preprocessing"] = chain
            desc = d.get("descriptor")
            if not isinstance(desc, dict) or "name" not in desc:
                raise ConfigError("'descriptor' must be an object with 'name'")
            try:
                kind = DescriptorId(str(desc["name"]).upper())
                params = params_from_dict(kind.value, desc.get("params"))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad descriptor: {exc}") from exc
            out["descriptor"] = {"name": kind.value, "params": params.as_dict()}
        else:
            if d.get("preprocessing") or d.get("descriptor"):
                raise ConfigError("'preprocessing'/'descriptor' only apply to image datasets")
            out["features"] = str(d["features"])
        c = d.get("classifier")
        if not isinstance(c, dict) or c.get("name") not in CLASSIFIER_NAMES:
            raise ConfigError(f"'classifier.name' must be one of {CLASSIFIER_NAMES}")
        cparams = dict(c.get("params") or {})
        name = c["name"]
        if name == "svm":
            if "C" in cparams or "gamma" in cparams:
                if not ("C" in cparams and "gamma" in cparams):
                    raise ConfigError("svm needs both C and gamma, or neither (grid search)")
            else:
                cparams.setdefault("grid_folds", 5)
        elif name == "knn":
            cparams.setdefault("k", 5)
        elif name == "rf":
            cparams.setdefault("trees", 10)
        out["classifier"] = {"name": name, "params": cparams}
        sel = d.get("selection")
        if sel is not None:
            n = sel.get("n") if isinstance(sel, dict) else None
            if not isinstance(n, int) or n < 1:
                raise ConfigError("'selection.n' must be a positive integer")
            out["selection"] = {"method": "chi2", "n": n}
        folds = d.get("folds", {})
        k = int(folds.get("k", 10))
        if k < 2:
            raise ConfigError("folds.k must be at least 2")
        out["folds"] = {"k": k}
        if "seed" in folds:
            out["folds"]["seed"] = int(folds["seed"])
        if "name" in d:
            out["name"] = str(d["name"])
        return out

    @property
    def fingerprint(self) -> str:
        return fingerprint_of(self.raw)

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def fold_seed(self) -> int:
        return self.raw["folds"].get("seed", split_seed(self.seed, "folds"))

    @property
    def name(self) -> str:
        if "name" in self.raw:
            return self.raw["name"]
        parts = []
        if "dataset" in self.raw:
            parts.append(self.raw["dataset"]["name"])
            parts.extend(self.raw["preprocessing"])
            desc = self.raw["descriptor"]
            parts.append(desc["name"] + "".join(f"{v}" for v in desc["params"].values() if not isinstance(v, bool)))
        parts.append(self.raw["classifier"]["name"])
        return "-".join(str(p) for p in parts)

    def to_dict(self) -> dict:
        return {**copy.deepcopy(self.raw), "fingerprint": self.fingerprint}


# --------------------------------------------------------------------------
# experiments


@dataclass
class FoldOutcome:
    fold: int
    matrix: ProbabilityMatrix
    model_json: str
    selected: list[int] | None
    params: dict


@dataclass
class ExperimentResult:
    config_fingerprint: str
    metrics: MetricsRecord
    probability_matrices: list[ProbabilityMatrix]
    fold_plan: FoldPlan
    models: list[str] = field(default_factory=list)
    chosen_params: list[dict] = field(default_factory=list)


def load_experiment_data(config: ExperimentConfig, threads: int = 1) -> LabeledDataset:
    raw = config.raw
    if "features" in raw:
        return read_features_csv(raw["features"])
    ds_dir = Path(raw["dataset"]["root"]) / raw["dataset"]["name"]
    samples = discover(ds_dir)
    desc = raw["descriptor"]
    params = params_from_dict(desc["name"], desc["params"])
    return extract_features(samples, raw["preprocessing"], desc["name"], params, threads)


def train_classifier(train: LabeledDataset, spec: dict, seed: int, fold: int):
    """Fit the configured classifier; returns (model, effective params)."""
    name, p = spec["name"], spec["params"]
    if name == "svm":
        if "C" in p:
            params = clf.SvmParams(C=float(p["C"]), gamma=float(p["gamma"]))
        else:
            kw = {}
            if "C_grid" in p:
                kw["Cs"] = tuple(float(v) for v in p["C_grid"])
            if "gamma_grid" in p:
                kw["gammas"] = tuple(float(v) for v in p["gamma_grid"])
            params = clf.grid_search_svm(train, folds=int(p.get("grid_folds", 5)),
                                         seed=split_seed(seed, "grid", fold), **kw)
        model = clf.train_svm(train, params, seed=split_seed(seed, "svm", fold))
        return model, {"C": params.C, "gamma": params.gamma}
    if name == "knn":
        return clf.train_knn(train, int(p["k"])), {"k": int(p["k"])}
    if name == "gnb":
        return clf.train_gnb(train), {}
    if name == "rf":
        rf_seed = split_seed(seed, "rf", fold)
        return clf.train_rf(train, int(p["trees"]), rf_seed), {"trees": int(p["trees"]), "seed": rf_seed}
    raise ConfigError(f"unknown classifier {name!r}")


def run_fold(data: LabeledDataset, plan: FoldPlan, fold: int, config: ExperimentConfig,
             classifier_id: str) -> FoldOutcome:
    train_idx = np.flatnonzero(plan.assignments != fold)
    test_idx = np.flatnonzero(plan.assignments == fold)
    train, test = data.subset(train_idx), data.subset(test_idx)
    selected = None
    sel = config.raw.get("selection")
    if sel:
        selector = Chi2Selector(sel["n"]).fit(train)
        selected = selector.indices.tolist()
        train = LabeledDataset(selector.transform(train.X), train.y, train.sample_ids)
        test = LabeledDataset(selector.transform(test.X), test.y, test.sample_ids)
    model, params = train_classifier(train, config.raw["classifier"], config.seed, fold)
    matrix = clf.predict_proba(model, test.X, test.sample_ids, classifier_id, fold)
    matrix.check()
    return FoldOutcome(fold, matrix, model.to_json(), selected, params)


def run_experiment(config: ExperimentConfig, data: LabeledDataset | None = None, threads: int = 1,
                   classifier_id: str | None = None) -> ExperimentResult:
    """Cross-validate the configured pipeline; metrics pool all fold predictions."""
    if data is None:
        data = load_experiment_data(config, threads)
    order = sorted(range(len(data)), key=lambda i: data.sample_ids[i])
    data = data.subset(order)
    sel = config.raw.get("selection")
    if sel and sel["n"] > data.feature_dim:
        raise ConfigError(f"selection.n={sel['n']} exceeds the feature dimension {data.feature_dim}")
    k = config.raw["folds"]["k"]
    try:
        plan = stratified_kfold(data.labels, k, config.fold_seed, data.sample_ids)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cid = classifier_id or config.name
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outcomes = list(pool.map(lambda f: run_fold(data, plan, f, config, cid), range(k)))
    else:
        outcomes = [run_fold(data, plan, f, config, cid) for f in range(k)]
    outcomes.sort(key=lambda o: o.fold)
    truth = plan.label_map()
    per_fold = []
    pooled_pred, pooled_truth = [], []
    for o in outcomes:
        pred = [CLASSES[v] for v in o.matrix.argmax_labels()]
        tru = [truth[s] for s in o.matrix.sample_ids]
        per_fold.append(f_measure(pred, tru))
        pooled_pred += pred
        pooled_truth += tru
    metrics = f_measure(pooled_pred, pooled_truth)
    metrics.per_fold = per_fold
    log.info("event=experiment_done name=%s f_measure=%.4f fingerprint=%s", cid, metrics.f_measure,
             config.fingerprint)
    return ExperimentResult(
        config.fingerprint,
        metrics,
        [o.matrix for o in outcomes],
        plan,
        [o.model_json for o in outcomes],
        [{"fold": o.fold, **o.params, **({"selected": o.selected} if o.selected is not None else {})}
         for o in outcomes],
    )
