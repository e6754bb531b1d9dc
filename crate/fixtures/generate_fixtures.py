#!/usr/bin/env python3
"""Regenerate the committed model fixtures under fixtures/models/.

Datasets (all under fixtures/datasets/):
  winequality-red.csv            real red-wine quality rows (1599).
  winequality-white-partial.csv  real white-wine rows for qualities 3,4,5,7,9;
                                 used only to fit the white-wine surrogate.
The cardiotocography table is a seeded synthetic surrogate (21 features,
3 classes with the original class balance).

Every model is trained with a 70/30 split, min-max normalisation fitted on the
training rows, and RandomizedSearchCV with 5-fold cross-validation.

    python3 fixtures/generate_fixtures.py [--seed 7] [--out fixtures/models]
"""

import argparse
import json
import os

import numpy as np
from scipy.stats import loguniform
from sklearn.model_selection import RandomizedSearchCV, train_test_split
from sklearn.neural_network import MLPClassifier, MLPRegressor
from sklearn.svm import SVC, SVR

FORMAT_VERSION = 1
HERE = os.path.dirname(os.path.abspath(__file__))
WHITE_COUNTS = {3: 20, 4: 163, 5: 1457, 6: 2198, 7: 880, 8: 175, 9: 5}
CTG_COUNTS = {1: 1655, 2: 295, 3: 176}


def load_csv(path):
    raw = np.genfromtxt(path, delimiter=",", skip_header=1)
    return raw[:, :-1], raw[:, -1].astype(int)


def white_surrogate(rng):
    x, y = load_csv(os.path.join(HERE, "datasets", "winequality-white-partial.csv"))
    stats = {}
    for q in (3, 4, 5, 7, 9):
        rows = x[y == q]
        stats[q] = (rows.mean(axis=0), np.cov(rows, rowvar=False))
    # qualities 6 and 8 are absent from the partial table: interpolate neighbours
    stats[6] = ((stats[5][0] + stats[7][0]) / 2, (stats[5][1] + stats[7][1]) / 2)
    stats[8] = ((stats[7][0] + stats[9][0]) / 2, stats[7][1])
    stats[9] = (stats[9][0], stats[7][1])
    stats[3] = (stats[3][0], (stats[3][1] + stats[4][1]) / 2)
    xs, ys = [], []
    for q, n in WHITE_COUNTS.items():
        mean, cov = stats[q]
        xs.append(np.clip(rng.multivariate_normal(mean, cov, size=n), 0.0, None))
        ys.append(np.full(n, q))
    return np.vstack(xs), np.concatenate(ys)


def ctg_surrogate(rng):
    d = 21
    mix = rng.normal(size=(d, d)) / np.sqrt(d)
    cov = mix @ mix.T + 0.3 * np.eye(d)
    base = rng.uniform(0.0, 4.0, size=d)
    xs, ys = [], []
    for cls, n in CTG_COUNTS.items():
        shift = np.zeros(d)
        if cls > 1:
            idx = rng.choice(d, size=7, replace=False)
            shift[idx] = rng.normal(0.0, 1.6, size=7)
        xs.append(rng.multivariate_normal(base + shift, cov, size=n))
        ys.append(np.full(n, cls))
    return np.vstack(xs), np.concatenate(ys)


def split_normalise(x, y, seed, stratify):
    xtr, xte, ytr, yte = train_test_split(
        x, y, test_size=0.3, random_state=seed, stratify=y if stratify else None
    )
    lo, hi = xtr.min(axis=0), xtr.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    xtr = (xtr - lo) / span
    xte = np.clip((xte - lo) / span, 0.0, 1.0)
    return xtr, xte, ytr, yte, lo, hi


def smallest_near_best(search, tol=0.005):
    res = search.cv_results_
    best = np.max(res["mean_test_score"])
    cands = [
        (p["hidden_layer_sizes"][0], -s, i)
        for i, (p, s) in enumerate(zip(res["params"], res["mean_test_score"]))
        if s >= best - tol * max(1.0, abs(best))
    ]
    return res["params"][min(cands)[2]]


def train_mlp(kind, xtr, ytr, seed):
    est = MLPClassifier if kind == "mlp_classifier" else MLPRegressor
    space = {
        "hidden_layer_sizes": [(h,) for h in range(1, 6)],
        "alpha": loguniform(1e-5, 1e-1),
        "learning_rate_init": loguniform(1e-3, 3e-2),
    }
    base = est(activation="relu", max_iter=1500, random_state=seed)
    search = RandomizedSearchCV(base, space, n_iter=20, cv=5, random_state=seed)
    search.fit(xtr, ytr)
    params = smallest_near_best(search)
    model = est(activation="relu", max_iter=1500, random_state=seed, **params)
    model.fit(xtr, ytr)
    return model


def train_svm(kind, xtr, ytr, seed):
    if kind == "svm_classifier":
        base = SVC(kernel="linear", decision_function_shape="ovo")
    else:
        base = SVR(kernel="linear")
    space = {"C": loguniform(1e-2, 1e2)}
    search = RandomizedSearchCV(base, space, n_iter=8, cv=5, random_state=seed)
    search.fit(xtr, ytr)
    return search.best_estimator_


def mlp_predict(layers, x, classifier):
    h = np.maximum(0.0, x @ np.array(layers[0]["weights"]).T + layers[0]["biases"])
    o = h @ np.array(layers[1]["weights"]).T + layers[1]["biases"]
    return np.argmax(o, axis=1) if classifier else o[:, 0]


def ovo_predict(pairs, nclass, x):
    out = []
    for row in x:
        votes = [0] * nclass
        for p in pairs:
            dec = float(np.dot(p["weights"], row) + p["bias"])
            votes[p["pos"] if dec > 0 else p["neg"]] += 1
        out.append(int(np.argmax(votes)))
    return np.array(out)


def export(kind, model, dataset, xte, yte, lo, hi, seed, ntrain):
    doc = {
        "format_version": FORMAT_VERSION,
        "id": f"{dataset}_{kind}",
        "dataset": dataset,
        "kind": kind,
        "n_features": int(xte.shape[1]),
        "classes": [],
        "normalization": {"min": lo.tolist(), "max": hi.tolist()},
        "seed": seed,
        "train_rows": int(ntrain),
    }
    classifier = kind.endswith("classifier")
    if classifier:
        doc["classes"] = [int(c) for c in model.classes_]
    if kind.startswith("mlp"):
        layers = [
            {"weights": model.coefs_[0].T.tolist(), "biases": model.intercepts_[0].tolist()},
            {"weights": model.coefs_[1].T.tolist(), "biases": model.intercepts_[1].tolist()},
        ]
        doc["mlp"] = {"layers": layers}
        pred = mlp_predict(layers, xte, classifier)
    elif classifier:
        nclass = len(model.classes_)
        pairs, k = [], 0
        for i in range(nclass):
            for j in range(i + 1, nclass):
                pairs.append({"pos": i, "neg": j, "weights": model.coef_[k].tolist(),
                              "bias": float(model.intercept_[k])})
                k += 1
        # pin the vote orientation against sklearn's own predictions
        agree = np.mean(ovo_predict(pairs, nclass, xte) == np.searchsorted(model.classes_, model.predict(xte)))
        if agree < 0.99:
            for p in pairs:
                p["pos"], p["neg"] = p["neg"], p["pos"]
        doc["svm"] = {"pairs": pairs}
        pred = ovo_predict(pairs, nclass, xte)
    else:
        doc["svm"] = {"pairs": [{"pos": 0, "neg": 0, "weights": model.coef_[0].tolist(),
                                 "bias": float(model.intercept_[0])}]}
        pred = xte @ model.coef_[0] + model.intercept_[0]
    if classifier:
        acc = np.mean(np.array(doc["classes"])[pred] == yte)
    else:
        acc = np.mean(np.rint(pred).astype(int) == yte)
    doc["float_accuracy"] = round(float(acc) * 100.0, 4)
    doc["test"] = {"features": xte.tolist(), "labels": [int(v) for v in yte]}
    return doc


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default=os.path.join(HERE, "models"))
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    red = load_csv(os.path.join(HERE, "datasets", "winequality-red.csv"))
    white = white_surrogate(rng)
    ctg = ctg_surrogate(rng)
    jobs = [
        ("cardiotocography", ctg, "mlp_classifier"),
        ("cardiotocography", ctg, "svm_classifier"),
        ("redwine", red, "mlp_classifier"),
        ("redwine", red, "svm_regressor"),
        ("whitewine", white, "mlp_regressor"),
        ("whitewine", white, "svm_classifier"),
    ]
    os.makedirs(args.out, exist_ok=True)
    for dataset, (x, y), kind in jobs:
        xtr, xte, ytr, yte, lo, hi = split_normalise(x, y, args.seed, kind.endswith("classifier"))
        if kind.startswith("mlp"):
            model = train_mlp(kind, xtr, ytr, args.seed)
        else:
            model = train_svm(kind, xtr, ytr, args.seed)
        doc = export(kind, model, dataset, xte, yte, lo, hi, args.seed, len(ytr))
        path = os.path.join(args.out, doc["id"] + ".json")
        with open(path, "w") as f:
            json.dump(doc, f, separators=(",", ":"))
            f.write("\n")
        print(f"{doc['id']}: float accuracy {doc['float_accuracy']:.2f}%")


if __name__ == "__main__":
    main()
