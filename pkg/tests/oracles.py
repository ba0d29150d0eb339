"""Independent reference implementations used only by tests.

Everything here is deliberately written the slow, obvious way (scalar
loops, Fraction arithmetic, textbook formulas) and stays independent of
the library code paths it checks.
"""

from __future__ import annotations

import math
from fractions import Fraction


def brute_force_heatmap(samples, viewport_w, viewport_h, grid_size):
    """Scalar binning loop: unnormalized counts plus normalized cells."""
    one_below_one = math.nextafter(1.0, 0.0)
    counts = [[0 for _ in range(grid_size)] for _ in range(grid_size)]
    for _, x, y in samples:
        fx = min(max(x / viewport_w, 0.0), one_below_one)
        fy = min(max(y / viewport_h, 0.0), one_below_one)
        col = min(int(math.floor(fx * grid_size)), grid_size - 1)
        row = min(int(math.floor(fy * grid_size)), grid_size - 1)
        counts[row][col] += 1
    n = len(samples)
    cells = [[counts[r][c] / n for c in range(grid_size)] for r in range(grid_size)] if n else None
    return counts, cells


def textbook_pearson(xs, ys):
    """Two-pass Pearson coefficient, straight from the definition."""
    n = len(xs)
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(xs, ys))
    var_x = sum((a - mean_x) ** 2 for a in xs)
    var_y = sum((b - mean_y) ** 2 for b in ys)
    return cov / math.sqrt(var_x * var_y)


def exhaustive_best_split(rows, labels, num_classes, min_leaf_size=1):
    """Brute-force Gini split search with exact Fraction arithmetic.

    Candidates are, per feature, the midpoints between consecutive distinct
    sorted values (with the same numeric guard as the production code: if
    the float midpoint rounds up to the higher value, the lower value is
    used). Returns (feature, threshold, weighted_gini) of the best
    improving split, ties broken by lowest feature then lowest threshold,
    or None if no candidate strictly reduces impurity.
    """
    n = len(rows)
    num_features = len(rows[0])

    def gini(indices):
        total = len(indices)
        counts = [0] * num_classes
        for i in indices:
            counts[labels[i]] += 1
        return Fraction(1) - sum(Fraction(c * c, total * total) for c in counts)

    parent = gini(range(n))
    best = None  # (weighted_gini, feature, threshold)
    for f in range(num_features):
        values = sorted(set(row[f] for row in rows))
        for lo, hi in zip(values[:-1], values[1:]):
            threshold = (lo + hi) / 2.0
            if threshold >= hi:
                threshold = lo
            left = [i for i in range(n) if rows[i][f] <= threshold]
            right = [i for i in range(n) if rows[i][f] > threshold]
            if len(left) < min_leaf_size or len(right) < min_leaf_size:
                continue
            weighted = Fraction(len(left), n) * gini(left) + Fraction(len(right), n) * gini(right)
            if weighted >= parent:
                continue
            key = (weighted, f, threshold)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    weighted, f, threshold = best
    return f, threshold, weighted


def grow_reference_tree(rows, labels, num_classes, min_leaf_size=1, max_depth=None, depth=0):
    """Reference CART growth mirroring the specified stopping rules.

    Nodes are plain dicts: {"leaf": counts} or
    {"feature": f, "threshold": t, "left": ..., "right": ...}.
    """
    counts = [0] * num_classes
    for lab in labels:
        counts[lab] += 1
    pure = sum(1 for c in counts if c) <= 1
    if pure or len(rows) < 2 * min_leaf_size or (max_depth is not None and depth >= max_depth):
        return {"leaf": counts}
    found = exhaustive_best_split(rows, labels, num_classes, min_leaf_size)
    if found is None:
        return {"leaf": counts}
    f, threshold, _ = found
    left_idx = [i for i in range(len(rows)) if rows[i][f] <= threshold]
    right_idx = [i for i in range(len(rows)) if rows[i][f] > threshold]
    return {
        "feature": f,
        "threshold": threshold,
        "left": grow_reference_tree(
            [rows[i] for i in left_idx], [labels[i] for i in left_idx],
            num_classes, min_leaf_size, max_depth, depth + 1,
        ),
        "right": grow_reference_tree(
            [rows[i] for i in right_idx], [labels[i] for i in right_idx],
            num_classes, min_leaf_size, max_depth, depth + 1,
        ),
    }


def nearest_centroid_accuracy(X_train, y_train, X_test, y_test, num_classes):
    """Sanity-check classifier: predicts the class of the nearest centroid."""
    import numpy as np

    centroids = [np.mean(X_train[y_train == c], axis=0) for c in range(num_classes)]
    correct = 0
    for x, y in zip(X_test, y_test):
        d = [float(np.sum((x - c) ** 2)) for c in centroids]
        if int(np.argmin(d)) == int(y):
            correct += 1
    return correct / len(X_test)


def quartiles_linear(values):
    """Linear interpolation between closest ranks at p = 25/50/75."""
    s = sorted(values)
    n = len(s)

    def q(p):
        h = (n - 1) * p
        lo = math.floor(h)
        hi = math.ceil(h)
        return s[lo] + (h - lo) * (s[hi] - s[lo])

    return q(0.25), q(0.5), q(0.75)
