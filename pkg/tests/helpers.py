import numpy as np

from omit.data import ObservationTable


def make_table(X, y, t, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    names = names or tuple(f"x{j + 1}" for j in range(X.shape[1]))
    return ObservationTable(X=X, y=np.asarray(y, dtype=float), t=np.asarray(t, dtype=float),
                            covariate_names=names, outcome_name="y", treatment_name="t")
