import itertools

import numpy as np
import pytest

ACCEPTANCE_RESULTS = []


def record(number, title, passed, detail=""):
    ACCEPTANCE_RESULTS.append((number, title, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:2d}. {title}: {detail}")


def qp_value(Q, q, w):
    return 0.5 * w @ Q @ w + q @ w


def exact_simplex_qp(Q, q):
    """Exact minimum of 0.5 w'Qw + q'w on the simplex by enumerating supports.

    For each support S the KKT system restricted to S is solved by least
    squares; feasible stationary points are candidates and the best one wins.
    Exponential in d, so only for small problems.
    """
    d = len(q)
    best_w, best_f = None, np.inf
    for r in range(1, d + 1):
        for S in itertools.combinations(range(d), r):
            S = list(S)
            # [Q_SS 1; 1' 0] [w; -mu] = [-q_S; 1]
            K = np.zeros((r + 1, r + 1))
            K[:r, :r] = Q[np.ix_(S, S)]
            K[:r, r] = 1.0
            K[r, :r] = 1.0
            rhs = np.r_[-q[S], 1.0]
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            if np.linalg.norm(K @ sol - rhs) > 1e-9 * (1 + np.abs(rhs).max()):
                continue
            wS = sol[:r]
            if np.any(wS < -1e-12):
                continue
            w = np.zeros(d)
            w[S] = np.clip(wS, 0, None)
            w /= w.sum()
            f = qp_value(Q, q, w)
            if f < best_f:
                best_w, best_f = w, f
    return best_w, best_f


def random_psd(rng, d, rank=None):
    rank = d if rank is None else rank
    M = rng.normal(size=(d, rank))
    return M @ M.T


@pytest.fixture(scope="session")
def iris():
    from sklearn.datasets import load_iris

    d = load_iris()
    return d.data, d.target, list(d.target_names)


@pytest.fixture
def iris_files(tmp_path, iris):
    X, y, names = iris
    cols = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
    path = tmp_path / "iris.csv"
    with open(path, "w") as fh:
        fh.write(",".join(cols + ["species"]) + "\n")
        for x, t in zip(X, y):
            fh.write(",".join(repr(float(v)) for v in x) + f",{names[t]}\n")
    schema = {
        "predictors": [{"name": "sepal", "columns": cols[:2]}, {"name": "petal", "columns": cols[2:]}],
        "response": {"name": "species", "columns": ["species"], "kind": "onehot"},
    }
    spath = tmp_path / "schema.json"
    import json

    spath.write_text(json.dumps(schema))
    return path, spath
