"""Shared random-instance builders for solver tests."""
import numpy as np
import scipy.sparse as sp


def random_laplacian(rng, n, density=0.15):
    """Random symmetric weighted graph Laplacian (PSD by construction)."""
    W = sp.random(n, n, density=density, random_state=np.random.RandomState(rng.integers(2 ** 31)),
                  data_rvs=lambda k: rng.uniform(0.1, 1.0, k))
    W = W.tocsr()
    W = (W + W.T) * 0.5
    W.setdiag(0)
    W.eliminate_zeros()
    deg = np.asarray(W.sum(axis=1)).ravel()
    return (sp.diags(deg) - W).tocsr()


def random_normalized_laplacian(rng, n, density=0.1):
    """Normalized Laplacian of a random binary graph, isolated rows zeroed."""
    A = sp.random(n, n, density=density, random_state=np.random.RandomState(rng.integers(2 ** 31)),
                  data_rvs=lambda k: np.ones(k))
    A = A.tocsr()
    A = A + A.T
    A.data[:] = 1.0
    A.setdiag(0)
    A.eliminate_zeros()
    deg = np.asarray(A.sum(axis=1)).ravel()
    inv = np.zeros(n)
    inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    D = sp.diags(inv)
    return (sp.diags((deg > 0).astype(float)) - D @ A @ D).tocsr()


def random_repulsion(rng, n, density=0.05):
    """Degree-normalized random symmetric 0/1 conflict matrix with zero diagonal."""
    St = sp.random(n, n, density=density, random_state=np.random.RandomState(rng.integers(2 ** 31)),
                   data_rvs=lambda k: np.ones(k))
    St = St.tocsr()
    St = St + St.T
    St.data[:] = 1.0
    St.setdiag(0)
    St.eliminate_zeros()
    deg = np.asarray(St.sum(axis=1)).ravel()
    inv = np.zeros(n)
    inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
    D = sp.diags(inv)
    return (D @ St @ D).tocsr()


def random_labels(rng, n, c, rate=0.1):
    """Sparse 0/1 label matrix with at most one nonzero per row."""
    rows = np.flatnonzero(rng.random(n) < rate)
    cols = rng.integers(0, c, size=len(rows))
    Y = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, c))
    return Y


def random_instance(rng, n, c, label_rate=0.1):
    L = random_laplacian(rng, n)
    K = random_normalized_laplacian(rng, n)
    S = random_repulsion(rng, n)
    Y = random_labels(rng, n, c, label_rate)
    return L, K, S, Y
