"""Grid functions and dense lattice operators.

Functions on the one-dimensional lattice are plain float64 arrays of length
n; the lattice spacing is 1, so integrals over x are plain sums.  Operators
are dense symmetric (n, n) float64 arrays.  Builders return freshly
allocated, exactly symmetric matrices (an exact symmetry check, not an
approximate one, must pass).  Inverse-covariance builders are positive
semidefinite up to an eigenvalue floor of -1e-10 * max|entry|.

The negative Laplacian -Delta has rows (-1, 2, -1); with periodic boundary
conditions it picks up the two corner entries and every row sums to zero.
The theta-shift difference operator D_theta (right variant) maps
v(x) -> v(x + theta) - v(x), and -Delta_theta = D_theta^T D_theta penalizes
deviations from theta-periodicity.
"""

from __future__ import annotations

import numpy as np


def as_grid(values, n: int | None = None) -> np.ndarray:
    """Validate and return a grid function as a float64 array of length n."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"grid function must be 1-D, got shape {v.shape}")
    if v.size < 2:
        raise ValueError(f"grid size must be >= 2, got {v.size}")
    if n is not None and v.size != n:
        raise ValueError(f"grid function has length {v.size}, expected {n}")
    if not np.all(np.isfinite(v)):
        raise ValueError("grid function contains non-finite entries")
    return v


def is_exactly_symmetric(mat: np.ndarray) -> bool:
    return mat.ndim == 2 and mat.shape[0] == mat.shape[1] and np.array_equal(mat, mat.T)


def symmetrize_exact(mat: np.ndarray) -> np.ndarray:
    """(M + M^T)/2; exactly symmetric in IEEE arithmetic (a+b == b+a)."""
    return (mat + mat.T) / 2.0


def min_eigenvalue(mat: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(mat)[0])


def assert_inverse_covariance(mat: np.ndarray, floor_factor: float = 1e-10) -> None:
    """Check the inverse-covariance contract: exact symmetry and PSD up to floor."""
    if not is_exactly_symmetric(mat):
        raise ValueError("inverse covariance must be exactly symmetric")
    scale = np.max(np.abs(mat)) if mat.size else 0.0
    lo = min_eigenvalue(mat)
    if lo < -floor_factor * max(scale, 1.0):
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {lo:g})")


def _check_size(n: int) -> None:
    if int(n) != n or n < 2:
        raise ValueError(f"lattice size must be an integer >= 2, got {n!r}")


def build_shift_difference(n: int, theta: int, periodic: bool = True,
                           side: str = "right") -> np.ndarray:
    """Difference operator for shifts by theta lattice sites.

    Right variant: row x is v(x + theta) - v(x); left variant: v(x) - v(x - theta).
    With periodic wrap the two are related by (D^L)^T = -D^R.  Without wrap,
    rows whose shifted index would leave the lattice are zeroed.
    """
    _check_size(n)
    if int(theta) != theta or not (1 <= theta < n):
        raise ValueError(f"shift must satisfy 1 <= theta < n, got theta={theta!r}")
    theta = int(theta)
    d = np.zeros((n, n))
    for x in range(n):
        if side == "right":
            xp = x + theta
            if xp >= n:
                if not periodic:
                    continue
                xp -= n
            d[x, x] -= 1.0
            d[x, xp] += 1.0
        elif side == "left":
            xm = x - theta
            if xm < 0:
                if not periodic:
                    continue
                xm += n
            d[x, x] += 1.0
            d[x, xm] -= 1.0
        else:
            raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    return d


def build_laplacian(n: int, periodic: bool = True) -> np.ndarray:
    """Negative Laplacian -Delta: diagonal 2, off-diagonal -1, corners when periodic.

    The non-periodic variant is D^T D for the unwrapped first difference
    (diagonal 1, 2, ..., 2, 1), which also has zero row sums.
    """
    _check_size(n)
    d = build_shift_difference(n, 1, periodic=periodic, side="right")
    return d.T @ d


def build_periodic_invcov(n: int, theta: int, lam: float, gamma: float) -> np.ndarray:
    """Inverse covariance lam * (-Delta + gamma * (-Delta_theta)).

    Combines a smoothness term with a penalty on deviations from exact
    theta-periodicity; its null space is spanned by constant, theta-periodic
    functions.
    """
    if lam < 0 or gamma < 0:
        raise ValueError(f"weights must be nonnegative, got lam={lam}, gamma={gamma}")
    dt = build_shift_difference(n, theta, periodic=True)
    return lam * (build_laplacian(n) + gamma * (dt.T @ dt))


def build_multiperiod_energy_matrix(n: int, theta: int, weights,
                                    k_max: int | None = None) -> np.ndarray:
    """Sum over harmonics k of w(k) * D_{k*theta}^T D_{k*theta}.

    `weights` is a callable w(k) or a sequence giving w(1), ..., w(k_max).
    Shifts must stay below the lattice size: k*theta >= n aliases through the
    periodic wrap and is rejected.
    """
    _check_size(n)
    if callable(weights):
        if k_max is None:
            raise ValueError("k_max is required when weights is callable")
        wlist = [float(weights(k)) for k in range(1, k_max + 1)]
    else:
        wlist = [float(w) for w in weights]
        if k_max is not None and k_max != len(wlist):
            raise ValueError("k_max does not match the number of weights")
    if not wlist:
        raise ValueError("at least one harmonic weight is required")
    if any(w < 0 for w in wlist):
        raise ValueError("harmonic weights must be nonnegative")
    if len(wlist) * theta >= n:
        raise ValueError(
            f"k_max*theta = {len(wlist) * theta} exceeds the lattice (n={n}); "
            "shifted copies would alias")
    m = np.zeros((n, n))
    for k, w in enumerate(wlist, start=1):
        d = build_shift_difference(n, k * theta, periodic=True)
        m += w * (d.T @ d)
    return m


def disconnect_filter(w: np.ndarray, regions) -> np.ndarray:
    """Zero every filter row that couples more than one region.

    `regions` must partition range(n) (each column index exactly once).  The
    returned filter W~ yields a block-diagonal W~^T W~, removing all coupling
    across region boundaries.
    """
    w = np.array(w, dtype=float)
    if w.ndim != 2:
        raise ValueError("filter must be a 2-D matrix")
    n = w.shape[1]
    region_of = np.full(n, -1, dtype=int)
    for rid, region in enumerate(regions):
        for idx in region:
            i = int(idx)
            if not (0 <= i < n) or region_of[i] != -1:
                raise ValueError("regions must partition the column index range "
                                 f"0..{n - 1} (index {i} repeated or out of range)")
            region_of[i] = rid
    if np.any(region_of < 0):
        missing = np.flatnonzero(region_of < 0).tolist()
        raise ValueError(f"regions must cover every column index; missing {missing}")
    for r in range(w.shape[0]):
        touched = np.unique(region_of[np.flatnonzero(w[r])])
        if touched.size > 1:
            w[r] = 0.0
    return w


def build_symmetry_invcov(s: np.ndarray) -> np.ndarray:
    """(I - S)^T (I - S) for a symmetry map S; penalizes asymmetry under S."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"symmetry map must be square, got shape {s.shape}")
    r = np.eye(s.shape[0]) - s
    return symmetrize_exact(r.T @ r)


def build_rbf_invcov(n: int, sigma_rbf: float) -> np.ndarray:
    """Inverse covariance exp(sigma^2 * (-Delta) / 2) via eigendecomposition.

    Shares the eigenbasis of -Delta with eigenvalues exp(sigma^2 * lam_i / 2),
    so smooth modes cost little and rough modes are suppressed exponentially.
    """
    if sigma_rbf < 0:
        raise ValueError(f"sigma_rbf must be nonnegative, got {sigma_rbf}")
    lam, q = np.linalg.eigh(build_laplacian(n))
    k = (q * np.exp(0.5 * sigma_rbf ** 2 * lam)) @ q.T
    return symmetrize_exact(k)


def quadratic_form(mat: np.ndarray, u: np.ndarray) -> float:
    """u^T M u as a float."""
    u = np.asarray(u, dtype=float)
    return float(u @ (mat @ u))
