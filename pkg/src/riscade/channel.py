"""Geometric mmWave channel generation for the RIS-aided uplink.

The two hops are drawn independently: a multipath RIS-to-BS matrix and a
multipath MS-to-RIS vector, each a sum of steering-vector outer products with
one LoS path (index 0) and optional NLoS paths. Their product with the RIS
element responses forms the cascaded channel that the estimators recover.
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import (
    check_nonnegative_real,
    check_positive_int,
    check_positive_real,
    check_sine_range,
)


@dataclass(frozen=True)
class ChannelConfig:
    """Sizes and statistics of one channel ensemble.

    n_bs / n_ris are the BS antenna and RIS element counts; the path counts
    are bounded by the array sizes so the cascaded channel stays rank
    deficient. All angle sines are drawn uniformly from angle_sine_range.
    """

    n_bs: int
    n_ris: int
    n_paths_ris_bs: int = 1
    n_paths_ms_ris: int = 1
    var_los: float = 1.0
    var_nlos: float = 0.01
    angle_sine_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        check_positive_int(self.n_bs, "n_bs")
        check_positive_int(self.n_ris, "n_ris")
        check_positive_int(self.n_paths_ris_bs, "n_paths_ris_bs")
        check_positive_int(self.n_paths_ms_ris, "n_paths_ms_ris")
        check_positive_real(self.var_los, "var_los")
        check_nonnegative_real(self.var_nlos, "var_nlos")
        object.__setattr__(
            self, "angle_sine_range", check_sine_range(self.angle_sine_range)
        )
        if self.n_paths_ris_bs > min(self.n_bs, self.n_ris):
            raise ValueError(
                "n_paths_ris_bs must not exceed min(n_bs, n_ris), got "
                f"{self.n_paths_ris_bs} > {min(self.n_bs, self.n_ris)}"
            )
        if self.n_paths_ms_ris > self.n_ris:
            raise ValueError(
                f"n_paths_ms_ris must not exceed n_ris, got {self.n_paths_ms_ris}"
            )


@dataclass(frozen=True)
class PathSet:
    """Per-hop multipath parameters.

    gains[0] is the LoS path, the rest are NLoS. aod_sines is empty for the
    single-antenna MS hop, which has arrival angles only.
    """

    gains: np.ndarray
    aoa_sines: np.ndarray
    aod_sines: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __len__(self):
        return len(self.gains)


@dataclass(frozen=True)
class CascadedChannel:
    """The BS-side view of both hops: matrix and its column-major vectorization."""

    matrix: np.ndarray
    vector: np.ndarray

    @property
    def n_bs(self):
        return self.matrix.shape[0]

    @property
    def n_ris(self):
        return self.matrix.shape[1]


def steering_vector(sine, n_elems):
    """Uniform linear array response at half-wavelength spacing.

    Entry m equals exp(j*pi*m*sine); entry 0 is exactly 1.
    """
    n_elems = check_positive_int(n_elems, "n_elems")
    return np.exp(1j * np.pi * np.arange(n_elems) * float(sine))


def steering_matrix(sines, n_elems):
    """Stack steering vectors for several sines into an (n_elems, len(sines)) matrix."""
    sines = np.asarray(sines, dtype=float)
    return np.exp(1j * np.pi * np.outer(np.arange(n_elems), sines))


def draw_paths(cfg, hop, rng):
    """Draw one multipath realization for hop 1 (RIS->BS) or hop 2 (MS->RIS).

    The LoS gain is CN(0, var_los), NLoS gains are i.i.d. CN(0, var_nlos),
    and every angle sine is uniform on cfg.angle_sine_range. Hop 2 carries
    arrival angles only (aod_sines empty).
    """
    if hop not in (1, 2):
        raise ValueError(f"hop must be 1 or 2, got {hop!r}")
    n_paths = cfg.n_paths_ris_bs if hop == 1 else cfg.n_paths_ms_ris
    scale = np.full(n_paths, np.sqrt(cfg.var_nlos / 2.0))
    scale[0] = np.sqrt(cfg.var_los / 2.0)
    draws = rng.standard_normal((n_paths, 2))
    gains = (draws[:, 0] + 1j * draws[:, 1]) * scale
    lo, hi = cfg.angle_sine_range
    aoa_sines = rng.uniform(lo, hi, n_paths)
    if hop == 1:
        aod_sines = rng.uniform(lo, hi, n_paths)
    else:
        aod_sines = np.empty(0)
    return PathSet(gains=gains, aoa_sines=aoa_sines, aod_sines=aod_sines)


def assemble_h1(paths, n_bs, n_ris):
    """RIS->BS channel matrix A(aoa) diag(gains) A(aod)^H, shape (n_bs, n_ris)."""
    n_paths = len(paths)
    if len(paths.aoa_sines) != n_paths or len(paths.aod_sines) != n_paths:
        raise ValueError(
            "paths must carry matching gains, aoa_sines and aod_sines; got "
            f"{n_paths} gains, {len(paths.aoa_sines)} aoa, {len(paths.aod_sines)} aod"
        )
    a_bs = steering_matrix(paths.aoa_sines, n_bs)
    a_ris = steering_matrix(paths.aod_sines, n_ris)
    return (a_bs * paths.gains) @ a_ris.conj().T


def assemble_h2(paths, n_ris):
    """MS->RIS channel vector A(aoa) gains, shape (n_ris,)."""
    if len(paths.aoa_sines) != len(paths):
        raise ValueError(
            f"paths must carry one aoa sine per gain; got {len(paths)} gains, "
            f"{len(paths.aoa_sines)} aoa"
        )
    return steering_matrix(paths.aoa_sines, n_ris) @ paths.gains


def cascade(h1, h2):
    """Combine both hops into the cascaded channel h1 diag(h2).

    For any RIS phase vector w, matrix @ w equals h1 @ diag(w) @ h2, so the
    cascaded matrix carries everything the receiver can observe. The vector
    field is the column-major vectorization of the matrix.
    """
    h1 = np.asarray(h1, dtype=np.complex128)
    h2 = np.asarray(h2, dtype=np.complex128)
    if h1.ndim != 2 or h2.ndim != 1 or h1.shape[1] != h2.shape[0]:
        raise ValueError(
            f"incompatible shapes: h1 {h1.shape} versus h2 {h2.shape}"
        )
    matrix = h1 * h2[np.newaxis, :]
    return CascadedChannel(matrix=matrix, vector=matrix.ravel(order="F"))


def draw_cascaded(cfg, rng):
    """Draw both hops and return their cascaded channel."""
    h1 = assemble_h1(draw_paths(cfg, 1, rng), cfg.n_bs, cfg.n_ris)
    h2 = assemble_h2(draw_paths(cfg, 2, rng), cfg.n_ris)
    return cascade(h1, h2)


def unvectorize(vector, n_bs, n_ris):
    """Invert the column-major vectorization used by CascadedChannel."""
    vector = np.asarray(vector)
    if vector.shape != (n_bs * n_ris,):
        raise ValueError(
            f"expected a length-{n_bs * n_ris} vector, got shape {vector.shape}"
        )
    return vector.reshape((n_bs, n_ris), order="F")
