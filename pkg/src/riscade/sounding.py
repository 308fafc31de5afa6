"""Pilot sounding: RIS phase schedule, BS combiner, measurement operator.

Stacking the K observation blocks and vectorizing column-major turns the
sounding round into a single linear model y = Psi h + n with
Psi = phase_schedule^T kron combiner^H. Everything the estimators and the
unfolding net need (the real lift, its Gram matrix, the compressed statistic)
is precomputed here once per configuration.
"""

from dataclasses import dataclass

import numpy as np

from .validation import check_positive_int

_NOISELESS = {None, np.inf}


@dataclass(frozen=True)
class SoundingConfig:
    """Pilot-phase shape: K observation blocks of n_combiner outputs each."""

    n_uses: int
    n_combiner: int
    snr_db: float = 20.0

    def __post_init__(self):
        check_positive_int(self.n_uses, "n_uses")
        check_positive_int(self.n_combiner, "n_combiner")


@dataclass(frozen=True)
class MeasurementModel:
    """Immutable sounding operator plus its precomputed lifts.

    phase_schedule is n_ris x n_uses with unit-modulus entries, combiner is
    n_bs x n_combiner with orthonormal columns, psi the Kronecker-structured
    measurement matrix acting on the vectorized cascaded channel. psi_real,
    gram_real and gram are derived once and shared read-only.
    """

    phase_schedule: np.ndarray
    combiner: np.ndarray
    psi: np.ndarray
    psi_real: np.ndarray
    gram_real: np.ndarray
    gram: np.ndarray

    @property
    def n_ris(self):
        return self.phase_schedule.shape[0]

    @property
    def n_uses(self):
        return self.phase_schedule.shape[1]

    @property
    def n_bs(self):
        return self.combiner.shape[0]

    @property
    def n_combiner(self):
        return self.combiner.shape[1]

    @property
    def n_obs(self):
        return self.psi.shape[0]

    @property
    def dim(self):
        """Number of complex unknowns (n_bs * n_ris)."""
        return self.psi.shape[1]

    @property
    def dim_real(self):
        """Length of the lifted real unknown vector."""
        return 2 * self.psi.shape[1]


@dataclass(frozen=True)
class Observation:
    """One noisy sounding round: complex stack, real lift, compressed statistic."""

    y: np.ndarray
    y_real: np.ndarray
    stat_real: np.ndarray
    noise_var: float


def dft_matrix(n):
    """Unnormalized n x n DFT matrix, entry (a, b) = exp(-2j*pi*a*b/n)."""
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n)


def center_out_indices(n, k):
    """k distinct indices enumerated center-out: 0, 1, n-1, 2, n-2, ...

    Any prefix of the enumeration is a frequency-symmetric set, so a shorter
    schedule is literally the start of a longer sounding session.
    """
    offsets = [0]
    m = 1
    while len(offsets) < k:
        offsets.append(m)
        if len(offsets) < k:
            offsets.append(-m)
        m += 1
    return [o % n for o in offsets]


def build_phase_schedule(n_ris, n_uses):
    """n_uses columns of the n_ris-point DFT matrix, enumerated center-out.

    The cascaded channel's RIS-side spectrum lives on the difference of an
    arrival and a departure sine, which is sign-symmetric and peaks at zero,
    so the selected beams must straddle zero frequency; taking the first
    n_uses columns instead would leave the negative-frequency band unsounded
    and starve narrow angle ranges. All entries are unit modulus.
    """
    check_positive_int(n_ris, "n_ris")
    check_positive_int(n_uses, "n_uses")
    if n_uses > n_ris:
        raise ValueError(f"n_uses must not exceed n_ris, got {n_uses} > {n_ris}")
    return dft_matrix(n_ris)[:, center_out_indices(n_ris, n_uses)]


def build_combiner(n_bs, n_combiner):
    """First n_combiner columns of the n_bs-point DFT matrix, scaled orthonormal."""
    check_positive_int(n_bs, "n_bs")
    check_positive_int(n_combiner, "n_combiner")
    if n_combiner > n_bs:
        raise ValueError(
            f"n_combiner must not exceed n_bs, got {n_combiner} > {n_bs}"
        )
    return dft_matrix(n_bs)[:, :n_combiner] / np.sqrt(n_bs)


def lift_matrix(a):
    """Real 2p x 2q lift [[Re, -Im], [Im, Re]] of a complex p x q matrix."""
    a = np.asarray(a, dtype=np.complex128)
    return np.block([[a.real, -a.imag], [a.imag, a.real]])


def lift_vector(x):
    """Stack [Re(x); Im(x)] along the last axis; works on batches too."""
    x = np.asarray(x, dtype=np.complex128)
    return np.concatenate([x.real, x.imag], axis=-1)


def unlift_vector(x_real):
    """Invert lift_vector along the last axis."""
    x_real = np.asarray(x_real, dtype=np.float64)
    half = x_real.shape[-1] // 2
    if x_real.shape[-1] != 2 * half:
        raise ValueError(f"lifted vectors have even length, got {x_real.shape[-1]}")
    return x_real[..., :half] + 1j * x_real[..., half:]


def build_psi(phase_schedule, combiner):
    """Assemble the measurement operator and its precomputed lifts."""
    phase_schedule = np.asarray(phase_schedule, dtype=np.complex128)
    combiner = np.asarray(combiner, dtype=np.complex128)
    if phase_schedule.ndim != 2 or combiner.ndim != 2:
        raise ValueError("phase_schedule and combiner must be 2-D")
    psi = np.kron(phase_schedule.T, combiner.conj().T)
    psi_real = lift_matrix(psi)
    return MeasurementModel(
        phase_schedule=phase_schedule,
        combiner=combiner,
        psi=psi,
        psi_real=psi_real,
        gram_real=psi_real.T @ psi_real,
        gram=psi.conj().T @ psi,
    )


def build_model(channel_cfg, sounding_cfg):
    """Build the MeasurementModel matching a channel/sounding config pair."""
    schedule = build_phase_schedule(channel_cfg.n_ris, sounding_cfg.n_uses)
    combiner = build_combiner(channel_cfg.n_bs, sounding_cfg.n_combiner)
    return build_psi(schedule, combiner)


def noise_variance(snr_db):
    """Complex noise variance 1/snr with snr in dB; None or inf means noiseless."""
    if snr_db in _NOISELESS:
        return 0.0
    return float(10.0 ** (-float(snr_db) / 10.0))


def observe(model, h_c, snr_db, rng=None):
    """One sounding round over the given cascaded channel vector.

    Ambient noise with per-entry variance 10^(-snr_db/10) hits the BS array
    and passes through the combiner; orthonormal combiner columns keep the
    stacked noise white with the same variance. snr_db of None or inf
    disables noise entirely.
    """
    h_c = np.asarray(h_c, dtype=np.complex128)
    if h_c.shape != (model.dim,):
        raise ValueError(f"h_c must have shape ({model.dim},), got {h_c.shape}")
    y = model.psi @ h_c
    var = noise_variance(snr_db)
    if var > 0.0:
        if rng is None:
            raise ValueError("rng is required when noise is enabled")
        draws = rng.standard_normal((2, model.n_bs, model.n_uses))
        ambient = (draws[0] + 1j * draws[1]) * np.sqrt(var / 2.0)
        combined = model.combiner.conj().T @ ambient
        y = y + combined.ravel(order="F")
    y_real = lift_vector(y)
    return Observation(
        y=y,
        y_real=y_real,
        stat_real=model.psi_real.T @ y_real,
        noise_var=var,
    )
