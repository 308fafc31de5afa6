"""Dataset generation, NMSE evaluation, and the four benchmark studies.

Each study sweeps a handful of curves (trained unfolding nets or closed-form
baselines) over a common test-SNR grid and reports mean NMSE rows ready for
CSV export. All randomness descends from the study seed through named
sub-streams, so runs are bit-reproducible and adding a curve never perturbs
the others. Test channel realizations are shared between curves whose channel
configs match, and those curves also share one ambient-noise session per test
SNR (a smaller sounding overhead observes a column prefix of it), keeping
comparisons sample-for-sample.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelConfig, draw_cascaded
from .estimators import (
    GradientDescentEstimator,
    LeastSquaresEstimator,
    NuclearNormEstimator,
    lambda_reference,
)
from .seeding import derive_seed
from .sounding import (
    SoundingConfig,
    build_model,
    noise_variance,
    observe,
    unlift_vector,
)
from .unfolding import DeepUnfoldingEstimator, TrainSchedule

DEFAULT_TEST_SNRS_DB = (0.0, 5.0, 10.0, 15.0, 20.0)
MIXED_TRAIN_SNRS_DB = (0.0, 5.0, 10.0, 15.0, 20.0)
DEFAULT_ANGLE_RANGES = ((0.0, 1.0), (0.0, 0.5), (0.0, 0.25))
CSV_HEADER = ("curve", "test_snr_db", "nmse", "n_samples")


@dataclass(frozen=True)
class Profile:
    """One end-to-end size preset; desk is the reduced default, paper full scale."""

    name: str
    n_bs: int
    n_ris: int
    n_layers: int
    n_combiner: int
    k_unfold: tuple
    k_ls: int
    include_svt: bool
    n_train: int
    n_test: int
    n_epochs: int = 40
    batch_size: int = 64


DESK_PROFILE = Profile(
    name="desk",
    n_bs=8,
    n_ris=16,
    n_layers=8,
    n_combiner=4,
    k_unfold=(12, 14),
    k_ls=16,
    include_svt=False,
    n_train=20000,
    n_test=10000,
)

PAPER_PROFILE = Profile(
    name="paper",
    n_bs=16,
    n_ris=32,
    n_layers=15,
    n_combiner=8,
    k_unfold=(24, 28),
    k_ls=32,
    include_svt=True,
    n_train=100000,
    n_test=10000,
)

PROFILES = {"desk": DESK_PROFILE, "paper": PAPER_PROFILE}


@dataclass(frozen=True)
class Dataset:
    """Generated samples over one measurement model.

    stats/targets are the lifted real network inputs and truths; the raw
    complex observations stay available for the baselines, and snrs_db
    records the per-sample draw under a mixed policy.
    """

    gram_real: np.ndarray
    stats: np.ndarray
    targets: np.ndarray
    observations: np.ndarray
    snrs_db: np.ndarray

    def __len__(self):
        return self.stats.shape[0]

    @property
    def channels(self):
        """Complex ground-truth channel vectors, one row per sample."""
        return unlift_vector(self.targets)


@dataclass(frozen=True)
class ResultRow:
    curve: str
    test_snr_db: float
    nmse: float
    n_samples: int


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one study.

    Curves are parallel lists: one sounding config, method, label and
    training-SNR policy each; channels optionally overrides the base channel
    config per curve (paths and angle-range studies vary it).
    """

    name: str
    channel: ChannelConfig
    soundings: tuple
    curve_methods: tuple
    curve_labels: tuple
    train_snrs_db: tuple
    test_snrs_db: tuple = DEFAULT_TEST_SNRS_DB
    n_train: int = 20000
    n_test: int = 10000
    seed: int = 0
    n_layers: int = 8
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    channels: tuple = None

    def __post_init__(self):
        if self.n_train <= 0 or self.n_test <= 0:
            raise ValueError("n_train and n_test must be positive")
        n_curves = len(self.soundings)
        for name in ("curve_methods", "curve_labels", "train_snrs_db"):
            if len(getattr(self, name)) != n_curves:
                raise ValueError(f"{name} must have one entry per curve")
        if self.channels is not None and len(self.channels) != n_curves:
            raise ValueError("channels must have one entry per curve when given")
        for method in self.curve_methods:
            if method not in ("unfold", "ls", "gd", "svt"):
                raise ValueError(f"unknown curve method {method!r}")

    def channel_for(self, index):
        if self.channels is not None:
            return self.channels[index]
        return self.channel


@dataclass
class StudyResult:
    rows: list
    trained_params: dict
    loss_histories: dict


def _resolve_snr(policy, rng):
    if policy is None:
        return np.inf
    if np.isscalar(policy):
        return float(policy)
    choices = np.asarray(policy, dtype=float)
    return float(rng.choice(choices))


def gen_dataset(channel_cfg, model, snr_policy, n, seed):
    """Draw n channel realizations, observe each once, lift everything.

    snr_policy is a fixed SNR in dB (inf or None for noiseless) or a finite
    set to draw from uniformly per sample.
    """
    if n <= 0:
        raise ValueError(f"dataset size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    dim_real = model.dim_real
    stats = np.empty((n, dim_real))
    targets = np.empty((n, dim_real))
    observations = np.empty((n, model.n_obs), dtype=np.complex128)
    snrs = np.empty(n)
    for i in range(n):
        cascaded = draw_cascaded(channel_cfg, rng)
        snr = _resolve_snr(snr_policy, rng)
        obs = observe(model, cascaded.vector, snr, rng)
        stats[i] = obs.stat_real
        targets[i, : model.dim] = cascaded.vector.real
        targets[i, model.dim :] = cascaded.vector.imag
        observations[i] = obs.y
        snrs[i] = snr
    return Dataset(
        gram_real=model.gram_real,
        stats=stats,
        targets=targets,
        observations=observations,
        snrs_db=snrs,
    )


def mean_nmse(estimates, truths):
    """Mean over samples of squared error normalized by true energy."""
    err = estimates - truths
    num = np.sum(np.abs(err) ** 2, axis=-1)
    den = np.sum(np.abs(truths) ** 2, axis=-1)
    return float(np.mean(num / den))


def evaluate(estimator, dataset):
    """Mean NMSE of an estimator (object with predict, or callable) on a dataset."""
    predict = estimator.predict if hasattr(estimator, "predict") else estimator
    estimates = predict(dataset.observations)
    return mean_nmse(np.asarray(estimates), dataset.channels)


def _channel_key(cfg):
    return (
        f"ch[m={cfg.n_bs},n={cfg.n_ris},l1={cfg.n_paths_ris_bs},"
        f"l2={cfg.n_paths_ms_ris},vl={cfg.var_los!r},vn={cfg.var_nlos!r},"
        f"range={cfg.angle_sine_range!r}]"
    )


def _sounding_key(cfg):
    return f"snd[k={cfg.n_uses},w={cfg.n_combiner}]"


def _test_channels(spec, channel_cfg, cache):
    key = _channel_key(channel_cfg)
    if key not in cache:
        rng = np.random.default_rng(
            derive_seed(spec.seed, spec.name, key, "test-channels")
        )
        chans = np.empty((spec.n_test, channel_cfg.n_bs * channel_cfg.n_ris),
                         dtype=np.complex128)
        for i in range(spec.n_test):
            chans[i] = draw_cascaded(channel_cfg, rng).vector
        cache[key] = chans
    return cache[key]


def _ambient_noise(spec, channel_key, n_bs, k_max, snr, cache):
    """Per-sample BS-array noise for one long shared sounding session.

    Curves with the same channel config and test SNR draw from one ambient
    tensor; a curve with K uses consumes its first K columns. The DFT phase
    schedule at a smaller K is a column prefix of the larger one, so lower
    overhead literally observes a subset of the higher-overhead session and
    comparisons stay sample-for-sample.
    """
    key = (channel_key, float(snr))
    if key not in cache:
        rng = np.random.default_rng(
            derive_seed(spec.seed, spec.name, channel_key, f"snr={snr!r}",
                        "test-noise")
        )
        draws = rng.standard_normal((spec.n_test, 2, n_bs, k_max))
        cache[key] = draws[:, 0] + 1j * draws[:, 1]
    return cache[key]


def _test_observations(spec, channel_cfg, sounding_cfg, model, snr, chans,
                       noise_cache, k_max):
    noiseless = chans @ model.psi.T
    var = noise_variance(snr)
    if var == 0.0:
        return noiseless
    ambient = _ambient_noise(
        spec, _channel_key(channel_cfg), channel_cfg.n_bs, k_max, snr, noise_cache
    )
    clipped = ambient[:, :, : sounding_cfg.n_uses] * np.sqrt(var / 2.0)
    combined = np.einsum("wm,smk->swk", model.combiner.conj().T, clipped)
    # column-major stacking of each (n_combiner, n_uses) block
    flat = combined.transpose(0, 2, 1).reshape(spec.n_test, model.n_obs)
    return noiseless + flat


def _fit_unfold(spec, index, model, channel_cfg):
    label = spec.curve_labels[index]
    curve_seed = derive_seed(spec.seed, label)
    dataset = gen_dataset(
        channel_cfg,
        model,
        spec.train_snrs_db[index],
        spec.n_train,
        derive_seed(curve_seed, "dataset"),
    )
    est = DeepUnfoldingEstimator(
        model=model,
        n_layers=spec.n_layers,
        n_epochs=spec.schedule.n_epochs,
        batch_size=spec.schedule.batch_size,
        learning_rate=spec.schedule.learning_rate,
        halve_epoch=spec.schedule.halve_epoch,
        seed=curve_seed,
    )
    est.fit(dataset.observations, dataset.channels)
    return est


def run_study(spec, n_jobs=1):
    """Execute every curve of a study; returns rows plus trained artifacts."""
    rows = []
    trained = {}
    histories = {}
    channel_cache = {}
    noise_cache = {}
    k_max = max(s.n_uses for s in spec.soundings)
    for i, label in enumerate(spec.curve_labels):
        channel_cfg = spec.channel_for(i)
        sounding_cfg = spec.soundings[i]
        model = build_model(channel_cfg, sounding_cfg)
        method = spec.curve_methods[i]
        estimator = None
        if method == "unfold":
            estimator = _fit_unfold(spec, i, model, channel_cfg)
            trained[label] = estimator.params_
            histories[label] = estimator.loss_history_
        elif method == "ls":
            estimator = LeastSquaresEstimator(model).fit()
        chans = _test_channels(spec, channel_cfg, channel_cache)
        for snr in spec.test_snrs_db:
            obs = _test_observations(
                spec, channel_cfg, sounding_cfg, model, snr, chans,
                noise_cache, k_max,
            )
            if method == "gd":
                estimator = GradientDescentEstimator(
                    model,
                    reg_weight=_reference_weight(model, snr),
                    n_jobs=n_jobs,
                ).fit()
            elif method == "svt":
                estimator = NuclearNormEstimator(
                    model,
                    reg_weight=_reference_weight(model, snr),
                    n_jobs=n_jobs,
                ).fit()
            estimates = estimator.predict(obs)
            nmse = mean_nmse(estimates, chans)
            rows.append(ResultRow(label, float(snr), nmse, spec.n_test))
    return StudyResult(rows=rows, trained_params=trained, loss_histories=histories)


def _reference_weight(model, snr_db):
    return lambda_reference(
        noise_variance(snr_db), model.n_bs, model.n_ris,
        model.n_combiner, model.n_uses,
    )


def run_overhead_study(spec, n_jobs=1):
    """Training-overhead comparison: unfolding at two K values versus LS (Fig.-4 layout)."""
    return run_study(spec, n_jobs=n_jobs).rows


def run_paths_study(spec, n_jobs=1):
    """Path-count sweep, one trained curve per multipath order."""
    return run_study(spec, n_jobs=n_jobs).rows


def run_train_snr_study(spec, n_jobs=1):
    """Training-SNR sweep: low, high and mixed-SNR training policies."""
    return run_study(spec, n_jobs=n_jobs).rows


def run_angle_range_study(spec, n_jobs=1):
    """Angle-support sweep: shrinking sine ranges, one trained curve each."""
    return run_study(spec, n_jobs=n_jobs).rows


def _as_policy(value):
    """Normalize a training-SNR policy: scalar dB or a tuple to mix over."""
    if value is None or np.isscalar(value):
        return None if value is None else float(value)
    return tuple(float(s) for s in value)


def _nominal_snr(policy):
    return policy if np.isscalar(policy) and policy is not None else 20.0


def _base_channel(profile, template=None):
    if template is not None:
        return replace(template, n_bs=profile.n_bs, n_ris=profile.n_ris)
    return ChannelConfig(n_bs=profile.n_bs, n_ris=profile.n_ris)


def _schedule(profile):
    return TrainSchedule(n_epochs=profile.n_epochs, batch_size=profile.batch_size)


def overhead_spec(profile=DESK_PROFILE, seed=0, test_snrs_db=DEFAULT_TEST_SNRS_DB,
                  train_snr_db=20.0, k_unfold=None, k_ls=None, include_svt=None,
                  n_train=None, n_test=None, channel=None):
    """Build the training-overhead study: two unfolding overheads versus LS.

    The paper-scale profile also carries an SVT curve at the larger unfolding
    overhead; the desk profile keeps the three-curve layout.
    """
    k_unfold = tuple(k_unfold) if k_unfold is not None else profile.k_unfold
    k_ls = k_ls if k_ls is not None else profile.k_ls
    include_svt = profile.include_svt if include_svt is None else include_svt
    policy = _as_policy(train_snr_db)
    nominal = _nominal_snr(policy)
    soundings = [SoundingConfig(k, profile.n_combiner, nominal) for k in k_unfold]
    methods = ["unfold"] * len(k_unfold)
    labels = [f"unfold-k{k}" for k in k_unfold]
    train = [policy] * len(k_unfold)
    soundings.append(SoundingConfig(k_ls, profile.n_combiner, nominal))
    methods.append("ls")
    labels.append(f"ls-k{k_ls}")
    train.append(None)
    if include_svt:
        soundings.append(SoundingConfig(k_unfold[-1], profile.n_combiner, nominal))
        methods.append("svt")
        labels.append(f"svt-k{k_unfold[-1]}")
        train.append(None)
    return ExperimentSpec(
        name="overhead",
        channel=_base_channel(profile, channel),
        soundings=tuple(soundings),
        curve_methods=tuple(methods),
        curve_labels=tuple(labels),
        train_snrs_db=tuple(train),
        test_snrs_db=tuple(float(s) for s in test_snrs_db),
        n_train=n_train if n_train is not None else profile.n_train,
        n_test=n_test if n_test is not None else profile.n_test,
        seed=seed,
        n_layers=profile.n_layers,
        schedule=_schedule(profile),
    )


def paths_spec(profile=DESK_PROFILE, seed=0, test_snrs_db=DEFAULT_TEST_SNRS_DB,
               train_snr_db=20.0, path_counts=(1, 2, 3), k=None,
               n_train=None, n_test=None, channel=None):
    """Build the path-count study: one trained curve per multipath order."""
    k = k if k is not None else profile.k_unfold[-1]
    policy = _as_policy(train_snr_db)
    sounding = SoundingConfig(k, profile.n_combiner, _nominal_snr(policy))
    base = _base_channel(profile, channel)
    channels = tuple(
        replace(base, n_paths_ris_bs=p, n_paths_ms_ris=p) for p in path_counts
    )
    return ExperimentSpec(
        name="paths",
        channel=base,
        soundings=(sounding,) * len(path_counts),
        curve_methods=("unfold",) * len(path_counts),
        curve_labels=tuple(f"unfold-paths{p}" for p in path_counts),
        train_snrs_db=(policy,) * len(path_counts),
        test_snrs_db=tuple(float(s) for s in test_snrs_db),
        n_train=n_train if n_train is not None else profile.n_train,
        n_test=n_test if n_test is not None else profile.n_test,
        seed=seed,
        n_layers=profile.n_layers,
        schedule=_schedule(profile),
        channels=channels,
    )


def train_snr_spec(profile=DESK_PROFILE, seed=0, test_snrs_db=DEFAULT_TEST_SNRS_DB,
                   train_policies=(0.0, 20.0, MIXED_TRAIN_SNRS_DB), k=None,
                   n_train=None, n_test=None, channel=None):
    """Build the training-SNR study: fixed-low, fixed-high and mixed policies."""
    k = k if k is not None else profile.k_unfold[-1]
    sounding = SoundingConfig(k, profile.n_combiner, 20.0)
    labels = []
    for policy in train_policies:
        if np.isscalar(policy):
            labels.append(f"train-{policy:g}db")
        else:
            labels.append("train-mixed")
    return ExperimentSpec(
        name="train-snr",
        channel=_base_channel(profile, channel),
        soundings=(sounding,) * len(train_policies),
        curve_methods=("unfold",) * len(train_policies),
        curve_labels=tuple(labels),
        train_snrs_db=tuple(
            float(p) if np.isscalar(p) else tuple(float(s) for s in p)
            for p in train_policies
        ),
        test_snrs_db=tuple(float(s) for s in test_snrs_db),
        n_train=n_train if n_train is not None else profile.n_train,
        n_test=n_test if n_test is not None else profile.n_test,
        seed=seed,
        n_layers=profile.n_layers,
        schedule=_schedule(profile),
    )


def angle_range_spec(profile=DESK_PROFILE, seed=0, test_snrs_db=DEFAULT_TEST_SNRS_DB,
                     train_snr_db=20.0, angle_ranges=DEFAULT_ANGLE_RANGES, k=None,
                     n_train=None, n_test=None, channel=None):
    """Build the angle-support study: one trained curve per sine range."""
    k = k if k is not None else profile.k_unfold[-1]
    policy = _as_policy(train_snr_db)
    sounding = SoundingConfig(k, profile.n_combiner, _nominal_snr(policy))
    ranges = tuple(tuple(float(v) for v in r) for r in angle_ranges)
    base = _base_channel(profile, channel)
    channels = tuple(replace(base, angle_sine_range=r) for r in ranges)
    return ExperimentSpec(
        name="angle-range",
        channel=base,
        soundings=(sounding,) * len(ranges),
        curve_methods=("unfold",) * len(ranges),
        curve_labels=tuple(f"range-{r[0]:g}-{r[1]:g}" for r in ranges),
        train_snrs_db=(policy,) * len(ranges),
        test_snrs_db=tuple(float(s) for s in test_snrs_db),
        n_train=n_train if n_train is not None else profile.n_train,
        n_test=n_test if n_test is not None else profile.n_test,
        seed=seed,
        n_layers=profile.n_layers,
        schedule=_schedule(profile),
        channels=channels,
    )


STUDY_BUILDERS = {
    "overhead": overhead_spec,
    "paths": paths_spec,
    "train-snr": train_snr_spec,
    "angle-range": angle_range_spec,
}


def write_results_csv(rows, path):
    """Emit result rows with 10-significant-digit floats; bytes are stable."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.curve,
                    format(row.test_snr_db, ".10g"),
                    format(row.nmse, ".10g"),
                    row.n_samples,
                ]
            )


def rows_as_table(rows):
    """Index rows as {curve: {snr: nmse}} for assertions and quick lookups."""
    table = {}
    for row in rows:
        table.setdefault(row.curve, {})[row.test_snr_db] = row.nmse
    return table
