"""Command-line entry point: config parsing, seeding, and study dispatch.

Exit codes: 2 for usage errors (argparse), 3 for configuration problems,
4 for runtime failures (divergence, checkpoint corruption). All outputs land
inside --output-dir, and identical (config, seed) pairs produce byte-identical
CSVs and checkpoints.
"""

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .channel import ChannelConfig, draw_cascaded
from .errors import ConfigError
from .estimators import (
    GradientDescentEstimator,
    LeastSquaresEstimator,
    NuclearNormEstimator,
    lambda_reference,
)
from .experiments import (
    DEFAULT_ANGLE_RANGES,
    DEFAULT_TEST_SNRS_DB,
    MIXED_TRAIN_SNRS_DB,
    PROFILES,
    ResultRow,
    STUDY_BUILDERS,
    gen_dataset,
    mean_nmse,
    run_study,
    write_results_csv,
)
from .seeding import derive_seed
from .sounding import SoundingConfig, build_model, noise_variance, observe
from .unfolding import DeepUnfoldingEstimator, TrainSchedule, save_checkpoint

SCHEMA_VERSION = 1
SUBCOMMANDS = ("gen-data", "train", "eval", "baseline", "study")
STUDY_NAMES = ("overhead", "paths", "train-snr", "angle-range")
BASELINE_METHODS = ("ls", "gd", "svt")


@dataclass
class Settings:
    """Fully resolved sizes and protocols for one run."""

    channel: ChannelConfig
    sounding: SoundingConfig
    n_layers: int
    schedule: TrainSchedule
    n_train: int
    n_test: int
    test_snrs_db: tuple
    train_snr_db: object
    k_unfold: tuple
    k_ls: int
    include_svt: bool
    path_counts: tuple
    angle_ranges: tuple
    train_policies: tuple


@dataclass
class RunConfig:
    """A validated invocation: subcommand plus everything dispatch needs."""

    subcommand: str
    config_path: str
    seed: int
    profile: str
    output_dir: str
    jobs: int
    method: str
    study_name: str
    checkpoint: str
    settings: Settings


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="riscade",
        description="Cascaded-channel estimation studies: deep unfolding and baselines.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON settings file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--profile", choices=sorted(PROFILES))
    common.add_argument("--output-dir", help="directory all outputs land in")
    common.add_argument("--jobs", type=int, default=1, help="worker-thread bound")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("gen-data", parents=[common], help="write a dataset to disk")
    sub.add_parser("train", parents=[common], help="train the unfolding network")
    eval_p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    eval_p.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    base_p = sub.add_parser("baseline", parents=[common], help="run a baseline estimator")
    base_p.add_argument(
        "--method", required=True, choices=BASELINE_METHODS + ("unfold",)
    )
    study_p = sub.add_parser("study", parents=[common], help="run one benchmark study")
    study_p.add_argument("--name", required=True, choices=STUDY_NAMES)
    return parser


def _parse_snr(value, where):
    if value is None:
        return math.inf
    if isinstance(value, str):
        if value.lower() in ("inf", "noiseless"):
            return math.inf
        raise ConfigError(f"{where}: expected a number, null or \"inf\", got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _check_keys(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected an object, got {type(section).__name__}")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}: unknown key")


def _as_int(value, where, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def _get_int(section, key, default, where, minimum=1):
    return _as_int(section.get(key, default), f"{where}.{key}", minimum)


def _get_real(section, key, default, where, positive=True):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{where}.{key}: expected a positive number, got {value!r}")
    return float(value)


def _default_settings(profile):
    return Settings(
        channel=ChannelConfig(n_bs=profile.n_bs, n_ris=profile.n_ris),
        sounding=SoundingConfig(
            n_uses=profile.k_unfold[-1], n_combiner=profile.n_combiner, snr_db=20.0
        ),
        n_layers=profile.n_layers,
        schedule=TrainSchedule(
            n_epochs=profile.n_epochs, batch_size=profile.batch_size
        ),
        n_train=profile.n_train,
        n_test=profile.n_test,
        test_snrs_db=DEFAULT_TEST_SNRS_DB,
        train_snr_db=20.0,
        k_unfold=profile.k_unfold,
        k_ls=profile.k_ls,
        include_svt=profile.include_svt,
        path_counts=(1, 2, 3),
        angle_ranges=DEFAULT_ANGLE_RANGES,
        train_policies=(0.0, 20.0, MIXED_TRAIN_SNRS_DB),
    )


_TOP_KEYS = {
    "schema_version", "profile", "seed", "channel", "sounding", "network",
    "data", "test_snrs_db", "train_snr_db", "study",
}
_CHANNEL_KEYS = {
    "n_bs", "n_ris", "n_paths_ris_bs", "n_paths_ms_ris", "var_los", "var_nlos",
    "angle_sine_range",
}
_SOUNDING_KEYS = {"n_uses", "n_combiner", "snr_db"}
_NETWORK_KEYS = {"n_layers", "n_epochs", "batch_size", "learning_rate", "halve_epoch"}
_DATA_KEYS = {"n_train", "n_test"}
_STUDY_KEYS = {
    "k_unfold", "k_ls", "include_svt", "path_counts", "angle_ranges",
    "train_policies",
}


def _load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    _check_keys(doc, _TOP_KEYS, path)
    if "schema_version" not in doc:
        raise ConfigError(f"{path}: missing schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"{path}: unsupported schema_version {doc['schema_version']!r}"
        )
    return doc


def _snr_policy(value, where):
    if isinstance(value, (list, tuple)):
        if not value:
            raise ConfigError(f"{where}: SNR set must not be empty")
        return tuple(_parse_snr(v, where) for v in value)
    return _parse_snr(value, where)


def _apply_config(settings, doc):
    if "channel" in doc:
        sect = doc["channel"]
        _check_keys(sect, _CHANNEL_KEYS, "channel")
        base = settings.channel
        rng = sect.get("angle_sine_range", list(base.angle_sine_range))
        if (
            not isinstance(rng, (list, tuple))
            or len(rng) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in rng)
        ):
            raise ConfigError("channel.angle_sine_range: expected [lo, hi]")
        try:
            settings.channel = ChannelConfig(
                n_bs=_get_int(sect, "n_bs", base.n_bs, "channel"),
                n_ris=_get_int(sect, "n_ris", base.n_ris, "channel"),
                n_paths_ris_bs=_get_int(
                    sect, "n_paths_ris_bs", base.n_paths_ris_bs, "channel"
                ),
                n_paths_ms_ris=_get_int(
                    sect, "n_paths_ms_ris", base.n_paths_ms_ris, "channel"
                ),
                var_los=_get_real(sect, "var_los", base.var_los, "channel"),
                var_nlos=_get_real(
                    sect, "var_nlos", base.var_nlos, "channel", positive=False
                ),
                angle_sine_range=(float(rng[0]), float(rng[1])),
            )
        except ValueError as exc:
            raise ConfigError(f"channel: {exc}") from exc
    if "sounding" in doc:
        sect = doc["sounding"]
        _check_keys(sect, _SOUNDING_KEYS, "sounding")
        base = settings.sounding
        try:
            settings.sounding = SoundingConfig(
                n_uses=_get_int(sect, "n_uses", base.n_uses, "sounding"),
                n_combiner=_get_int(sect, "n_combiner", base.n_combiner, "sounding"),
                snr_db=_parse_snr(sect.get("snr_db", base.snr_db), "sounding.snr_db"),
            )
        except ValueError as exc:
            raise ConfigError(f"sounding: {exc}") from exc
    if "network" in doc:
        sect = doc["network"]
        _check_keys(sect, _NETWORK_KEYS, "network")
        base = settings.schedule
        settings.n_layers = _get_int(sect, "n_layers", settings.n_layers, "network")
        settings.schedule = TrainSchedule(
            n_epochs=_get_int(sect, "n_epochs", base.n_epochs, "network"),
            batch_size=_get_int(sect, "batch_size", base.batch_size, "network"),
            learning_rate=_get_real(
                sect, "learning_rate", base.learning_rate, "network"
            ),
            halve_epoch=_get_int(sect, "halve_epoch", base.halve_epoch, "network"),
        )
    if "data" in doc:
        sect = doc["data"]
        _check_keys(sect, _DATA_KEYS, "data")
        settings.n_train = _get_int(sect, "n_train", settings.n_train, "data")
        settings.n_test = _get_int(sect, "n_test", settings.n_test, "data")
    if "test_snrs_db" in doc:
        snrs = doc["test_snrs_db"]
        if not isinstance(snrs, list) or not snrs:
            raise ConfigError("test_snrs_db: expected a non-empty list")
        settings.test_snrs_db = tuple(
            _parse_snr(v, "test_snrs_db") for v in snrs
        )
    if "train_snr_db" in doc:
        settings.train_snr_db = _snr_policy(doc["train_snr_db"], "train_snr_db")
    if "study" in doc:
        sect = doc["study"]
        _check_keys(sect, _STUDY_KEYS, "study")
        if "k_unfold" in sect:
            ks = sect["k_unfold"]
            if not isinstance(ks, list) or not ks:
                raise ConfigError("study.k_unfold: expected a non-empty list")
            settings.k_unfold = tuple(_as_int(k, "study.k_unfold") for k in ks)
        settings.k_ls = _get_int(sect, "k_ls", settings.k_ls, "study")
        if "include_svt" in sect:
            if not isinstance(sect["include_svt"], bool):
                raise ConfigError("study.include_svt: expected a boolean")
            settings.include_svt = sect["include_svt"]
        if "path_counts" in sect:
            pcs = sect["path_counts"]
            if not isinstance(pcs, list) or not pcs:
                raise ConfigError("study.path_counts: expected a non-empty list")
            settings.path_counts = tuple(
                _as_int(p, "study.path_counts") for p in pcs
            )
        if "angle_ranges" in sect:
            ars = sect["angle_ranges"]
            if not isinstance(ars, list) or not ars:
                raise ConfigError("study.angle_ranges: expected a non-empty list")
            ranges = []
            for r in ars:
                if not isinstance(r, list) or len(r) != 2:
                    raise ConfigError("study.angle_ranges: entries must be [lo, hi]")
                ranges.append((float(r[0]), float(r[1])))
            settings.angle_ranges = tuple(ranges)
        if "train_policies" in sect:
            pols = sect["train_policies"]
            if not isinstance(pols, list) or not pols:
                raise ConfigError("study.train_policies: expected a non-empty list")
            settings.train_policies = tuple(
                _snr_policy(p, "study.train_policies") for p in pols
            )
    return settings


def parse_and_validate(argv, environ=None):
    """Resolve flags, config file and environment into a RunConfig.

    Precedence: CLI flags over config file over profile defaults; the
    RISCADE_OUTPUT_DIR environment variable seeds the output directory when
    the flag is absent. Validation happens here, before any compute.
    """
    environ = environ if environ is not None else os.environ
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.subcommand == "baseline" and args.method == "unfold":
        parser.error("baseline --method unfold is not a baseline; use train/eval")
    doc = _load_config(args.config) if args.config else {}
    profile_name = args.profile or doc.get("profile") or "desk"
    if profile_name not in PROFILES:
        raise ConfigError(f"profile: expected one of {sorted(PROFILES)}, got {profile_name!r}")
    settings = _apply_config(_default_settings(PROFILES[profile_name]), doc)
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed: expected an integer, got {seed!r}")
    if args.seed is not None:
        seed = args.seed
    output_dir = args.output_dir or environ.get("RISCADE_OUTPUT_DIR") or "."
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
    method = getattr(args, "method", None)
    return RunConfig(
        subcommand=args.subcommand,
        config_path=args.config,
        seed=seed,
        profile=profile_name,
        output_dir=output_dir,
        jobs=args.jobs,
        method=method,
        study_name=getattr(args, "name", None),
        checkpoint=getattr(args, "checkpoint", None),
        settings=settings,
    )


def _timestamp():
    return time.strftime("%Y%m%d-%H%M%S", time.gmtime())


def _gen_data(rc):
    settings = rc.settings
    model = build_model(settings.channel, settings.sounding)
    dataset = gen_dataset(
        settings.channel,
        model,
        settings.train_snr_db,
        settings.n_train,
        derive_seed(rc.seed, "gen-data", "dataset"),
    )
    out = os.path.join(rc.output_dir, "dataset")
    os.makedirs(out, exist_ok=True)
    np.save(os.path.join(out, "observations.npy"), dataset.observations)
    np.save(os.path.join(out, "stats.npy"), dataset.stats)
    np.save(os.path.join(out, "targets.npy"), dataset.targets)
    np.save(os.path.join(out, "snrs_db.npy"), dataset.snrs_db)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "seed": rc.seed,
        "n_samples": len(dataset),
        "n_bs": settings.channel.n_bs,
        "n_ris": settings.channel.n_ris,
        "n_uses": settings.sounding.n_uses,
        "n_combiner": settings.sounding.n_combiner,
    }
    with open(os.path.join(out, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(dataset)} samples to {out}")
    return 0


def _write_loss_history(history, schedule, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("epoch,train_nmse,learning_rate\n")
        for epoch, loss in enumerate(history, start=1):
            rate = schedule.rate_for_epoch(epoch)
            fh.write(f"{epoch},{loss:.10g},{rate:.10g}\n")


def _train(rc):
    settings = rc.settings
    model = build_model(settings.channel, settings.sounding)
    curve_seed = derive_seed(rc.seed, "train")
    dataset = gen_dataset(
        settings.channel,
        model,
        settings.train_snr_db,
        settings.n_train,
        derive_seed(curve_seed, "dataset"),
    )
    est = DeepUnfoldingEstimator(
        model=model,
        n_layers=settings.n_layers,
        n_epochs=settings.schedule.n_epochs,
        batch_size=settings.schedule.batch_size,
        learning_rate=settings.schedule.learning_rate,
        halve_epoch=settings.schedule.halve_epoch,
        seed=curve_seed,
    )
    est.fit(dataset.observations, dataset.channels)
    os.makedirs(rc.output_dir, exist_ok=True)
    ckpt = os.path.join(rc.output_dir, "unfold.ckpt")
    est.save(ckpt)
    _write_loss_history(
        est.loss_history_, settings.schedule,
        os.path.join(rc.output_dir, "loss_history.csv"),
    )
    print(f"wrote {ckpt} (final train NMSE {est.loss_history_[-1]:.6g})")
    return 0


def _test_rows(rc, model, label, predict):
    settings = rc.settings
    rng = np.random.default_rng(derive_seed(rc.seed, rc.subcommand, "test-channels"))
    chans = np.empty((settings.n_test, model.dim), dtype=np.complex128)
    for i in range(settings.n_test):
        chans[i] = draw_cascaded(settings.channel, rng).vector
    rows = []
    for snr in settings.test_snrs_db:
        noise_rng = np.random.default_rng(
            derive_seed(rc.seed, rc.subcommand, f"test-noise-{snr!r}")
        )
        obs = np.empty((settings.n_test, model.n_obs), dtype=np.complex128)
        for i in range(settings.n_test):
            obs[i] = observe(model, chans[i], snr, noise_rng).y
        estimates = predict(obs, snr)
        rows.append(
            ResultRow(label, float(snr), mean_nmse(estimates, chans), settings.n_test)
        )
    return rows


def _eval(rc):
    settings = rc.settings
    model = build_model(settings.channel, settings.sounding)
    est = DeepUnfoldingEstimator.from_checkpoint(model, rc.checkpoint)
    rows = _test_rows(rc, model, "unfold", lambda obs, snr: est.predict(obs))
    os.makedirs(rc.output_dir, exist_ok=True)
    path = os.path.join(rc.output_dir, "eval_results.csv")
    write_results_csv(rows, path)
    print(f"wrote {path}")
    return 0


def _baseline(rc):
    settings = rc.settings
    model = build_model(settings.channel, settings.sounding)

    def predict(obs, snr):
        if rc.method == "ls":
            est = LeastSquaresEstimator(model)
        else:
            weight = lambda_reference(
                noise_variance(snr), model.n_bs, model.n_ris,
                model.n_combiner, model.n_uses,
            )
            cls = GradientDescentEstimator if rc.method == "gd" else NuclearNormEstimator
            est = cls(model, reg_weight=weight, n_jobs=rc.jobs)
        return est.fit().predict(obs)

    rows = _test_rows(rc, model, rc.method, predict)
    os.makedirs(rc.output_dir, exist_ok=True)
    path = os.path.join(rc.output_dir, f"baseline_{rc.method}.csv")
    write_results_csv(rows, path)
    for row in rows:
        print(f"{row.curve} snr={row.test_snr_db:g}dB nmse={row.nmse:.6g}")
    print(f"wrote {path}")
    return 0


def _build_study_spec(rc):
    settings = rc.settings
    profile = PROFILES[rc.profile]
    profile = replace(
        profile,
        n_bs=settings.channel.n_bs,
        n_ris=settings.channel.n_ris,
        n_layers=settings.n_layers,
        n_combiner=settings.sounding.n_combiner,
        k_unfold=settings.k_unfold,
        k_ls=settings.k_ls,
        include_svt=settings.include_svt,
        n_train=settings.n_train,
        n_test=settings.n_test,
        n_epochs=settings.schedule.n_epochs,
        batch_size=settings.schedule.batch_size,
    )
    builder = STUDY_BUILDERS[rc.study_name]
    kwargs = dict(
        profile=profile,
        seed=rc.seed,
        test_snrs_db=settings.test_snrs_db,
        channel=settings.channel,
    )
    if rc.study_name == "overhead":
        kwargs["train_snr_db"] = settings.train_snr_db
    elif rc.study_name == "paths":
        kwargs["path_counts"] = settings.path_counts
        kwargs["train_snr_db"] = settings.train_snr_db
    elif rc.study_name == "train-snr":
        kwargs["train_policies"] = settings.train_policies
    elif rc.study_name == "angle-range":
        kwargs["angle_ranges"] = settings.angle_ranges
        kwargs["train_snr_db"] = settings.train_snr_db
    return builder(**kwargs)


def _study(rc):
    spec = _build_study_spec(rc)
    result = run_study(spec, n_jobs=rc.jobs)
    os.makedirs(rc.output_dir, exist_ok=True)
    csv_path = os.path.join(rc.output_dir, f"{rc.study_name}_{_timestamp()}.csv")
    write_results_csv(result.rows, csv_path)
    for label, params in result.trained_params.items():
        save_checkpoint(params, os.path.join(rc.output_dir, f"{rc.study_name}_{label}.ckpt"))
    print(f"wrote {csv_path} ({len(result.rows)} rows)")
    return 0


_HANDLERS = {
    "gen-data": _gen_data,
    "train": _train,
    "eval": _eval,
    "baseline": _baseline,
    "study": _study,
}


def dispatch(run_config):
    """Run the selected pipeline; returns the process exit status."""
    return _HANDLERS[run_config.subcommand](run_config)


def main(argv=None):
    try:
        run_config = parse_and_validate(argv if argv is not None else sys.argv[1:])
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    try:
        return dispatch(run_config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
