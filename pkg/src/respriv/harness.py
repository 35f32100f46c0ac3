"""Experiment orchestration: dataset assembly, dispatch, records, and plots.

Every experiment is fully determined by (kind, config, seed). Results land
in an output directory as a JSON record (metrics, echoed config, file
manifest) plus CSV sidecars, SVG plots, images, and checkpoints, all
written atomically (temp file + rename). Failures are re-raised with the
pipeline stage that produced them.
"""

import csv
import json
import os
import tempfile
import time

import numpy as np

from . import accountant as acct
from . import attack as atk
from . import rademacher as rad
from . import sde
from .config import ConfigError, parse_schedule, resolve_config
from .datasets import load_csv, load_idx_pair, make_blobs, make_moons, subsample, train_test_split
from .dpsgd import DpSgdConfig, dpsgd_train
from .images import read_image, write_image
from .model import EnsembleModel, NoiseConfig, ResidualNet, TrainConfig, save_checkpoint, train
from .rng import derive_rng
from .svgplot import line_plot

__all__ = ["ExperimentError", "EXPERIMENT_KINDS", "defaults_for", "run_experiment", "emit_plots"]


class ExperimentError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage


_DATASET_DEFAULTS = {
    "dataset": "blobs",
    "dataset.n": 1000,
    "dataset.d": 20,
    "dataset.separation": 2.5,
    "dataset.spread": 1.0,
    "dataset.balance": 0.5,
    "dataset.noise": 0.1,
    "dataset.path": "",
    "dataset.label_column": "label",
    "dataset.images": "",
    "dataset.labels": "",
    "dataset.limit": 0,
}

_MODEL_DEFAULTS = {
    "model.blocks": 4,
    "model.kind": "dense",
    "model.activation": "relu",
    "model.skip_connections": True,
    "model.head_norm_bound": 0.0,
    "ensemble.k": 1,
    "noise.strategy": "none",
    "noise.gamma": 0.0,
    "noise.pi": -1.0,  # -1 = auto: gamma/2 for the additive strategy, else 0
    "noise.eta": 0.1,
}

_TRAIN_DEFAULTS = {
    "train.epochs": 60,
    "train.batch_size": 32,
    "train.optimizer": "sgd",
    "train.learning_rate": 0.1,
    "train.momentum": 0.9,
    "train.lr_schedule": "20:4,40:4",
    "test_fraction": 0.25,
}

_ATTACK_DEFAULTS = {
    "attack.epochs": 50,
    "attack.learning_rate": 0.1,
    "attack.thresholds": "0.4,0.5,0.6,0.7",
    "attack.stratified": True,
    "attack.feature_k": 0,  # 0 = auto (3 multi-class, 2 binary)
    "attack.gamma_sweep": "",
    "attack.k_sweep": "",
    "attack.epsilon_lb": True,
    "attack.delta": 1e-5,
    "attack.confidence": 0.95,
}

_DPSGD_DEFAULTS = {
    "dpsgd.clip_norm": 1.0,
    "dpsgd.noise_multiplier": 1.1,
    "dpsgd.microbatch_size": 16,
    "dpsgd.epochs": 0,      # 0 = inherit train.epochs
    "dpsgd.batch_size": 0,  # 0 = inherit train.batch_size
    "dpsgd.learning_rate": 0.1,
    "dpsgd.lr_schedule": "20:4,40:4,60:4,80:4",
}

_ACCOUNTANT_DEFAULTS = {
    "accountant.strategy": 1,
    "accountant.mode": "calibrate",  # calibrate | audit
    "accountant.epsilon": 2.0,
    "accountant.delta": 1e-5,
    "accountant.lambda": 0.5,
    "accountant.gamma": 1.0,
    "accountant.pi": 0.5,
    "accountant.optimize_alpha": False,
    "accountant.T": 1000,
    "accountant.b": 100,
    "accountant.N": 10000,
    "accountant.M": 4,
    "accountant.R": 30.0,
    "accountant.G": 30.0,
    "accountant.B": 1.0,
    "accountant.eta": 0.1,
    "accountant.a": 1.0,
}

_RADEMACHER_DEFAULTS = {
    "rademacher.n": 12,
    "rademacher.d": 6,
    "rademacher.c": 1.0,
    "rademacher.T": 1.0,
    "rademacher.p": 0.5,
    "rademacher.gamma": 1.0,
    "rademacher.method": "auto",
    "rademacher.n_draws": 200000,
    "rademacher.sample_low": 0.5,
    "rademacher.sample_high": 1.5,
    "rademacher.oracles": True,
    "rademacher.sup_trials": 10000,
    "rademacher.gbm_paths": 100000,
}

_SDE_DEFAULTS = {
    "sde.image": "synthetic",
    "sde.rows": 64,
    "sde.cols": 64,
    "sde.channels": 3,
    "sde.mode": "sde_additive",
    "sde.gamma": 1.0,
    "sde.dt": 0.01,
    "sde.t_end": 1.0,
    "sde.format": "png",
}

EXPERIMENT_KINDS = {
    "train": {**_DATASET_DEFAULTS, **_MODEL_DEFAULTS, **_TRAIN_DEFAULTS},
    "attack": {**_DATASET_DEFAULTS, **_MODEL_DEFAULTS, **_TRAIN_DEFAULTS, **_ATTACK_DEFAULTS},
    "dpsgd_compare": {**_DATASET_DEFAULTS, **_MODEL_DEFAULTS, **_TRAIN_DEFAULTS,
                      **_ATTACK_DEFAULTS, **_DPSGD_DEFAULTS},
    "accountant": dict(_ACCOUNTANT_DEFAULTS),
    "rademacher": dict(_RADEMACHER_DEFAULTS),
    "sde_demo": dict(_SDE_DEFAULTS),
}


def defaults_for(kind):
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    return dict(EXPERIMENT_KINDS[kind])


# ---------------------------------------------------------------------------
# atomic output helpers
# ---------------------------------------------------------------------------

def _atomic_write(path, write_fn, binary=False):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb" if binary else "w") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, header, rows):
    def emit(fh):
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    _atomic_write(path, emit)


def _write_json(path, payload):
    _atomic_write(path, lambda fh: json.dump(payload, fh, sort_keys=True, indent=2))


def _write_text(path, text):
    _atomic_write(path, lambda fh: fh.write(text))


# ---------------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------------

def _load_dataset(cfg, rng):
    kind = cfg["dataset"]
    if kind == "blobs":
        return make_blobs(cfg["dataset.n"], cfg["dataset.d"], rng,
                          separation=cfg["dataset.separation"],
                          spread=cfg["dataset.spread"],
                          balance=cfg["dataset.balance"])
    if kind == "moons":
        return make_moons(cfg["dataset.n"], rng, noise=cfg["dataset.noise"])
    if kind == "csv":
        return load_csv(cfg["dataset.path"], cfg["dataset.label_column"])
    if kind == "idx":
        x, y = load_idx_pair(cfg["dataset.images"], cfg["dataset.labels"])
        if cfg["dataset.limit"]:
            x, y = subsample(x, y, cfg["dataset.limit"], rng)
        return x, y
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _noise_config(cfg, gamma=None):
    strategy = cfg["noise.strategy"]
    if gamma is None:
        gamma = float(cfg["noise.gamma"])
    pi = float(cfg["noise.pi"])
    if pi < 0:  # auto
        pi = gamma / 2.0 if strategy == "additive" else 0.0
    if strategy == "none":
        gamma = pi = 0.0
    return NoiseConfig(strategy=strategy, gamma=gamma, pi=pi, eta=float(cfg["noise.eta"]))


def _model_factory(cfg, d, n_classes, noise, k=None):
    k = int(cfg["ensemble.k"]) if k is None else int(k)
    bound = float(cfg["model.head_norm_bound"]) or None
    kwargs = dict(
        noise=noise,
        block_kind=cfg["model.kind"],
        activation=cfg["model.activation"],
        skip_connections=bool(cfg["model.skip_connections"]),
        head_norm_bound=bound,
    )

    def build(rng):
        if k > 1:
            return EnsembleModel.build(k, d, int(cfg["model.blocks"]), n_classes, rng, **kwargs)
        return ResidualNet.build(d, int(cfg["model.blocks"]), n_classes, rng, **kwargs)

    return build


def _train_config(cfg, seed):
    return TrainConfig(
        epochs=int(cfg["train.epochs"]),
        batch_size=int(cfg["train.batch_size"]),
        optimizer=cfg["train.optimizer"],
        learning_rate=float(cfg["train.learning_rate"]),
        momentum=float(cfg["train.momentum"]),
        lr_schedule=parse_schedule(cfg["train.lr_schedule"]),
        seed=seed,
    )


def _float_list(text):
    return [float(v) for v in str(text).split(",") if str(v).strip()] if text else []


def _history_rows(history):
    rows = []
    for e in range(len(history["loss"])):
        rows.append((e + 1, history["loss"][e], history["train_acc"][e],
                     history["test_acc"][e], history["gap"][e],
                     history["epoch_seconds"][e]))
    return rows


# ---------------------------------------------------------------------------
# experiment runners
# ---------------------------------------------------------------------------

def _run_train(cfg, seed, out_dir, threads):
    x, y = _load_dataset(cfg, derive_rng(seed, "dataset"))
    (x_tr, y_tr), (x_te, y_te) = train_test_split(x, y, cfg["test_fraction"],
                                                  derive_rng(seed, "split"))
    noise = _noise_config(cfg)
    model = _model_factory(cfg, x.shape[1], int(np.max(y)) + 1, noise)(derive_rng(seed, "init"))
    history = train(model, (x_tr, y_tr), _train_config(cfg, seed),
                    derive_rng(seed, "train"), test_set=(x_te, y_te), n_threads=threads)
    artifacts = {}
    ckpt = os.path.join(out_dir, "checkpoint.npz")
    save_checkpoint(model, ckpt, master_seed=seed)
    artifacts["checkpoint"] = "checkpoint.npz"
    metrics = {"noise_gamma": noise.gamma, "noise_pi": noise.pi}
    curves = []
    if isinstance(history.get("loss"), list):  # single model
        _write_csv(os.path.join(out_dir, "history.csv"),
                   ("epoch", "loss", "train_acc", "test_acc", "gap", "seconds"),
                   _history_rows(history))
        artifacts["history"] = "history.csv"
        metrics.update(train_acc=history["train_acc"][-1] if history["train_acc"] else float("nan"),
                       test_acc=history["test_acc"][-1] if history["test_acc"] else float("nan"))
        epochs = list(range(1, len(history["loss"]) + 1))
        curves.append({"name": "accuracy", "xlabel": "epoch", "ylabel": "accuracy",
                       "series": [{"label": "train", "x": epochs, "y": history["train_acc"]},
                                  {"label": "test", "x": epochs, "y": history["test_acc"]}]})
    else:  # ensemble
        for j, member_hist in enumerate(history["members"]):
            _write_csv(os.path.join(out_dir, f"history_member{j:02d}.csv"),
                       ("epoch", "loss", "train_acc", "test_acc", "gap", "seconds"),
                       _history_rows(member_hist))
            artifacts[f"history_member{j:02d}"] = f"history_member{j:02d}.csv"
        metrics.update(train_acc=history["train_acc"], test_acc=history["test_acc"])
    if not np.isnan(metrics.get("test_acc", float("nan"))):
        metrics["gap"] = metrics["train_acc"] - metrics["test_acc"]
    return metrics, curves, artifacts


def _attack_once(cfg, seed, data, gamma, k, threads):
    x, y = data
    n_classes = int(np.max(y)) + 1
    noise = _noise_config(cfg, gamma=gamma)
    target_factory = _model_factory(cfg, x.shape[1], n_classes, noise, k=k)
    shadow_factory = _model_factory(cfg, x.shape[1], n_classes, NoiseConfig(), k=1)
    train_cfg = _train_config(cfg, seed)
    feature_k = int(cfg["attack.feature_k"]) or None
    result = atk.run_membership_experiment(
        (x, y), target_factory, shadow_factory, train_cfg, train_cfg,
        derive_rng(seed, "pipeline", int(round(gamma * 1e6)), k),
        thresholds=tuple(_float_list(cfg["attack.thresholds"])),
        feature_k=feature_k,
        stratified=bool(cfg["attack.stratified"]),
        attack_epochs=int(cfg["attack.epochs"]),
        attack_learning_rate=float(cfg["attack.learning_rate"]),
        n_threads=threads,
    )
    if cfg["attack.epsilon_lb"]:
        fp, fn, n_neg, n_pos = result["report"].error_counts(0.5)
        result["epsilon_lb"] = acct.empirical_epsilon_lower_bound(
            fp, fn, n_neg, n_pos, float(cfg["attack.delta"]), float(cfg["attack.confidence"]))
    return result


def _run_attack(cfg, seed, out_dir, threads):
    data = _load_dataset(cfg, derive_rng(seed, "dataset"))
    gammas = _float_list(cfg["attack.gamma_sweep"]) or [float(cfg["noise.gamma"])]
    ks = [int(v) for v in _float_list(cfg["attack.k_sweep"])] or [int(cfg["ensemble.k"])]
    metrics, artifacts, curves = {}, {}, []
    sweep = {}
    for k in ks:
        for gamma in gammas:
            result = _attack_once(cfg, seed, data, gamma, k, threads)
            report = result["report"]
            tag = f"k{k}_gamma{gamma:g}"
            roc_name = f"roc_{tag}.csv"
            _write_csv(os.path.join(out_dir, roc_name), ("fpr", "tpr"), report.roc_points)
            artifacts[f"roc_{tag}"] = roc_name
            entry = {
                "auc": report.auc,
                "target_train_acc": result["target_train_acc"],
                "target_test_acc": result["target_test_acc"],
                "shadow_train_acc": result["shadow_train_acc"],
                "shadow_test_acc": result["shadow_test_acc"],
                "precision_recall": report.table,
            }
            if "epsilon_lb" in result:
                entry["epsilon_lb"] = result["epsilon_lb"]
            sweep[tag] = entry
            curves.append({"name": f"roc_{tag}", "xlabel": "false positive rate",
                           "ylabel": "true positive rate",
                           "series": [{"label": tag,
                                       "x": [p[0] for p in report.roc_points],
                                       "y": [p[1] for p in report.roc_points]}]})
    metrics["runs"] = sweep
    single = list(sweep.values())[0]
    metrics.update({k: v for k, v in single.items() if k != "precision_recall"})
    if len(gammas) > 1:
        for k in ks:
            tags = [f"k{k}_gamma{g:g}" for g in gammas]
            curves.append({"name": f"auc_vs_gamma_k{k}", "xlabel": "gamma", "ylabel": "attack AUC",
                           "series": [{"label": f"k={k}", "x": gammas,
                                       "y": [sweep[t]["auc"] for t in tags]}]})
            curves.append({"name": f"accuracy_vs_gamma_k{k}", "xlabel": "gamma",
                           "ylabel": "accuracy",
                           "series": [{"label": "train", "x": gammas,
                                       "y": [sweep[t]["target_train_acc"] for t in tags]},
                                      {"label": "test", "x": gammas,
                                       "y": [sweep[t]["target_test_acc"] for t in tags]}]})
    return metrics, curves, artifacts


def _run_dpsgd_compare(cfg, seed, out_dir, threads):
    data = _load_dataset(cfg, derive_rng(seed, "dataset"))
    x, y = data
    n_classes = int(np.max(y)) + 1
    train_cfg = _train_config(cfg, seed)
    dp_cfg = DpSgdConfig(
        clip_norm=float(cfg["dpsgd.clip_norm"]),
        noise_multiplier=float(cfg["dpsgd.noise_multiplier"]),
        microbatch_size=int(cfg["dpsgd.microbatch_size"]),
        epochs=int(cfg["dpsgd.epochs"]) or train_cfg.epochs,
        batch_size=int(cfg["dpsgd.batch_size"]) or train_cfg.batch_size,
        learning_rate=float(cfg["dpsgd.learning_rate"]),
        lr_schedule=parse_schedule(cfg["dpsgd.lr_schedule"]),
        seed=seed,
    )
    shared_kwargs = dict(
        thresholds=tuple(_float_list(cfg["attack.thresholds"])),
        feature_k=int(cfg["attack.feature_k"]) or None,
        stratified=bool(cfg["attack.stratified"]),
        attack_epochs=int(cfg["attack.epochs"]),
        attack_learning_rate=float(cfg["attack.learning_rate"]),
        n_threads=threads,
    )
    shadow_factory = _model_factory(cfg, x.shape[1], n_classes, NoiseConfig(), k=1)

    def dp_train(model, train_set, _cfg, rng, test_set=None):
        return dpsgd_train(model, train_set, dp_cfg, rng, test_set=test_set)

    dp_result = atk.run_membership_experiment(
        data, _model_factory(cfg, x.shape[1], n_classes, NoiseConfig(), k=1), shadow_factory,
        train_cfg, train_cfg, derive_rng(seed, "compare"), train_fn=dp_train, **shared_kwargs)
    res_result = atk.run_membership_experiment(
        data, _model_factory(cfg, x.shape[1], n_classes, _noise_config(cfg)), shadow_factory,
        train_cfg, train_cfg, derive_rng(seed, "compare"), **shared_kwargs)

    def _mean_epoch_seconds(history):
        secs = history.get("epoch_seconds")
        if secs is None and "members" in history:
            secs = [s for m in history["members"] for s in m["epoch_seconds"]]
        return float(np.mean(secs)) if secs else float("nan")

    metrics = {
        "dpsgd": {"auc": dp_result["report"].auc,
                  "train_acc": dp_result["target_train_acc"],
                  "test_acc": dp_result["target_test_acc"]},
        "residual": {"auc": res_result["report"].auc,
                     "train_acc": res_result["target_train_acc"],
                     "test_acc": res_result["target_test_acc"]},
    }
    timing = {"dpsgd_epoch_seconds": _mean_epoch_seconds(dp_result["target_history"]),
              "residual_epoch_seconds": _mean_epoch_seconds(res_result["target_history"])}
    artifacts = {}
    for tag, result in (("dpsgd", dp_result), ("residual", res_result)):
        name = f"roc_{tag}.csv"
        _write_csv(os.path.join(out_dir, name), ("fpr", "tpr"), result["report"].roc_points)
        artifacts[f"roc_{tag}"] = name
    curves = [{"name": "roc_compare", "xlabel": "false positive rate",
               "ylabel": "true positive rate",
               "series": [{"label": tag,
                           "x": [p[0] for p in result["report"].roc_points],
                           "y": [p[1] for p in result["report"].roc_points]}
                          for tag, result in (("dpsgd", dp_result), ("residual", res_result))]}]
    return metrics, curves, artifacts, timing


def _run_accountant(cfg, seed, out_dir, threads):
    inputs = acct.CalibrationInputs(
        T=int(cfg["accountant.T"]), b=int(cfg["accountant.b"]), N=int(cfg["accountant.N"]),
        M=int(cfg["accountant.M"]), R=float(cfg["accountant.R"]), G=float(cfg["accountant.G"]),
        B=float(cfg["accountant.B"]), eta=float(cfg["accountant.eta"]), a=float(cfg["accountant.a"]))
    strategy = int(cfg["accountant.strategy"])
    delta = float(cfg["accountant.delta"])
    lam = float(cfg["accountant.lambda"])
    metrics, artifacts = {}, {}
    if cfg["accountant.mode"] == "calibrate":
        budget = acct.DpBudget(float(cfg["accountant.epsilon"]), delta, lam)
        if strategy == 1:
            report = acct.calibrate_strategy1(budget, inputs)
            _write_text(os.path.join(out_dir, "calibration.txt"), report.to_text())
            artifacts["calibration"] = "calibration.txt"
            metrics.update(alpha=report.alpha, pi_min=report.pi_min, gamma_min=report.gamma_min,
                           whole_model_epsilon=report.whole_model_epsilon,
                           per_layer_epsilons=report.per_layer_epsilons)
        else:
            cal = acct.calibrate_strategy2(budget, inputs)
            metrics.update(alpha=cal.alpha, pi_min=cal.pi_min, gamma_min=cal.gamma_min)
    elif cfg["accountant.mode"] == "audit":
        gamma, pi = float(cfg["accountant.gamma"]), float(cfg["accountant.pi"])
        fn = acct.achieved_epsilon_strategy1 if strategy == 1 else acct.achieved_epsilon_strategy2
        metrics["achieved_epsilon"] = fn(gamma, pi, delta, lam, inputs)
        if cfg["accountant.optimize_alpha"]:
            metrics["achieved_epsilon_best_alpha"] = acct.achieved_epsilon_optimized_alpha(
                gamma, pi, delta, inputs, strategy=strategy)
    else:
        raise ConfigError(f"unknown accountant mode {cfg['accountant.mode']!r}")
    return metrics, [], artifacts


def _run_rademacher(cfg, seed, out_dir, threads):
    params = rad.ComplexityParams(c=float(cfg["rademacher.c"]), T=float(cfg["rademacher.T"]),
                                  p=float(cfg["rademacher.p"]), gamma=float(cfg["rademacher.gamma"]))
    n, d = int(cfg["rademacher.n"]), int(cfg["rademacher.d"])
    samples = derive_rng(seed, "samples").uniform(
        float(cfg["rademacher.sample_low"]), float(cfg["rademacher.sample_high"]), (n, d))
    method = cfg["rademacher.method"]
    ode, sde_est = rad.complexity_pair(samples, params, rng=derive_rng(seed, "sigma"),
                                       method=method, n_draws=int(cfg["rademacher.n_draws"]))
    metrics = {
        "f_value": ode.value, "g_value": sde_est.value,
        "ratio": sde_est.value / ode.value if ode.value else float("nan"),
        "damping_factor": rad.sde_damping_factor(params),
        "method": ode.method, "std_error": ode.std_error,
    }
    if cfg["rademacher.oracles"]:
        if n <= rad.ENUMERATION_LIMIT:
            enum = rad.sigma_expectation(samples, params.p, method="enumerate")
            mc = rad.sigma_expectation(samples, params.p, rng=derive_rng(seed, "mc"),
                                       method="mc", n_draws=int(cfg["rademacher.n_draws"]))
            metrics["sigma_enum_vs_mc_z"] = ((mc.value - enum.value) / mc.std_error
                                             if mc.std_error else 0.0)
        gbm = rad.gbm_moment_oracle(1.0, 0.3 * params.c, params.gamma, params.T, params.p,
                                    int(cfg["rademacher.gbm_paths"]), derive_rng(seed, "gbm"))
        metrics["gbm_z"] = gbm.z_score
        signs = 2.0 * derive_rng(seed, "signs").integers(0, 2, size=min(n, 8)) - 1.0
        small = samples[:min(n, 8), :min(d, 8)]
        best = rad.sup_random_search_oracle(small, signs, params,
                                            int(cfg["rademacher.sup_trials"]),
                                            derive_rng(seed, "sup"))
        closed = rad.closed_form_supremum(small, signs, params)
        metrics["sup_best"] = best
        metrics["sup_closed_form"] = closed
        metrics["sup_ratio"] = best / closed if closed else float("nan")
    _write_csv(os.path.join(out_dir, "complexity.csv"),
               ("c", "T", "p", "gamma", "f_value", "g_value", "ratio", "method", "std_error"),
               [(params.c, params.T, params.p, params.gamma, metrics["f_value"],
                 metrics["g_value"], metrics["ratio"], metrics["method"], metrics["std_error"])])
    return metrics, [], {"complexity": "complexity.csv"}


def _run_sde_demo(cfg, seed, out_dir, threads):
    if cfg["sde.image"] == "synthetic":
        img = sde.synthetic_image(int(cfg["sde.rows"]), int(cfg["sde.cols"]),
                                  int(cfg["sde.channels"]))
    else:
        img = read_image(cfg["sde.image"])
    ext = cfg["sde.format"]
    ode_cfg = sde.SdeRunConfig(mode="ode", gamma=0.0, dt=float(cfg["sde.dt"]),
                               t_end=float(cfg["sde.t_end"]))
    sde_cfg = sde.SdeRunConfig(mode=cfg["sde.mode"], gamma=float(cfg["sde.gamma"]),
                               dt=float(cfg["sde.dt"]), t_end=float(cfg["sde.t_end"]))
    ode_fwd, _ = sde.propagate(img, ode_cfg, "forward")
    ode_back, _ = sde.propagate(ode_fwd, ode_cfg, "backward")
    rng = derive_rng(seed, "sde")
    sde_fwd, _ = sde.propagate(img, sde_cfg, "forward", rng)
    sde_back, _ = sde.propagate(sde_fwd, sde_cfg, "backward", rng)
    metrics = {
        "ode_reconstruction_error": sde.reconstruction_error(img, ode_back),
        "sde_reconstruction_error": sde.reconstruction_error(img, sde_back),
    }
    metrics["error_ratio"] = (metrics["sde_reconstruction_error"]
                              / metrics["ode_reconstruction_error"])
    artifacts = {}
    for name, array in (("original", img), ("ode_forward", ode_fwd),
                        ("ode_recovered", ode_back), ("sde_forward", sde_fwd),
                        ("sde_recovered", sde_back)):
        fname = f"{name}.{ext}"
        write_image(os.path.join(out_dir, fname), array)
        artifacts[name] = fname
    return metrics, [], artifacts


_RUNNERS = {
    "train": _run_train,
    "attack": _run_attack,
    "accountant": _run_accountant,
    "rademacher": _run_rademacher,
    "sde_demo": _run_sde_demo,
    "dpsgd_compare": _run_dpsgd_compare,
}


def emit_plots(curves, out_dir):
    """Write each curve as a CSV sidecar plus a self-contained SVG line plot.

    Returns the artifact name -> filename mapping; an empty curve list
    yields no files.
    """
    artifacts = {}
    for curve in curves:
        rows = []
        for series in curve["series"]:
            rows.extend((series["label"], x, y) for x, y in zip(series["x"], series["y"]))
        csv_name = f"{curve['name']}.csv"
        _write_csv(os.path.join(out_dir, csv_name), ("series", "x", "y"), rows)
        svg_name = f"{curve['name']}.svg"
        line_plot(os.path.join(out_dir, svg_name),
                  [(s["label"], s["x"], s["y"]) for s in curve["series"]],
                  title=curve["name"], xlabel=curve["xlabel"], ylabel=curve["ylabel"])
        artifacts[curve["name"] + ".csv"] = csv_name
        artifacts[curve["name"] + ".svg"] = svg_name
    return artifacts


def run_experiment(kind, overrides=None, out_dir="out", seed=0, threads=1):
    """Resolve config, dispatch, and persist the result record atomically."""
    resolved = resolve_config(defaults_for(kind), overrides or {})
    os.makedirs(out_dir, exist_ok=True)
    runner = _RUNNERS[kind]
    started = time.perf_counter()
    stage = "run"
    try:
        out = runner(resolved, int(seed), out_dir, int(threads))
    except (ConfigError, ValueError, OSError, RuntimeError) as exc:
        raise ExperimentError(stage if not isinstance(exc, ExperimentError) else exc.stage,
                              exc) from exc
    metrics, curves, artifacts = out[:3]
    timings = out[3] if len(out) > 3 else {}
    stage = "plots"
    try:
        artifacts.update(emit_plots(curves, out_dir))
    except (ValueError, OSError) as exc:
        raise ExperimentError(stage, exc) from exc
    timings["total_seconds"] = time.perf_counter() - started
    record = {
        "kind": kind,
        "seed": int(seed),
        "config": resolved,
        "metrics": metrics,
        "timings": timings,
        "artifacts": artifacts,
    }
    _write_json(os.path.join(out_dir, "record.json"), record)
    return record
