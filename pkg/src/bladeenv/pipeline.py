"""Configuration-driven orchestration of the whole workflow.

Stages run in a fixed order and communicate only through files in the
run directory::

    fit -> subspace -> intersect -> sample -> envelope -> classify
        -> export-mesh -> export-plots

Each completed stage leaves a record in ``stages/`` with the hash of its
inputs (the config sections it reads plus the hashes of upstream
artifacts) and the sha256 of every file it wrote. A later run skips any
stage whose record still matches, so deleting downstream artifacts
resumes from the last valid stage. ``manifest.json`` collects the
records; its hash is a pure function of the configuration.
"""

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from .config import PipelineConfig, canonical_json, objective_kind
from .covariance import GradientCovariance, WeightVector, scalar_covariance, smooth_weights, vector_covariance
from .covariance import subspace_from_covariance, uniform_samples
from .envelope import EnvelopeBand, DecisionModel, build_band, fit_decision_model, output_mahalanobis, train_logistic
from .exceptions import ConfigError, MissingArtifactsError, TrivialIntersectionError
from .linalg import SubspacePair, intersect_inactive
from .mesh import export_mesh, euler_characteristic, is_watertight, read_obj
from .oracle import BladeProfile, BumpDeformation, SyntheticBladeOracle
from .sampling import ActiveBlock, ActiveCoordinateSpec, SampleEnsemble, hit_and_run
from .surrogates import PolynomialSurrogate, TrainingSet, fit_surrogate, r2_score

STAGES = ("fit", "subspace", "intersect", "sample", "envelope", "classify", "export-mesh", "export-plots")

STAGE_SECTIONS = {
    "fit": ("oracle", "training", "objectives"),
    "subspace": ("oracle", "objectives", "covariance"),
    "intersect": ("covariance", "targets"),
    "sample": ("sampler", "sweep"),
    "envelope": ("envelope",),
    "classify": ("classify",),
    "export-mesh": ("export",),
    "export-plots": (),
}

INVARIANCE_CHECK = 500
MANIFEST = "manifest.json"
ERROR_RECORD = "error.json"


def _package_version():
    try:
        return version("bladeenv")
    except PackageNotFoundError:
        return "unknown"


def _to_builtin(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def json_bytes(obj):
    return (json.dumps(obj, indent=1, sort_keys=True, default=_to_builtin) + "\n").encode()


def csv_bytes(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue().encode()


def matrix_csv_bytes(A, header=None):
    buf = io.StringIO()
    if header:
        buf.write(",".join(header) + "\n")
    np.savetxt(buf, np.atleast_2d(A), delimiter=",", fmt="%.17g")
    return buf.getvalue().encode()


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, data):
    """Write ``data`` (bytes) to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def build_oracle(oracle_cfg):
    return SyntheticBladeOracle(
        d=oracle_cfg["d"],
        n_nodes=oracle_cfg["n_nodes"],
        seed=oracle_cfg["seed"],
        amplitude=oracle_cfg["amplitude"],
        gamma=oracle_cfg["gamma"],
    )


def objective_weights(objective, oracle):
    """Node weights of a vector objective as a :class:`WeightVector`."""
    w = objective["weights"]
    N = oracle.n_nodes
    if "values" in w:
        return WeightVector(w["values"], objective["label"])
    if "region" in w:
        center = oracle.flow.peak_node if w["region"] == "peak" else oracle.flow.le_node
        return WeightVector(smooth_weights(N, [center], w["radius"]), f"{w['region']} region, radius {w['radius']}")
    return WeightVector(smooth_weights(N, w["nodes"], w["radius"]), f"nodes {w['nodes']}, radius {w['radius']}")


def read_training(path, d):
    """Designs and oracle outputs stored by the ``fit`` stage."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    X = data[:, :d]
    cols = {name: j for j, name in enumerate(header)}
    mach = [j for name, j in cols.items() if name.startswith("mach_")]
    return X, {"loss": data[:, cols["loss"]], "mass_flow": data[:, cols["mass_flow"]], "mach": data[:, mach]}


def scalar_outputs(objectives):
    """Distinct scalar outputs in objective order; these span the output Mahalanobis distance."""
    out = []
    for ob in objectives:
        if objective_kind(ob) == "scalar" and ob["output"] not in out:
            out.append(ob["output"])
    return out


def scaled_designs(rng, n, d, log10_scale):
    """Uniform hypercube directions shrunk by log-uniform factors, covering small and large deviations."""
    lo, hi = log10_scale
    s = 10.0 ** rng.uniform(lo, hi, n)
    return rng.uniform(-1.0, 1.0, (n, d)) * s[:, None]


@dataclass(frozen=True)
class RunResult:
    out_dir: str
    executed: tuple
    skipped: tuple
    manifest_hash: str
    manifest: dict


class Pipeline:
    """Runs the stages of one configuration inside ``out_dir``."""

    def __init__(self, config, out_dir):
        self.config = config if isinstance(config, PipelineConfig) else PipelineConfig.from_dict(config)
        self.out_dir = str(out_dir)
        self._oracle = None
        self._artifacts = None

    # paths and records

    def path(self, *parts):
        return os.path.join(self.out_dir, *parts)

    def record_path(self, stage):
        return self.path("stages", f"{stage}.json")

    def read_record(self, stage):
        p = self.record_path(stage)
        if not os.path.exists(p):
            return None
        try:
            return _read_json(p)
        except (OSError, json.JSONDecodeError):
            return None

    def input_hash(self, stage):
        """Hash of the config sections read by ``stage`` and of all upstream artifacts."""
        upstream = {}
        for prev in STAGES[: STAGES.index(stage)]:
            rec = self.read_record(prev)
            upstream[prev] = None if rec is None else rec["artifacts"]
        payload = {
            "stage": stage,
            "config": {sec: self.config[sec] for sec in STAGE_SECTIONS[stage]},
            "upstream": upstream,
        }
        return hashlib.sha256(canonical_json(payload).encode()).hexdigest()

    def is_valid(self, stage):
        rec = self.read_record(stage)
        if rec is None or rec.get("input_hash") != self.input_hash(stage):
            return False
        for rel, digest in rec["artifacts"].items():
            p = self.path(rel)
            if not os.path.exists(p) or sha256_file(p) != digest:
                return False
        return True

    def write(self, rel, data):
        atomic_write(self.path(rel), data)
        self._artifacts[rel] = hashlib.sha256(data).hexdigest()

    @property
    def oracle(self):
        if self._oracle is None:
            self._oracle = build_oracle(self.config["oracle"])
        return self._oracle

    # driver

    def run(self, until=None, force=False):
        """Run every stage up to ``until`` (default: all), skipping stages with valid records."""
        if until is not None and until not in STAGES:
            raise ConfigError(f"unknown stage {until!r}; choose from {', '.join(STAGES)}")
        last = STAGES.index(until) if until is not None else len(STAGES) - 1
        os.makedirs(self.out_dir, exist_ok=True)
        executed, skipped = [], []
        for stage in STAGES[: last + 1]:
            if not force and self.is_valid(stage):
                skipped.append(stage)
                continue
            self.execute(stage)
            executed.append(stage)
        manifest = self.write_manifest()
        data = json_bytes(manifest)
        return RunResult(self.out_dir, tuple(executed), tuple(skipped), hashlib.sha256(data).hexdigest(), manifest)

    def execute(self, stage):
        h = self.input_hash(stage)
        self._artifacts = {}
        if os.path.exists(self.record_path(stage)):
            os.unlink(self.record_path(stage))
        try:
            summary = getattr(self, "_stage_" + stage.replace("-", "_"))()
        except Exception as exc:
            atomic_write(
                self.path(ERROR_RECORD),
                json_bytes({
                    "stage": stage,
                    "error_type": type(exc).__name__,
                    "message": str(exc),
                    "partial_artifacts": sorted(self._artifacts),
                }),
            )
            self.write_manifest()
            if hasattr(exc, "add_note"):
                exc.add_note(f"pipeline stage: {stage}")
            exc.pipeline_stage = stage
            raise
        record = {"stage": stage, "input_hash": h, "artifacts": dict(sorted(self._artifacts.items())), "summary": summary}
        atomic_write(self.record_path(stage), json_bytes(record))
        err = self.path(ERROR_RECORD)
        if os.path.exists(err) and _read_json(err).get("stage") == stage:
            os.unlink(err)
        return record

    def write_manifest(self):
        stages = {}
        for stage in STAGES:
            rec = self.read_record(stage)
            if rec is not None:
                stages[stage] = {k: rec[k] for k in ("input_hash", "artifacts", "summary")}
        manifest = {
            "format": "bladeenv-run",
            "package_version": _package_version(),
            "config_sha256": self.config.sha256,
            "config": self.config.data,
            "seeds": self.config.seeds(),
            "stages": stages,
        }
        atomic_write(self.path(MANIFEST), json_bytes(manifest))
        return manifest

    # loaders shared by the stages

    def training(self):
        return read_training(self.path("training.csv"), self.config["oracle"]["d"])

    def surrogates(self):
        payload = _read_json(self.path("surrogates.json"))
        return {label: PolynomialSurrogate.from_dict(v["model"]) for label, v in payload["objectives"].items()}

    def subspaces(self):
        out = {}
        for label in self.config.labels:
            payload = _read_json(self.path("subspaces", f"{label}.json"))
            out[label] = (SubspacePair.from_dict(payload["full"]), SubspacePair.from_dict(payload["conditional"]))
        return out

    def spec(self):
        return ActiveCoordinateSpec.from_dict(_read_json(self.path("intersection.json"))["spec"])

    def ensemble(self):
        return SampleEnsemble.load(self.path("ensemble.csv"), self.path("ensemble.json"))

    def nominal(self):
        return BladeProfile.from_csv(self.path("nominal_profile.csv"))

    def decision_model(self):
        return DecisionModel.load(self.path("decision_model.json"))

    def delta_reference(self):
        """Training outputs that define the output Mahalanobis distance."""
        names = scalar_outputs(self.config["objectives"])
        if not names:
            raise ConfigError("the output Mahalanobis distance needs at least one scalar objective (loss or mass_flow)")
        _, outputs = self.training()
        return names, np.column_stack([outputs[n] for n in names])

    # stages

    def _stage_fit(self):
        cfg = self.config
        oracle = self.oracle
        d, N = oracle.d, oracle.n_nodes
        t = cfg["training"]
        n = t["n_train"] + t["n_validation"]
        X = uniform_samples(d, n, t["seed"])
        out = oracle.evaluate_batch(X)
        table = np.column_stack([X, out["loss"], out["mass_flow"], out["mach"]])
        header = [f"x_{j + 1}" for j in range(d)] + ["loss", "mass_flow"] + [f"mach_{k}" for k in range(N)]
        self.write("training.csv", matrix_csv_bytes(table, header))
        self.write("nominal_profile.csv", oracle.profile.to_csv().encode())
        self.write("oracle.json", json_bytes(oracle.export()))

        split = TrainingSet.from_arrays(X, out["loss"], t["n_validation"], t["seed"])
        payload = {"train_index": split.train_index, "validation_index": split.validation_index, "objectives": {}}
        summary = {}
        for ob in cfg["objectives"]:
            ts = TrainingSet(X, out[ob["output"]], split.train_index, split.validation_index)
            model = fit_surrogate(ts, ob["degree"])
            payload["objectives"][ob["label"]] = {
                "output": ob["output"],
                "kind": objective_kind(ob),
                "model": model.to_dict(),
            }
            va = model.validation_r2_
            summary[ob["label"]] = {
                "degree": ob["degree"],
                "n_terms": int(model.multi_indices_.shape[0]),
                "training_r2": float(np.min(model.training_r2_)),
                "validation_r2": None if va is None else float(np.min(va)),
            }
        self.write("surrogates.json", json_bytes(payload))
        return summary

    def _stage_subspace(self):
        cfg = self.config
        c = cfg["covariance"]
        models = self.surrogates()
        V_cur = None
        summary = {}
        for ob in cfg["objectives"]:
            label = ob["label"]
            model = models[label]
            if objective_kind(ob) == "scalar":
                C = scalar_covariance(model, c["n_mc"], c["seed"], source=label)
                weights = None
            else:
                w = objective_weights(ob, self.oracle)
                C = vector_covariance(model, w, c["n_mc"], c["seed"], source=label)
                C = GradientCovariance(C.matrix, C.n_samples, C.source, C.seed, {"weights": w.to_dict()})
                weights = w.weights
            first = V_cur is None
            full = subspace_from_covariance(C, ob["r_override"], ob["min_ratio"] if first else 1.0)
            if first:
                cond = full
            else:
                if V_cur.subspace_dim < 2:
                    raise TrivialIntersectionError(
                        f"no room left for objective {label!r}: earlier active subspaces leave "
                        f"{V_cur.subspace_dim} inactive direction(s)"
                    )
                cond = subspace_from_covariance(C, ob["r_override"], ob["min_ratio"], restrict_to=V_cur)
            V_cur = cond.inactive
            self.write(f"covariances/{label}.json", json_bytes(C.to_dict()))
            self.write(
                f"subspaces/{label}.json",
                json_bytes({
                    "label": label,
                    "weights": weights,
                    "full": full.to_dict(),
                    "conditional": cond.to_dict(),
                    "restricted_dim": int(cond.eigenvalues.size),
                }),
            )
            summary[label] = {
                "r": cond.gap_index,
                "full_space_r": full.gap_index,
                "restricted_dim": int(cond.eigenvalues.size),
                "leading_eigenvalues": full.eigenvalues[:4],
                "n_mc": C.n_samples,
            }
        return summary

    def _stage_intersect(self):
        cfg = self.config
        pairs = self.subspaces()
        blocks = []
        for label in cfg.labels:
            W = pairs[label][1].active
            target = cfg["targets"].get(label)
            if target is None:
                target = np.zeros(W.subspace_dim)
            elif len(target) != W.subspace_dim:
                raise ConfigError(
                    f"targets.{label} has {len(target)} entries but the {label!r} active subspace has r = {W.subspace_dim}"
                )
            blocks.append(ActiveBlock(label, W, target))
        V_int = intersect_inactive([b.basis for b in blocks], cfg["covariance"]["rank_tol"])
        spec = ActiveCoordinateSpec(tuple(blocks), V_int)
        res = {b.label: float(np.max(np.abs(b.basis.columns.T @ V_int.columns))) for b in blocks}
        full_res = {
            label: float(np.max(np.abs(pairs[label][0].W.T @ V_int.columns))) for label in cfg.labels
        }
        d = V_int.ambient_dim
        self.write(
            "intersection.json",
            json_bytes({
                "dim": V_int.subspace_dim,
                "rank": d - V_int.subspace_dim,
                "residuals": res,
                "full_space_residuals": full_res,
                "spec": spec.to_dict(),
            }),
        )
        return {
            "dim": V_int.subspace_dim,
            "ambient_dim": d,
            "block_dims": {b.label: b.basis.subspace_dim for b in blocks},
            "max_residual": max(res.values()),
            "full_space_residuals": full_res,
        }

    def _stage_sample(self):
        cfg = self.config
        s = cfg["sampler"]
        spec = self.spec()
        ens = hit_and_run(spec, s["h"], s["seed"], s["burn_in"], s["thinning"])
        self.write("ensemble.csv", matrix_csv_bytes(ens.designs))
        self.write("ensemble.json", json_bytes(ens.sidecar()))

        oracle = self.oracle
        X_train, train_out = self.training()
        n = min(INVARIANCE_CHECK, len(ens), X_train.shape[0])
        ens_out = oracle.evaluate_batch(ens.designs[:n])
        invariance = {}
        for name in ("loss", "mass_flow"):
            e, r = float(np.ptp(ens_out[name])), float(np.ptp(train_out[name][:n]))
            invariance[name] = {"ensemble_spread": e, "random_spread": r, "ratio": e / r if r > 0 else None}
        summary = {
            "n_samples": len(ens),
            "max_abs_design": float(np.max(np.abs(ens.designs))),
            "max_constraint_residual": float(np.max(spec.residuals(ens.designs))),
            "invariance": invariance,
        }
        if cfg["sweep"] is not None:
            summary["sweep"] = self._sweep(spec, train_out, n)
        return summary

    def _sweep(self, spec, train_out, n_random):
        sw = self.config["sweep"]
        label, index = sw["label"], sw["index"]
        block = spec.block(label)
        if index >= block.target.size:
            raise ConfigError(f"sweep.index {index} is out of range for {label!r} with r = {block.target.size}")
        ob = self.config.objective(label)
        oracle = self.oracle
        if objective_kind(ob) == "vector":
            node = int(np.argmax(objective_weights(ob, oracle).weights))
        else:
            node = oracle.flow.peak_node
        results = []
        all_loss, all_mf = [], []
        for i, value in enumerate(sw["values"]):
            target = block.target.copy()
            target[index] = value
            sub = spec.with_targets({label: target})
            ens = hit_and_run(sub, sw["h"], sw["seed"] + i, sw["burn_in"], sw["thinning"])
            out = oracle.evaluate_batch(ens.designs)
            anchor = oracle.evaluate_flow(sub.anchor())
            all_loss.append(out["loss"])
            all_mf.append(out["mass_flow"])
            results.append({
                "value": value,
                "node_mean_mach": float(np.mean(out["mach"][:, node])),
                "anchor_node_mach": float(anchor.mach_distribution[node]),
                "mean_mach": out["mach"].mean(axis=0),
                "loss_range": [float(out["loss"].min()), float(out["loss"].max())],
                "mass_flow_range": [float(out["mass_flow"].min()), float(out["mass_flow"].max())],
            })
        steps = np.diff([r["node_mean_mach"] for r in results])
        loss_spread = float(np.ptp(np.concatenate(all_loss)))
        mf_spread = float(np.ptp(np.concatenate(all_mf)))
        payload = {
            "label": label,
            "index": index,
            "node": node,
            "values": sw["values"],
            "results": results,
            "monotone": bool(np.all(steps > 0) or np.all(steps < 0)),
            "loss_spread": loss_spread,
            "mass_flow_spread": mf_spread,
            "random_loss_spread": float(np.ptp(train_out["loss"][:n_random])),
            "random_mass_flow_spread": float(np.ptp(train_out["mass_flow"][:n_random])),
        }
        self.write("sweep.json", json_bytes(payload))
        return {k: payload[k] for k in ("label", "index", "node", "monotone", "loss_spread", "mass_flow_spread")}

    def _stage_envelope(self):
        e = self.config["envelope"]
        oracle = self.oracle
        ens = self.ensemble()
        nominal = self.nominal()
        D = oracle.deformation.displacement(ens.designs)
        band = build_band(D, nominal, e["quantile"])
        self.write("envelope.csv", band.to_csv().encode())

        names, Y_ref = self.delta_reference()
        rng = np.random.default_rng(e["seed"])
        Xc = scaled_designs(rng, e["n_calibration"], oracle.d, e["log10_scale"])
        cal = oracle.evaluate_batch(Xc)
        delta = output_mahalanobis(Y_ref, np.column_stack([cal[n] for n in names]))
        cal_labels = (delta <= e["delta_threshold"]).astype(int)

        model = fit_decision_model(D, e["ridge_scale"])
        d_ens = model.distances(D)
        d_cal = model.distances(oracle.deformation.displacement(Xc))
        fit = train_logistic(np.concatenate([d_ens, d_cal]), np.concatenate([np.ones(len(d_ens), dtype=int), cal_labels]))
        cal_pred = (fit.probability(d_cal) >= 0.5).astype(int)
        provenance = {
            "ensemble_csv_sha256": sha256_file(self.path("ensemble.csv")),
            "n_ensemble": len(ens),
            "delta_outputs": names,
            "delta_reference_mean": Y_ref.mean(axis=0),
            "delta_reference_covariance": np.atleast_2d(np.cov(Y_ref, rowvar=False)),
            "delta_threshold": e["delta_threshold"],
            "n_calibration": e["n_calibration"],
            "calibration_log10_scale": e["log10_scale"],
            "calibration_accept_fraction": float(cal_labels.mean()),
            "calibration_agreement": float(np.mean(cal_pred == cal_labels)),
        }
        model = DecisionModel(model.mean_displacement, model.covariance, model.ridge, fit, json.loads(json_bytes(provenance)))
        self.write("decision_model.json", json_bytes(model.to_dict()))
        return {
            "band_max_width": float(np.max(band.width)),
            "band_mean_width": float(np.mean(band.width)),
            "ridge": model.ridge,
            "logistic_slope": fit.slope,
            "logistic_intercept": fit.intercept,
            "threshold_distance": fit.boundary,
            "separable": fit.separable,
            "calibration_agreement": provenance["calibration_agreement"],
        }

    def _stage_classify(self):
        k = self.config["classify"]
        thr = self.config["envelope"]["delta_threshold"]
        oracle = self.oracle
        model = self.decision_model()
        names, Y_ref = self.delta_reference()
        test_space = BumpDeformation(oracle.profile, k["d"], oracle.deformation.amplitude, k["family"])
        rng = np.random.default_rng(k["seed"])
        X = scaled_designs(rng, k["n_test"], k["d"], k["log10_scale"])
        D = test_space.displacement(X)
        out = oracle.flow.evaluate_displacements(D)
        delta = output_mahalanobis(Y_ref, np.column_stack([out[n] for n in names]))
        dist = model.distances(D)
        prob = model.logistic.probability(dist)
        geo_accept = prob >= 0.5
        out_accept = delta <= thr
        rows = [
            [i, float(dist[i]), float(prob[i]), "accept" if geo_accept[i] else "reject",
             float(delta[i]), "accept" if out_accept[i] else "reject"]
            for i in range(len(X))
        ]
        header = ["index", "geometric_distance", "accept_probability", "geometric_decision", "delta", "output_decision"]
        self.write("classification.csv", csv_bytes(header, rows))
        return {
            "n_test": len(X),
            "test_space": {"d": k["d"], "family": k["family"]},
            "concordance": float(np.mean(geo_accept == out_accept)),
            "geometric_accept_fraction": float(np.mean(geo_accept)),
            "output_accept_fraction": float(np.mean(out_accept)),
        }

    def _stage_export_mesh(self):
        x = self.config["export"]
        band = EnvelopeBand.from_csv(self.path("envelope.csv"), self.nominal())
        path = self.path("mesh.obj")
        summary = export_mesh(band, path, x["span"], x["contour_levels"], x["absolute_levels"], x["scale"])
        self._artifacts["mesh.obj"] = sha256_file(path)
        checks = {}
        for name, obj in read_obj(path).items():
            if obj.faces is not None:
                checks[name] = {
                    "watertight": is_watertight(obj.faces),
                    "euler_characteristic": euler_characteristic(len(obj.vertices), obj.faces),
                }
        out = summary.to_dict()
        out["surfaces"] = checks
        return out

    def _stage_export_plots(self):
        files = export_plotdata(self.out_dir, writer=self.write)
        return {"files": sorted(files)}


PLOT_INPUTS = (
    "oracle.json",
    "training.csv",
    "surrogates.json",
    "nominal_profile.csv",
    "ensemble.csv",
    "ensemble.json",
    "envelope.csv",
    "decision_model.json",
)


def export_plotdata(run_dir, writer=None):
    """Write CSV/JSON plot data for a completed run into ``run_dir/plots``.

    Returns the list of written paths relative to ``run_dir``. Raises
    :class:`MissingArtifactsError` naming every absent input.
    """
    missing = [f for f in PLOT_INPUTS if not os.path.exists(os.path.join(run_dir, f))]
    sur_path = os.path.join(run_dir, "surrogates.json")
    labels = list(_read_json(sur_path)["objectives"]) if os.path.exists(sur_path) else []
    missing += [f"subspaces/{lb}.json" for lb in labels if not os.path.exists(os.path.join(run_dir, "subspaces", f"{lb}.json"))]
    if missing:
        raise MissingArtifactsError(missing)
    if writer is None:
        def writer(rel, data):
            atomic_write(os.path.join(run_dir, rel), data)

    meta = _read_json(os.path.join(run_dir, "oracle.json"))
    oracle = SyntheticBladeOracle(meta["d"], meta["n_nodes"], meta["flow"]["seed"], meta["amplitude"], meta["flow"]["gamma"])
    d = meta["d"]
    X, outputs = read_training(os.path.join(run_dir, "training.csv"), d)
    sur = _read_json(sur_path)
    va_idx = np.asarray(sur["validation_index"], dtype=int)
    written = []
    index = {"objectives": {}}

    def emit(rel, data):
        writer(rel, data)
        written.append(rel)

    spectra = {}
    for label, entry in sur["objectives"].items():
        model = PolynomialSurrogate.from_dict(entry["model"])
        sub = _read_json(os.path.join(run_dir, "subspaces", f"{label}.json"))
        full = SubspacePair.from_dict(sub["full"])
        spectra[label] = full.eigenvalues
        y = outputs[entry["output"]]
        pred = model.predict(X)
        if entry["kind"] == "vector":
            w = np.asarray(sub["weights"], dtype=float)
            y = y @ w / w.sum()
            pred = pred @ w / w.sum()
        U = X @ full.W
        coef, *_ = np.linalg.lstsq(np.column_stack([np.ones(len(U)), U]), y, rcond=None)
        summary_r2 = r2_score(y, np.column_stack([np.ones(len(U)), U]) @ coef)
        header = [f"u_{j + 1}" for j in range(U.shape[1])] + ["output", "prediction"]
        emit(f"plots/summary_{label}.csv", matrix_csv_bytes(np.column_stack([U, y, pred]), header))
        entry_index = {"kind": entry["kind"], "active_dim": int(U.shape[1]), "summary_linear_r2": summary_r2}
        if va_idx.size:
            obs, prd = y[va_idx], pred[va_idx]
            emit(f"plots/validation_{label}.csv", matrix_csv_bytes(np.column_stack([obs, prd]), ["observed", "predicted"]))
            stored = entry["model"]["validation_r2"]
            entry_index["validation_r2"] = r2_score(obs, prd)
            entry_index["stored_validation_r2"] = stored
        index["objectives"][label] = entry_index

    order = list(spectra)
    table = np.column_stack([np.arange(1, d + 1)] + [np.pad(spectra[lb], (0, d - spectra[lb].size)) for lb in order])
    emit("plots/spectra.csv", matrix_csv_bytes(table, ["index"] + order))

    ens = np.loadtxt(os.path.join(run_dir, "ensemble.csv"), delimiter=",", ndmin=2)
    n = min(INVARIANCE_CHECK, ens.shape[0], X.shape[0])
    ens_out = oracle.evaluate_batch(ens[:n])
    rows = [["training", float(outputs["loss"][i]), float(outputs["mass_flow"][i])] for i in range(X.shape[0])]
    rows += [["ensemble", float(ens_out["loss"][i]), float(ens_out["mass_flow"][i])] for i in range(n)]
    emit("plots/invariance.csv", csv_bytes(["set", "loss", "mass_flow"], rows))

    nominal = BladeProfile.from_csv(os.path.join(run_dir, "nominal_profile.csv"))
    band = EnvelopeBand.from_csv(os.path.join(run_dir, "envelope.csv"), nominal)
    normals = nominal.normals()
    inner = nominal.nodes + band.lower[:, None] * normals
    outer = nominal.nodes + band.upper[:, None] * normals
    emit(
        "plots/bands.csv",
        matrix_csv_bytes(
            np.column_stack([np.arange(nominal.n_nodes), nominal.arc_fraction, nominal.nodes, band.lower, band.upper, inner, outer]),
            ["node", "arc_fraction", "x", "y", "lower", "upper", "inner_x", "inner_y", "outer_x", "outer_y"],
        ),
    )

    model = DecisionModel.load(os.path.join(run_dir, "decision_model.json"))
    if model.trained:
        ens_dist = model.distances(oracle.deformation.displacement(ens))
        top = 2.0 * max(float(model.threshold_distance), float(np.max(ens_dist)))
        grid = np.linspace(0.0, top, 201)
        emit("plots/logistic.csv", matrix_csv_bytes(np.column_stack([grid, model.logistic.probability(grid)]), ["distance", "probability"]))
        index["logistic"] = {"slope": model.logistic_slope, "intercept": model.logistic_intercept, "threshold_distance": model.threshold_distance}

    index["files"] = sorted(written)
    emit("plots/index.json", json_bytes(index))
    return written


def run_pipeline(config, out_dir, until=None, force=False):
    """Run (or resume) the pipeline for ``config`` in ``out_dir`` and return a :class:`RunResult`."""
    return Pipeline(config, out_dir).run(until, force)
