import csv
import json
import os
import shutil

import numpy as np
import pytest

from bladeenv.exceptions import ConfigError, EmptySliceError, MissingArtifactsError
from bladeenv.pipeline import STAGES, Pipeline, export_plotdata, run_pipeline, sha256_file

from conftest import DUAL, config


def load(run, *parts):
    with open(os.path.join(run.out_dir, *parts)) as fh:
        return json.load(fh)


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


class TestArtifacts:
    def test_tree(self, quick_run):
        out = quick_run.out_dir
        for rel in ("surrogates.json", "covariances/loss.json", "subspaces/mass_flow.json", "ensemble.csv",
                    "ensemble.json", "envelope.csv", "decision_model.json", "manifest.json", "mesh.obj",
                    "classification.csv", "plots/index.json"):
            assert os.path.exists(os.path.join(out, rel)), rel
        assert quick_run.executed == STAGES

    def test_manifest_hashes_match_files(self, quick_run):
        m = quick_run.manifest
        for stage, rec in m["stages"].items():
            for rel, digest in rec["artifacts"].items():
                assert sha256_file(os.path.join(quick_run.out_dir, rel)) == digest, rel
        with open(os.path.join(quick_run.out_dir, "manifest.json"), "rb") as fh:
            import hashlib

            assert hashlib.sha256(fh.read()).hexdigest() == quick_run.manifest_hash
        assert m["seeds"]["sampler"] == 3 and m["config_sha256"]

    def test_two_linear_objectives_give_18(self, tmp_path):
        cfg = config({"version": 1, "objectives": [{"label": "loss", "degree": 1}, {"label": "mass_flow", "degree": 1}]},
                     quick=True)
        res = Pipeline(cfg, str(tmp_path)).run("intersect")
        assert res.executed == ("fit", "subspace", "intersect")
        summary = res.manifest["stages"]["intersect"]["summary"]
        assert summary["dim"] == 18 and summary["max_residual"] <= 1e-10

    def test_ensemble_reproduces_sidecar_settings(self, quick_run):
        side = load(quick_run, "ensemble.json")
        assert (side["n_samples"], side["seed"], side["burn_in"], side["thinning"]) == (600, 3, 200, 2)
        X = np.loadtxt(os.path.join(quick_run.out_dir, "ensemble.csv"), delimiter=",")
        assert X.shape == (600, 20)

    def test_decision_model_provenance(self, quick_run):
        dm = load(quick_run, "decision_model.json")
        assert dm["provenance"]["ensemble_csv_sha256"] == sha256_file(os.path.join(quick_run.out_dir, "ensemble.csv"))
        assert dm["provenance"]["delta_outputs"] == ["loss", "mass_flow"]
        assert dm["logistic"]["slope"] < 0

    def test_mesh_summary(self, quick_run):
        s = quick_run.manifest["stages"]["export-mesh"]["summary"]
        assert all(v["watertight"] and v["euler_characteristic"] == 2 for v in s["surfaces"].values())
        assert s["vertex_count"] > 0 and s["face_count"] > 0


class TestSweep:
    def test_monotone_peak_with_invariance(self, tuning_run):
        sweep = load(tuning_run, "sweep.json")
        assert sweep["node"] == 27 and len(sweep["results"]) == 5
        vals = [r["node_mean_mach"] for r in sweep["results"]]
        assert sweep["monotone"] and np.all(np.diff(vals) != 0)
        assert sweep["loss_spread"] <= 1e-2 * sweep["random_loss_spread"]
        assert sweep["mass_flow_spread"] <= 1e-8

    def test_peak_block_inside_dual_inactive_space(self, tuning_run):
        summary = tuning_run.manifest["stages"]["intersect"]["summary"]
        assert summary["dim"] == 16
        assert summary["block_dims"] == {"loss": 1, "mass_flow": 1, "peak": 2}


class TestErrors:
    def test_empty_objectives(self):
        with pytest.raises(ConfigError):
            config(DUAL, objectives=[])

    def test_unknown_until(self, tmp_path):
        with pytest.raises(ConfigError):
            run_pipeline(config(DUAL, quick=True), str(tmp_path), until="plot")

    def test_infeasible_targets_record_error(self, tmp_path):
        cfg = config({"version": 1, "objectives": [{"label": "mass_flow", "degree": 1, "r_override": 1}]},
                     quick=True, targets={"mass_flow": [50.0]})
        with pytest.raises(EmptySliceError) as err:
            run_pipeline(cfg, str(tmp_path))
        assert err.value.pipeline_stage == "sample"
        rec = json.loads((tmp_path / "error.json").read_text())
        assert rec["stage"] == "sample" and rec["error_type"] == "EmptySliceError"
        assert rec["partial_artifacts"] == []
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert set(m["stages"]) == {"fit", "subspace", "intersect"}

    def test_target_length_mismatch(self, tmp_path):
        cfg = config(DUAL, quick=True, targets={"loss": [0.0, 0.0]})
        with pytest.raises(ConfigError, match="targets.loss"):
            run_pipeline(cfg, str(tmp_path), until="intersect")
        assert json.loads((tmp_path / "error.json").read_text())["stage"] == "intersect"

    def test_error_record_cleared_on_success(self, tmp_path):
        bad = config(DUAL, quick=True, targets={"loss": [0.0, 0.0]})
        with pytest.raises(ConfigError):
            run_pipeline(bad, str(tmp_path), until="intersect")
        run_pipeline(config(DUAL, quick=True), str(tmp_path), until="intersect")
        assert not (tmp_path / "error.json").exists()

    def test_delta_needs_scalar_objective(self, tmp_path):
        cfg = config({"version": 1, "objectives": [{"label": "peak", "output": "mach", "weights": {"region": "peak"},
                                                    "r_override": 2}]}, quick=True)
        with pytest.raises(ConfigError, match="scalar objective"):
            run_pipeline(cfg, str(tmp_path), until="envelope")


class TestDeterminismAndResume:
    def test_identical_hash_in_fresh_directory(self, quick_run, tmp_path):
        again = run_pipeline(config(DUAL, quick=True), str(tmp_path / "b"))
        assert again.manifest_hash == quick_run.manifest_hash
        for rel in ("ensemble.csv", "decision_model.json", "mesh.obj", "plots/index.json"):
            assert sha256_file(os.path.join(again.out_dir, rel)) == sha256_file(os.path.join(quick_run.out_dir, rel))

    def test_rerun_skips_everything(self, quick_run, tmp_path):
        work = tmp_path / "copy"
        shutil.copytree(quick_run.out_dir, work)
        res = run_pipeline(config(DUAL, quick=True), str(work))
        assert res.executed == () and res.skipped == STAGES
        assert res.manifest_hash == quick_run.manifest_hash

    def test_resume_after_deleting_downstream(self, quick_run, tmp_path):
        work = tmp_path / "copy"
        shutil.copytree(quick_run.out_dir, work)
        os.unlink(work / "envelope.csv")
        shutil.rmtree(work / "plots")
        res = run_pipeline(config(DUAL, quick=True), str(work))
        assert "fit" in res.skipped and "sample" in res.skipped
        assert "envelope" in res.executed and "export-plots" in res.executed
        assert res.manifest_hash == quick_run.manifest_hash

    def test_config_change_invalidates_downstream_only(self, quick_run, tmp_path):
        work = tmp_path / "copy"
        shutil.copytree(quick_run.out_dir, work)
        raw = json.loads(json.dumps(quick_run.manifest["config"]))
        raw["classify"]["seed"] = 11
        from bladeenv.config import PipelineConfig

        res = run_pipeline(PipelineConfig.from_dict(raw), str(work))
        assert res.executed == ("classify", "export-mesh", "export-plots")
        assert res.manifest_hash != quick_run.manifest_hash

    def test_seed_override_changes_hash(self, tmp_path):
        a = run_pipeline(config(DUAL, quick=True).with_seed_override(7), str(tmp_path / "a"), until="sample")
        b = run_pipeline(config(DUAL, quick=True), str(tmp_path / "b"), until="sample")
        assert a.manifest_hash != b.manifest_hash
        assert a.manifest["seeds"]["sampler"] == 10

    def test_force_reruns(self, tmp_path):
        cfg = config(DUAL, quick=True)
        first = run_pipeline(cfg, str(tmp_path), until="subspace")
        again = run_pipeline(cfg, str(tmp_path), until="subspace", force=True)
        assert again.executed == ("fit", "subspace")
        assert again.manifest_hash == first.manifest_hash


class TestPlotData:
    def test_spectra_rows(self, quick_run):
        header, table = read_csv(os.path.join(quick_run.out_dir, "plots", "spectra.csv"))
        assert header == ["index", "loss", "mass_flow"]
        assert table.shape[0] == 20
        assert np.all(np.diff(table[:, 1]) <= 0)

    def test_linear_objective_summary_is_a_line(self, quick_run):
        index = load(quick_run, "plots", "index.json")
        assert index["objectives"]["mass_flow"]["summary_linear_r2"] == pytest.approx(1.0, abs=1e-12)
        _, pts = read_csv(os.path.join(quick_run.out_dir, "plots", "summary_mass_flow.csv"))
        coef = np.polyfit(pts[:, 0], pts[:, 1], 1)
        assert np.max(np.abs(np.polyval(coef, pts[:, 0]) - pts[:, 1])) <= 1e-10

    def test_validation_r2_matches_stored(self, quick_run):
        index = load(quick_run, "plots", "index.json")
        for entry in index["objectives"].values():
            assert entry["validation_r2"] == pytest.approx(entry["stored_validation_r2"], abs=1e-12)

    def test_other_files(self, quick_run):
        _, bands = read_csv(os.path.join(quick_run.out_dir, "plots", "bands.csv"))
        assert bands.shape == (128, 10)
        _, logistic = read_csv(os.path.join(quick_run.out_dir, "plots", "logistic.csv"))
        assert np.all(np.diff(logistic[:, 1]) <= 0)
        with open(os.path.join(quick_run.out_dir, "plots", "invariance.csv")) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["set", "loss", "mass_flow"]
        assert {r[0] for r in rows[1:]} == {"training", "ensemble"}

    def test_missing_artifacts_listed(self, tmp_path):
        run_pipeline(config(DUAL, quick=True), str(tmp_path), until="sample")
        with pytest.raises(MissingArtifactsError) as err:
            export_plotdata(str(tmp_path))
        assert set(err.value.missing) == {"envelope.csv", "decision_model.json"}

    def test_standalone_matches_stage(self, quick_run, tmp_path):
        work = tmp_path / "copy"
        shutil.copytree(quick_run.out_dir, work)
        shutil.rmtree(work / "plots")
        files = export_plotdata(str(work))
        for rel in files:
            assert sha256_file(work / rel) == sha256_file(os.path.join(quick_run.out_dir, rel))
