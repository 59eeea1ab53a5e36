"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import json
import os
import shutil
import time

import numpy as np
import pytest
from scipy import stats

from bladeenv.config import PipelineConfig
from bladeenv.linalg import intersect_inactive
from bladeenv.covariance import scalar_covariance, uniform_samples, vector_covariance
from bladeenv.envelope import EnvelopeBand
from bladeenv.mesh import export_mesh, is_watertight, read_obj
from bladeenv.oracle import isentropic_mach, nominal_profile
from bladeenv.pipeline import Pipeline, run_pipeline
from bladeenv.sampling import ActiveCoordinateSpec, hit_and_run
from bladeenv.surrogates import PolynomialSurrogate

from conftest import TUNING, config
from quadrature import covariance_by_quadrature

RESULTS = {}


def record(number, title, ok, detail):
    RESULTS[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    assert ok, RESULTS[number]


def load(run, name):
    with open(os.path.join(run.out_dir, name)) as fh:
        return json.load(fh)


def test_criterion_01_intersection_dimension(tmp_path):
    cfg = PipelineConfig.from_dict({"version": 1, "objectives": [{"label": "loss", "degree": 1},
                                                                 {"label": "mass_flow", "degree": 1}]})
    t0 = time.perf_counter()
    res = Pipeline(cfg, str(tmp_path)).run("intersect")
    elapsed = time.perf_counter() - t0
    inter = json.loads((tmp_path / "intersection.json").read_text())
    spec = ActiveCoordinateSpec.from_dict(inter["spec"])
    V = spec.inactive.columns
    worst = max(float(np.max(np.abs(b.basis.columns.T @ V))) for b in spec.blocks)
    dim = res.manifest["stages"]["intersect"]["summary"]["dim"]
    ok = dim == 18 and worst <= 1e-10 and elapsed < 1.0
    record(1, "intersection dimension", ok, f"dim {dim}, max |W^T V| {worst:.1e}, {elapsed:.2f} s")


def test_criterion_02_dual_invariance(tuning_run, oracle20):
    # the dual loss/mass-flow slice of the tuning run, sampled afresh
    spec = ActiveCoordinateSpec.from_dict(load(tuning_run, "intersection.json")["spec"])
    blocks = [b for b in spec.blocks if b.label in ("loss", "mass_flow")]
    V = intersect_inactive([b.basis for b in blocks])
    dual = ActiveCoordinateSpec(tuple(blocks), V)
    t0 = time.perf_counter()
    ens = hit_and_run(dual, 500, seed=11)
    out = oracle20.evaluate_batch(ens.designs)
    rand = oracle20.evaluate_batch(uniform_samples(20, 500, 12))
    elapsed = time.perf_counter() - t0
    mf, loss = np.ptp(out["mass_flow"]), np.ptp(out["loss"])
    mf_r, loss_r = np.ptp(rand["mass_flow"]), np.ptp(rand["loss"])
    ok = (mf <= 1e-8 and loss <= 1e-2 * loss_r and mf_r >= 10 * mf and loss_r >= 10 * loss and elapsed < 10.0)
    record(2, "dual invariance", ok,
           f"mass-flow spread {mf:.1e} vs {mf_r:.2f}, loss spread {loss:.1e} vs {loss_r:.2f}, {elapsed:.2f} s")


def test_criterion_03_weighted_sum_identity(oracle20):
    X = uniform_samples(20, 800, 21)
    nodes = range(22, 32)
    model = PolynomialSurrogate(degree=2).fit(X, oracle20.evaluate_batch(X)["mach"][:, list(nodes)])
    parts = model.split_outputs()
    S = uniform_samples(20, 2000, 22)
    t0 = time.perf_counter()
    Cs = [scalar_covariance(p, samples=S).matrix for p in parts]
    rng = np.random.default_rng(23)
    worst = 0.0
    for _ in range(20):
        w = rng.uniform(0, 1, len(parts))
        H = vector_covariance(model, w, samples=S).matrix
        worst = max(worst, float(np.linalg.norm(H - sum(wi * C for wi, C in zip(w, Cs)))))
    elapsed = time.perf_counter() - t0
    record(3, "weighted-sum identity", worst <= 1e-10 and elapsed < 5.0, f"max Frobenius error {worst:.1e}, {elapsed:.2f} s")


def test_criterion_04_covariance_against_quadrature():
    within = total = 0
    for seed in range(50):
        d = 1 + seed % 4
        rng = np.random.default_rng(seed)
        X = rng.uniform(-1, 1, (60, d))
        A = rng.standard_normal((d, d))
        A = A + A.T
        b = rng.standard_normal(d)
        y = 0.5 * np.einsum("ni,ij,nj->n", X, A, X) + X @ b
        model = PolynomialSurrogate(degree=2).fit(X, y)
        exact = covariance_by_quadrature(model.gradient, d)
        n = 100 * d
        C = scalar_covariance(model, n, seed=seed)
        G = model.gradient(uniform_samples(d, n, seed))
        prods = G[:, :, None] * G[:, None, :]
        se = prods.std(axis=0, ddof=1) / np.sqrt(n)
        hit = np.abs(C.matrix - exact) <= 3 * se + 1e-12
        within += int(hit.sum())
        total += hit.size
    frac = within / total
    record(4, "scalar covariance vs quadrature", frac >= 0.95, f"{frac:.1%} of {total} entries within 3 SE")


def test_criterion_05_conditional_tuning(tuning_run):
    sweep = load(tuning_run, "sweep.json")
    vals = [r["node_mean_mach"] for r in sweep["results"]]
    steps = np.diff(vals)
    monotone = bool(np.all(steps > 0) or np.all(steps < 0))
    ok = (len(vals) == 5 and monotone and sweep["mass_flow_spread"] <= 1e-8
          and sweep["loss_spread"] <= 1e-2 * sweep["random_loss_spread"])
    record(5, "conditional tuning", ok,
           f"peak-node Mach {vals[0]:.4f} -> {vals[-1]:.4f}, loss spread {sweep['loss_spread']:.1e}, "
           f"mass-flow spread {sweep['mass_flow_spread']:.1e}")


def test_criterion_06_sampler_correctness(tuning_run):
    spec = ActiveCoordinateSpec.from_dict(load(tuning_run, "intersection.json")["spec"])
    X = np.loadtxt(os.path.join(tuning_run.out_dir, "ensemble.csv"), delimiter=",")
    box = float(np.max(np.abs(X)))
    res = float(np.max(spec.residuals(X)))
    sq = hit_and_run(ActiveCoordinateSpec.from_blocks([], d=2), 5000, seed=0)
    p = min(stats.kstest(sq.designs[:, j], stats.uniform(-1, 2).cdf).pvalue for j in range(2))
    ok = box <= 1.0 and res <= 1e-9 and p > 0.01
    record(6, "sampler correctness", ok, f"{len(X)} samples, max |x| {box:.6f}, max residual {res:.1e}, KS p {p:.3f}")


def test_criterion_07_classifier_concordance(tuning_run, tmp_path):
    work = tmp_path / "copy"
    shutil.copytree(tuning_run.out_dir, work)
    t0 = time.perf_counter()
    rec = Pipeline(config(TUNING), str(work)).execute("classify")
    elapsed = time.perf_counter() - t0
    s = rec["summary"]
    ok = s["concordance"] >= 0.90 and s["n_test"] == 500 and s["test_space"]["d"] == 30 and elapsed < 30.0
    record(7, "classifier concordance", ok,
           f"{s['concordance']:.1%} of {s['n_test']} designs from the d={s['test_space']['d']} "
           f"{s['test_space']['family']} space, {elapsed:.2f} s")


def test_criterion_08_isentropic_mach():
    zero = all(isentropic_mach(1.0, g) == 0.0 for g in (1.1, 1.3, 1.4, 5 / 3))
    g = 1.4
    sonic = abs(isentropic_mach(((g + 1) / 2) ** (g / (g - 1)), g) - 1.0)
    p = np.sort(1.0 + np.random.default_rng(8).exponential(2.0, 1000))
    p = np.unique(p)
    monotone = bool(np.all(np.diff(isentropic_mach(p, g)) > 0))
    ok = zero and sonic <= 1e-9 and monotone and p.size == 1000
    record(8, "isentropic Mach formula", ok, f"M(1)=0 {zero}, sonic error {sonic:.1e}, monotone over {p.size} ratios {monotone}")


def test_criterion_09_determinism(tuning_run, tmp_path):
    again = run_pipeline(config(TUNING), str(tmp_path / "again"))
    same = again.manifest_hash == tuning_run.manifest_hash
    record(9, "determinism", same, f"manifest sha256 {tuning_run.manifest_hash[:12]} vs {again.manifest_hash[:12]}")


def test_criterion_10_mesh_export(tuning_run, tmp_path):
    c = 2e-3
    P = nominal_profile()
    with pytest.warns(RuntimeWarning):
        export_mesh(EnvelopeBand(P, np.full(P.n_nodes, -c), np.full(P.n_nodes, c)), tmp_path / "c.obj", contour_levels=())
    objs = read_obj(tmp_path / "c.obj")
    n = P.normals()
    err = 0.0
    for name, sign in (("outer", 1.0), ("inner", -1.0)):
        V = objs[name].vertices
        for ring in (V[: P.n_nodes], V[P.n_nodes:]):
            offset = ring[:, :2] - P.nodes
            err = max(err, float(np.max(np.abs(offset - sign * c * n))))
    run_mesh = read_obj(os.path.join(tuning_run.out_dir, "mesh.obj"))
    tight = all(is_watertight(o.faces) for o in list(objs.values()) + list(run_mesh.values()) if o.faces is not None)
    ok = tight and err <= 1e-9
    record(10, "mesh export", ok, f"watertight {tight}, max offset error {err:.1e}")
