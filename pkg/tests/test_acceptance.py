"""Acceptance suite: one test per criterion, printing one PASS line each.

Criteria 5-7 write their metrics CSVs through module helpers so that
criterion 8 can re-run the identical pipeline (data generation included)
and compare output bytes.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from ecapnet import autodiff as ad
from ecapnet.autodiff import Tensor, grad_check
from ecapnet.graph import build_graph, permute_graph
from ecapnet.hemodynamics import (WssSeries, compute_indices, load_wss,
                                  save_wss)
from ecapnet.mesh import compute_attributes, load_off, save_off
from ecapnet.model import (EcapNet, FcnBaseline, ModelConfig, load_checkpoint,
                           save_checkpoint)
from ecapnet.spline import (BasisCache, SplineConvLayer, SplineKernelSpec,
                            basis, spline_conv)
from ecapnet.synth import ShapeParams, generate_mesh, make_sample, sample_params
from ecapnet.train import (TrainConfig, cross_validate, evaluate,
                           fold_assignment, prepare, train,
                           transfer_experiment, write_history_csv,
                           write_metrics_csv, write_summary_json)

from conftest import random_graph

SPEC = SplineKernelSpec()
SEED = 20260826

# desk-scale experiment configuration shared by criteria 5-8
CV_MODEL = ModelConfig(hidden_channels=6, n_hidden_layers=4,
                       dense_block_depth=4, dropout=0.0)
CV_TRAIN = TrainConfig(epochs=100, batch_size=8, lr=0.01,
                       weight_decay=0.0, dropout=0.0, seed=SEED, folds=10)
OVERFIT_TRAIN = TrainConfig(epochs=500, batch_size=16, lr=0.003,
                            weight_decay=0.0, dropout=0.0, seed=SEED)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _ok(n, detail):
    print(f"criterion {n}: PASS ({detail})")


# -- pipeline helpers (run twice by criterion 8) ---------------------------


def run_overfit(out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = prepare([make_sample(ShapeParams(seed=SEED % 1000))])
    model = EcapNet(CV_MODEL, seed=SEED)
    history = train(model, pairs, OVERFIT_TRAIN)
    report = evaluate(model, pairs)
    write_history_csv(history, out_dir / "history.csv")
    write_metrics_csv([report], out_dir / "metrics.csv")
    return {"final_train_mae": history[-1], "eval_mae": report.mae}


def _cv_samples():
    rng = np.random.default_rng(SEED)
    return prepare([make_sample(sample_params(rng)) for _ in range(80)])


def run_cv(out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    pairs = _cv_samples()
    targets = np.concatenate([t for _, t in pairs])
    theta = float(np.percentile(targets, 90))
    reports, aggregate = cross_validate(pairs, CV_TRAIN, CV_MODEL,
                                        theta=theta)
    # constant-mean-of-training-targets baseline over the same folds
    assignment = fold_assignment(len(pairs), CV_TRAIN.folds, CV_TRAIN.seed)
    base_abs = base_n = 0.0
    for f in range(CV_TRAIN.folds):
        tr = np.concatenate([pairs[i][1] for i in range(len(pairs))
                             if assignment[i] != f])
        te = np.concatenate([pairs[i][1] for i in range(len(pairs))
                             if assignment[i] == f])
        base_abs += np.abs(te - tr.mean()).sum()
        base_n += te.size
    write_metrics_csv(reports, out_dir / "metrics.csv")
    write_summary_json(aggregate, out_dir / "summary.json")
    return {"mae": aggregate.mae, "baseline_mae": base_abs / base_n,
            "tp": aggregate.tp, "theta": theta,
            "n_vertices": int(np.mean([t.size for _, t in pairs]))}


def run_transfer(out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED + 1)
    regime_a = [make_sample(sample_params(rng)) for _ in range(24)]
    # regime B: lobe-amplitude range scaled by 1.5x
    regime_b = [make_sample(sample_params(rng, amp_range=(4.8, 6.75)))
                for _ in range(8)]
    result = transfer_experiment(
        prepare(regime_a[:16]), prepare(regime_a[16:]), prepare(regime_b),
        CV_TRAIN, CV_MODEL)
    rows = [f"{k},{result[k]:.17g}"
            for k in ["mae_in", "mae_out", "ratio", "final_train_loss"]]
    (out_dir / "metrics.csv").write_text("metric,value\n"
                                         + "\n".join(rows) + "\n")
    return result


# -- criteria --------------------------------------------------------------


def test_criterion_1_spline_basis(rng):
    t0 = time.perf_counter()
    u = rng.uniform(0, 1, size=(1000, 3))
    idx, val = basis(u, SPEC)
    assert val.shape == (1000, 8)
    assert np.max(np.abs(val.sum(axis=1) - 1.0)) <= 1e-12
    assert np.all(np.count_nonzero(val, axis=1) <= 8)
    for corner, flat in [((0.0, 0.0, 0.0), 0),
                         ((1.0, 1.0, 1.0), SPEC.n_weights - 1)]:
        ci, cv = basis(np.array([corner]), SPEC)
        on = ci[0][cv[0] > 0]
        assert on.tolist() == [flat]
        assert cv[0].sum() == 1.0
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _ok(1, f"1000 pts, partition-of-unity <=1e-12, {elapsed:.3f}s")


def test_criterion_2_gradient_fidelity(rng):
    t0 = time.perf_counter()
    g = random_graph(rng, n_nodes=12, n_feat=3)
    layer = SplineConvLayer(3, 3, "l", SPEC, rng)
    cache = BasisCache(g.edges, g.pseudo_coords, g.n_nodes, SPEC)
    target = rng.normal(size=(12, 3))

    def layer_loss(_):
        out = spline_conv(Tensor(g.node_features), layer, cache)
        return ad.tmean(ad.tabs(ad.add(out, Tensor(-target))))

    worst = max(grad_check(layer_loss, p) for p in layer.parameters())
    assert worst < 1e-4

    net = EcapNet(ModelConfig(hidden_channels=3, n_hidden_layers=4,
                              dense_block_depth=2, dropout=0.0), seed=1)
    gnet = random_graph(rng, n_nodes=12, n_feat=4)
    tnet = rng.normal(size=(12, 1))

    def net_loss(_):
        return ad.l1_loss(net.forward(gnet, training=True), Tensor(tnet))

    worst_net = max(grad_check(net_loss, p) for p in net.parameters())
    assert worst_net < 1e-4
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    _ok(2, f"max rel err layer {worst:.2e}, net {worst_net:.2e}, "
           f"{elapsed:.1f}s")


def test_criterion_3_equivariance(rng):
    t0 = time.perf_counter()
    net = EcapNet(ModelConfig(hidden_channels=4, n_hidden_layers=4,
                              dense_block_depth=2), seed=2)
    worst = 0.0
    for _ in range(20):
        g = random_graph(rng, n_nodes=15, n_feat=4)
        perm = rng.permutation(g.n_nodes)
        out = net.forward(g).data
        out_p = net.forward(permute_graph(g, perm)).data
        worst = max(worst, float(np.abs(out_p[perm] - out).max()))
    assert worst <= 1e-9

    # the coordinate-MLP baseline is not permutation equivariant
    fcn = FcnBaseline(n_template=15, hidden_widths=(16,), seed=0)
    coords = rng.normal(size=(15, 3))
    perm = rng.permutation(15)
    out = fcn.predict(coords.ravel()).ravel()
    out_p = fcn.predict(coords[perm].ravel()).ravel()
    assert np.abs(out_p[perm] - out).max() > 1e-3
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    _ok(3, f"20 graphs, worst deviation {worst:.1e}, FCN fails as expected, "
           f"{elapsed:.1f}s")


def test_criterion_4_hemodynamics_oracle(rng):
    t0 = time.perf_counter()
    t = np.linspace(0.0, 1.0, 1000)
    const = WssSeries(times=t, samples=np.tile([1.0, 0.0, 0.0],
                                               (1000, 4, 1)))
    f = compute_indices(const)
    assert np.all(f.ecap == 0.0)

    alt = np.zeros((1000, 4, 3))
    alt[:, :, 0] = np.where(t < 0.5, 2.0, -2.0)[:, None]
    f = compute_indices(WssSeries(times=t, samples=alt))
    assert np.allclose(f.osi, 0.5, atol=1e-3)
    assert np.allclose(f.ecap, 0.25, atol=1e-3)

    rand = WssSeries(times=np.linspace(0, 1, 20),
                     samples=rng.normal(size=(20, 10**4, 3)))
    fr = compute_indices(rand)
    assert np.all((fr.osi >= 0.0) & (fr.osi <= 0.5))

    rev = WssSeries(times=rand.times[-1] - rand.times[::-1],
                    samples=rand.samples[::-1])
    fv = compute_indices(rev)
    assert np.allclose(fv.tawss, fr.tawss, atol=1e-12)
    assert np.allclose(fv.osi, fr.osi, atol=1e-12)
    assert np.allclose(fv.ecap, fr.ecap, atol=1e-12)

    fs = compute_indices(WssSeries(times=rand.times,
                                   samples=2.0 * rand.samples))
    ok = fr.tawss > 1e-3
    assert np.allclose(fs.tawss[ok], 2.0 * fr.tawss[ok], rtol=1e-12)
    assert np.allclose(fs.ecap[ok], fr.ecap[ok] / 2.0, rtol=1e-12)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    _ok(4, f"oracles, 1e4 random series, reversal+scaling laws, "
           f"{elapsed:.1f}s")


def test_criterion_5_overfit(workdir):
    t0 = time.perf_counter()
    result = run_overfit(workdir / "overfit_a")
    elapsed = time.perf_counter() - t0
    assert result["final_train_mae"] < 0.05
    assert elapsed < 600.0
    _ok(5, f"final training MAE {result['final_train_mae']:.4f} < 0.05, "
           f"{elapsed:.0f}s")


def test_criterion_6_cv_analog(workdir):
    t0 = time.perf_counter()
    result = run_cv(workdir / "cv_a")
    elapsed = time.perf_counter() - t0
    assert result["mae"] <= 0.5 * result["baseline_mae"]
    assert result["tp"] > 0  # beats the all-negative baseline's TPR of 0
    assert elapsed < 3600.0
    _ok(6, f"80 samples (~{result['n_vertices']} verts), MAE "
           f"{result['mae']:.4f} <= 0.5 x {result['baseline_mae']:.4f}, "
           f"TP {result['tp']} > 0, {elapsed/60:.1f} min")


def test_criterion_7_transfer_analog(workdir):
    t0 = time.perf_counter()
    result = run_transfer(workdir / "transfer_a")
    elapsed = time.perf_counter() - t0
    assert result["schema"] == "transfer-v1"
    for key in ["mae_in", "mae_out", "ratio", "final_train_loss",
                "report_in", "report_out"]:
        assert key in result
    assert np.isfinite(result["ratio"])
    _ok(7, f"in {result['mae_in']:.4f}, out {result['mae_out']:.4f}, "
           f"ratio {result['ratio']:.2f} (informational), {elapsed/60:.1f} "
           f"min")


def test_criterion_8_determinism(workdir):
    runs = [(run_overfit, "overfit"), (run_cv, "cv"), (run_transfer,
                                                       "transfer")]
    for fn, name in runs:
        fn(workdir / f"{name}_b")
        a = (workdir / f"{name}_a" / "metrics.csv").read_bytes()
        b = (workdir / f"{name}_b" / "metrics.csv").read_bytes()
        assert a == b, f"{name} metrics differ between reruns"
    _ok(8, "criteria 5-7 reruns byte-identical metrics CSVs")


def test_criterion_9_round_trips(rng, tmp_path):
    mesh = generate_mesh(ShapeParams(seed=5, subdivisions=2))
    save_off(mesh, tmp_path / "a.off")
    m1 = load_off(tmp_path / "a.off")
    save_off(m1, tmp_path / "b.off")
    m2 = load_off(tmp_path / "b.off")
    assert np.array_equal(m1.vertices, m2.vertices)
    assert np.array_equal(m1.faces, m2.faces)
    assert (tmp_path / "a.off").read_bytes() == \
        (tmp_path / "b.off").read_bytes()

    model = EcapNet(ModelConfig(hidden_channels=4, n_hidden_layers=2,
                                dense_block_depth=2), seed=3)
    save_checkpoint(model, tmp_path / "a.ckpt")
    save_checkpoint(load_checkpoint(tmp_path / "a.ckpt"),
                    tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == \
        (tmp_path / "b.ckpt").read_bytes()

    wss = WssSeries(times=np.sort(rng.uniform(0, 1, 9)),
                    samples=rng.normal(size=(9, 7, 3)))
    save_wss(wss, tmp_path / "w.bin")
    back = load_wss(tmp_path / "w.bin")
    assert np.array_equal(back.times, wss.times)
    assert np.array_equal(back.samples, wss.samples)
    _ok(9, "OFF idempotent, checkpoint byte-identical, wss-v1 exact")
