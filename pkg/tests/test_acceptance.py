"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import time

import numpy as np
import pytest
from scipy.stats import spearmanr

import conftest
from camsel import verify
from camsel.cli import main
from camsel.geometry import project_points, triangulate_points
from camsel.sim import ScenarioConfig, energy_summary, run_episodes
from camsel.sim.scene import TEMPLATE

MEASURED_SAVING_RANGE = (0.1772, 0.3121)  # lowest and highest hardware savings on record
SUITE_BUDGET_S = 300.0


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


def test_criterion_01_triangulation_oracle(report):
    t0 = time.perf_counter()
    res = verify.triangulation_suite(configs=1000, tol_mm=1e-6)
    dt = time.perf_counter() - t0
    assert report(1, res.passed and dt < 10.0, f"{res.checked} configs, {res.detail}, {dt:.2f} s")


def test_criterion_02_weighting_helps(report):
    rng = np.random.default_rng(2024)
    weighted, plain = [], []
    for _ in range(500):
        H = int(rng.integers(3, 7))
        Ps = np.stack([c.P for c in verify.random_rig(rng, H)])
        X = TEMPLATE + np.r_[rng.uniform(-1000, 1000, 2), 0.0]
        sigma = rng.choice([1.0, 8.0], size=H)
        sigma[:2] = (1.0, 8.0)
        uv = np.stack([project_points(P, X)[0] for P in Ps])
        uv += rng.normal(size=uv.shape) * sigma[:, None, None]
        conf = np.repeat((1.0 / (1.0 + sigma))[:, None], len(X), axis=1)
        Yw, _ = triangulate_points(Ps, uv, conf)
        Yu, _ = triangulate_points(Ps, uv, np.ones_like(conf))
        weighted.append(np.linalg.norm(Yw - X, axis=1).mean())
        plain.append(np.linalg.norm(Yu - X, axis=1).mean())
    w, u = float(np.mean(weighted)), float(np.mean(plain))
    assert report(2, w <= u, f"weighted {w:.3f} mm vs unweighted {u:.3f} mm over 500 trials")


def test_criterion_03_scheduler_exactness(report):
    res = verify.scheduler_suite(instances=10_000, max_cameras=8)
    assert report(3, res.passed, f"{res.checked} instances, {res.detail}")


def test_criterion_04_long_term_budget(report):
    ok, parts = True, []
    for E in (0.6, 0.8):
        cfg = ScenarioConfig(slots=20_000).with_updates(**{"policy.E": (E,)})
        traces = run_episodes("E3POSE", cfg, range(10), keep_details=False)
        freq = max(t.selection_frequency().max() for t in traces)
        qmax = np.max([t.queue.max(axis=1) for t in traces], axis=0)[-5000:]
        windows = qmax.reshape(5, 1000).max(axis=1)
        drift = np.polyfit(np.arange(5000), qmax, 1)[0] * 5000
        bounded = not np.all(np.diff(windows) > 0) and drift < 10.0
        ok &= freq <= E + 0.02 and bounded
        parts.append(f"E={E}: max freq {freq:.4f}, last-5000 queue max {qmax.max():.2f}, drift {drift:+.3f}")
    assert report(4, ok, "; ".join(parts))


def fleet_power(trace):
    """Mean per-camera power after warm-up, where every policy is exactly-C."""
    return float(trace.energy_j[trace.warmup:].mean()) / trace.slot_duration


def test_criterion_05_energy_arithmetic(report):
    cfg = ScenarioConfig(slots=300)
    sa = energy_summary(run_episodes("SA", cfg, [0], keep_details=False)[0]).fleet_mean_power_w
    exact, savings = True, []
    for ratio in (0.45, 0.5, 0.55, 0.6):
        for C in (2, 3):
            c = cfg.with_updates(**{"energy.psm_w": 10.0 * ratio, "policy.C": C})
            for policy in ("E3POSE", "RS"):
                p = fleet_power(run_episodes(policy, c, [0], keep_details=False)[0])
                expected = (C * 10.0 + (5 - C) * 10.0 * ratio) / 5
                exact &= abs(p - expected) <= 1e-12 * expected
                savings.append(1.0 - p / sa)
    default = energy_summary(run_episodes("RS", cfg, [0], keep_details=False)[0]).fleet_mean_power_w
    lo, hi = min(savings), max(savings)
    ok = exact and abs(1.0 - default / sa - 0.20) < 1e-12
    ok &= lo <= MEASURED_SAVING_RANGE[0] and hi >= MEASURED_SAVING_RANGE[1]
    assert report(5, ok, f"exact={exact}, default saving {1 - default / sa:.4f}, "
                         f"sweep saving {100 * lo:.2f}-{100 * hi:.2f}% vs measured 17.72-31.21%")


def test_criterion_06_accuracy_ordering(report):
    cfg = ScenarioConfig(slots=600)
    res = {}
    for policy in ("E3POSE", "E3POSE_MV", "RS", "ID"):
        c = cfg.with_updates(**{"policy.theta_id": 0.05}) if policy == "ID" else cfg
        sums = [t.summary() for t in run_episodes(policy, c, range(10), keep_details=False)]
        res[policy] = (np.mean([s["mpjpe_mm"] for s in sums]), np.mean([s["failure_rate"] for s in sums]))
    e = res["E3POSE"][0]
    ok = e < res["E3POSE_MV"][0] and e < res["RS"][0] and e < res["ID"][0]
    ok &= res["E3POSE"][1] == 0.0 and res["ID"][1] > 0.0
    detail = ", ".join(f"{k} {m:.2f} mm/fail {f:.3f}" for k, (m, f) in res.items())
    assert report(6, ok, detail)


def occlusion_error(policy, cfg):
    traces = run_episodes(policy, cfg, range(10), keep_details=False)
    return float(np.mean([np.nanmean(np.abs(t.predicted_iou - t.true_iou)[t.warmup:]) for t in traces]))


def test_criterion_07_predictor_trend(report):
    base = ScenarioConfig(slots=600).with_updates(**{"motion.turn_rate": 4.0})
    mv = [occlusion_error("E3POSE_MV", base.with_updates(tau=k)) for k in range(1, 6)]
    ar = occlusion_error("E3POSE", base.with_updates(tau=5))
    ok = bool(np.all(np.diff(mv) >= 0)) and ar <= mv[-1]
    assert report(7, ok, f"MV error by tau {np.round(mv, 4).tolist()}, AR at tau=5 {ar:.4f}")


def test_criterion_08_iou_error_coupling(report):
    cfg = ScenarioConfig(slots=1500)
    rhos = {}
    for policy in ("RS", "SA", "E3POSE"):
        rhos[policy] = []
        for t in run_episodes(policy, cfg, range(5), keep_details=False):
            x, y = t.selected_true_iou()[t.warmup:], t.mpjpe_mm[t.warmup:]
            m = np.isfinite(x) & np.isfinite(y)
            rhos[policy].append(spearmanr(x[m], y[m]).statistic)
    worst = min(min(v) for v in rhos.values())
    detail = ", ".join(f"{k} rho {min(v):.2f}-{max(v):.2f}" for k, v in rhos.items())
    assert report(8, worst >= 0.5, detail)


def test_criterion_09_budget_tradeoff(report):
    cfg = ScenarioConfig(slots=600)
    stds, ious = [], []
    for E in (0.6, 0.7, 0.8, 0.9, 1.0):
        traces = run_episodes("E3POSE", cfg.with_updates(**{"policy.E": (E,)}), range(10), keep_details=False)
        stds.append(np.mean([t.selection[t.warmup:].mean(axis=0).std() for t in traces]))
        ious.append(np.mean([t.summary()["selected_iou"] for t in traces]))
    ok = bool(np.all(np.diff(stds) >= 0) and np.all(np.diff(ious) <= 0))
    assert report(9, ok, f"freq std {np.round(stds, 4).tolist()}, selected IoU {np.round(ious, 5).tolist()}")


@pytest.mark.run_last
def test_criterion_10_determinism_and_runtime(report, tmp_path):
    names = ("e3pose_seed11_cameras.csv", "e3pose_seed11_slots.csv")
    for k in range(2):
        assert main(["simulate", "--policy", "E3POSE", "--seed", "11", "--slots", "120",
                     "--out", str(tmp_path / str(k))]) == 0
    same = all((tmp_path / "0" / n).read_bytes() == (tmp_path / "1" / n).read_bytes() for n in names)
    elapsed = time.perf_counter() - conftest.SESSION_START
    ok = same and elapsed < SUITE_BUDGET_S
    assert report(10, ok, f"byte-identical={same}, suite runtime {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)")
