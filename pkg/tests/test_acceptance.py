"""Acceptance criteria 1-10.

Each test records exactly one ``criterion N: PASS|FAIL`` line (printed in the
pytest terminal summary).  Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import time

import numpy as np
import pytest
import yaml

from dynshape.baselines import BaselineConfig, binned_reconstruct, boxl2_reconstruct, static_tv_reconstruct
from dynshape.cli import compress_study, main
from dynshape.dss import ImageMap, ReconConfig, ShapeProblem, dss_reconstruct, project_l1_ball
from dynshape.levelset import epsilon_from_phi
from dynshape.metrics import dice, report
from dynshape.phantoms import NonRigidSpec, RigidBallSpec, add_awgn, disk, nonrigid_bell, rigid_balls
from dynshape.projector import AngleSchedule, DetectorArray, ImageGrid, forward_sequence, sequence_operator
from dynshape.transforms import DctDims, dct_analyze, dct_synthesize, make_mask

from oracles import central_differences, gradient_rel_error, l1_project_oracle

N_DESK = 64
SNR_DB = 40.0
# desk-scale DSS settings: wider initial Heaviside band, Box-l2 warm start
DSS_RIGID = ReconConfig(dct_fraction=0.2, kappa0=1.0, init="boxl2")
DSS_BELL = ReconConfig(dct_fraction=0.4, kappa0=1.0, init="boxl2")


def desk_sinogram(seq, seed=0):
    grid = ImageGrid(N_DESK, N_DESK)
    sino = forward_sequence(seq, AngleSchedule(0.0, 5.0, seq.shape[0]), grid=grid)
    return grid, add_awgn(sino, SNR_DB, seed)


def run_all(seq):
    grid, sino = desk_sinogram(seq)
    cfg = DSS_RIGID if seq is _RIGID else DSS_BELL
    out, timing = {}, {}
    for name in ("static", "css", "boxl2", "dss"):
        t0 = time.perf_counter()
        if name in ("static", "css"):
            res = binned_reconstruct(sino, name, grid, BaselineConfig(bin_size=36))
            rec, trace = res.sequence, None
        elif name == "boxl2":
            rec, trace = boxl2_reconstruct(sino, grid).sequence, None
        else:
            res = dss_reconstruct(sino, grid, cfg)
            rec, trace = res.sequence, res.trace
        timing[name] = time.perf_counter() - t0
        out[name] = (report(seq, rec), trace)
    return out, sum(timing.values())


_RIGID = rigid_balls(RigidBallSpec(n=N_DESK, T=64))
_BELL = nonrigid_bell(NonRigidSpec(n=N_DESK, T=90))


@pytest.fixture(scope="module")
def rigid_runs():
    return run_all(_RIGID)


@pytest.fixture(scope="module")
def bell_runs():
    return run_all(_BELL)


def summary(runs):
    return ", ".join(f"{k} dice={r.mean_dice:.4f} psnr={r.mean_psnr:.2f}" for k, (r, _) in runs.items())


# ----------------------------------------------------------------------------

def test_criterion_01_adjoint_exactness(verdict):
    t0 = time.perf_counter()
    grid = ImageGrid(32, 32)
    angles = np.arange(0.0, 180.0, 5.0)
    op = sequence_operator(grid, DetectorArray(32), angles, frames=np.zeros(angles.size, int), n_frames=1)
    rng = np.random.default_rng(100)
    worst = 0.0
    for _ in range(100):
        x = rng.random(op.volume_shape)
        y = rng.random(op.data_shape)
        lhs = float(np.sum(op.forward(x) * y))
        rhs = float(np.sum(x * op.adjoint(y)))
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    elapsed = time.perf_counter() - t0
    verdict(1, worst <= 1e-10 and elapsed < 10, f"max relative mismatch {worst:.2e} (<= 1e-10), {elapsed:.1f} s (< 10 s)")


def _fd_error(problem, alpha, kappa=0.5):
    eps = epsilon_from_phi(problem.phi(alpha), kappa)
    fd = central_differences(lambda a: problem.objective(a, eps), alpha)
    return gradient_rel_error(problem.gradient(alpha, eps), fd)


def test_criterion_02_gradient_fidelity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(200)
    # plain DSS on 16x16x4 with noisy single-shot data
    grid = ImageGrid(16, 16)
    seq = rigid_balls(RigidBallSpec(n=16, T=4, seed=2))
    sino = forward_sequence(seq, AngleSchedule(0, 5, 4), grid=grid)
    op = sequence_operator(grid, sino.detector, sino.angles())
    mask = make_mask(DctDims(op.volume_shape), 0.5)
    data = sino.data + 0.1 * rng.standard_normal(sino.data.shape)
    tau = 25.0
    alpha = project_l1_ball(rng.standard_normal(mask.size) + 3 * np.eye(mask.size)[0], tau)
    errs = {"dss": _fd_error(ShapeProblem(op, data, mask), alpha)}
    # multilevel and perimeter variants on 8x8x2
    grid8 = ImageGrid(8, 8)
    op8 = sequence_operator(grid8, DetectorArray(8), [0.0, 5.0])
    mask8 = make_mask(DctDims(op8.volume_shape), 0.5)
    data8 = 2 * rng.random(op8.data_shape)
    a8 = project_l1_ball(rng.standard_normal(mask8.size) + np.eye(mask8.size)[0], 10.0)
    errs["multilevel"] = _fd_error(ShapeProblem(op8, data8, mask8, image_map=ImageMap([0.3, 0.8, 1.4])), a8)
    errs["perimeter"] = _fd_error(ShapeProblem(op8, data8, mask8, perimeter_lambda=0.2), a8)
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) <= 1e-4 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    verdict(2, ok, f"max per-component relative error: {detail} (<= 1e-4), {elapsed:.1f} s (< 60 s)")


def test_criterion_03_l1_projection(verdict):
    rng = np.random.default_rng(300)
    worst = 0.0
    feasible = idempotent = nonexpansive = True
    for _ in range(1000):
        n = int(rng.integers(2, 101))
        v, w = rng.standard_normal((2, n)) * rng.uniform(0.1, 10)
        tau = float(rng.uniform(0.05, 1.5) * np.abs(v).sum())
        pv, pw = project_l1_ball(v, tau), project_l1_ball(w, tau)
        worst = max(worst, float(np.max(np.abs(pv - l1_project_oracle(v, tau)))))
        feasible &= np.abs(pv).sum() <= tau * (1 + 1e-12)
        idempotent &= np.array_equal(project_l1_ball(pv, tau), pv)
        nonexpansive &= np.linalg.norm(pv - pw) <= np.linalg.norm(v - w) * (1 + 1e-12)
    ok = worst <= 1e-10 and feasible and idempotent and nonexpansive
    verdict(3, ok, f"oracle max error {worst:.1e} (<= 1e-10), feasible={feasible}, "
                   f"idempotent={idempotent}, non-expansive={nonexpansive}")


def test_criterion_04_dct_contracts(verdict):
    rng = np.random.default_rng(400)
    rt = pars = 0.0
    for shape in [(4, 8, 8), (5, 7, 3), (16, 16, 16), (1, 9, 6)]:
        x = rng.standard_normal(shape)
        c = dct_analyze(x)
        rt = max(rt, float(np.max(np.abs(dct_synthesize(c) - x))))
        pars = max(pars, abs(float(np.sum(c * c)) - float(np.sum(x * x))) / float(np.sum(x * x)))
    c = dct_analyze(np.full((6, 10, 8), 0.7))
    dc_ok = abs(c[0, 0, 0] - 0.7 * np.sqrt(480)) <= 1e-10 and np.max(np.abs(c.ravel()[1:])) <= 1e-10
    ok = rt <= 1e-10 and pars <= 1e-10 and dc_ok
    verdict(4, ok, f"round trip {rt:.1e}, Parseval {pars:.1e} (<= 1e-10), constant volume single DC={dc_ok}")


@pytest.mark.slow
def test_criterion_05_descent_property(verdict, rigid_runs, bell_runs):
    violations = checked = 0
    for runs in (rigid_runs[0], bell_runs[0]):
        trace = runs["dss"][1]
        for a, b in zip(trace, trace[1:]):
            if a.outer == b.outer:
                checked += 1
                violations += b.J > a.J
    verdict(5, violations == 0 and checked > 0,
            f"{violations} increases of J over {checked} consecutive accepted steps in two desk-scale runs")


FRACTIONS = [0.01, 0.02, 0.05, 0.1, 0.2]


def test_criterion_06_compression_ordering(verdict):
    t0 = time.perf_counter()
    text = compress_study(_RIGID, FRACTIONS, 0.1, seed=0)
    rows = {}
    for line in text.splitlines()[1:]:
        f, ph, mode, mse, s = line.split(",")
        rows[(float(f), ph, mode)] = (float(mse), float(s))
    failures = []
    for f in FRACTIONS:
        ls, di = rows[(f, "smooth", "levelset")], rows[(f, "smooth", "direct")]
        if not ls[0] <= di[0]:
            failures.append(f"f={f}: levelset MSE {ls[0]:.4f} > direct {di[0]:.4f}")
        if not ls[1] >= di[1]:
            failures.append(f"f={f}: levelset SSIM {ls[1]:.4f} < direct {di[1]:.4f}")
        if f <= 0.05:
            for mode in ("levelset", "direct"):
                sm, pm = rows[(f, "smooth", mode)], rows[(f, "permuted", mode)]
                if not (pm[0] > sm[0] and pm[1] < sm[1]):
                    failures.append(f"f={f} {mode}: permuted (mse {pm[0]:.4f}, ssim {pm[1]:.4f}) not strictly "
                                    f"worse than smooth (mse {sm[0]:.4f}, ssim {sm[1]:.4f})")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 300
    detail = "all orderings hold" if not failures else "; ".join(failures)
    verdict(6, ok, f"{detail}; {elapsed:.1f} s (< 300 s)")


@pytest.mark.slow
def test_criterion_07_rigid_ordering(verdict, rigid_runs):
    runs, elapsed = rigid_runs
    d = {k: r.mean_dice for k, (r, _) in runs.items()}
    p = {k: r.mean_psnr for k, (r, _) in runs.items()}
    ok = (d["dss"] - d["boxl2"] >= 0.01 and d["boxl2"] - d["static"] >= 0.01
          and all(p["dss"] > p[k] for k in ("static", "css", "boxl2")) and elapsed < 900)
    verdict(7, ok, f"{summary(runs)}; {elapsed:.0f} s (< 900 s)")


@pytest.mark.slow
def test_criterion_08_nonrigid_ordering(verdict, bell_runs):
    runs, elapsed = bell_runs
    d = {k: r.mean_dice for k, (r, _) in runs.items()}
    ok = all(d["dss"] > d[k] for k in ("static", "css", "boxl2")) and elapsed < 900
    verdict(8, ok, f"{summary(runs)}; {elapsed:.0f} s (< 900 s)")


def test_criterion_09_static_sanity(verdict):
    t0 = time.perf_counter()
    grid = ImageGrid(N_DESK, N_DESK)
    truth = disk(N_DESK, N_DESK / 4)
    sino = forward_sequence(np.repeat(truth[None], 36, axis=0), AngleSchedule(0, 5, 36), grid=grid)
    scores = {
        "static": dice(truth, static_tv_reconstruct(sino, grid) > 0.5),
        "css": dice(truth, binned_reconstruct(sino, "css", grid).sequence[0]),
        "dss": dice(truth, dss_reconstruct(sino, grid, ReconConfig(dct_fraction=0.2),
                                           frames=np.zeros(36, int)).sequence[0]),
    }
    elapsed = time.perf_counter() - t0
    ok = min(scores.values()) >= 0.98 and elapsed < 300
    verdict(9, ok, ", ".join(f"{k} dice={v:.4f}" for k, v in scores.items()) + f" (>= 0.98); {elapsed:.1f} s")


PIPELINES = {
    "dss": {"M": 2, "N": 4, "dct_fraction": 0.5},
    "dss-atten": {"M": 2, "N": 3, "dct_fraction": 0.5, "kappa0": 0.5},
    "dss-multilevel": {"M": 2, "N": 3, "dct_fraction": 0.5, "kappa0": 0.5, "gray_levels": [0.6, 1.0]},
    "dss-perim": {"M": 2, "N": 3, "dct_fraction": 0.5, "perimeter_lambda": 0.05},
    "static": {"bin_size": 4, "max_iters": 50},
    "css": {"bin_size": 4, "M": 2, "N": 3},
    "boxl2": {"max_iters": 50},
}


def _snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_criterion_10_determinism(verdict, tmp_path):
    differing = []
    for method, params in PIPELINES.items():
        cfg = {"seed": 11, "phantom": {"kind": "nonrigid", "n": 24, "T": 12}, "noise": {"snr_db": 30.0},
               "method": method, "method-params": params, "study": {"fractions": [0.1, 1.0]},
               "export": {"format": "png", "stride": 2}}
        path = tmp_path / f"{method}.yaml"
        path.write_text(yaml.safe_dump(cfg))
        snaps = []
        for rep in ("a", "b"):
            out = tmp_path / method / rep
            for cmd in ("phantom", "simulate", "reconstruct", "metrics", "compress-study", "export"):
                assert main([cmd, str(path), "--out", str(out)]) == 0, (method, cmd)
            snaps.append(_snapshot(out))
        if snaps[0] != snaps[1]:
            differing.append(method)
    n_files = len(snaps[0])
    ok = not differing
    verdict(10, ok, f"{len(PIPELINES)} pipelines x 6 commands, {n_files} files each; "
                    + ("byte-identical re-runs" if ok else f"differences in {differing}"))
