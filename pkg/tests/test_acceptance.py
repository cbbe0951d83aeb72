"""Exit criteria, each checked at its stated tolerance; one PASS/FAIL line per criterion."""
import itertools
import time

import numpy as np
import pytest

from convbeam.beamform_mvdr import mvdr_filter, reference_vector
from convbeam.cli import main
from convbeam.pipeline import PipelineConfig, evaluate_scene, separate_scene
from convbeam.simulator import make_scene
from convbeam.stft import StftConfig, istft, stft
from convbeam.wpd import equivalence_check, wpd_filter_new
from convbeam.wpe import WpeConfig, wpe_filter

from conftest import crandn, random_pd, record_criterion
from test_wpe import lstsq_oracle

pytestmark = pytest.mark.acceptance

SUITE_SIZE = 20
SUITE_SEED = 1000


def suite_scene(i: int, n_channels: int):
    rt60 = 0.2 + 0.4 * i / (SUITE_SIZE - 1)
    return make_scene(n_sources=2, n_channels=n_channels, rt60=rt60, snr_db=20.0, seed=SUITE_SEED + i, duration=4.0)


def run_suite(n_channels: int, architectures):
    out = {a: {"improvement": [], "si_sdr": []} for a in architectures}
    for i in range(SUITE_SIZE):
        scene = suite_scene(i, n_channels)
        for arch in architectures:
            rep = evaluate_scene(scene, separate_scene(scene, PipelineConfig(architecture=arch)))
            out[arch]["improvement"].append(rep.si_sdr_improvement)
            out[arch]["si_sdr"].append(rep.si_sdr)
    return {a: {k: np.array(v) for k, v in d.items()} for a, d in out.items()}


@pytest.fixture(scope="module")
def suite_c2():
    start = time.perf_counter()
    res = run_suite(2, ("wpe_mvdr", "wpd"))
    return res, time.perf_counter() - start


def test_criterion_1_wpd_equivalence():
    start = time.perf_counter()
    worst = max(equivalence_check(C, K, trials=100, seed=17 * C + K) for C, K in itertools.product((1, 2, 4), (0, 1, 3, 5)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 10.0
    record_criterion(1, "WPD reformulation equivalence", ok, f"max rel err {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_2_mvdr_distortionless():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        C = int(rng.integers(1, 7))
        v = crandn(rng, C)
        sigma = rng.uniform(0.1, 10.0)
        g = mvdr_filter((sigma * np.outer(v, v.conj()))[None], random_pd(rng, C)[None], reference_vector(C, 0))
        worst = max(worst, abs(np.vdot(g[0], v) - v[0]))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 1.0
    record_criterion(2, "MVDR distortionless identity", ok, f"max |g^H v - v_ref| {worst:.2e}, {elapsed:.3f} s")
    assert ok


def test_criterion_3_wpd_k0_is_psd_mvdr_filter():
    rng = np.random.default_rng(3)
    worst = 0.0
    for C in (1, 2, 4, 6):
        R = np.stack([random_pd(rng, C) for _ in range(5)])
        A = crandn(rng, 5, C, C)
        phi = A @ A.conj().transpose(0, 2, 1)
        u = reference_vector(C, 0)
        diff = wpd_filter_new(R, phi, u) - mvdr_filter(phi, R, u)
        worst = max(worst, float(np.max(np.abs(diff))))
    ok = worst <= 1e-12
    record_criterion(3, "WPD K=0 equals PSD-based MVDR filter", ok, f"max abs diff {worst:.2e}")
    assert ok


def test_criterion_4_wpe_least_squares():
    rng = np.random.default_rng(4)
    worst = 0.0
    for T, C, K in itertools.product((6, 7, 8), (1, 2), (1, 2)):
        for D in (1, 2):
            if T <= D + K:
                continue
            X = crandn(rng, T, 3, C)
            lam = rng.uniform(0.3, 3.0, size=(T, 3))
            G = wpe_filter(X, lam, WpeConfig(delay=D, taps=K, loading=0))
            oracle = lstsq_oracle(X, lam, D, K)
            worst = max(worst, float(np.max(np.abs(G - oracle)) / max(1.0, np.max(np.abs(oracle)))))
    ok = worst <= 1e-8
    record_criterion(4, "WPE matches least-squares oracle", ok, f"max err {worst:.2e}")
    assert ok


def test_criterion_5_stft_round_trip():
    rng = np.random.default_rng(5)
    cfg = StftConfig()
    worst = 0.0
    for _ in range(100):
        x = rng.uniform(-1, 1, size=(1, 16000))
        y = istft(stft(x, cfg), cfg, 16000)
        sl = slice(cfg.win_len, 16000 - cfg.win_len)
        worst = max(worst, float(np.max(np.abs(y[:, sl] - x[:, sl]))))
    ok = worst <= 1e-6
    record_criterion(5, "STFT interior round trip", ok, f"max abs err {worst:.2e}")
    assert ok


def test_criterion_6_simulator_benchmark(suite_c2):
    res, elapsed = suite_c2
    wpd = res["wpd"]["improvement"].mean(axis=0)
    arch1 = res["wpe_mvdr"]["improvement"].mean(axis=0)
    ok = bool(np.all(wpd >= 5.0) and np.all(arch1 >= 5.0) and wpd.mean() >= arch1.mean() - 0.5 and elapsed < 120.0)
    detail = (
        f"arch2 per-speaker {np.round(wpd, 2).tolist()} dB, arch1 per-speaker {np.round(arch1, 2).tolist()} dB, "
        f"{elapsed:.1f} s"
    )
    record_criterion(6, "20-scene oracle-mask benchmark", ok, detail)
    assert ok


def test_criterion_7_more_microphones(suite_c2):
    res, _ = suite_c2
    c2 = res["wpd"]["si_sdr"].mean()
    c4 = run_suite(4, ("wpd",))["wpd"]["si_sdr"].mean()
    ok = c4 >= c2
    record_criterion(7, "arch2 with C=4 at least C=2", ok, f"C=2 {c2:.2f} dB, C=4 {c4:.2f} dB")
    assert ok


def test_criterion_8_determinism(tmp_path):
    scene = tmp_path / "scene"
    assert main(["simulate", "--out", str(scene), "--seed", "77", "--duration", "2.0", "--rt60", "0.4"]) == 0
    outputs = {}
    for arch in ("arch1", "arch2"):
        for run, threads in (("a", "1"), ("b", "1"), ("c", "4")):
            out = tmp_path / f"{arch}_{run}"
            assert main(["separate", "--scene", str(scene), "--arch", arch, "--threads", threads, "--out", str(out)]) == 0
            outputs[arch, run] = [(out / f"source_{j}.wav").read_bytes() for j in (1, 2)]
    ok = all(outputs[a, "a"] == outputs[a, "b"] == outputs[a, "c"] for a in ("arch1", "arch2"))
    record_criterion(8, "byte-identical output across runs and threads", ok, "arch1 and arch2, threads 1 and 4")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
