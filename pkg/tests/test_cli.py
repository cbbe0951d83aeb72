import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from convbeam.audio_io import Waveform, read_wav, write_wav
from convbeam.cli import main
from convbeam.masks import save_masks
from convbeam.simulator import read_manifest, read_scene

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "scene"
    assert main(["simulate", "--out", str(out), "--sources", "2", "--channels", "2", "--rt60", "0.3",
                 "--seed", "3", "--duration", "1.5"]) == 0
    return out


def test_simulate_writes_consistent_scene(scene_dir):
    scene = read_scene(scene_dir)
    assert scene.n_sources == 2 and scene.mixture.shape == (2, 24000)
    total = scene.early_images.sum(0) + scene.late_images.sum(0) + scene.noise
    # components are float32 on disk, so the re-sum is only float32-exact
    assert np.max(np.abs(scene.mixture - total)) < 1e-6
    assert read_manifest(scene_dir / "run.txt")["seed"] == "3"


def test_simulate_is_deterministic(tmp_path):
    for name in ("a", "b"):
        main(["simulate", "--out", str(tmp_path / name), "--seed", "8", "--duration", "0.5"])
    assert (tmp_path / "a" / "mixture.wav").read_bytes() == (tmp_path / "b" / "mixture.wav").read_bytes()


def test_simulate_anechoic(tmp_path):
    main(["simulate", "--out", str(tmp_path / "s"), "--rt60", "0", "--duration", "0.5", "--sources", "1"])
    scene = read_scene(tmp_path / "s")
    assert not np.any(scene.late_images)


def test_separate_with_report(scene_dir, tmp_path, capsys):
    out = tmp_path / "sep"
    assert main(["separate", "--scene", str(scene_dir), "--arch", "arch2", "--out", str(out)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in printed] == ["src=1", "src=2"]
    assert (out / "report.txt").read_text().splitlines() == printed
    assert read_manifest(out / "run.txt")["architecture"] == "wpd"
    est = read_wav(out / "source_1.wav")
    assert est.n_channels == 1 and len(est) == 24000
    deltas = [float(line.split("delta=")[1]) for line in printed]
    assert min(deltas) > 0


@pytest.mark.parametrize("arch", ["mvdr", "arch1", "wpd"])
def test_architecture_only_changes_content(scene_dir, tmp_path, arch):
    out = tmp_path / arch
    assert main(["separate", "--scene", str(scene_dir), "--arch", arch, "--out", str(out)]) == 0
    files = sorted(p.name for p in out.glob("source_*.wav"))
    assert files == ["source_1.wav", "source_2.wav"]
    assert all(len(read_wav(out / f)) == 24000 for f in files)


def test_separate_single_source_uniform_mask(scene_dir, tmp_path):
    out = tmp_path / "one"
    assert main(["separate", "--input", str(scene_dir / "mixture.wav"), "--sources", "1", "--out", str(out)]) == 0
    assert [p.name for p in out.glob("source_*.wav")] == ["source_1.wav"]


def test_separate_mask_file(scene_dir, tmp_path):
    from convbeam.masks import oracle_masks

    masks = oracle_masks(read_scene(scene_dir))
    save_masks(tmp_path / "m.bin", masks)
    out = tmp_path / "mf"
    assert main(["separate", "--input", str(scene_dir / "mixture.wav"), "--mask-source", "file",
                 "--mask-file", str(tmp_path / "m.bin"), "--out", str(out)]) == 0
    ref = tmp_path / "ref"
    main(["separate", "--scene", str(scene_dir), "--out", str(ref)])
    assert (out / "source_1.wav").read_bytes() == (ref / "source_1.wav").read_bytes()


def test_dereverb_zero_input(tmp_path):
    write_wav(tmp_path / "z.wav", Waveform(16000, np.zeros((2, 8000))))
    assert main(["dereverb", "--input", str(tmp_path / "z.wav"), "--output", str(tmp_path / "o.wav")]) == 0
    out = read_wav(tmp_path / "o.wav")
    assert out.n_channels == 2 and not np.any(out.samples)
    manifest = read_manifest(tmp_path / "o.wav.run.txt")
    assert manifest["iterations"] == "1"


def test_dereverb_scene(scene_dir, tmp_path):
    assert main(["dereverb", "--scene", str(scene_dir), "--output", str(tmp_path / "d.wav"), "--format", "pcm16"]) == 0
    assert read_wav(tmp_path / "d.wav").n_channels == 2


def test_config_file_and_override(scene_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\narch=mvdr\ntaps=2\n")
    out = tmp_path / "c"
    assert main(["separate", "--config", str(cfg), "--scene", str(scene_dir), "--taps", "4", "--out", str(out)]) == 0
    manifest = read_manifest(out / "run.txt")
    assert manifest["architecture"] == "mvdr" and manifest["taps"] == "4"


def test_eval_golden_report(tmp_path):
    rng = np.random.default_rng(2024)
    n = 4000
    refs = rng.standard_normal((2, n))
    noise = rng.standard_normal((2, n))
    paths = {}
    for name, sig in [("ref1", refs[0]), ("ref2", refs[1]), ("est1", refs[1] + 0.3 * noise[0]),
                      ("est2", refs[0] + 0.1 * noise[1]), ("mix", refs.sum(axis=0))]:
        paths[name] = tmp_path / f"{name}.wav"
        write_wav(paths[name], Waveform(16000, 0.1 * sig[None]))
    report = tmp_path / "report.txt"
    assert main(["eval", "--estimates", str(paths["est1"]), str(paths["est2"]),
                 "--references", str(paths["ref1"]), str(paths["ref2"]),
                 "--mixture", str(paths["mix"]), "--report", str(report)]) == 0
    assert report.read_text() == (DATA / "eval_report.txt").read_text()


def test_eval_identity_is_clamped(scene_dir, tmp_path, capsys):
    scene = read_scene(scene_dir)
    for j in range(2):
        write_wav(tmp_path / f"e{j}.wav", Waveform(16000, scene.early_images[1 - j, 0][None]))
    assert main(["eval", "--scene", str(scene_dir), "--estimates", str(tmp_path / "e0.wav"), str(tmp_path / "e1.wav")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert all("si_sdr=100.0000" in line for line in lines)


def test_errors_exit_nonzero(tmp_path, capsys):
    write_wav(tmp_path / "short.wav", Waveform(16000, np.zeros((1, 100))))
    assert main(["dereverb", "--input", str(tmp_path / "short.wav"), "--output", str(tmp_path / "o.wav")]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["separate", "--out", str(tmp_path / "x")]) == 1
    assert main(["eval", "--estimates", str(tmp_path / "missing.wav"), "--references", str(tmp_path / "missing.wav")]) == 1
    with pytest.raises(SystemExit):
        main(["separate", "--arch", "nope", "--out", "x"])


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "convbeam", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("convbeam ")
