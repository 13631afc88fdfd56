import math

import numpy as np
import pytest

import gengan


TINY_TRAIN = """
epochs = 2
batch_size = 4
crop_frames = 32
gen_base_channels = 4
gen_depth = 2
disc_base_channels = 4
d_z = 8
"""


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    records = gengan.build_corpus(out, n_speakers=4, utterances_per_speaker=6, vocabulary_size=4, seed=3)
    return out / "manifest.tsv", records


def test_frontend_shapes_and_tone():
    sr = gengan.SAMPLE_RATE
    t = np.arange(sr) / sr
    mel = gengan.mel_spectrogram(0.5 * np.sin(2 * np.pi * 440.0 * t))
    assert mel.shape[0] == 80
    assert mel.min() >= 0.0 and mel.max() <= 1.0
    centers = np.asarray(gengan.band_centers())
    nearest = int(np.argmin(np.abs(centers - 440.0)))
    assert (mel[:, 2:-2].argmax(axis=0) == nearest).all()
    y = gengan.invert_mel(mel, iterations=8)
    assert abs(len(y) - sr) <= 256


def test_silence_maps_to_floor():
    mel = gengan.mel_spectrogram(np.zeros(gengan.SAMPLE_RATE))
    assert (mel == 0.0).all()


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(ValueError):
        gengan.mel_spectrogram(np.zeros(0))
    with pytest.raises(FileNotFoundError):
        gengan.read_wav(tmp_path / "missing.wav")
    with pytest.raises(gengan.InvalidInput):
        gengan.normalized_eer(120.0)


def test_metric_arithmetic():
    assert gengan.normalized_eer(38.37) == pytest.approx(76.74, abs=0.01)
    assert gengan.normalized_gr(53.63) == pytest.approx(92.74, abs=0.01)
    assert gengan.word_accuracy(4.36) == pytest.approx(95.64, abs=0.01)
    assert gengan.word_accuracy(120.0) == 0.0
    assert gengan.word_error_rate(["a", "b", "c"], ["a", "x", "c"]) == pytest.approx(100.0 / 3.0)
    assert gengan.compute_eer([0.9, 0.8, 0.2, 0.1], [True, True, False, False]) == 0.0
    table = gengan.format_table([{"label": "gengan", "EER": 38.37, "GR": 53.63, "WER": 23.36}])
    assert "76.64" in table and "92.74" in table


def test_losses_and_labels():
    d = gengan.discriminator_loss(1.0, 0.5, 0.5, 0.5)
    assert d["total"] == pytest.approx(2.0 * math.log(2.0))
    g = gengan.generator_loss(np.zeros(64), np.full(64, 0.5), 0.0, 0.3, 0.0)
    assert g["total"] == pytest.approx(0.25)
    values, raw = gengan.sample_soft_labels(10000, seed=1)
    assert 0.48 <= raw.mean() <= 0.52
    assert 0.04 <= raw.var(ddof=1) <= 0.06
    assert values.min() >= 0.01 and values.max() <= 0.99


def test_corpus_and_manifest(corpus):
    manifest, records = corpus
    loaded = gengan.load_manifest(manifest)
    assert len(loaded) == len(records) == 24
    assert {r["gender"] for r in loaded} == {"M", "F"}
    wav = gengan.read_wav(loaded[0]["audio_path"])
    assert wav.ndim == 1 and len(wav) > 1024


def test_train_transform_evaluate(corpus, tmp_path):
    manifest, records = corpus
    history = gengan.train(manifest, tmp_path / "run", TINY_TRAIN)
    assert len(history) == 2
    assert all(math.isfinite(h["L_G"]) for h in history)
    ckpt = tmp_path / "run" / "checkpoint.ckpt"
    x = gengan.read_wav(records[0]["audio_path"])
    a = gengan.transform(x, ckpt, seed=1)
    assert np.array_equal(a, gengan.transform(x, ckpt, seed=1))
    assert not np.array_equal(a, gengan.transform(x, ckpt, seed=2))

    gengan.train_attackers(manifest, tmp_path / "att.ckpt")
    report = gengan.evaluate(manifest, tmp_path / "att.ckpt", mode="gengan", checkpoint=ckpt, seed=0)
    for key in ("EER", "eer", "GR", "gr", "WER", "A_w"):
        assert math.isfinite(report[key])
    assert report["eer"] == pytest.approx(100 - 2 * abs(report["EER"] - 50), abs=0.01)
    with pytest.raises(gengan.CheckpointError):
        gengan.transform(x, tmp_path / "nope.ckpt")
