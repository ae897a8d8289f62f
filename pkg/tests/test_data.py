import numpy as np
import pytest

from zscos.data import (AREA_RANGE, CONTRAST, CaptionProvider, caption_path, load_dataset,
                        make_sample, read_manifest, synth_generate)
from zscos.errors import ConfigError, FormatError
from zscos.io import read_tensor, write_tensor


@pytest.mark.parametrize("seed", range(0, 60, 3))
def test_generator_constraints(seed):
    s = make_sample(seed, 64, "x")
    assert s.image.shape == (64, 64, 3) and s.mask.dtype == bool
    assert AREA_RANGE[0] <= s.mask.mean() <= AREA_RANGE[1]
    diff = np.abs(s.image[s.mask].mean(axis=0) - s.image[~s.mask].mean(axis=0))
    assert diff.mean() <= CONTRAST + 1e-2  # 8-bit quantization and clipping leave a little slack
    np.testing.assert_array_equal(np.round(s.image * 255) / 255, s.image)


def test_generation_is_pure(tmp_path):
    synth_generate(7, 3, 32, tmp_path / "a")
    synth_generate(7, 3, 32, tmp_path / "b")
    for rel in ("manifest.txt", "images/s00001.ppm", "masks/s00002.pgm", "captions/s00000.cap.mft"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_dataset_layout_and_loading(tmp_path):
    ids = synth_generate(1, 4, 32, tmp_path, caption_len=8, caption_dim=6)
    assert read_manifest(tmp_path) == ids == ["s00000", "s00001", "s00002", "s00003"]
    samples = load_dataset(tmp_path)
    assert [s.id for s in samples] == ids
    np.testing.assert_array_equal(samples[2].mask, make_sample(3, 32, "s00002").mask)
    assert read_tensor(caption_path(tmp_path, "s00001")).shape == (8, 6)


def test_missing_manifest(tmp_path):
    with pytest.raises(ConfigError):
        load_dataset(tmp_path)


def test_synthetic_captions_are_deterministic_and_distinct():
    prov = CaptionProvider("synthetic", seed=3)
    a, b = make_sample(0, 64, "a"), make_sample(1, 64, "b")
    assert prov(a).tobytes() == CaptionProvider("synthetic", seed=3)(a).tobytes()
    assert prov.calls == 1
    ea, eb = prov(a).ravel(), prov(b).ravel()
    assert ea @ eb / np.linalg.norm(ea) / np.linalg.norm(eb) < 0.99


def test_caption_cosine_below_threshold_over_100_seeds():
    prov = CaptionProvider("synthetic", seed=0)
    embs = [prov(make_sample(i, 64, "x")).ravel() for i in range(100)]
    cos = [a @ b / np.linalg.norm(a) / np.linalg.norm(b) for a, b in zip(embs, embs[1:])]
    assert max(cos) < 0.99


def test_file_captions(tmp_path):
    synth_generate(2, 2, 32, tmp_path)
    s = load_dataset(tmp_path)[1]
    prov = CaptionProvider("file", root=tmp_path)
    np.testing.assert_array_equal(prov(s), read_tensor(caption_path(tmp_path, s.id)))
    write_tensor(caption_path(tmp_path, s.id), np.ones((3, 3)))
    with pytest.raises(FormatError):
        prov(s)
    (tmp_path / "captions" / f"{s.id}.cap.mft").unlink()
    with pytest.raises(FormatError):
        prov(s)


def test_provider_validation():
    with pytest.raises(ConfigError):
        CaptionProvider("blip")
    with pytest.raises(ConfigError):
        CaptionProvider("file")


def test_flip_mirrors_image_and_mask():
    s = make_sample(4, 32, "x")
    f = s.flipped()
    np.testing.assert_array_equal(f.mask, s.mask[:, ::-1])
    np.testing.assert_array_equal(f.flipped().image, s.image)
