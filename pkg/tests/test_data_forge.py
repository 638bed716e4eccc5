import math
import struct

import numpy as np
import pytest

from featcomp.competition import CorruptionParams
from featcomp.data_forge import (
    BankError,
    DatasetFormatError,
    DigitBank,
    factored_gaussian_noise,
    gen_dataset,
    load_dataset,
    load_idx,
    save_dataset,
    synth_bank,
    write_idx,
    write_manifest,
)
from featcomp.data_forge.io import dumps_dataset, loads_dataset


@pytest.fixture(scope="module")
def bank():
    return synth_bank(10, 60, 14, seed=3)


def _fixture(tmp_path, images, labels):
    ip, lp = tmp_path / "img.idx3", tmp_path / "lab.idx1"
    write_idx(ip, lp, images, labels)
    return ip, lp


# -- IDX -------------------------------------------------------------------

def test_idx_three_images(tmp_path):
    imgs = np.arange(3 * 4 * 4, dtype=np.uint8).reshape(3, 4, 4) * 5
    ip, lp = _fixture(tmp_path, imgs, [2, 0, 1])
    b = load_idx(ip, lp, num_classes=3, image_size=None)
    assert len(b) == 3
    assert b.labels.tolist() == [2, 0, 1]
    np.testing.assert_allclose(b.images, imgs / 255.0, rtol=1e-6)


def test_idx_count_mismatch(tmp_path):
    ip, lp = _fixture(tmp_path, np.zeros((3, 4, 4)), [0, 1])
    with pytest.raises(BankError, match="count mismatch"):
        load_idx(ip, lp, num_classes=2, image_size=None)


def test_idx_all_zero_statistics(tmp_path):
    ip, lp = _fixture(tmp_path, np.zeros((2, 4, 4)), [0, 1])
    b = load_idx(ip, lp, num_classes=2, image_size=None)
    assert np.all(b.mean == 0) and np.all(b.var == 0)


def test_idx_bad_magic(tmp_path):
    ip, lp = _fixture(tmp_path, np.zeros((2, 4, 4)), [0, 1])
    raw = bytearray(ip.read_bytes())
    raw[:4] = struct.pack(">I", 1234)
    ip.write_bytes(bytes(raw))
    with pytest.raises(BankError, match="bad magic"):
        load_idx(ip, lp, num_classes=2, image_size=None)


def test_idx_truncated(tmp_path):
    ip, lp = _fixture(tmp_path, np.zeros((2, 4, 4)), [0, 1])
    ip.write_bytes(ip.read_bytes()[:-3])
    with pytest.raises(BankError, match="truncated"):
        load_idx(ip, lp, num_classes=2, image_size=None)
    ip.write_bytes(b"\x00\x00")
    with pytest.raises(BankError, match="truncated"):
        load_idx(ip, lp, num_classes=2, image_size=None)


def test_idx_label_out_of_range(tmp_path):
    ip, lp = _fixture(tmp_path, np.zeros((2, 4, 4)), [0, 7])
    with pytest.raises(BankError, match="out of range"):
        load_idx(ip, lp, num_classes=2, image_size=None)


def test_idx_downsample(tmp_path):
    imgs = np.zeros((1, 28, 28), dtype=np.uint8)
    imgs[0, :2, :2] = 255
    ip, lp = _fixture(tmp_path, imgs, [0])
    b = load_idx(ip, lp, num_classes=1, image_size=14)
    assert b.shape == (14, 14)
    assert b.images[0, 0, 0] == pytest.approx(1.0)
    assert b.images[0, 1:, :].sum() == 0


# -- synthetic bank -----------------------------------------------------------

def test_synth_bank_deterministic():
    a, b = synth_bank(4, 5, 10, seed=11), synth_bank(4, 5, 10, seed=11)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.images, synth_bank(4, 5, 10, seed=12).images)


def test_synth_bank_per_class_one():
    b = synth_bank(10, 1, 14, seed=0)
    assert len(b) == 10 and sorted(b.labels.tolist()) == list(range(10))


@pytest.mark.parametrize("args", [(1, 5, 14), (17, 5, 14), (10, 0, 14), (10, 5, 2)])
def test_synth_bank_rejects(args):
    with pytest.raises(BankError):
        synth_bank(*args)


def test_bank_rejects_missing_class():
    with pytest.raises(BankError, match="without images"):
        DigitBank(np.zeros((2, 3, 3), np.float32), np.array([0, 0]), 2)


def test_synth_bank_linearly_separable():
    # softmax regression on raw pixels, 10 classes x 100 images at 14x14
    b = synth_bank(10, 100, 14, seed=0)
    x = b.images.reshape(len(b), -1).astype(np.float64)
    x = (x - x.mean(0)) / (x.std(0) + 1e-8)
    y = b.labels
    w = np.zeros((x.shape[1], 10))
    c = np.zeros(10)
    onehot = np.eye(10)[y]
    for _ in range(500):
        z = x @ w + c
        z -= z.max(1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(1, keepdims=True)
        g = (p - onehot) / len(y)
        w -= 0.5 * x.T @ g
        c -= 0.5 * g.sum(0)
    acc = float(np.mean(np.argmax(x @ w + c, 1) == y))
    assert acc >= 0.95


# -- datasets -------------------------------------------------------------------

def test_no_corruption_when_rho_l_one(bank):
    d = gen_dataset(bank, CorruptionParams(1.0, 0.3), 2000, seed=1)
    assert not d.corrupted_left.any()


def test_perfect_coupling(bank):
    d = gen_dataset(bank, CorruptionParams(0.4, 1.0), 2000, seed=1)
    assert np.array_equal(d.y_l, d.y_r)


def test_uncoupled_match_rate(bank):
    d = gen_dataset(bank, CorruptionParams(0.5, 0.0), 10000, seed=2)
    assert 0.08 <= np.mean(d.y_l == d.y_r) <= 0.12


@pytest.mark.parametrize("rho_l,rho_r", [(0.3, 0.6), (0.8, 0.2), (0.5, 0.5)])
def test_statistical_contract(bank, rho_l, rho_r):
    n = 10000
    d = gen_dataset(bank, CorruptionParams(rho_l, rho_r), n, seed=5)
    sigma = math.sqrt(rho_l * (1 - rho_l) / n)
    assert abs(d.corrupted_left.mean() - (1 - rho_l)) <= 3 * sigma
    q = rho_r + (1 - rho_r) / 10
    assert abs(np.mean(d.y_l == d.y_r) - q) <= 3 * math.sqrt(q * (1 - q) / n)


def test_noise_matches_bank_statistics(bank):
    rng = np.random.default_rng(0)
    z = factored_gaussian_noise(bank, 20000, rng, clamp=False)
    mean, var = z.mean(0), z.var(0)
    np.testing.assert_allclose(mean, bank.mean, rtol=0.05, atol=0.01)
    np.testing.assert_allclose(var, bank.var, rtol=0.05, atol=1e-3)
    clamped = np.clip(z, 0, 1)
    assert clamped.min() >= 0 and clamped.max() <= 1


def test_corrupted_images_come_from_noise(bank):
    d = gen_dataset(bank, CorruptionParams(0.0, 0.0), 50, seed=0)
    assert d.corrupted_left.all()
    # glyph images are never exactly the bank mean-noise draws
    bank_set = {im.tobytes() for im in bank.images}
    assert not any(x.tobytes() in bank_set for x in d.x_l)
    assert all(x.tobytes() in bank_set for x in d.x_r)


def test_determinism_and_seed_sensitivity(bank):
    p = CorruptionParams(0.5, 0.5)
    assert gen_dataset(bank, p, 300, seed=9) == gen_dataset(bank, p, 300, seed=9)
    assert gen_dataset(bank, p, 300, seed=9) != gen_dataset(bank, p, 300, seed=10)


def test_split_hygiene(bank):
    p = CorruptionParams(1.0, 0.5)
    tr = gen_dataset(bank, p, 1000, seed=0, split="train")
    te = gen_dataset(bank, p, 1000, seed=0, split="test")
    as_set = lambda d: {x.tobytes() for x in np.concatenate([d.x_l, d.x_r])}
    assert as_set(tr).isdisjoint(as_set(te))


def test_gen_dataset_rejects(bank):
    with pytest.raises(ValueError):
        gen_dataset(bank, CorruptionParams(0.5, 0.5), 0, seed=0)
    with pytest.raises(ValueError):
        gen_dataset(bank, CorruptionParams(0.5, 0.5, num_classes=12), 5, seed=0)
    with pytest.raises(ValueError):
        gen_dataset(bank, CorruptionParams(0.5, 0.5), 5, seed=0, split="valid")


# -- files ----------------------------------------------------------------------

def test_round_trip(bank, tmp_path):
    d = gen_dataset(bank, CorruptionParams(0.25, 0.75), 200, seed=4, split="test")
    path = tmp_path / "d.fcld"
    save_dataset(d, path)
    back = load_dataset(path)
    assert back == d
    assert back.split == "test" and back.seed == 4


def test_corrupted_byte_detected(bank):
    raw = bytearray(dumps_dataset(gen_dataset(bank, CorruptionParams(0.5, 0.5), 20, seed=0)))
    raw[200] ^= 0xFF
    with pytest.raises(DatasetFormatError, match="checksum"):
        loads_dataset(bytes(raw))


def test_truncation_and_version(bank):
    raw = dumps_dataset(gen_dataset(bank, CorruptionParams(0.5, 0.5), 20, seed=0))
    with pytest.raises(DatasetFormatError):
        loads_dataset(raw[:-10])
    with pytest.raises(DatasetFormatError):
        loads_dataset(raw[:10])
    bumped = bytearray(raw)
    bumped[4:6] = struct.pack("<H", 9)
    with pytest.raises(DatasetFormatError, match="version"):
        loads_dataset(bytes(bumped))


def test_empty_path(bank):
    d = gen_dataset(bank, CorruptionParams(0.5, 0.5), 5, seed=0)
    with pytest.raises(OSError):
        save_dataset(d, "")
    with pytest.raises(OSError):
        load_dataset("")


def test_manifest(bank, tmp_path):
    d = gen_dataset(bank, CorruptionParams(0.5, 0.5), 4, seed=0)
    path = tmp_path / "m.csv"
    write_manifest(d, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,y_l,y_r,corrupted_left"
    assert len(lines) == 5
    i, yl, yr, c = lines[2].split(",")
    assert (int(i), int(yl), int(yr), bool(int(c))) == (1, d.y_l[1], d.y_r[1], d.corrupted_left[1])
