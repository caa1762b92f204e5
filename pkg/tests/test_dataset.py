import numpy as np
import pytest

from hsifuse.dataset import (DatasetError, build_pairs, enumerate_tiles, footprints_overlap,
                             load_dataset, replay_pair, save_dataset, split_tiles)
from hsifuse.degrade import EffectChain, night_chain
from hsifuse.fiber import fit_band_selection
from hsifuse.scene import Scene, extract_subcube

from conftest import make_scene


@pytest.fixture(scope="module")
def selection(jasper):
    r = np.zeros((100, 100), bool)
    r[:, :64] = True
    return fit_band_selection(jasper, r, seed=0)


def per_axis(n, stride, size=16):
    return (n - size) // stride + 1


@pytest.mark.parametrize("stride,count", [(8, 121), (16, 36)])
def test_enumerate_counts(jasper, stride, count):
    tiles = enumerate_tiles(jasper, stride)
    assert len(tiles) == per_axis(100, stride) ** 2 == count
    assert tiles[0].x == 0 and tiles[0].y == 0
    assert tiles[1].x == stride and tiles[1].y == 0
    assert all(t.x + 16 <= 100 and t.y + 16 <= 100 for t in tiles)


def test_enumerate_single_tile():
    s = make_scene(H=16, W=16)
    for stride in (1, 8, 16, 50):
        tiles = enumerate_tiles(s, stride)
        assert [(t.x, t.y) for t in tiles] == [(0, 0)]


def test_enumerate_too_small():
    with pytest.raises(DatasetError):
        enumerate_tiles(make_scene(H=8, W=20), 8)


def brute_split(tiles, Ws, frac, size=16, stride=8):
    """Grow the right-hand test block one tile width at a time."""
    for k in range(1, Ws // size + 1):
        cut = Ws - k * size
        cut -= cut % stride
        covered = [t for t in tiles if t.x >= cut]
        if len(covered) >= frac * len(tiles):
            return cut


def test_split_rule_on_jasper(jasper):
    tiles = enumerate_tiles(jasper, 8)
    train, test, cut = split_tiles(tiles, jasper, 0.2, seed=0)
    assert cut == brute_split(tiles, 100, 0.2) == 64
    assert all(t.x + t.size <= cut for t in train)
    assert all(t.x >= cut for t in test)
    straddling = [t for t in tiles if t.x < cut < t.x + t.size]
    assert len(train) + len(straddling) + sum(t.x >= cut for t in tiles) == len(tiles)
    assert len(train) == 77 and len(test) == 12
    assert sorted({t.x for t in test}) == [64, 80]


def test_split_footprints_disjoint_exhaustive(jasper):
    for frac in (0.1, 0.2, 0.35, 0.5):
        train, test, _ = split_tiles(enumerate_tiles(jasper, 8), jasper, frac)
        assert not any(footprints_overlap(a, b) for a in train for b in test)
        assert not any(footprints_overlap(a, b) for i, a in enumerate(test) for b in test[i + 1:])


def test_split_deterministic_and_seeded_side(jasper):
    tiles = enumerate_tiles(jasper, 8)
    assert split_tiles(tiles, jasper, 0.2, seed=4) == split_tiles(tiles, jasper, 0.2, seed=4)
    a = split_tiles(tiles, jasper, 0.2, seed=4, side="random")
    assert a == split_tiles(tiles, jasper, 0.2, seed=4, side="random")


def test_split_rejects_bad_fraction(jasper):
    tiles = enumerate_tiles(jasper, 8)
    for frac in (0.0, 1.0):
        with pytest.raises(DatasetError):
            split_tiles(tiles, jasper, frac)
    with pytest.raises(DatasetError):
        split_tiles(tiles, jasper, 0.99)


def test_build_pairs_shapes_and_count(jasper, selection):
    tiles = enumerate_tiles(jasper, 8)
    ds = build_pairs(jasper, tiles, selection, night_chain(gamma=2.0), seed=3)
    assert len(ds) == 121
    s = ds.samples[0]
    assert s.Z.shape == (3, 16, 16) and s.X.shape == (6, 8, 8) and s.T.shape == (16, 16)
    assert all(int(p.T.max()) < 4 for p in ds.samples)


def test_empty_chain_gives_clean_selected_bands(jasper, selection):
    tiles = enumerate_tiles(jasper, 16)[:3]
    ds = build_pairs(jasper, tiles, selection, EffectChain())
    for t, s in zip(tiles, ds.samples):
        sub = extract_subcube(jasper, t.x, t.y).data.astype(np.float64)
        clean = sub.reshape(224, 8, 2, 8, 2).mean(axis=(2, 4))[list(selection.selected)]
        assert np.allclose(s.X, clean, atol=1e-6)


def test_selection_scene_mismatch(selection):
    other = make_scene(C=300, H=32, W=32, name="other")
    with pytest.raises(DatasetError):
        build_pairs(other, enumerate_tiles(other, 16), selection, EffectChain())


def test_save_load_round_trip(tmp_path, jasper, selection):
    tiles = enumerate_tiles(jasper, 16)[:5]
    ds = build_pairs(jasper, tiles, selection, night_chain(gamma=3.0, contrast=True), seed=9, split="test")
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back.split == "test" and len(back) == 5
    for a, b in zip(ds.samples, back.samples):
        assert np.array_equal(a.Z, b.Z) and np.array_equal(a.X, b.X) and np.array_equal(a.T, b.T)
        assert a.meta == b.meta
    assert back.manifest["chain"] == ds.manifest["chain"]
    save_dataset(back, tmp_path / "e")
    for f in ("Z.f32", "X.f32", "T.u8", "manifest.json"):
        assert (tmp_path / "d" / f).read_bytes() == (tmp_path / "e" / f).read_bytes()


def test_truncated_payload(tmp_path, jasper, selection):
    ds = build_pairs(jasper, enumerate_tiles(jasper, 16)[:2], selection, EffectChain())
    save_dataset(ds, tmp_path)
    data = (tmp_path / "X.f32").read_bytes()
    (tmp_path / "X.f32").write_bytes(data[:-8])
    with pytest.raises(DatasetError, match="X.f32"):
        load_dataset(tmp_path)


def test_corrupt_manifest(tmp_path, jasper, selection):
    ds = build_pairs(jasper, enumerate_tiles(jasper, 16)[:2], selection, EffectChain())
    save_dataset(ds, tmp_path)
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)


def test_replay_reproduces_every_sample(jasper, selection):
    tiles = enumerate_tiles(jasper, 16)
    ds = build_pairs(jasper, tiles, selection, night_chain(gamma=4.0, A=0.95, contrast=True), seed=21)
    for i in range(len(ds)):
        r = replay_pair(jasper, ds, i)
        assert np.array_equal(r.Z, ds.samples[i].Z) and np.array_equal(r.X, ds.samples[i].X)


def test_per_tile_seeds_differ(jasper, selection):
    ds = build_pairs(jasper, enumerate_tiles(jasper, 16)[:3], selection, night_chain(gamma=1.0), seed=5)
    assert [s.meta["seed"] for s in ds.samples] == [5 ^ 0, 5 ^ 1, 5 ^ 2]
