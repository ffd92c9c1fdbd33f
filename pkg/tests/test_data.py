import numpy as np
import pytest

from plifnet.data import (EventStream, augment, integrate_frames, load_idx,
                          normalization_stats, normalize, parse_events_csv,
                          read_frame_cache, slice_bounds, write_events_csv,
                          write_frame_cache, write_idx)
from plifnet.errors import DataError


def brute_partition(n, t_steps):
    """Reference slicing oracle: floor(n/T)-wide slices, last takes the rest."""
    w = n // t_steps
    return [(w * j, w * (j + 1)) for j in range(t_steps - 1)] + [(w * (t_steps - 1), n)]


def random_stream(rng, n, width=8, height=6):
    t = np.sort(rng.integers(0, 10_000, size=n))
    return EventStream(t=t.astype(np.int64),
                       x=rng.integers(0, width, size=n),
                       y=rng.integers(0, height, size=n),
                       p=rng.integers(0, 2, size=n),
                       width=width, height=height)


class TestIdx:
    def test_roundtrip_images(self, tmp_path, rng):
        imgs = rng.integers(0, 256, size=(5, 4, 3)).astype(np.float64)
        path = tmp_path / "imgs.idx"
        write_idx(path, imgs)
        back = load_idx(path)
        assert back.shape == (5, 4, 3)
        assert np.array_equal(back, imgs)

    def test_roundtrip_labels(self, tmp_path):
        labels = np.array([0, 9, 3, 3], dtype=np.int64)
        path = tmp_path / "labels.idx"
        write_idx(path, labels)
        back = load_idx(path)
        assert back.dtype == np.int64 and np.array_equal(back, labels)

    def test_bad_magic_reports_offset(self, tmp_path):
        path = tmp_path / "bad.idx"
        path.write_bytes(b"\x00\x00\x07\x77" + b"\x00" * 16)
        with pytest.raises(DataError, match="offset 0"):
            load_idx(path)

    def test_truncated_payload(self, tmp_path):
        import struct
        path = tmp_path / "short.idx"
        path.write_bytes(struct.pack(">4I", 0x803, 2, 3, 3) + b"\x00" * 5)
        with pytest.raises(DataError, match="shorter"):
            load_idx(path)


class TestEventsCsv:
    def test_roundtrip(self, tmp_path, rng):
        ev = random_stream(rng, 50)
        path = tmp_path / "ev.csv"
        write_events_csv(path, ev)
        back = parse_events_csv(path, ev.width, ev.height)
        for field in ("t", "x", "y", "p"):
            assert np.array_equal(getattr(back, field), getattr(ev, field))

    def test_bad_header(self, tmp_path):
        path = tmp_path / "ev.csv"
        path.write_text("time,x,y,pol\n0,0,0,1\n")
        with pytest.raises(DataError, match="t,x,y,p"):
            parse_events_csv(path, 4, 4)

    def test_out_of_bounds_x_line_number(self, tmp_path):
        path = tmp_path / "ev.csv"
        path.write_text("t,x,y,p\n0,1,1,1\n5,9,1,0\n")
        with pytest.raises(DataError, match=":3:"):
            parse_events_csv(path, 4, 4)

    def test_decreasing_timestamps(self, tmp_path):
        path = tmp_path / "ev.csv"
        path.write_text("t,x,y,p\n10,0,0,1\n5,0,0,1\n")
        with pytest.raises(DataError, match="decrease"):
            parse_events_csv(path, 4, 4)

    def test_bad_polarity(self, tmp_path):
        path = tmp_path / "ev.csv"
        path.write_text("t,x,y,p\n0,0,0,2\n")
        with pytest.raises(DataError, match="polarity"):
            parse_events_csv(path, 4, 4)

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "ev.csv"
        path.write_text("t,x,y,p\n0,0,0,1\n\n3,1,1,0\n")
        ev = parse_events_csv(path, 4, 4)
        assert len(ev) == 2


class TestSliceBounds:
    def test_n10_t3(self):
        # floor(10/3) = 3 -> [0,3), [3,6), [6,10)
        assert slice_bounds(10, 3) == [(0, 3), (3, 6), (6, 10)]

    def test_exact_division(self):
        assert slice_bounds(8, 4) == [(0, 2), (2, 4), (4, 6), (6, 8)]

    def test_t1_takes_all(self):
        assert slice_bounds(7, 1) == [(0, 7)]

    def test_matches_bruteforce_bulk(self, rng):
        for _ in range(1000):
            t_steps = int(rng.integers(1, 12))
            n = int(rng.integers(t_steps, 500))
            assert slice_bounds(n, t_steps) == brute_partition(n, t_steps)

    def test_cover_and_disjoint(self, rng):
        for _ in range(200):
            t_steps = int(rng.integers(1, 9))
            n = int(rng.integers(t_steps, 100))
            bounds = slice_bounds(n, t_steps)
            flat = [i for jl, jr in bounds for i in range(jl, jr)]
            assert flat == list(range(n))


class TestIntegrateFrames:
    def test_total_count_conserved(self, rng):
        for _ in range(1000):
            t_steps = int(rng.integers(1, 6))
            n = int(rng.integers(t_steps, 80))
            ev = random_stream(rng, n)
            frames = integrate_frames(ev, t_steps)
            assert frames.shape == (t_steps, 2, ev.height, ev.width)
            assert frames.sum() == n

    def test_per_polarity_conserved(self, rng):
        ev = random_stream(rng, 300)
        frames = integrate_frames(ev, 5)
        assert frames[:, 0].sum() == np.sum(ev.p == 0)
        assert frames[:, 1].sum() == np.sum(ev.p == 1)

    def test_single_event_placement(self):
        ev = EventStream(t=np.array([7]), x=np.array([2]), y=np.array([1]),
                         p=np.array([1]), width=4, height=3)
        frames = integrate_frames(ev, 1)
        assert frames[0, 1, 1, 2] == 1 and frames.sum() == 1

    def test_slices_follow_bounds(self, rng):
        ev = random_stream(rng, 10)
        frames = integrate_frames(ev, 3)
        for j, (jl, jr) in enumerate([(0, 3), (3, 6), (6, 10)]):
            assert frames[j].sum() == jr - jl

    def test_too_few_events(self, rng):
        ev = random_stream(rng, 3)
        with pytest.raises(DataError):
            integrate_frames(ev, 4)


class TestFrameCache:
    def test_bit_exact_roundtrip(self, tmp_path, rng):
        frames = rng.integers(0, 40, size=(4, 2, 6, 8)).astype(np.int64)
        path = tmp_path / "frames.bin"
        write_frame_cache(path, frames)
        assert np.array_equal(read_frame_cache(path), frames)
        # re-writing the same tensor produces identical bytes
        blob = path.read_bytes()
        write_frame_cache(path, frames)
        assert path.read_bytes() == blob

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "frames.bin"
        path.write_bytes(b"XXXX" + b"\x00" * 32)
        with pytest.raises(DataError, match="magic"):
            read_frame_cache(path)

    def test_truncated(self, tmp_path, rng):
        frames = rng.integers(0, 4, size=(2, 2, 3, 3)).astype(np.int64)
        path = tmp_path / "frames.bin"
        write_frame_cache(path, frames)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DataError, match="truncated"):
            read_frame_cache(path)


class TestNormalize:
    def test_stats_cancel(self, rng):
        imgs = rng.normal(3.0, 2.0, size=(40, 2, 5, 5))
        mean, std = normalization_stats(imgs)
        out = normalize(imgs, mean, std)
        assert np.all(np.abs(out.mean(axis=(0, 2, 3))) < 1e-6)
        assert np.allclose(out.std(axis=(0, 2, 3)), 1.0)

    def test_constant_channel_guard(self):
        imgs = np.full((4, 1, 2, 2), 5.0)
        mean, std = normalization_stats(imgs)
        assert std[0] == 1.0
        assert np.all(normalize(imgs, mean, std) == 0.0)


class TestAugment:
    def test_shape_preserved(self, rng):
        img = rng.random((2, 28, 28))
        out = augment(img, rng)
        assert out.shape == img.shape

    def test_no_flip_centre_crop_possible(self, rng):
        # with pad=0 and flip disabled the transform is the identity
        img = rng.random((1, 8, 8))
        out = augment(img, rng, pad=0, flip=False)
        assert np.array_equal(out, img)

    def test_mass_not_created(self, rng):
        img = np.ones((1, 6, 6))
        for _ in range(20):
            out = augment(img, rng)
            assert out.sum() <= img.sum()

    def test_deterministic_under_seed(self, rng):
        img = rng.random((2, 10, 10))
        a = augment(img, np.random.default_rng(42))
        b = augment(img, np.random.default_rng(42))
        assert np.array_equal(a, b)
