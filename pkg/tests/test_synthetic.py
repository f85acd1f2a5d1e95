import numpy as np
import pytest

from maphdr.synthetic import DEFAULT_EXPOSURES, MovingRect, SceneSpec, generate_synthetic, render


def test_static_noiseless_frames_repeat():
    spec = SceneSpec(width=40, height=30, frames=6, noise_sigma=0.0,
                     rects=(MovingRect(5, 5, 8, 8, 0.0, 0.0),))
    seq = generate_synthetic(spec)
    for k in range(2, 6):
        assert np.array_equal(seq.frames[k].data, seq.frames[k - 2].data)
    assert not np.array_equal(seq.frames[0].data, seq.frames[1].data)


def test_saturation_only_in_long_frames():
    seq = generate_synthetic(SceneSpec(width=80, height=40, frames=2))
    long_, short = seq.frames
    z_max = seq.crf.z_max
    sat = long_.data == z_max
    assert sat.sum() > 100
    assert not (short.data[sat] == z_max).any()


def test_exposures_alternate():
    seq = generate_synthetic(SceneSpec(width=20, height=20, frames=5))
    assert [f.exposure_s for f in seq.frames] == [DEFAULT_EXPOSURES[k % 2] for k in range(5)]
    assert [f.long_exposure for f in seq.frames] == [True, False, True, False, True]


def test_seed_determinism():
    a = generate_synthetic(SceneSpec(width=30, height=20, frames=3, seed=5))
    b = generate_synthetic(SceneSpec(width=30, height=20, frames=3, seed=5))
    c = generate_synthetic(SceneSpec(width=30, height=20, frames=3, seed=6))
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a.frames, b.frames))
    assert any(x.data.tobytes() != y.data.tobytes() for x, y in zip(a.frames, c.frames))


def test_mask_follows_rect():
    spec = SceneSpec(width=40, height=40, rects=(MovingRect(4, 2, 6, 5, 3.0, 1.5),))
    for k in range(3):
        _, mask = render(spec, k)
        x0, y0 = spec.rects[0].origin(k)
        rows, cols = np.nonzero(mask)
        assert (rows.min(), cols.min(), mask.sum()) == (y0, x0, 30)


def test_rect_leaving_frame():
    spec = SceneSpec(width=20, height=20, rects=(MovingRect(15, 0, 10, 10, 100.0, 0.0),))
    assert render(spec, 0)[1].sum() == 50 and not render(spec, 1)[1].any()


def test_ground_truth_positive():
    seq = generate_synthetic(SceneSpec(width=30, height=20, frames=2))
    assert all(r.min() > 0 and r.shape == (20, 30, 3) for r in seq.radiance)


@pytest.mark.parametrize("kw", [dict(frames=0), dict(bg_min=0.0), dict(bg_min=5.0, bg_max=2.0),
                                dict(channels=1)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        SceneSpec(**kw)
