import numpy as np

from exosim.peripherals import NOTHING_VISIBLE, Detector, Visibility, detector_sample


def _detector(seed=0, prob=1.0, period=100, latency=51, visible=True):
    seen = Visibility(4, 0.9, prob) if visible else NOTHING_VISIBLE
    return Detector(
        period_ticks=period,
        latency_ticks=latency,
        rng=np.random.default_rng(seed),
        visibility=lambda tick: seen,
    )


def test_first_frame_is_pending_until_latency_elapses():
    det = _detector()

    assert detector_sample(det, 50) is None
    frame = detector_sample(det, 51)

    assert frame.object_id == 4
    assert frame.frame_tick == 0
    assert frame.available_tick == 51


def test_second_read_within_the_same_frame_is_pending():
    det = _detector()
    detector_sample(det, 51)

    assert detector_sample(det, 91) is None
    assert detector_sample(det, 151).index == 1


def test_sample_returns_newest_frame_and_skips_stale_ones():
    det = _detector()
    detector_sample(det, 51)

    frame = detector_sample(det, 360)

    assert frame.index == 3
    assert frame.frame_tick == 300
    assert det.next_available_tick() == 451


def test_nothing_visible_gives_id_zero():
    frame = detector_sample(_detector(visible=False), 51)

    assert frame.object_id == 0
    assert frame.score == 0.0


def test_detection_matches_one_uniform_draw_per_frame():
    seed, prob, frames = 7, 0.5, 200
    draws = np.random.default_rng(seed).random(frames)
    det = _detector(seed=seed, prob=prob)

    ids = [detector_sample(det, n * 100 + 51).object_id for n in range(frames)]

    assert ids == [4 if u < prob else 0 for u in draws]


def test_skipped_frames_still_consume_their_draws():
    seed, prob = 11, 0.5
    draws = np.random.default_rng(seed).random(10)
    det = _detector(seed=seed, prob=prob)

    frame = detector_sample(det, 9 * 100 + 51)

    assert frame.index == 9
    assert frame.object_id == (4 if draws[9] < prob else 0)


def test_sixth_frame_at_ten_fps_is_available_at_551():
    det = _detector()

    assert det.available_tick(5) == 551
    assert det.newest_available(550) == 4
    assert det.newest_available(551) == 5
