import math

import pytest

pedalnet = pytest.importorskip("pedalnet")


def sine(freq, seconds, rate=44100.0, amp=0.5):
    n = round(seconds * rate)
    return [amp * math.sin(2 * math.pi * freq * i / rate) for i in range(n)]


def smf(track_bytes):
    header = b"MThd" + (6).to_bytes(4, "big") + (0).to_bytes(2, "big")
    header += (1).to_bytes(2, "big") + (480).to_bytes(2, "big")
    return header + b"MTrk" + len(track_bytes).to_bytes(4, "big") + track_bytes


# note-on, five CC64 changes plus a redundant repeat, note-off, end of track
PEDAL_TRACK = bytes(
    [0x00, 0x90, 0x3C, 0x64,
     0x81, 0x70, 0xB0, 0x40, 0x50,
     0x81, 0x70, 0xB0, 0x40, 0x1E,
     0x81, 0x70, 0xB0, 0x40, 0x40,
     0x81, 0x70, 0xB0, 0x40, 0x3F,
     0x81, 0x70, 0xB0, 0x40, 0x7F,
     0x78, 0xB0, 0x40, 0x7F,
     0x82, 0x68, 0x80, 0x3C, 0x40,
     0x00, 0xFF, 0x2F, 0x00])


def test_version():
    assert pedalnet.__version__


def test_melspectrogram_shape():
    mel = pedalnet.melspectrogram(sine(440.0, 2.0))
    assert len(mel) == 128
    assert all(len(row) == 201 for row in mel)
    assert max(max(row) for row in mel) == 0.0  # max-referenced dB


def test_transfer_feature_dimensions():
    multi = pedalnet.make_network_multi(seed=3)
    assert multi.channels == 21 and multi.n_layers == 4
    feats = pedalnet.extract_features(multi, sine(220.0, 2.0))
    assert len(feats) == 84

    reduced = pedalnet.make_network_single(12, 3, 3, 3, seed=4)
    assert len(pedalnet.extract_features(reduced, sine(220.0, 2.0))) == 36


def test_network_round_trip(tmp_path):
    net = pedalnet.make_network_single(4, 3, 3, 2, seed=9)
    path = str(tmp_path / "net.bin")
    net.save(path)
    loaded = pedalnet.load_network(path)
    audio = sine(330.0, 2.0)
    assert pedalnet.extract_features(loaded, audio) == pedalnet.extract_features(net, audio)


def test_svm_train_predict_round_trip(tmp_path):
    features = [[float(i % 2), float(i)] for i in range(20)]
    labels = [1 if i % 2 else -1 for i in range(20)]
    model = pedalnet.train_svm(features, labels, C=10.0, gamma=0.5)
    label, decision = model.predict([1.0, 3.0])
    assert label == 1 and decision > 0
    path = str(tmp_path / "svm.bin")
    model.save(path)
    loaded = pedalnet.load_svm(path)
    assert loaded.predict([1.0, 3.0]) == (label, decision)
    with pytest.raises(ValueError):
        model.predict([1.0])  # wrong dimension


def test_detect_on_toy_passage():
    samples, rate, truth = pedalnet.toy_passage("smoke", 3.0, seed=11, salt=1)
    assert rate == 44100.0 and len(samples) == 132300
    assert truth and all(off > on for on, off in truth)

    net = pedalnet.make_network_single(4, 3, 3, 2, seed=5)
    timeline = pedalnet.detect(samples, rate, net, method="direct", recording_id="smoke")
    times = timeline["times"]
    assert len(times) == len(timeline["labels"]) == len(timeline["scores"])
    assert times[0] == pytest.approx(0.15)
    assert all(b - a == pytest.approx(0.1) for a, b in zip(times, times[1:]))
    assert set(timeline["labels"]) <= {0, 1}

    frame_truth = pedalnet.frame_ground_truth(truth, times)
    assert len(frame_truth) == len(times)


def test_midi_pedal_segments_and_strip():
    data = smf(PEDAL_TRACK)
    segments = pedalnet.pedal_segments(data)
    assert segments == [(0.25, 0.5), (0.75, 1.0), (1.25, 1.75)]

    stripped = pedalnet.strip_sustain(data)
    assert b"\xb0\x40" not in stripped
    assert pedalnet.pedal_segments(stripped) == []


def test_f_measure_identity():
    assert pedalnet.f_measure(0.8457, 0.9941) == pytest.approx(0.9139, abs=5e-4)
