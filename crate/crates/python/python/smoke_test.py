"""Exercise the tabforge_py extension end to end.

Build first:  pip install --no-build-isolation ./crates/python  (or maturin develop)
"""
import os
import tempfile

import tabforge_py as tf

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "core", "tests", "fixtures")


def main():
    f = tf.FretboardFrame([3, None, 0, None, None, 5])
    assert f.frets == [3, None, 0, None, None, 5]
    assert f.pitches() == [43, 50, 69]
    assert f.is_playable() and len(f) == 3
    assert tf.FretboardFrame.from_bits(f.bits()) == f
    assert not tf.FretboardFrame([1, None, None, None, None, 7]).is_playable()

    # a one-hot map of a frame decodes back to that frame
    frame, score = tf.decode_frame(f.pitches(), [float(b) for b in f.bits()])
    assert frame == f and score == 3.0
    assert tf.classify_match(frame, f) == "match"
    assert tf.classify_match(tf.FretboardFrame(), f) == "no match"

    with open(os.path.join(FIXTURES, "format0.mid"), "rb") as fh:
        data = fh.read()
    assert tf.parse_smf(data)[0] == (0, 64, True, 0, 0)
    assert tf.midi_to_frames(data) == [[64, 67], [40]]
    try:
        tf.parse_smf(b"MThd\x00\x00\x00\x06\x00\x00\x00")
        raise AssertionError("malformed header accepted")
    except ValueError as e:
        assert "offset 10" in str(e)

    corpus = tf.synth_corpus(1, 2, 4)
    assert [pid for pid, _ in corpus] == ["synth-00000", "synth-00001"]
    assert all(fr.is_playable() for _, frames in corpus for fr in frames)

    model = tf.Model(seed=3)
    p = model.forward([0.0] * 728)
    assert len(p) == 150 and all(0.0 <= v <= 1.0 for v in p)
    tab = model.transcribe([[64, 67], [40], [57]])
    assert [fr.pitches() for fr in tab] == [[64, 67], [40], [57]]
    lines = tf.render_tab(tab).splitlines()
    assert [l[:2] for l in lines] == ["e|", "B|", "G|", "D|", "A|", "E|"]

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "w.tfw")
        model.save(path)
        assert tf.Model.load(path).forward([1.0] * 728) == model.forward([1.0] * 728)

    assert abs(tf.cosine_accuracy([0.5, 0.5, 0.0], [1, 1, 0]) - 1.0) < 1e-12
    assert all(err < 1e-4 for _, err in tf.gradcheck(instances=2))
    print("smoke test passed")


if __name__ == "__main__":
    main()
