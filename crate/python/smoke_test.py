import json
import math
import pathlib

import roomsparse

ROOT = pathlib.Path(__file__).resolve().parent.parent


def main():
    room = roomsparse.Room([5.0, 4.0, 3.0], [0.6])
    assert room.dims == [5.0, 4.0, 3.0]
    images = room.images([1.0, 1.5, 1.2], 1)
    assert len(images) == 7
    assert images[0][1] == 0 and all(g <= 1.0 for _, _, g in images)

    rir = room.rir([1.0, 1.5, 1.2], [3.0, 2.0, 1.5], 16000.0, 3)
    assert max(abs(v) for v in rir) > 0
    print("rt60 sabine %.3f s, decay curve %.3f s" % (room.rt60_sabine(), roomsparse.rt60_from_edc(rir, 16000.0)))

    stft = roomsparse.Stft(16000.0)
    x = [math.sin(0.01 * n) for n in range(20000)]
    y = stft.round_trip(x)
    n0 = stft.frame_len
    err = max(abs(a - b) for a, b in zip(x[n0:-n0], y[n0:-n0]))
    assert err < 1e-9, err

    t = [math.sin(0.3 * n) for n in range(400)]
    i = [math.cos(1.1 * n) for n in range(400)]
    assert roomsparse.sir([2 * v for v in t], t, [i]) > 60

    scene = (ROOT / "scenes" / "two_source.json").read_text()
    sim = roomsparse.simulate(scene, 7)
    assert len(sim["recordings"]) == 8
    out = roomsparse.separate(scene, 7)
    print("separation SIR (dB):", ["%.1f" % v for v in out["sir_db"]])

    rows = roomsparse.coherence_sweep(roomsparse.Room([6.0, 5.0, 3.0], [0.5]), 0.5, 1.5, trials=3)
    assert {r[0] for r in rows} == {"compact", "random"}
    assert all(0.0 <= r[2] <= 1.0 for r in rows)
    print("smoke test ok")


if __name__ == "__main__":
    main()
