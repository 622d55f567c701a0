#!/usr/bin/env python3
"""Regenerate the bundled sample clip (2 s of video + speech-like audio).

The fixture is committed; this script documents exactly how it was made.
Video: 16 frames, 64x48, 8 fps, MJPG -- a drifting gradient with a moving
bright blob so frames differ.  Audio: 16 kHz mono, two tone bursts with
modulation separated by a silent gap, so the mock ASR finds two segments.
"""

from pathlib import Path

import cv2
import numpy as np

HERE = Path(__file__).parent


def make_video(path: Path) -> None:
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), 8.0, (64, 48))
    if not writer.isOpened():
        raise RuntimeError("MJPG writer unavailable")
    yy, xx = np.mgrid[0:48, 0:64]
    for t in range(16):
        base = ((xx * 2 + yy + 6 * t) % 256).astype(np.uint8)
        frame = np.stack([base, np.roll(base, t, axis=1), base[::-1]], axis=2)
        cx, cy = 16 + 2 * t, 24 + int(8 * np.sin(t / 3))
        cv2.circle(frame, (cx, cy), 7, (255, 255, 255), -1)
        writer.write(frame)
    writer.release()


def make_audio(path: Path) -> None:
    import wave

    rate = 16000
    t1 = np.arange(int(0.7 * rate)) / rate
    burst1 = 0.5 * np.sin(2 * np.pi * 220 * t1) * (1 + 0.5 * np.sin(2 * np.pi * 3 * t1))
    gap = np.zeros(int(0.5 * rate))
    t2 = np.arange(int(0.6 * rate)) / rate
    burst2 = 0.4 * np.sin(2 * np.pi * 440 * t2) * (1 + 0.5 * np.sin(2 * np.pi * 5 * t2))
    tail = np.zeros(int(0.2 * rate))
    signal = np.concatenate([burst1, gap, burst2, tail])
    pcm = (np.clip(signal, -1, 1) * 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


if __name__ == "__main__":
    make_video(HERE / "sample_clip.avi")
    make_audio(HERE / "sample_clip.wav")
    print("wrote", HERE / "sample_clip.avi", "and", HERE / "sample_clip.wav")
