"""Writes natural64.y4m: a 17-frame 64x64 handheld-style pan over the
scikit-image astronaut photograph, converted to 8-bit 4:2:0 BT.601."""

import numpy as np
from skimage import color, data

FRAMES = 17
SIZE = 64


def main(path="natural64.y4m"):
    ycc = color.rgb2ycbcr(data.astronaut()).round().clip(0, 255).astype(np.uint8)
    rng = np.random.default_rng(2024)
    x0, y0 = 180, 60
    with open(path, "wb") as out:
        out.write(f"YUV4MPEG2 W{SIZE} H{SIZE} F25:1 Ip A1:1 C420jpeg\n".encode())
        for t in range(FRAMES):
            jx, jy = rng.integers(-1, 2, size=2)
            x, y = x0 + 3 * t + jx, y0 + t + jy
            crop = ycc[y : y + SIZE, x : x + SIZE].astype(np.uint16)
            out.write(b"FRAME\n")
            out.write(crop[:, :, 0].astype(np.uint8).tobytes())
            for c in (1, 2):
                p = crop[:, :, c]
                sub = (p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2] + 2) // 4
                out.write(sub.astype(np.uint8).tobytes())


if __name__ == "__main__":
    main()
