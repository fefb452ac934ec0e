"""Binary PPM (P6) output: correlation heatmaps and importance bar charts."""
import numpy as np

BLUE = np.array([59, 76, 192], dtype=np.float64)
WHITE = np.array([221, 221, 221], dtype=np.float64)
RED = np.array([180, 4, 38], dtype=np.float64)
NAN_GREY = np.array([128, 128, 128], dtype=np.uint8)


def write_ppm(path, rgb):
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError(f"{path} is not a binary PPM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def diverging_ramp(values):
    """Map values in [0, 1] to blue (0) -> white (0.5) -> red (1); NaN is grey."""
    v = np.asarray(values, dtype=np.float64)
    t = np.clip(np.nan_to_num(v, nan=0.0), 0.0, 1.0)[..., None]
    lower = BLUE + (WHITE - BLUE) * (t / 0.5)
    upper = WHITE + (RED - WHITE) * ((t - 0.5) / 0.5)
    rgb = np.where(t <= 0.5, lower, upper).round().astype(np.uint8)
    rgb[np.isnan(v)] = NAN_GREY
    return rgb


def heatmap(matrix, cell=24):
    rgb = diverging_ramp(matrix)
    return np.repeat(np.repeat(rgb, cell, axis=0), cell, axis=1)


def bar_chart(scores, bar=16, gap=4, height=200):
    """Vertical bars, tallest bar spanning ``height`` pixels."""
    s = np.asarray(scores, dtype=np.float64)
    width = len(s) * (bar + gap) + gap
    img = np.full((height + 2 * gap, width, 3), 255, dtype=np.uint8)
    top = s.max() if s.size and s.max() > 0 else 1.0
    for i, v in enumerate(s):
        h = int(round(height * v / top))
        x0 = gap + i * (bar + gap)
        if h:
            img[gap + height - h:gap + height, x0:x0 + bar] = RED.astype(np.uint8)
    return img
