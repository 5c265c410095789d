"""Dataset files: plain-text events, binary PGM frames, JSON manifest.

Event files hold one ``t_us x y p`` line per event, ASCII decimal digits
only, ``p`` being ``1`` for ON and ``0`` for OFF. Lines starting with ``#``
are comments. Frames are 8-bit P5 PGM. The manifest ties them together,
with every path relative to the manifest's directory.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import jsonschema
import numpy as np

from .calib import HardwareParams, contrast_from_hardware
from .errors import ConfigError, FormatError, GeometryError, OrderingError
from .model import ContrastParams, EventArray, ExposureWindow, GrayImage, IntegrationMode, SensorGeometry

_EVENT_LINE = re.compile(rb"^[ \t]*\d+[ \t]+\d+[ \t]+\d+[ \t]+\d+[ \t]*\r?$", re.M)
_EVENT_LINE_STRICT = re.compile(rb"[ \t]*(\d+)[ \t]+(\d+)[ \t]+(\d+)[ \t]+(\d+)[ \t]*\r?")


def load_schema(name: str) -> dict:
    with resources.files("fastedi.schemas").joinpath(f"{name}.schema.json").open("r") as fh:
        return json.load(fh)


# -- events ------------------------------------------------------------------

def _data_lines(raw: bytes):
    """(line number, content) for every non-comment, non-blank line."""
    for i, line in enumerate(raw.split(b"\n"), start=1):
        if line.strip() and not line.lstrip().startswith(b"#"):
            yield i, line


def _locate_bad_line(raw: bytes, geometry: SensorGeometry | None):
    prev = None
    for lineno, line in _data_lines(raw):
        m = _EVENT_LINE_STRICT.fullmatch(line)
        if not m:
            raise FormatError(f"expected 't_us x y p', got {line[:60].decode('ascii', 'replace')!r}", lineno)
        t, x, y, p = (int(g) for g in m.groups())
        if p not in (0, 1):
            raise FormatError(f"polarity must be 0 or 1, got {p}", lineno)
        if geometry is not None and (x >= geometry.width or y >= geometry.height):
            raise FormatError(f"coordinate ({x}, {y}) outside {geometry.width}x{geometry.height}", lineno)
        if prev is not None and t < prev:
            raise OrderingError(f"timestamp {t} decreases from {prev}", lineno)
        prev = t


def read_events(path, geometry: SensorGeometry | None = None) -> EventArray:
    """Parse an event file; errors name the offending line.

    Decreasing timestamps raise :class:`OrderingError`, bad content
    :class:`FormatError`; both carry ``line``.
    """
    raw = Path(path).read_bytes()
    if b"#" in raw:
        body = b"\n".join(line for _, line in _data_lines(raw))
    else:
        body = b"\n".join(line for line in raw.split(b"\n") if line.strip())
    n_lines = body.count(b"\n") + 1 if body else 0
    if n_lines == 0:
        return EventArray.empty()
    if len(_EVENT_LINE.findall(body)) != n_lines:
        _locate_bad_line(raw, geometry)
        raise FormatError("malformed event file")
    vals = np.fromstring(body.decode("ascii"), dtype=np.int64, sep=" ")
    if vals.size != 4 * n_lines:
        _locate_bad_line(raw, geometry)
        raise FormatError("malformed event file")
    vals = vals.reshape(-1, 4)
    t, x, y, p = vals.T
    bad = (p > 1) | (np.diff(t, prepend=t[0]) < 0)
    if geometry is not None:
        bad |= (x >= geometry.width) | (y >= geometry.height)
    if bad.any():
        _locate_bad_line(raw, geometry)
    return EventArray(t, x, y, np.where(p == 1, 1, -1))


def write_events(events: EventArray, path, header: Sequence[str] = ()) -> None:
    """Inverse of :func:`read_events`; ``header`` lines are written as comments."""
    events.check_sorted()
    lines = [f"# {h}" for h in header]
    if len(events):
        cols = np.column_stack([events.t, events.x, events.y, (events.p > 0).astype(np.int64)])
        lines.extend(" ".join(map(str, row)) for row in cols.tolist())
    text = "\n".join(lines) + ("\n" if lines else "")
    Path(path).write_bytes(text.encode("ascii"))


# -- PGM -----------------------------------------------------------------------

def _pgm_tokens(raw: bytes, count: int):
    """Header tokens (skipping comments) and the payload offset."""
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(raw) and raw[i:i + 1].isspace():
            i += 1
        if i >= len(raw):
            raise FormatError("truncated PGM header")
        if raw[i:i + 1] == b"#":
            while i < len(raw) and raw[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j:j + 1].isspace() and raw[j:j + 1] != b"#":
            j += 1
        tokens.append(raw[i:j])
        i = j
    # exactly one whitespace byte separates the header from the raster
    return tokens, i + 1


def read_pgm(path) -> GrayImage:
    raw = Path(path).read_bytes()
    if raw[:2] != b"P5":
        raise FormatError(f"not a binary PGM (magic {raw[:2]!r})")
    tokens, offset = _pgm_tokens(raw[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"bad PGM header {tokens!r}") from None
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    payload = raw[2 + offset:]
    if len(payload) < width * height:
        raise FormatError(f"truncated PGM payload: {len(payload)} of {width * height} bytes")
    codes = np.frombuffer(payload, dtype=np.uint8, count=width * height).reshape(height, width)
    return GrayImage.from_uint8(codes)


def write_pgm(img: GrayImage, path) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.quantize().tobytes())


# -- manifest ------------------------------------------------------------------

@dataclass(frozen=True)
class FrameEntry:
    image: str
    window: ExposureWindow
    ground_truth: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    geometry: SensorGeometry
    event_file: str
    frames: tuple[FrameEntry, ...]
    hardware: HardwareParams | None = None
    contrast_override: ContrastParams | None = None
    mode: IntegrationMode = IntegrationMode.TIME
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        prev = None
        for i, f in enumerate(self.frames):
            if prev is not None:
                if f.window.t_start < prev.t_start:
                    raise ConfigError(f"frame {i} is out of time order")
                if f.window.t_start < prev.t_end:
                    raise ConfigError(f"frame {i} overlaps frame {i - 1}")
            prev = f.window

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def contrast(self) -> ContrastParams:
        """Explicit override first, otherwise derived from the hardware block."""
        if self.contrast_override is not None:
            return self.contrast_override
        if self.hardware is not None:
            return contrast_from_hardware(self.hardware)
        raise ConfigError("manifest has neither contrast_override nor hardware parameters")

    def load_events(self) -> EventArray:
        return read_events(self.resolve(self.event_file), self.geometry)

    def load_frames(self) -> list[tuple[GrayImage, ExposureWindow]]:
        out = []
        for f in self.frames:
            img = read_pgm(self.resolve(f.image))
            if (img.width, img.height) != (self.geometry.width, self.geometry.height):
                raise GeometryError(f"{f.image} is {img.width}x{img.height}, manifest says "
                                    f"{self.geometry.width}x{self.geometry.height}")
            out.append((img, f.window))
        return out

    def load_ground_truth(self) -> list[GrayImage | None]:
        return [read_pgm(self.resolve(f.ground_truth)) if f.ground_truth else None for f in self.frames]

    def to_dict(self) -> dict:
        d = {
            "geometry": {"width": self.geometry.width, "height": self.geometry.height},
            "event_file": self.event_file,
            "frames": [],
            "mode": self.mode.value,
        }
        for f in self.frames:
            entry = {"image": f.image, "t_start_us": f.window.t_start, "t_end_us": f.window.t_end}
            if f.ground_truth:
                entry["ground_truth"] = f.ground_truth
            d["frames"].append(entry)
        if self.hardware is not None:
            hp = self.hardware
            d["hardware"] = {k: getattr(hp, k) for k in
                             ("kappa_n", "kappa_p", "cap_c1", "cap_c2", "i_d", "i_on", "i_off")}
        if self.contrast_override is not None:
            d["contrast_override"] = {"c_on": self.contrast_override.c_on,
                                      "c_off": self.contrast_override.c_off}
        return d


def manifest_from_dict(doc: dict, root: Path = Path(".")) -> DatasetManifest:
    try:
        jsonschema.validate(doc, load_schema("manifest"))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"manifest {where}: {exc.message}") from None
    frames = tuple(
        FrameEntry(f["image"], ExposureWindow(f["t_start_us"], f["t_end_us"]), f.get("ground_truth"))
        for f in doc["frames"]
    )
    hw = HardwareParams(**doc["hardware"]) if "hardware" in doc else None
    co = ContrastParams(**doc["contrast_override"]) if "contrast_override" in doc else None
    return DatasetManifest(
        SensorGeometry(doc["geometry"]["width"], doc["geometry"]["height"]),
        doc["event_file"], frames, hw, co, IntegrationMode.parse(doc.get("mode", "time")), root,
    )


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc.msg}", exc.lineno) from None
    return manifest_from_dict(doc, path.parent)


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
