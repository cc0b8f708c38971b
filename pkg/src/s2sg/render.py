"""Timed effect commands per sentence clip, and the frames they produce.

Each script sentence gets one clip. A clip's commands draw a frame
(RECTANGLE), a moving pointer (POINT) or an avatar badge (AVATAR) over the
slide image. Frames are written as numbered PNGs plus a ``manifest.json``
that an external muxer can concatenate; nothing here encodes video.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from io import BytesIO
from pathlib import Path
from typing import Any, NamedTuple

from PIL import Image, ImageDraw, ImageFont

from .errors import ParseError, RenderError, RepairExhausted, ValidationError
from .grounding import CONDUCT, GroundingConfig, build_prompt, extract_json, repair_suffix, sentence_table
from .interchange import FORMAT_VERSION, SearchableData, dumps, read_json, serialize_slide, write_text_atomic
from .model import GroundingResult, NormalizedRect, ScriptSentence, SlideUnit

log = logging.getLogger(__name__)


class CommandType(str, Enum):
    POINT = "POINT"
    RECTANGLE = "RECTANGLE"
    AVATAR = "AVATAR"


@dataclass(frozen=True)
class EffectCommand:
    type: CommandType
    start_time: float
    duration: float
    param: Mapping[str, str]

    def __post_init__(self):
        if self.start_time < 0 or self.duration <= 0:
            raise ValidationError(f"bad timing start={self.start_time} duration={self.duration}")

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def active(self, t: float) -> bool:
        return self.start_time <= t < self.end_time

    def shape_ids(self) -> list[str]:
        if self.type is CommandType.POINT:
            return [self.param["start_pos"], self.param["end_pos"]]
        if self.type is CommandType.RECTANGLE:
            return [self.param["position"]]
        return []

    def as_dict(self) -> dict:
        return {
            "type": self.type.value,
            "start_time": self.start_time,
            "duration": self.duration,
            "param": dict(self.param),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> EffectCommand:
        return cls(CommandType(data["type"]), float(data["start_time"]), float(data["duration"]), dict(data["param"]))


@dataclass(frozen=True)
class ClipPlan:
    slide_number: int
    sentence_index: int
    clip_length: float
    commands: tuple[EffectCommand, ...] = ()

    def __post_init__(self):
        for c in self.commands:
            if c.end_time > self.clip_length + 1e-9:
                raise ValidationError(
                    f"clip {self.slide_number}/{self.sentence_index}: command ends at {c.end_time} "
                    f"past clip length {self.clip_length}"
                )

    @property
    def key(self) -> tuple[int, int]:
        return (self.slide_number, self.sentence_index)

    def as_dict(self) -> dict:
        return {
            "slide_number": self.slide_number,
            "sentence_index": self.sentence_index,
            "clip_length": self.clip_length,
            "commands": [c.as_dict() for c in self.commands],
        }


@dataclass(frozen=True)
class EffectPolicy:
    wpm: float = 150.0
    min_clip: float = 1.5
    avatar_visible: bool = True

    def __post_init__(self):
        if self.wpm <= 0 or self.min_clip <= 0:
            raise ValueError("wpm and min_clip must be positive")


def sentence_duration(sentence: ScriptSentence | str, wpm: float = 150.0, min_clip: float = 1.5) -> float:
    """Narration time estimated from word count, floored at ``min_clip``."""
    if wpm <= 0:
        raise ValueError("wpm must be positive")
    text = sentence.text if isinstance(sentence, ScriptSentence) else sentence
    return max(min_clip, len(text.split()) * 60.0 / wpm)


def empty_clips(
    slide_number: int, sentences: Sequence[ScriptSentence], policy: EffectPolicy = EffectPolicy()
) -> list[ClipPlan]:
    return [
        ClipPlan(slide_number, s.index, sentence_duration(s, policy.wpm, policy.min_clip))
        for s in sorted(sentences, key=lambda s: s.index)
    ]


def assign_default_effects(
    g: GroundingResult,
    sentences: Sequence[ScriptSentence],
    slide_number: int = 1,
    policy: EffectPolicy = EffectPolicy(),
) -> list[ClipPlan]:
    """Frame every grounded object for its sentence's whole clip."""
    clips = []
    for clip in empty_clips(slide_number, sentences, policy):
        ids = g.groundings[clip.sentence_index] if clip.sentence_index < len(g) else ()
        commands = tuple(
            EffectCommand(CommandType.RECTANGLE, 0.0, clip.clip_length, {"position": sid}) for sid in ids
        )
        clips.append(ClipPlan(clip.slide_number, clip.sentence_index, clip.clip_length, commands))
    return clips


class PlanParse(NamedTuple):
    clips: list[ClipPlan]
    warnings: list[str]


def _number(value: Any) -> float | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value.strip().rstrip("s"))
        except ValueError:
            return None
    return None


def _validate_command(
    raw: Any, clip: ClipPlan, valid: set[str], avatar_visible: bool, where: str
) -> tuple[EffectCommand | None, list[str]]:
    notes: list[str] = []
    if not isinstance(raw, Mapping):
        return None, [f"{where}: command is not an object"]
    try:
        ctype = CommandType(str(raw.get("type", "")).upper())
    except ValueError:
        return None, [f"{where}: unknown command type {raw.get('type')!r}"]
    if ctype is CommandType.AVATAR and not avatar_visible:
        return None, [f"{where}: AVATAR dropped; avatar is hidden"]
    start, duration = _number(raw.get("start_time", 0)), _number(raw.get("duration"))
    if start is None or duration is None:
        return None, [f"{where}: start_time/duration missing or not numeric"]
    if start < 0:
        notes.append(f"{where}: negative start_time {start} moved to 0")
        start = 0.0
    if duration <= 0:
        return None, notes + [f"{where}: non-positive duration {duration}"]
    if start >= clip.clip_length:
        return None, notes + [f"{where}: starts at {start}s, after clip end {clip.clip_length}s"]
    if start + duration > clip.clip_length:
        notes.append(f"{where}: duration {duration}s clamped to clip end {clip.clip_length}s")
        duration = clip.clip_length - start

    param = raw.get("param", {})
    if ctype is CommandType.RECTANGLE:
        pos = param if isinstance(param, str) else param.get("position") if isinstance(param, Mapping) else None
        if pos not in valid:
            return None, notes + [f"{where}: RECTANGLE position {pos!r} does not resolve"]
        param = {"position": pos}
    elif ctype is CommandType.POINT:
        if not isinstance(param, Mapping):
            return None, notes + [f"{where}: POINT param must be an object"]
        a, b = param.get("start_pos"), param.get("end_pos", param.get("start_pos"))
        bad = [x for x in (a, b) if x not in valid]
        if bad:
            return None, notes + [f"{where}: POINT ids {bad} do not resolve"]
        param = {"start_pos": a, "end_pos": b}
    else:
        pose = param.get("pose") if isinstance(param, Mapping) else param if isinstance(param, str) else None
        param = {"pose": str(pose or "neutral")}
    return EffectCommand(ctype, start, duration, param), notes


def parse_command_reply(
    reply: str,
    valid_ids: Sequence[str],
    clips: Sequence[ClipPlan],
    avatar_visible: bool = True,
) -> PlanParse:
    """Attach validated commands from a conduct-mode reply to ``clips``.

    Invalid commands are dropped and reported; a sentence the reply skips
    keeps an empty clip.
    """
    table = sentence_table(extract_json(reply))
    valid = set(valid_ids)
    by_index: dict[int, list] = {}
    warnings: list[str] = []
    for key, value in table.items():
        try:
            index = int(key)
        except (TypeError, ValueError):
            warnings.append(f"ignored entry for unknown sentence {key!r}")
            continue
        if isinstance(value, Mapping):
            value = value.get("commands", [])
        if not isinstance(value, list):
            warnings.append(f"sentence {index}: commands must be a list")
            continue
        by_index.setdefault(index, []).extend(value)
    known = {c.sentence_index for c in clips}
    warnings += [f"ignored commands for unknown sentence {i}" for i in sorted(set(by_index) - known)]

    out = []
    for clip in clips:
        commands = []
        for k, raw in enumerate(by_index.get(clip.sentence_index, [])):
            where = f"slide {clip.slide_number} sentence {clip.sentence_index} command {k}"
            command, notes = _validate_command(raw, clip, valid, avatar_visible, where)
            warnings += notes
            if command is not None:
                commands.append(command)
        out.append(ClipPlan(clip.slide_number, clip.sentence_index, clip.clip_length, tuple(commands)))
    for w in warnings:
        log.warning(w)
    return PlanParse(out, warnings)


def conduct_slide(
    unit: SlideUnit,
    responder,
    config: GroundingConfig | None = None,
    policy: EffectPolicy = EffectPolicy(),
    valid_ids: Sequence[str] | None = None,
) -> PlanParse:
    """Ask the model for effect commands directly (conduct-mode prompt)."""
    config = config or GroundingConfig(avatar_visible=policy.avatar_visible)
    target = unit.without_titles() if config.exclude_titles else unit
    doc = serialize_slide(target, config.variant)
    clips = empty_clips(unit.slide_number, unit.sentences, policy)
    bundle = build_prompt(doc, unit.sentences, CONDUCT, config, [c.clip_length for c in clips])
    valid = list(valid_ids) if valid_ids is not None else list(doc.shape_ids())
    suffix = ""
    error: Exception | None = None
    for _ in range(config.max_repair_attempts + 1):
        reply = responder.complete(bundle.request(config, suffix))
        try:
            return parse_command_reply(reply.text, valid, clips, policy.avatar_visible)
        except ParseError as exc:
            error = exc
            suffix = repair_suffix(exc)
    raise RepairExhausted(f"slide {unit.slide_number}: no parseable command reply ({error})", PlanParse(clips, []))


def plan_json(clips: Sequence[ClipPlan]) -> str:
    ordered = sorted(clips, key=lambda c: c.key)
    return dumps({"format_version": FORMAT_VERSION, "clips": [c.as_dict() for c in ordered]})


def write_plan(path: str | Path, clips: Sequence[ClipPlan]) -> None:
    write_text_atomic(path, plan_json(clips))


def read_plan(path: str | Path) -> list[ClipPlan]:
    data = read_json(path)
    return [
        ClipPlan(
            c["slide_number"],
            c["sentence_index"],
            float(c["clip_length"]),
            tuple(EffectCommand.from_dict(x) for x in c["commands"]),
        )
        for c in data["clips"]
    ]


# ---------------------------------------------------------------------------
# rasterization

CORNERS = ("top-left", "top-right", "bottom-left", "bottom-right")


@dataclass(frozen=True)
class RenderSettings:
    fps: float = 10.0
    resolution: tuple[int, int] = (1280, 720)
    avatar_visible: bool = True
    avatar_corner: str = "bottom-right"
    frame_color: tuple[int, int, int] = (230, 30, 30)
    pointer_color: tuple[int, int, int] = (255, 140, 0)

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if self.resolution[0] <= 0 or self.resolution[1] <= 0:
            raise ValueError("resolution must be positive")
        if self.avatar_corner not in CORNERS:
            raise ValueError(f"avatar_corner must be one of {CORNERS}")

    @property
    def outline_width(self) -> int:
        return max(2, self.resolution[1] // 240)

    @property
    def marker_radius(self) -> int:
        return max(4, self.resolution[1] // 60)


def pixel_rect(rect: NormalizedRect, width: int, height: int) -> tuple[int, int, int, int]:
    return (round(rect.x0 * width), round(rect.y0 * height), round(rect.x1 * width), round(rect.y1 * height))


def frame_count(clip_length: float, fps: float) -> int:
    return round(clip_length * fps)


class Box(NamedTuple):
    rect: tuple[int, int, int, int]


class Marker(NamedTuple):
    center: tuple[float, float]


class Badge(NamedTuple):
    rect: tuple[int, int, int, int]
    label: str


def _lookup(searchable: SearchableData | Mapping[str, NormalizedRect], shape_id: str) -> NormalizedRect:
    try:
        if isinstance(searchable, SearchableData):
            return searchable.lookup(shape_id).position
        return searchable[shape_id]
    except KeyError:
        raise RenderError(f"no searchable entry for shape id {shape_id}") from None


def _badge_rect(settings: RenderSettings) -> tuple[int, int, int, int]:
    w, h = settings.resolution
    bw, bh = round(w * 0.18), round(h * 0.12)
    margin = round(h * 0.02)
    x0 = margin if settings.avatar_corner.endswith("left") else w - margin - bw
    y0 = margin if settings.avatar_corner.startswith("top") else h - margin - bh
    return (x0, y0, x0 + bw, y0 + bh)


def effects_at(
    plan: ClipPlan,
    searchable: SearchableData | Mapping[str, NormalizedRect],
    t: float,
    settings: RenderSettings = RenderSettings(),
) -> list[Box | Marker | Badge]:
    """Geometry of every effect visible at clip time ``t``, in command order."""
    w, h = settings.resolution
    shapes: list[Box | Marker | Badge] = []
    for c in plan.commands:
        if not c.active(t):
            continue
        if c.type is CommandType.RECTANGLE:
            shapes.append(Box(pixel_rect(_lookup(searchable, c.param["position"]), w, h)))
        elif c.type is CommandType.POINT:
            ax, ay = _lookup(searchable, c.param["start_pos"]).center
            bx, by = _lookup(searchable, c.param["end_pos"]).center
            f = min(1.0, max(0.0, (t - c.start_time) / c.duration))
            shapes.append(Marker(((ax + (bx - ax) * f) * w, (ay + (by - ay) * f) * h)))
        elif settings.avatar_visible:
            shapes.append(Badge(_badge_rect(settings), f"AVATAR: {c.param.get('pose', 'neutral')}"))
    return shapes


def draw_effects(base: Image.Image, shapes: Sequence, settings: RenderSettings) -> Image.Image:
    frame = base.copy()
    draw = ImageDraw.Draw(frame)
    for shape in shapes:
        if isinstance(shape, Box):
            x0, y0, x1, y1 = shape.rect
            draw.rectangle((x0, y0, x1 - 1, y1 - 1), outline=settings.frame_color, width=settings.outline_width)
        elif isinstance(shape, Marker):
            cx, cy = shape.center
            r = settings.marker_radius
            draw.ellipse((cx - r, cy - r, cx + r, cy + r), fill=settings.pointer_color, outline=(0, 0, 0))
        else:
            x0, y0, x1, y1 = shape.rect
            draw.rectangle((x0, y0, x1 - 1, y1 - 1), fill=(60, 60, 80), outline=(255, 255, 255), width=2)
            draw.text((x0 + 8, y0 + 8), shape.label, fill=(255, 255, 255), font=ImageFont.load_default())
    return frame


def prepare_image(image: Image.Image | str | Path | None, settings: RenderSettings) -> Image.Image:
    if image is None:
        return Image.new("RGB", settings.resolution, (255, 255, 255))
    if not isinstance(image, Image.Image):
        image = Image.open(image)
    image = image.convert("RGB")
    if image.size != settings.resolution:
        log.info("resizing slide image %s to %s", image.size, settings.resolution)
        image = image.resize(settings.resolution, Image.BILINEAR)
    return image


@dataclass(frozen=True)
class ManifestEntry:
    slide_number: int
    sentence_index: int
    frames_dir: str
    frame_count: int
    fps: float
    clip_length: float

    def as_dict(self) -> dict:
        return {
            "slide_number": self.slide_number,
            "sentence_index": self.sentence_index,
            "frames_dir": self.frames_dir,
            "frame_count": self.frame_count,
            "fps": self.fps,
            "clip_length": self.clip_length,
        }


@dataclass
class RenderManifest:
    resolution: tuple[int, int]
    fps: float
    clips: list[ManifestEntry] = field(default_factory=list)

    def to_json(self) -> str:
        return dumps(
            {
                "format_version": FORMAT_VERSION,
                "resolution": list(self.resolution),
                "fps": self.fps,
                "clips": [c.as_dict() for c in self.clips],
            }
        )

    @classmethod
    def from_json(cls, data: Mapping) -> RenderManifest:
        return cls(
            tuple(data["resolution"]),
            data["fps"],
            [ManifestEntry(**c) for c in data["clips"]],
        )


def clip_dir_name(plan: ClipPlan) -> str:
    return f"clip_{plan.slide_number}_{plan.sentence_index}"


def render_clip(
    slide_image: Image.Image | str | Path | None,
    plan: ClipPlan,
    searchable: SearchableData | Mapping[str, NormalizedRect],
    out_dir: str | Path,
    settings: RenderSettings = RenderSettings(),
) -> ManifestEntry:
    """Write ``clip_<slide>_<sentence>/frame_%05d.png`` under ``out_dir``."""
    for c in plan.commands:
        for sid in c.shape_ids():
            _lookup(searchable, sid)
    base = prepare_image(slide_image, settings)
    name = clip_dir_name(plan)
    folder = Path(out_dir) / name
    folder.mkdir(parents=True, exist_ok=True)
    count = frame_count(plan.clip_length, settings.fps)
    previous_key = None
    encoded = b""
    for k in range(count):
        shapes = effects_at(plan, searchable, k / settings.fps, settings)
        key = tuple(shapes)
        if key != previous_key:
            buf = BytesIO()
            draw_effects(base, shapes, settings).save(buf, format="PNG")
            encoded, previous_key = buf.getvalue(), key
        (folder / f"frame_{k:05d}.png").write_bytes(encoded)
    return ManifestEntry(plan.slide_number, plan.sentence_index, name, count, settings.fps, plan.clip_length)


def render_plans(
    plans: Sequence[ClipPlan],
    slide_images: Mapping[int, Image.Image | str | Path],
    searchable: Mapping[int, SearchableData],
    out_dir: str | Path,
    settings: RenderSettings = RenderSettings(),
) -> RenderManifest:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RenderManifest(settings.resolution, settings.fps)
    visible = settings.avatar_visible
    cache: dict[int, Image.Image] = {}
    for plan in sorted(plans, key=lambda p: p.key):
        if not visible:
            plan = ClipPlan(
                plan.slide_number,
                plan.sentence_index,
                plan.clip_length,
                tuple(c for c in plan.commands if c.type is not CommandType.AVATAR),
            )
        if plan.slide_number not in cache:
            image = slide_images.get(plan.slide_number)
            if image is None:
                log.warning("slide %d: no slide image; rendering on a blank canvas", plan.slide_number)
            cache[plan.slide_number] = prepare_image(image, settings)
        data = searchable.get(plan.slide_number, SearchableData(()))
        manifest.clips.append(render_clip(cache[plan.slide_number], plan, data, out_dir, settings))
    write_text_atomic(out_dir / "manifest.json", manifest.to_json())
    return manifest


def muxer_command(manifest: RenderManifest, output: str = "video.mp4") -> str:
    """An ffmpeg command line concatenating every clip; returned, never run."""
    args = ["ffmpeg", "-y"]
    for clip in manifest.clips:
        args += ["-framerate", f"{clip.fps:g}", "-i", f"{clip.frames_dir}/frame_%05d.png"]
    n = len(manifest.clips)
    graph = "".join(f"[{i}:v]" for i in range(n)) + f"concat=n={n}:v=1:a=0[out]"
    args += ["-filter_complex", graph, "-map", "[out]", "-pix_fmt", "yuv420p", output]
    return shlex.join(args)


def rasterize_slides(
    deck: str | Path,
    slide_count: int,
    out_dir: str | Path,
    command: str,
    resolution: tuple[int, int] = (1280, 720),
) -> dict[int, Path]:
    """Run a configured rasterizer once per slide.

    ``command`` is a template with ``{deck}``, ``{page}``, ``{output}``,
    ``{width}`` and ``{height}`` fields, e.g. a pdftoppm or soffice wrapper.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = {}
    for page in range(1, slide_count + 1):
        target = out_dir / f"slide_{page}.png"
        argv = [
            part.format(deck=deck, page=page, output=target, width=resolution[0], height=resolution[1])
            for part in shlex.split(command)
        ]
        result = subprocess.run(argv, capture_output=True, text=True)
        if result.returncode != 0 or not target.exists():
            raise RenderError(f"rasterizer failed on slide {page}: {result.stderr.strip()[:300]}")
        images[page] = target
    return images


def find_slide_images(folder: str | Path) -> dict[int, Path]:
    """``slide_<n>.png`` files in ``folder``, keyed by slide number."""
    images = {}
    for path in Path(folder).glob("slide_*.png"):
        suffix = path.stem.split("_", 1)[1]
        if suffix.isdigit():
            images[int(suffix)] = path
    return images
