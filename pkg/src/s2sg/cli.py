"""``s2sg`` command line: ingest, ground, eval, plan, render.

Each stage reads the previous stage's file, so any stage can be rerun alone.
Exit codes: 0 ok, 1 runtime failure, 2 configuration or credential error,
3 validation error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import CliConfig, load_config
from .errors import (
    ConfigError,
    CredentialError,
    ParseError,
    S2SGError,
    ValidationError,
)
from .evaluation import EvalReport, run_experiment, score_predictions
from .grounding import LexicalGrounder, LlmGrounder, ground_deck
from .ingest import open_deck
from .interchange import (
    ALL_VARIANTS,
    build_searchable_data,
    read_ground_truth,
    read_predictions,
    read_searchable,
    read_slides,
    write_predictions,
    write_searchable,
    write_slides,
    write_text_atomic,
)
from .llm import ENV_API_KEY, LlmClient, ScriptedResponder
from .model import GroundingResult, SlideUnit
from .render import (
    assign_default_effects,
    conduct_slide,
    find_slide_images,
    muxer_command,
    rasterize_slides,
    read_plan,
    render_plans,
    write_plan,
)

log = logging.getLogger("s2sg")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2, 3


def deck_stem(path: Path) -> str:
    name = path.name
    for suffix in (".slides.json", ".pptx", ".json"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def output_path(args, kind: str) -> Path:
    deck = Path(args.deck)
    folder = Path(args.out_dir) if args.out_dir else deck.parent
    folder.mkdir(parents=True, exist_ok=True)
    return folder / f"{deck_stem(deck)}.{kind}.json"


def load_units(path: str | Path) -> list[SlideUnit]:
    path = Path(path)
    if path.name.endswith(".json"):
        return read_slides(path)
    _, units = open_deck(path)
    return units


def _flags(args) -> dict:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return {
        "grounding": {
            "variant": get("variant"),
            "theta": get("theta"),
            "exclude_titles": True if get("exclude_titles") else None,
            "model_name": get("model"),
        },
        "render": {
            "fps": get("fps"),
            "resolution": get("resolution"),
            "avatar": get("avatar"),
            "wpm": get("wpm"),
            "min_clip": get("min_clip"),
            "rasterizer": get("rasterizer"),
        },
    }


def make_responder(args, config: CliConfig):
    if args.grounder == "scripted":
        if not args.fixture:
            raise ConfigError("--grounder scripted needs --fixture <file>")
        return ScriptedResponder.from_file(args.fixture)
    if not config.api_key:
        raise CredentialError(f"--grounder llm needs a credential; export {ENV_API_KEY}=<key>")
    if not config["llm"]["endpoint"]:
        raise ConfigError("--grounder llm needs an endpoint; set S2SG_LLM_ENDPOINT or llm.endpoint in --config")
    return LlmClient(config.llm(Path(args.audit) if args.audit else None))


def make_grounder(args, config: CliConfig):
    if args.grounder == "lexical":
        return LexicalGrounder(float(config["grounding"]["theta"]))
    return LlmGrounder(make_responder(args, config), config.grounding())


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args, config: CliConfig) -> int:
    units = load_units(args.deck)
    variant = config.grounding().variant
    slides_path = output_path(args, "slides")
    write_slides(slides_path, units, variant)
    searchable = {u.slide_number: build_searchable_data(u) for u in units}
    searchable_path = output_path(args, "searchable")
    write_searchable(searchable_path, searchable)
    print(f"{len(units)} slides -> {slides_path}, {searchable_path}")
    return EXIT_OK


def cmd_ground(args, config: CliConfig) -> int:
    units = load_units(args.deck)
    grounder = make_grounder(args, config)
    deck = ground_deck(units, grounder, config.grounding(), int(config["grounding"]["max_workers"]))
    path = output_path(args, "pred")
    write_predictions(path, deck.results, deck.failures)
    for f in deck.failures:
        print(f"slide {f.slide_number} failed: {f.reason}", file=sys.stderr)
    print(f"{len(deck.results)} slides grounded -> {path}")
    return EXIT_OK


def cmd_eval(args, config: CliConfig) -> int:
    units = load_units(args.deck)
    truth = read_ground_truth(args.truth, units)
    if args.pred:
        results, failures = read_predictions(args.pred)
        variant = config.grounding().variant
        report = EvalReport(annotator=truth.annotator)
        report.variants[variant.name] = score_predictions(units, truth, results, failures, variant)
    else:
        grounder = make_grounder(args, config)
        variants = ALL_VARIANTS if args.all_variants else (config.grounding().variant,)
        report = run_experiment(
            units, truth, grounder, variants, config.grounding(), int(config["grounding"]["max_workers"])
        )
    path = output_path(args, "report")
    write_text_atomic(path, report.to_json())
    print(report.format_table(args.digits))
    for name, vr in report.variants.items():
        for f in vr.excluded:
            print(f"{name}: slide {f.slide_number} excluded ({f.reason})", file=sys.stderr)
    print(f"report -> {path}")
    return EXIT_OK


def cmd_plan(args, config: CliConfig) -> int:
    units = load_units(args.deck)
    policy = config.effect_policy()
    clips = []
    if args.conduct:
        responder = make_responder(args, config)
        for unit in units:
            searchable = build_searchable_data(unit)
            parsed = conduct_slide(unit, responder, config.grounding(), policy, [o.shape_id for o in searchable.objects])
            clips += parsed.clips
    else:
        if not args.pred:
            raise ConfigError("plan needs --pred <file> (or --conduct with a grounder)")
        results, _ = read_predictions(args.pred)
        for unit in units:
            g = results.get(unit.slide_number)
            if g is None:
                log.warning("slide %d: no prediction; clips have no effects", unit.slide_number)
                g = GroundingResult.empty(unit.object_order(), len(unit.sentences))
            clips += assign_default_effects(g, unit.sentences, unit.slide_number, policy)
    path = output_path(args, "plan")
    write_plan(path, clips)
    print(f"{len(clips)} clips -> {path}")
    return EXIT_OK


def cmd_render(args, config: CliConfig) -> int:
    settings = config.render_settings()
    plans = read_plan(args.plan)
    if args.searchable:
        searchable = read_searchable(args.searchable)
    else:
        units = load_units(args.deck)
        searchable = {u.slide_number: build_searchable_data(u) for u in units}
    out_dir = Path(args.out_dir or Path(args.deck).parent / f"{deck_stem(Path(args.deck))}.frames")
    rasterizer = config["render"]["rasterizer"]
    if args.slides_dir:
        images = find_slide_images(args.slides_dir)
    elif rasterizer:
        count = max((p.slide_number for p in plans), default=0)
        images = rasterize_slides(args.deck, count, out_dir / "slides", rasterizer, settings.resolution)
    else:
        images = {}
    manifest = render_plans(plans, images, searchable, out_dir, settings)
    if args.mux_command:
        write_text_atomic(out_dir / args.mux_command, muxer_command(manifest))
    total = sum(c.frame_count for c in manifest.clips)
    print(f"{len(manifest.clips)} clips, {total} frames -> {out_dir / 'manifest.json'}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="s2sg", description="Ground narration scripts to slide text objects.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out-dir", help="folder for output files (default: next to the deck)")
    common.add_argument("-v", "--verbose", action="store_true")

    def grounding_flags(p, default_grounder="lexical"):
        p.add_argument("--variant", choices=[v.name for v in ALL_VARIANTS])
        p.add_argument("--grounder", choices=["llm", "lexical", "scripted"], default=default_grounder)
        p.add_argument("--theta", type=float, help="lexical overlap threshold")
        p.add_argument("--fixture", help="scripted-responder fixture file")
        p.add_argument("--exclude-titles", action="store_true")
        p.add_argument("--model", help="model name for --grounder llm")
        p.add_argument("--audit", help="append LLM call records to this JSON-lines file")

    def render_flags(p):
        p.add_argument("--fps", type=float)
        p.add_argument("--resolution", help="WIDTHxHEIGHT")
        p.add_argument("--avatar", choices=["on", "off"])

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse a deck into slide and searchable data")
    p.add_argument("deck")
    p.add_argument("--variant", choices=[v.name for v in ALL_VARIANTS])
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("ground", parents=[common], help="write <deck>.pred.json")
    p.add_argument("deck", help=".pptx deck or <deck>.slides.json")
    grounding_flags(p)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("eval", parents=[common], help="score groundings against ground truth")
    p.add_argument("deck")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", help="score an existing predictions file instead of grounding")
    p.add_argument("--all-variants", action="store_true", help="run all four data-format variants")
    p.add_argument("--digits", type=int, default=4, help="decimals in the printed table")
    grounding_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan", parents=[common], help="write <deck>.plan.json")
    p.add_argument("deck")
    p.add_argument("--pred", help="predictions file for the default framing policy")
    p.add_argument("--conduct", action="store_true", help="ask the model for effect commands")
    p.add_argument("--wpm", type=float)
    p.add_argument("--min-clip", type=float)
    grounding_flags(p, default_grounder="scripted")
    render_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("render", parents=[common], help="rasterize clip frames and manifest.json")
    p.add_argument("deck")
    p.add_argument("--plan", required=True)
    p.add_argument("--searchable", help="<deck>.searchable.json (default: rebuilt from the deck)")
    p.add_argument("--slides-dir", help="folder of slide_<n>.png images")
    p.add_argument("--rasterizer", help="command template producing slide PNGs")
    p.add_argument("--mux-command", help="also write an ffmpeg concat command to this file name")
    render_flags(p)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config, flags=_flags(args))
        return args.func(args, config)
    except (ConfigError, CredentialError) as exc:
        print(f"s2sg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, ParseError) as exc:
        print(f"s2sg: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (S2SGError, OSError) as exc:
        print(f"s2sg: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
