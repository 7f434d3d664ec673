#!/usr/bin/env python3
"""Regenerate the bundled offline fixtures (scripts, pages, dataset).

Everything this writes is deterministic, so re-running it leaves a clean
git status unless something upstream changed. The golden eval report is NOT
written here; freeze it explicitly with:

    agentrec eval --dataset fixtures/eval/desk.jsonl \
        --outputs fixtures/eval/desk_outputs.json --report-dir /tmp/r
    cp /tmp/r/report.txt fixtures/eval/golden_report.txt
    cp /tmp/r/report.csv fixtures/eval/golden_report.csv
"""

from __future__ import annotations

import json
import struct
import sys
import zlib
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from agentrec.tools import FixtureStore, SearchEntry  # noqa: E402


def png_1x1(rgb=(220, 40, 40)) -> bytes:
    def chunk(kind: bytes, payload: bytes) -> bytes:
        return (
            struct.pack(">I", len(payload))
            + kind
            + payload
            + struct.pack(">I", zlib.crc32(kind + payload) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", 1, 1, 8, 2, 0, 0, 0)
    raw = bytes([0, *rgb])
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(raw))
        + chunk(b"IEND", b"")
    )


def write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def response(text: str) -> dict:
    return {
        "response": {
            "text": text,
            "finish_reason": "stop",
            "usage": {"prompt_tokens": 0, "completion_tokens": 0},
            "latency": 0.01,
        }
    }


def gen_demo_scripts(fixtures: Path) -> None:
    demo = fixtures / "scripts" / "demo"
    write_json(
        demo / "product.json",
        [
            response('ACTION: web_search\nARGS: {"query": "best running shoes", "k": 3}'),
            response(
                "1. Aero Glide 3 — light, well-cushioned daily trainer "
                "[https://shop.example/aero-glide-3]\n"
                "2. Road Runner 2 — durable budget pick "
                "[https://shop.example/road-runner-2]\n"
                "3. Cloud Nine Max — maximum cushioning for long runs "
                "[https://shop.example/cloud-nine-max]"
            ),
        ],
    )
    write_json(
        demo / "multimodal.json",
        [
            response(
                "The photo shows a lightweight road running shoe with a breathable "
                "mesh upper, most likely the Aero Glide 3.\n"
                "FOLLOWUP: What is your budget?"
            ),
        ],
    )
    write_json(
        demo / "market.json",
        [
            response('ACTION: web_search\nARGS: {"query": "running shoe market trends", "k": 2}'),
            response('ACTION: scrape\nARGS: {"url": "https://retail.example/running-trends"}'),
            response(
                "Running shoes with high cushioning keep gaining share, and trail "
                "models are the fastest growing segment this season. Lightweight "
                "mesh uppers and carbon plates appear in most new releases."
            ),
        ],
    )


def gen_tool_fixtures(fixtures: Path) -> None:
    store = FixtureStore(fixtures)
    store.record_search(
        "best running shoes",
        [
            SearchEntry(
                "Best running shoes this year",
                "https://reviews.example/best-running-shoes",
                "Our lab tested 40 pairs; the Aero Glide 3 tops the list.",
            ),
            SearchEntry(
                "Road Runner 2 review",
                "https://reviews.example/road-runner-2",
                "A durable budget trainer that punches above its price.",
            ),
            SearchEntry(
                "Cushioned shoes roundup",
                "https://reviews.example/cushioned-roundup",
                "Cloud Nine Max leads the maximum-cushioning category.",
            ),
        ],
    )
    store.record_search(
        "running shoe market trends",
        [
            SearchEntry(
                "Running shoe market report",
                "https://retail.example/running-trends",
                "Cushioning and trail capability drive this season's growth.",
            ),
            SearchEntry(
                "Footwear industry outlook",
                "https://news.example/footwear-outlook",
                "Analysts expect running footwear to keep outpacing the category.",
            ),
        ],
    )
    store.record_page(
        "https://retail.example/running-trends",
        "<html><head><title>Running shoe trends</title></head><body>"
        "<h1>Running shoe trends</h1>"
        "<p>High-cushion road shoes keep gaining share across retailers.</p>"
        "<p>Trail running models are the fastest growing segment this season.</p>"
        "<ul><li>Lightweight mesh uppers dominate new releases.</li>"
        "<li>Carbon plates moved from racing into daily trainers.</li></ul>"
        "</body></html>",
    )
    (fixtures / "images").mkdir(parents=True, exist_ok=True)
    (fixtures / "images" / "shoe.png").write_bytes(png_1x1())


DESK_RECORDS = [
    # --- product agent -------------------------------------------------------
    {"record_id": "p01", "agent": "product", "prompt": "best running shoes under $150",
     "gold_items": ["Aero Glide 3", "Road Runner 2"], "k": 3},
    {"record_id": "p02", "agent": "product", "prompt": "trail shoes for rocky terrain",
     "gold_items": ["Trail Blazer XT"], "k": 3},
    {"record_id": "p03", "agent": "product", "prompt": "gear for lap swimming",
     "gold_items": ["Aqua Fit Pro", "Swim Star"], "k": 3},
    {"record_id": "p04", "agent": "product", "prompt": "shoes for heavy squats",
     "gold_items": ["Power Lift 5"], "k": 3},
    {"record_id": "p05", "agent": "product", "prompt": "comfortable commuter sneakers",
     "gold_items": ["City Commuter", "Metro Glide"], "k": 3},
    {"record_id": "p06", "agent": "product", "prompt": "waterproof rain jacket for hiking",
     "gold_items": ["Storm Shell Jacket"], "k": 3},
    {"record_id": "p07", "agent": "product", "prompt": "laptop for video editing",
     "gold_items": ["Peak Pro 14", "Summitbook Air"], "k": 3},
    {"record_id": "p08", "agent": "product", "prompt": "noise cancelling headphones for flights",
     "gold_items": ["Quiet Flight 700", "Hush Pro"], "k": 5},
    # --- multimodal agent ----------------------------------------------------
    {"record_id": "v01", "agent": "multimodal", "prompt": "what shoe is in this photo?",
     "image_path": "fixtures/images/shoe.png",
     "gold_items": ["Aero Glide 3"], "k": 3},
    {"record_id": "v02", "agent": "multimodal", "prompt": "find similar jackets to this one",
     "image_path": "fixtures/images/shoe.png",
     "gold_items": ["Storm Shell Jacket", "Rain Guard"], "k": 3},
    {"record_id": "v03", "agent": "multimodal", "prompt": "identify this watch",
     "gold_items": ["Chrono Sport 2"], "k": 3},
    {"record_id": "v04", "agent": "multimodal", "prompt": "what brand is this backpack?",
     "gold_items": ["Summit Pack 30"], "k": 3},
    {"record_id": "v05", "agent": "multimodal", "prompt": "similar sunglasses to the picture",
     "gold_items": ["Shade Runner", "Polar Vue"], "k": 3},
    {"record_id": "v06", "agent": "multimodal", "prompt": "which sneaker model is shown?",
     "gold_items": ["Court Classic 81"], "k": 3},
    # --- market agent --------------------------------------------------------
    {"record_id": "m01", "agent": "market", "prompt": "running shoe trends",
     "reference_summary": "High cushion road shoes keep gaining share while trail "
                          "running models are the fastest growing segment this season."},
    {"record_id": "m02", "agent": "market", "prompt": "smartwatch trends",
     "reference_summary": "Smartwatches with longer battery life and sleep tracking "
                          "dominate new releases as prices continue to fall."},
    {"record_id": "m03", "agent": "market", "prompt": "home coffee trends",
     "reference_summary": "Compact espresso machines and single origin beans are "
                          "driving growth in home coffee spending."},
    {"record_id": "m04", "agent": "market", "prompt": "laptop market trends",
     "reference_summary": "Thin laptops with efficient processors lead sales and "
                          "on device AI features are the main marketing theme."},
    {"record_id": "m05", "agent": "market", "prompt": "winter jacket trends",
     "reference_summary": "Recycled insulation and waterproof shells are the top "
                          "selling points for winter jackets this year."},
    {"record_id": "m06", "agent": "market", "prompt": "wireless earbud trends",
     "reference_summary": "Noise cancelling earbuds with multipoint pairing are "
                          "now standard and battery life keeps improving."},
]

DESK_OUTPUTS = {
    "model_id": "llama3-70b-8192",
    "outputs": {
        "p01": {"recommendations": ["Aero Glide 3", "Cloud Nine Max", "Road Runner 2"]},
        "p02": {"recommendations": ["Summit Seeker", "Trail Blazer XT", "Rock Hopper"]},
        "p03": {"recommendations": ["Aqua Fit Pro", "Swim Star", "Wave Rider"]},
        "p04": {"recommendations": ["Gym Master", "Flex Trainer", "Power Lift 5"]},
        "p05": {"recommendations": ["City Commuter", "Metro Glide", "Urban Step"]},
        "p06": {"recommendations": ["Rain Guard", "Storm Shell Jacket", "Dry Tech"]},
        "p07": {"recommendations": ["Peak Pro 14", "Budget Book", "Office Mate"]},
        "p08": {"recommendations": ["Quiet Flight 700", "Bass Boost X", "Hush Pro", "Studio Can"]},
        "v01": {"recommendations": ["Aero Glide 3", "Road Runner 2", "Cloud Nine Max"]},
        "v02": {"recommendations": ["Dry Tech", "Rain Guard", "Storm Shell Jacket"]},
        "v03": {"recommendations": ["Chrono Sport 2", "Time Keeper"]},
        "v04": {"recommendations": ["Day Hiker 22", "Summit Pack 30", "Trail Mate"]},
        "v05": {"recommendations": ["Shade Runner", "Polar Vue", "Sun Dodger"]},
        "v06": {"recommendations": ["Street Classic", "Retro Court", "Court King"]},
        "m01": {"summary": "High cushion road shoes keep gaining share and trail "
                           "running models are growing quickly this season."},
        "m02": {"summary": "New smartwatches focus on longer battery life and better "
                           "sleep tracking while average prices fall."},
        "m03": {"summary": "Espresso machines for small kitchens and single origin "
                           "beans lead home coffee growth."},
        "m04": {"summary": "Sales favor thin laptops with efficient processors and "
                           "vendors market on device AI features heavily."},
        "m05": {"summary": "Jackets with recycled insulation and waterproof shells "
                           "sell best this winter."},
        "m06": {"summary": "Most new earbuds ship with noise cancelling and "
                           "multipoint pairing and batteries keep improving."},
    },
}


def gen_eval_fixtures(fixtures: Path) -> None:
    eval_dir = fixtures / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    with (eval_dir / "desk.jsonl").open("w", encoding="utf-8") as fh:
        for record in DESK_RECORDS:
            fh.write(json.dumps(record) + "\n")
    write_json(eval_dir / "desk_outputs.json", DESK_OUTPUTS)


def main() -> None:
    fixtures = ROOT / "fixtures"
    gen_tool_fixtures(fixtures)
    gen_demo_scripts(fixtures)
    gen_eval_fixtures(fixtures)
    print(f"fixtures written under {fixtures}")


if __name__ == "__main__":
    main()
