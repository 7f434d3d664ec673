"""The agentrec command line.

    agentrec eval --dataset D --outputs T [--report-dir R]
    agentrec eval --dataset D --live --model M --config C
    agentrec eval report --csv out.csv [--report-dir R]
    agentrec fixtures record --search "query" [--k 5] | --page URL
    agentrec fixtures ls
    agentrec profiles export [--out FILE]
    agentrec serve [--addr HOST:PORT] [--offline] [--config C]

Exit codes for eval: 0 success, 2 dataset schema errors, 3 missing outputs.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import harness
from .agents import default_agents
from .config import build_provider, build_service_state, load_app_config
from .domain import ImageAttachment
from .gateway import requests_transport
from .profiles import ProfileStore
from .runtime import AgentTask, MARKET_AGENT, MULTIMODAL_AGENT, PRODUCT_AGENT, STATUS_OK, run_agent
from .tools import FixtureStore, SearchEntry, WebTools, default_registry

EXIT_SCHEMA_ERROR = 2
EXIT_MISSING_OUTPUT = 3


@click.group()
def main():
    """Multi-agent product recommendation engine."""


@main.group(invoke_without_command=True)
@click.option("--dataset", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--outputs", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--report-dir", type=click.Path(file_okay=False), default="reports", show_default=True)
@click.option("--live", is_flag=True, help="Run agents over the dataset instead of replaying outputs.")
@click.option("--model", default=None, help="Model id for --live runs.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.pass_context
def eval(ctx, dataset, outputs, report_dir, live, model, config_path):
    """Evaluate agent outputs against a dataset and write the report."""
    if ctx.invoked_subcommand is not None:
        return
    if dataset is None:
        raise click.UsageError("--dataset is required")
    try:
        if live:
            if config_path is None:
                raise click.UsageError("--live requires --config")
            rows, score = _live_eval(dataset, config_path, model)
        else:
            if outputs is None:
                raise click.UsageError("--outputs is required unless --live")
            rows, score = harness.run_eval(dataset, outputs)
    except (harness.ParseError, harness.SchemaViolation, harness.DuplicateRecord) as e:
        click.echo(f"dataset error: {e}", err=True)
        sys.exit(EXIT_SCHEMA_ERROR)
    except harness.MissingOutput as e:
        click.echo(f"missing output for record: {e}", err=True)
        sys.exit(EXIT_MISSING_OUTPUT)
    paths = harness.write_report(rows, score, report_dir)
    click.echo(paths["text"].read_text(encoding="utf-8"), nl=False)
    click.echo(f"\nreport written to {paths['text']} / {paths['csv']}")


@eval.command("report")
@click.option("--csv", "csv_out", type=click.Path(dir_okay=False), default=None)
@click.option("--report-dir", type=click.Path(file_okay=False), default="reports", show_default=True)
def eval_report(csv_out, report_dir):
    """Re-render the latest evaluation report (optionally exporting CSV)."""
    latest = Path(report_dir) / "latest.json"
    if not latest.exists():
        click.echo("no report found; run `agentrec eval` first", err=True)
        sys.exit(1)
    doc = json.loads(latest.read_text(encoding="utf-8"))
    rows = [harness.MetricRow.from_dict(r) for r in doc["rows"]]
    score = harness.SystemScore(means=doc["system"])
    text, csv_text = harness.render_report(rows, score)
    click.echo(text, nl=False)
    if csv_out:
        Path(csv_out).write_text(csv_text, encoding="utf-8")
        click.echo(f"\ncsv written to {csv_out}")


def _live_eval(dataset_path, config_path, model):
    """Run each record through its agent, then evaluate the collected outputs."""
    records = harness.load_dataset(dataset_path)
    config = load_app_config(config_path)
    model_id = model or config.model_id
    offline = all(p.kind == "scripted" for p in config.providers.values())
    webtools = WebTools(
        fixtures=FixtureStore(config.path(config.fixtures_dir)),
        transport=None if offline else requests_transport,
    )
    registry = default_registry(webtools)
    agents = {
        a.agent_id: a
        for a in default_agents(model_id=model_id, max_iterations=config.max_iterations)
    }
    outputs = {}
    for record in records:
        agent = agents[record.agent]
        provider = build_provider(config.providers[record.agent], config.base_dir)
        attachments = ()
        if record.agent == MULTIMODAL_AGENT and record.image_path:
            image_file = config.path(record.image_path)
            attachments = (
                ImageAttachment(
                    bytes=image_file.read_bytes(),
                    media_type=image_file.suffix.lstrip(".").replace("jpg", "jpeg"),
                ),
            )
        task = AgentTask(
            task_id=f"eval-{record.record_id}",
            agent_id=record.agent,
            instruction=record.prompt,
            attachments=attachments,
        )
        output = run_agent(agent, task, provider, registry)
        if record.agent == MARKET_AGENT:
            outputs[record.record_id] = {"summary": output.answer if output.status == STATUS_OK else ""}
        else:
            from .agents import parse_recommendations

            parsed = parse_recommendations(output.answer, agent_id=record.agent)
            outputs[record.record_id] = {
                "recommendations": [r.product.name for r in parsed.items]
            }
    rows = []
    for agent_id in (PRODUCT_AGENT, MULTIMODAL_AGENT, MARKET_AGENT):
        agent_records = [r for r in records if r.agent == agent_id]
        if agent_records:
            rows.append(harness.evaluate_agent(agent_records, outputs, model_id))
    return rows, harness.overall_mean(rows)


@main.group()
def fixtures():
    """Record and inspect offline fixtures."""


@fixtures.command("record")
@click.option("--fixtures-dir", type=click.Path(file_okay=False), default="fixtures", show_default=True)
@click.option("--search", "search_query", default=None, help="Capture a live web search.")
@click.option("--k", default=5, show_default=True)
@click.option("--page", "page_url", default=None, help="Capture a live page body.")
@click.option("--search-endpoint", default=None, help="Search backend URL for --search.")
def fixtures_record(fixtures_dir, search_query, k, page_url, search_endpoint):
    """Capture live search results or page bodies into the fixture store."""
    store = FixtureStore(fixtures_dir)
    if search_query:
        live = WebTools(transport=requests_transport, search_endpoint=search_endpoint)
        results = live.web_search(search_query, k)
        path = store.record_search(search_query, list(results.entries))
        click.echo(f"recorded {len(results.entries)} search entries to {path}")
    elif page_url:
        status, body = requests_transport("GET", page_url, {}, None, 30.0)
        if status >= 400:
            raise click.ClickException(f"{page_url} returned {status}")
        path = store.record_page(page_url, body)
        click.echo(f"recorded page body to {path}")
    else:
        raise click.UsageError("provide --search or --page")


@fixtures.command("ls")
@click.option("--fixtures-dir", type=click.Path(file_okay=False), default="fixtures", show_default=True)
def fixtures_ls(fixtures_dir):
    """List recorded fixtures (digest -> key)."""
    index = FixtureStore(fixtures_dir).index()
    for section in ("search", "pages"):
        click.echo(f"{section}:")
        for digest, key in sorted(index.get(section, {}).items()):
            click.echo(f"  {digest[:16]}  {key}")


@main.group()
def profiles():
    """Inspect stored user profiles."""


@profiles.command("export")
@click.option("--profiles-dir", type=click.Path(file_okay=False), default="profiles", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def profiles_export(profiles_dir, out):
    """Dump all profiles as a JSON array."""
    data = json.dumps(ProfileStore(profiles_dir).export_all(), indent=2) + "\n"
    if out:
        Path(out).write_text(data, encoding="utf-8")
        click.echo(f"profiles written to {out}")
    else:
        click.echo(data, nl=False)


@main.command()
@click.option("--addr", envvar="AGENTREC_ADDR", default="127.0.0.1:8080", show_default=True)
@click.option("--offline/--online", envvar="AGENTREC_OFFLINE", default=True, show_default=True)
@click.option(
    "--config",
    "config_path",
    envvar="AGENTREC_CONFIG",
    type=click.Path(exists=True, dir_okay=False),
    required=True,
)
def serve(addr, offline, config_path):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    state = build_service_state(load_app_config(config_path), offline=offline)
    host, _, port = addr.partition(":")
    uvicorn.run(create_app(state), host=host or "127.0.0.1", port=int(port or 8080))


if __name__ == "__main__":
    main()
