"""Command-line entry points: serve, segment, index, mesh, eval, demo."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import click

from . import meshing
from .client import (
    InProcessTransport,
    NetworkTransport,
    ScriptedClient,
    load_script,
    run_script,
)
from .errors import VoxloopError
from .metrics import TrialRecord, composite_scores, points_per_clear
from .phantoms import demo_volume
from .profiles import ProfileSet, TargetProfile, load_profiles, save_profiles
from .retrieval import (
    HistogramEmbedding,
    build_index,
    index_volume_slices,
    load_index,
    save_index,
)
from .service import ServiceConfig, create_app
from .session import SessionConfig
from .volume import load_mask, load_volume, save_mask, save_volume


@click.group()
def main():
    """Interactive 3D segmentation service and tools."""


def _service_config(
    profiles_path,
    data_dir,
    volumes_dir,
    index_path,
    guidance_endpoint,
    backend_endpoint,
    static_dir,
    context_threshold,
    enable_sessions=True,
    enable_mesh=True,
) -> ServiceConfig:
    profiles = load_profiles(profiles_path)
    index = None
    assets_dir = None
    if index_path:
        index = load_index(index_path)
        assets_dir = Path(index_path)
    return ServiceConfig(
        profiles=profiles,
        data_dir=Path(data_dir),
        volumes_dir=Path(volumes_dir) if volumes_dir else None,
        index=index,
        assets_dir=assets_dir,
        backend_endpoint=backend_endpoint,
        guidance_endpoint=guidance_endpoint,
        session_defaults=SessionConfig(default_context_threshold=context_threshold),
        static_dir=Path(static_dir) if static_dir else None,
        enable_sessions=enable_sessions,
        enable_mesh=enable_mesh,
    )


def _common_service_options(fn):
    options = [
        click.option("--profiles", "profiles_path", required=True, type=click.Path(exists=True), help="Target profile JSON."),
        click.option("--data-dir", envvar="VOXLOOP_DATA_DIR", default="voxloop-data", show_default=True, help="Session artifact root."),
        click.option("--volumes-dir", default=None, help="Base directory for relative volume refs."),
        click.option("--index", "index_path", default=None, type=click.Path(exists=True), help="Reference index directory."),
        click.option("--guidance-endpoint", default=None, help="External guidance HTTP endpoint."),
        click.option("--backend-endpoint", default=None, help="External segmentation HTTP endpoint."),
        click.option("--context-threshold", default=500.0, show_default=True, help="Default context surface threshold (500 suits MR brain, 150 CT)."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@main.command()
@_common_service_options
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", envvar="VOXLOOP_PORT", default=8765, show_default=True, type=int)
@click.option("--static-dir", default=None, help="Frontend bundle to serve at /app.")
@click.option("--sessions/--no-sessions", "enable_sessions", default=True, help="Host the interactive session endpoint.")
@click.option("--mesh/--no-mesh", "enable_mesh", default=True, help="Host the mesh export endpoint.")
def serve(profiles_path, data_dir, volumes_dir, index_path, guidance_endpoint, backend_endpoint, context_threshold, host, port, static_dir, enable_sessions, enable_mesh):
    """Run the WebSocket + HTTP service."""
    import uvicorn

    app = create_app(
        _service_config(
            profiles_path,
            data_dir,
            volumes_dir,
            index_path,
            guidance_endpoint,
            backend_endpoint,
            static_dir,
            context_threshold,
            enable_sessions,
            enable_mesh,
        )
    )
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--script", "script_path", required=True, type=click.Path(exists=True), help="JSON command script.")
@click.option("--url", default=None, help="WebSocket URL of a running server; omitted = in-process.")
@click.option("--profiles", "profiles_path", default=None, type=click.Path(exists=True))
@click.option("--data-dir", envvar="VOXLOOP_DATA_DIR", default="voxloop-data", show_default=True)
@click.option("--volumes-dir", default=None)
@click.option("--index", "index_path", default=None, type=click.Path(exists=True))
@click.option("--context-threshold", default=500.0, show_default=True)
def segment(script_path, url, profiles_path, data_dir, volumes_dir, index_path, context_threshold):
    """Drive a scripted headless session and print each reply."""
    commands = load_script(script_path)
    if url:
        transport = NetworkTransport(url)
    else:
        if not profiles_path:
            raise click.UsageError("--profiles is required unless --url points at a server")
        app = create_app(
            _service_config(
                profiles_path, data_dir, volumes_dir, index_path, None, None, None, context_threshold
            )
        )
        transport = InProcessTransport(app)
    failures = 0
    with ScriptedClient(transport) as client:
        def show_update(update):
            click.echo(f"  update slice={update['slice_index']} ordinal={update['ordinal']}")

        for command, reply in zip(commands, run_script(client, commands, on_update=show_update)):
            kind = reply["kind"]
            if kind == "error":
                failures += 1
                click.echo(f"{command['kind']}: ERROR {reply['payload']['code']}: {reply['payload']['message']}")
            else:
                summary = {k: v for k, v in reply["payload"].items() if not isinstance(v, (dict, list))}
                click.echo(f"{command['kind']}: ok {json.dumps(summary, sort_keys=True)}")
    if failures:
        raise SystemExit(1)


@main.group()
def index():
    """Reference index tools."""


@index.command("build")
@click.option("--volumes", "volumes_dir", required=True, type=click.Path(exists=True), help="Directory holding the listed volumes.")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True), help="JSON list: {volume, patient, positive: [k...], negative: [k...]}.")
@click.option("--out", "out_dir", required=True, help="Index directory to write.")
@click.option("--thumbnails/--no-thumbnails", default=True, show_default=True)
def index_build(volumes_dir, labels_path, out_dir, thumbnails):
    """Embed labeled slices into a searchable reference index."""
    entries = json.loads(Path(labels_path).read_text(encoding="utf-8"))
    provider = HistogramEmbedding()
    out = Path(out_dir)
    records = []
    for entry in entries:
        volume = load_volume(Path(volumes_dir) / entry["volume"])
        records.extend(
            index_volume_slices(
                volume,
                entry["patient"],
                entry.get("positive", []),
                entry.get("negative", []),
                provider,
                thumbnails_dir=out / "thumbnails" if thumbnails else None,
                source_tag=Path(entry["volume"]).stem,
            )
        )
    ref_index = build_index(records)
    save_index(ref_index, out)
    click.echo(f"indexed {len(records)} slices -> {out}")


@main.command()
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True))
@click.option("--volume", "volume_path", default=None, type=click.Path(exists=True), help="Source volume; enables spacing and the context surface.")
@click.option("--out", "out_dir", required=True)
@click.option("--context-threshold", default=None, type=float, help="Add a context surface at this intensity.")
def mesh(mask_path, volume_path, out_dir, context_threshold):
    """Export OBJ surfaces from a saved mask."""
    mask = load_mask(mask_path)
    spacing = (1.0, 1.0, 1.0)
    volume = None
    if volume_path:
        volume = load_volume(volume_path)
        spacing = volume.spacing
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lesion = meshing.scale_mesh(meshing.mask_to_mesh(mask), spacing)
    meshing.write_obj(lesion, out / "lesion.obj")
    click.echo(f"lesion.obj: volume {meshing.signed_volume(lesion):.2f} mm^3, watertight={not lesion.is_empty and meshing.is_watertight(lesion)}")
    if volume is not None and context_threshold is not None:
        context = meshing.context_surface(volume, context_threshold)
        if context.is_empty:
            click.echo("context surface: no crossing at that threshold, skipped")
        else:
            meshing.write_obj(context, out / "context.obj")
            click.echo(f"context.obj: volume {meshing.signed_volume(context):.2f} mm^3")


@main.command("eval")
@click.option("--trials", "trials_path", required=True, type=click.Path(exists=True), help="Trial CSV as written by log_trial.")
@click.option("--out", "out_path", default=None, help="Write the full result as JSON.")
def eval_trials(trials_path, out_path):
    """Score logged trials: per-trial composites and per-paradigm summaries."""
    records = []
    with open(trials_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(
                TrialRecord(
                    trial_id=row["trial_id"],
                    paradigm=row["paradigm"],
                    accuracy=float(row["accuracy"]),
                    tlx_total=float(row["tlx_total"]),
                    completion_time=float(row["time"]),
                    confirmed_points=int(row.get("confirmed") or 0),
                    clear_events=int(row.get("clears") or 0),
                )
            )
    try:
        result = composite_scores(records)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    click.echo("trial composites (accuracy up, load and time down):")
    for record in records:
        ppc = points_per_clear(record.confirmed_points, record.clear_events)
        click.echo(
            f"  {record.trial_id} [{record.paradigm}] composite={result.composites[record.trial_id]:+.4f} points_per_clear={ppc:.2f}"
        )
    click.echo("paradigm summary:")
    for paradigm, stats in sorted(result.paradigm_summary.items()):
        click.echo(f"  {paradigm}: mean={stats['mean']:+.4f} std={stats['std']:.4f} n={stats['n']}")
    if out_path:
        doc = {
            "composites": result.composites,
            "paradigm_summary": result.paradigm_summary,
        }
        Path(out_path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        click.echo(f"wrote {out_path}")


@main.command()
@click.option("--out", "out_dir", default="demo", show_default=True)
def demo(out_dir):
    """Generate a phantom volume, profiles, index, and sample script."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    volume, truth = demo_volume()
    save_volume(volume, out / "demo-head.nii.gz")
    save_mask(truth, out / "demo-truth.nii.gz", spacing=volume.spacing)
    profiles = ProfileSet(
        [
            TargetProfile(
                name="brain tumor",
                synonyms=("brain lesion", "the tumor"),
                intensity_range=(250.0, 350.0),
                min_area=4,
                grow_tolerance=60.0,
            )
        ]
    )
    save_profiles(profiles, out / "profiles.json")

    lesion_slices = [int(k) for k in range(truth.dims[2]) if truth.bits[:, :, k].any()]
    clean_slices = [int(k) for k in range(truth.dims[2]) if not truth.bits[:, :, k].any()]
    records = index_volume_slices(
        volume,
        "demo-patient",
        lesion_slices,
        clean_slices[: len(lesion_slices)],
        HistogramEmbedding(),
        thumbnails_dir=out / "index" / "thumbnails",
        source_tag="demo-head",
    )
    save_index(build_index(records), out / "index")

    script = {
        "commands": [
            {"kind": "open_session", "payload": {"volume_ref": "demo-head.nii.gz"}},
            {"kind": "navigate", "payload": {"slice_index": lesion_slices[len(lesion_slices) // 2]}},
            {"kind": "submit_command", "payload": {"text": "show me the brain tumor"}},
            {"kind": "confirm_command", "payload": {}},
            {"kind": "propagate", "payload": {}},
            {"kind": "complete", "payload": {"confirm": False}},
            {"kind": "complete", "payload": {"confirm": True}},
            {"kind": "request_mesh", "payload": {"context_threshold": 500}},
        ]
    }
    (out / "script.json").write_text(json.dumps(script, indent=2) + "\n", encoding="utf-8")
    click.echo(f"demo assets in {out}/")
    click.echo(
        f"try: voxloop segment --script {out}/script.json --profiles {out}/profiles.json "
        f"--index {out}/index --volumes-dir {out} --data-dir {out}/sessions"
    )


if __name__ == "__main__":
    main()
