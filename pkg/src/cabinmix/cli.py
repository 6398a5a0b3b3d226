"""Command-line front end: synthesis, metrics, validation, calibration,
fixture generation and steering-vector export.

Exit codes: 0 success, 1 validation findings, 2 usage error, 3 I/O error.
The dataset root comes from --dataset or the CAVE_DATASET_ROOT environment
variable.  All commands are deterministic given their flags and --seed
(default 1234).
"""

from __future__ import annotations

import json
import math
import sys
import warnings
from pathlib import Path

import click
import numpy as np

from . import array as array_mod
from . import metrics as metrics_mod
from . import scene as scene_mod
from .audio import read_wav, write_wav
from .dataset import dump_manifest, estimate_sensitivity, load_dataset, validate
from .errors import ClippingWarning, DatasetError, ParameterError
from .fixture import generate_fixture

_dataset_option = click.option(
    "--dataset",
    "dataset_root",
    envvar="CAVE_DATASET_ROOT",
    required=True,
    type=click.Path(exists=False),
    help="Dataset root (or set CAVE_DATASET_ROOT).",
)


@click.group()
def cli():
    """Synthesize calibrated in-car microphone signals and related reports."""


def _parse_channels(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError as exc:
        raise ParameterError(f"bad channel list {text!r}: {exc}") from exc


def _spec_from_flags(spec_file, base_doc_overrides) -> scene_mod.SceneSpec:
    doc: dict = {}
    base_dir = Path.cwd()
    if spec_file is not None:
        spec_path = Path(spec_file)
        doc = json.loads(spec_path.read_text(encoding="utf-8"))
        base_dir = spec_path.parent
    for key, value in base_doc_overrides.items():
        if value is not None:
            doc[key] = value
    return scene_mod.spec_from_json(doc, base_dir)


def _emit_clipping(caught) -> None:
    for w in caught:
        if isinstance(w.message, ClippingWarning):
            click.echo(f"warning: {w.message}", err=True)


def _synthesize_one(index, spec, out_path: Path, emit_components: bool) -> None:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ClippingWarning)
        result = scene_mod.synthesize(index, spec)
    _emit_clipping(caught)
    write_wav(out_path, result.y, "pcm24")
    # sidecar appends to the full name so batch mode never clobbers spec files
    scene_mod.write_sidecar(out_path.with_name(out_path.name + ".json"), spec, result)
    if emit_components:
        parts = {
            "S": result.speech,
            "A": result.audio,
            "N": result.noise,
            "V": result.ventilation,
        }
        for tag, buf in parts.items():
            write_wav(out_path.with_name(f"{out_path.stem}_{tag}.wav"), buf, "pcm24")
    click.echo(
        f"wrote {out_path} ({result.y.channel_count} ch, {result.y.length} samples "
        f"@ {result.y.sample_rate} Hz)"
    )


@cli.command()
@_dataset_option
@click.option("--spec", "spec_file", type=click.Path(exists=True), help="Scene spec JSON; flags override its fields.")
@click.option("--car", type=str)
@click.option("--setup", "setup_name", type=str)
@click.option("--p", "position", type=str, help="Speech source position.")
@click.option("--ls", type=float, help="Speech effort in dBA.")
@click.option("--w", type=int, help="Window state 0..3.")
@click.option("--x", "x_path", type=click.Path(), help="Dry speech WAV.")
@click.option("--la", type=float, help="Audio-program level in dBA.")
@click.option("--z", "z_path", type=click.Path(), help="Audio-program WAV.")
@click.option("--speed", type=int, help="Driving speed in km/h.")
@click.option("--vent", type=int, help="Ventilation level 1..3.")
@click.option("--channels", type=str, help="Comma-separated channel subset.")
@click.option("--rate", "target_rate", type=int, help="Target sample rate (default 16000).")
@click.option("--seed", type=int, help=f"Noise-offset seed (default {scene_mod.DEFAULT_SEED}).")
@click.option("--out", "out_path", type=click.Path(), default="scene.wav", show_default=True)
@click.option("--emit-components", is_flag=True, help="Also write S/A/N/V WAVs.")
@click.option("--batch", "batch_dir", type=click.Path(exists=True), help="Synthesize every *.json spec in a directory.")
def synth(
    dataset_root,
    spec_file,
    car,
    setup_name,
    position,
    ls,
    w,
    x_path,
    la,
    z_path,
    speed,
    vent,
    channels,
    target_rate,
    seed,
    out_path,
    emit_components,
    batch_dir,
):
    """Synthesize the microphone signals for a scenario (24-bit WAV + JSON sidecar)."""
    index = load_dataset(dataset_root)
    if batch_dir is not None:
        batch = sorted(Path(batch_dir).glob("*.json"))
        if not batch:
            raise ParameterError(f"no *.json scene specs in {batch_dir}")
        for spec_path in batch:
            spec = _spec_from_flags(spec_path, {})
            _synthesize_one(index, spec, spec_path.with_suffix(".wav"), emit_components)
        return

    overrides = {
        "car": car,
        "setup": setup_name,
        "p": position,
        "ls": ls,
        "w": w,
        "x": str(Path(x_path).resolve()) if x_path else None,
        "la": la,
        "z": str(Path(z_path).resolve()) if z_path else None,
        "speed": speed,
        "vent": vent,
        "channels": _parse_channels(channels),
        "target_rate": target_rate,
        "seed": seed,
    }
    if spec_file is None:
        for required in ("car", "setup", "w", "x"):
            if overrides[required] is None:
                raise ParameterError(f"missing required scene parameter: --{required}")
        if overrides["seed"] is None:
            overrides["seed"] = scene_mod.DEFAULT_SEED
    spec = _spec_from_flags(spec_file, overrides)
    _synthesize_one(index, spec, Path(out_path), emit_components)


def _parse_condition(text: str) -> metrics_mod.Condition:
    fields = {}
    for part in text.split(","):
        if "=" not in part:
            raise ParameterError(f"bad condition component {part!r}; use key=value")
        key, value = part.split("=", 1)
        fields[key.strip()] = int(value)
    w = fields.pop("w", None)
    if w is None:
        raise ParameterError("condition needs w=<window state>")
    speed = fields.pop("speed", None)
    vent = fields.pop("vent", None)
    if fields:
        raise ParameterError(f"unknown condition keys: {sorted(fields)}")
    return metrics_mod.Condition(window_state=w, speed=speed, vent_level=vent)


@cli.command("metrics")
@_dataset_option
@click.option("--car", required=True, type=str)
@click.option("--setup", "setup_name", required=True, type=str)
@click.option("--table", "want_table", is_flag=True, help="Emit the full condition table.")
@click.option("--condition", "condition_text", type=str, help='Single condition, e.g. "speed=70,w=0" or "vent=2,w=1".')
@click.option("--p", "position", type=str, default="driver", show_default=True)
@click.option("--ls", type=float, default=60.0, show_default=True)
@click.option("--channel", type=int, default=None, help="Defaults to the setup's reference channel.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write report here instead of stdout.")
def metrics_cmd(dataset_root, car, setup_name, want_table, condition_text, position, ls, channel, fmt, out_path):
    """Noise level and SNR report in the shape of the condition table."""
    if want_table == (condition_text is not None):
        raise ParameterError("choose exactly one of --table or --condition")
    index = load_dataset(dataset_root)
    if want_table:
        rows = metrics_mod.condition_table(index, car, setup_name, position, ls, channel)
    else:
        condition = _parse_condition(condition_text)
        setup = index.setup(car, setup_name)
        ch = setup.reference_channel if channel is None else channel
        noise = metrics_mod.noise_level(index, car, setup_name, condition, ch)
        speech = metrics_mod.speech_level(
            index, car, setup_name, position, ls, condition.window_state, ch
        )
        rows = [
            metrics_mod.ConditionMetrics(
                speed=condition.speed or 0,
                window_state=condition.window_state,
                vent_level=condition.vent_level,
                noise_dba=noise,
                snr_db=speech - noise,
                speech_dba=speech,
                channel=ch,
            )
        ]
    text = metrics_mod.table_to_csv(rows) if fmt == "csv" else metrics_mod.table_to_json(rows)
    if out_path is None:
        click.echo(text, nl=False)
    else:
        Path(out_path).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out_path}")


@cli.command("validate")
@_dataset_option
@click.pass_context
def validate_cmd(ctx, dataset_root):
    """Check dataset coverage and audio health; exit 1 when findings exist."""
    report = validate(load_dataset(dataset_root))
    for finding in report.findings:
        click.echo(str(finding))
    click.echo(f"{len(report.findings)} findings")
    if not report.ok:
        ctx.exit(1)


@cli.command("calibrate")
@_dataset_option
@click.option("--recording", required=True, type=click.Path(exists=True), help="Pink-noise calibration WAV.")
@click.option("--channel", required=True, type=int)
@click.option("--ref-dba", required=True, type=float, help="Co-located sound-level-meter reading.")
@click.option("--car", required=True, type=str)
@click.option("--setup", "setup_name", required=True, type=str)
def calibrate_cmd(dataset_root, recording, channel, ref_dba, car, setup_name):
    """Estimate one channel's sensitivity offset and update the manifest."""
    index = load_dataset(dataset_root)  # validates structure before rewriting
    setup = index.setup(car, setup_name)
    if not 0 <= channel < setup.channels:
        raise ParameterError(f"channel {channel} out of range for {setup.channels} channels")
    clip = read_wav(recording)
    rec_channel = 0 if clip.channel_count == 1 else channel
    offset = estimate_sensitivity(clip, rec_channel, ref_dba)

    manifest_path = Path(dataset_root) / "manifest.json"
    doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    for car_doc in doc["cars"]:
        if car_doc["id"] == car:
            car_doc["setups"][setup_name]["sensitivity_offsets"][channel] = offset
            break
    dump_manifest(doc, manifest_path)
    click.echo(f"channel {channel} sensitivity offset set to {offset:.6f} dB")


@cli.command("fixture")
@click.option("--root", "root_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=scene_mod.DEFAULT_SEED, show_default=True)
def fixture_cmd(root_path, seed):
    """Generate the synthetic miniature dataset."""
    generate_fixture(root_path, seed)
    click.echo(f"fixture dataset written to {root_path}")


@cli.command("steering")
@click.option("--frequencies", required=True, type=str, help="Comma-separated Hz values.")
@click.option("--azimuths-deg", required=True, type=str, help="Comma-separated degrees.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--dataset", "dataset_root", envvar="CAVE_DATASET_ROOT", type=click.Path(), default=None, help="Take geometry from this dataset instead of an ideal circle.")
@click.option("--car", type=str, default=None)
@click.option("--setup", "setup_name", type=str, default=None)
@click.option("--mics", type=int, default=8, show_default=True)
@click.option("--radius", type=float, default=0.05, show_default=True)
def steering_cmd(frequencies, azimuths_deg, out_path, dataset_root, car, setup_name, mics, radius):
    """Export steering vectors as a binary matrix with a JSON header."""
    freqs = [float(v) for v in frequencies.split(",")]
    azis = [math.radians(float(v)) for v in azimuths_deg.split(",")]
    if car is not None or setup_name is not None:
        if dataset_root is None or car is None or setup_name is None:
            raise ParameterError("--dataset, --car and --setup must be given together")
        setup = load_dataset(dataset_root).setup(car, setup_name)
        if setup.geometry is None:
            raise ParameterError(f"setup {setup_name!r} declares no microphone geometry")
        geom = setup.geometry
    else:
        geom = array_mod.ArrayGeometry.circular(mics, radius=radius)
    matrix = array_mod.steering_vectors(geom, np.asarray(freqs), np.asarray(azis))
    array_mod.write_steering(out_path, matrix)
    click.echo(
        f"wrote {out_path} (shape {matrix.entries.shape[0]}x{matrix.entries.shape[1]}"
        f"x{matrix.entries.shape[2]})"
    )


def main(argv=None) -> int:
    """Entry point with the stable exit-code contract."""
    try:
        rv = cli.main(args=argv, standalone_mode=False)
        if isinstance(rv, int):
            return rv
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 2
    except ParameterError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except DatasetError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
