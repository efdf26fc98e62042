"""Batch evaluation command line: eval, gt-gen, compare, selfcheck.

Exit codes: 0 success, 1 IO/format/config error, 2 empty or mismatched
input. Reports are written atomically; identical inputs, config and seed
produce byte-identical JSON regardless of the worker count.
"""

from __future__ import annotations

import gc
import multiprocessing
import time
from dataclasses import replace
from pathlib import Path

import click

from . import __version__
from .errors import (
    ConfigError,
    EmptyDatasetError,
    FormatError,
    ObjsalError,
)
from .gtgen import GtGenConfig, render_ground_truth
from .ingest import (
    FrameDescriptor,
    RunConfig,
    load_fixations,
    load_run_config,
    scan_dataset,
)
from .metrics import MetricOptions, MetricReport, evaluate_frame
from .pfm import write_pfm_unit_sum
from .report import (
    build_compare_document,
    build_eval_document,
    markdown_compare_summary,
    markdown_eval_summary,
    serialize_json,
    write_atomic,
)
from .selfcheck import run_selfcheck

PROGRESS_EVERY = 1000


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    raise SystemExit(code)


def _resolve_config(config_path, jobs, things_only, seed) -> RunConfig:
    config = load_run_config(config_path) if config_path else RunConfig()
    if jobs is not None:
        config = replace(config, jobs=jobs)
    if things_only:
        config = replace(config, things_only=True)
    if seed is not None:
        config = replace(config, seed=seed)
    return config


def _config_echo(config: RunConfig) -> dict:
    # jobs is an execution knob, not semantics: reports must be byte-identical
    # across worker counts, so it stays out of the document
    gtgen = config.gtgen
    return {
        "things_only": config.things_only,
        "kld_epsilon": config.kld_epsilon,
        "include_per_segment": config.include_per_segment,
        "accept_label_ids": config.accept_label_ids,
        "seed": config.seed,
        "gtgen": None
        if gtgen is None
        else {
            "pixels_per_degree": gtgen.pixels_per_degree,
            "fixation_window": gtgen.fixation_window,
            "sigma_dva": gtgen.sigma_dva,
            "truncation_radius": gtgen.truncation_radius,
        },
        "loss": config.loss.as_dict(),
    }


def _evaluate_one(task: tuple[FrameDescriptor, RunConfig, MetricOptions]) -> MetricReport:
    descriptor, config, options = task
    return evaluate_frame(descriptor.load(config), options)


def _run_batch(
    descriptors,
    config: RunConfig,
    options: MetricOptions,
) -> list[MetricReport]:
    tasks = [(d, config, options) for d in descriptors]
    total = len(tasks)
    reports: list[MetricReport] = []
    # frame evaluation allocates no reference cycles; pausing the collector
    # avoids full-heap scans while the report list grows
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        if config.jobs <= 1:
            for i, task in enumerate(tasks, start=1):
                reports.append(_evaluate_one(task))
                if i % PROGRESS_EVERY == 0:
                    click.echo(f"processed {i}/{total} frames", err=True)
        else:
            chunksize = max(1, total // (config.jobs * 8))
            with multiprocessing.Pool(config.jobs) as pool:
                for i, result in enumerate(
                    pool.imap(_evaluate_one, tasks, chunksize=chunksize), start=1
                ):
                    reports.append(result)
                    if i % PROGRESS_EVERY == 0:
                        click.echo(f"processed {i}/{total} frames", err=True)
    finally:
        if gc_was_enabled:
            gc.enable()
    return reports


def _output_paths(output: str) -> tuple[Path, Path, Path]:
    out = Path(output)
    if out.suffix == ".json":
        base = out.with_suffix("")
    elif out.suffix == ".md":
        base = out.with_suffix("")
    else:
        base = out
    return base.with_suffix(".json"), base.with_suffix(".md"), base


@click.group()
@click.version_option(__version__, prog_name="objsal")
def main() -> None:
    """Object-aware evaluation of visual attention maps."""


@main.command("eval")
@click.argument("root", type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Run config (TOML or JSON).")
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False), help="Report path; .json and .md siblings are derived from it.")
@click.option("--jobs", type=int, default=None, help="Worker processes (default from config, 1).")
@click.option("--things-only", is_flag=True, help="Restrict osim to countable-object segments.")
@click.option("--seed", type=int, default=None, help="Seed echoed into the report config.")
@click.option("--format", "fmt", type=click.Choice(["json", "md", "both"]), default="both", show_default=True)
@click.option("--figures", is_flag=True, help="Render metric figures (PNG) next to the report.")
def cmd_eval(root, config_path, output, jobs, things_only, seed, fmt, figures) -> None:
    """Evaluate predictions under ROOT against ground truth and write a report."""
    try:
        config = _resolve_config(config_path, jobs, things_only, seed)
        scan = scan_dataset(root, config)
    except EmptyDatasetError as exc:
        _fail(str(exc), 2)
    except (ConfigError, FormatError, OSError) as exc:
        _fail(str(exc), 1)

    started = time.perf_counter()
    try:
        reports = _run_batch(scan.frames, config, config.metric_options())
    except (ObjsalError, OSError) as exc:
        _fail(str(exc), 1)
    wall = time.perf_counter() - started

    document = build_eval_document(reports, _config_echo(config), scan.skipped, __version__)
    json_path, md_path, base = _output_paths(output)
    if fmt in ("json", "both"):
        write_atomic(json_path, serialize_json(document))
    if fmt in ("md", "both"):
        write_atomic(md_path, markdown_eval_summary(document, wall_time_s=wall))
    if figures:
        from .figures import render_eval_figures

        render_eval_figures(document, base)
    click.echo(f"evaluated {len(reports)} frames in {wall:.2f} s", err=True)


@main.command("gt-gen")
@click.argument("fixations_csv", type=click.Path(dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--width", type=int, required=True, help="Output map width in pixels.")
@click.option("--height", type=int, required=True, help="Output map height in pixels.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Run config providing the [gtgen] section.")
@click.option("--pixels-per-degree", type=float, default=None, help="Pixels per degree of visual angle (required here or in config).")
@click.option("--fixation-window", type=int, default=None, help="How many trailing fixations to render.")
@click.option("--sigma-dva", type=float, default=None, help="Gaussian sigma in degrees of visual angle.")
@click.option("--truncation-radius", type=float, default=None, help="Gaussian cut-off in multiples of sigma.")
def cmd_gt_gen(
    fixations_csv,
    out_dir,
    width,
    height,
    config_path,
    pixels_per_degree,
    fixation_window,
    sigma_dva,
    truncation_radius,
) -> None:
    """Render unit-sum ground-truth maps (one PFM per frame id) from fixations."""
    try:
        base = load_run_config(config_path).gtgen if config_path else None
        overrides = {
            "pixels_per_degree": pixels_per_degree,
            "fixation_window": fixation_window,
            "sigma_dva": sigma_dva,
            "truncation_radius": truncation_radius,
        }
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if base is not None:
            gtgen_config = replace(base, **overrides)
        elif "pixels_per_degree" not in overrides:
            raise ConfigError("pixels_per_degree is required (flag or config [gtgen] section)")
        else:
            gtgen_config = GtGenConfig(**overrides)
        fixation_sets = load_fixations(fixations_csv)
    except (ConfigError, FormatError, OSError) as exc:
        _fail(str(exc), 1)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    skipped = 0
    for frame_id, fixation_set in fixation_sets.items():
        if len(fixation_set) == 0:
            skipped += 1
            continue
        try:
            rendered = render_ground_truth(fixation_set, gtgen_config, width, height)
        except ObjsalError as exc:
            _fail(f"frame {frame_id}: {exc}", 1)
        write_pfm_unit_sum(out / f"{frame_id}.pfm", rendered.values)
        written += 1
    click.echo(f"wrote {written} maps, skipped {skipped} frames without fixations", err=True)


@main.command("compare")
@click.argument("root_a", type=click.Path(file_okay=False))
@click.argument("root_b", type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
@click.option("--jobs", type=int, default=None)
@click.option("--things-only", is_flag=True)
@click.option("--seed", type=int, default=None)
@click.option("--format", "fmt", type=click.Choice(["json", "md", "both"]), default="both", show_default=True)
@click.option("--figures", is_flag=True, help="Render delta figures (PNG) next to the report.")
def cmd_compare(root_a, root_b, config_path, output, jobs, things_only, seed, fmt, figures) -> None:
    """Evaluate two prediction roots and report per-metric deltas (b - a)."""
    try:
        config = _resolve_config(config_path, jobs, things_only, seed)
        scan_a = scan_dataset(root_a, config)
        scan_b = scan_dataset(root_b, config)
    except EmptyDatasetError as exc:
        _fail(str(exc), 2)
    except (ConfigError, FormatError, OSError) as exc:
        _fail(str(exc), 1)

    ids_a = {d.frame_id for d in scan_a.frames}
    ids_b = {d.frame_id for d in scan_b.frames}
    if not ids_a & ids_b:
        _fail("the two roots share no frame ids", 2)
    for only, root in ((ids_a - ids_b, root_a), (ids_b - ids_a, root_b)):
        if only:
            click.echo(f"warning: {len(only)} frames only in {root}, excluded", err=True)

    started = time.perf_counter()
    try:
        options = config.metric_options()
        reports_a = _run_batch(scan_a.frames, config, options)
        reports_b = _run_batch(scan_b.frames, config, options)
    except (ObjsalError, OSError) as exc:
        _fail(str(exc), 1)
    wall = time.perf_counter() - started

    document = build_compare_document(reports_a, reports_b, _config_echo(config), __version__)
    json_path, md_path, base = _output_paths(output)
    if fmt in ("json", "both"):
        write_atomic(json_path, serialize_json(document))
    if fmt in ("md", "both"):
        write_atomic(md_path, markdown_compare_summary(document, wall_time_s=wall))
    if figures:
        from .figures import render_compare_figures

        render_compare_figures(document, base)
    click.echo(f"compared {document['frame_count']} paired frames in {wall:.2f} s", err=True)


@main.command("selfcheck")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--inject-fault", is_flag=True, hidden=True)
def cmd_selfcheck(seed, inject_fault) -> None:
    """Run the embedded oracle-equivalence and gradient property suites."""
    results = run_selfcheck(seed, inject_fault=inject_fault)
    failed = [r for r in results if not r.passed]
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        click.echo(f"{status} {result.name}: {result.detail}")
    if failed:
        click.echo(f"{len(failed)} properties failed (seed={seed})", err=True)
        raise SystemExit(1)
    click.echo(f"all {len(results)} properties passed (seed={seed})")


if __name__ == "__main__":
    main()
