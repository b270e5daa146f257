"""Command-line interface.

Workflow: ``phantom`` generates a synthetic cohort, ``infer`` produces
predicted masks through the subprocess predictor protocol, ``evaluate`` /
``stats`` / ``correlate`` / ``dose`` emit the individual reports, ``split``
and ``kfold`` build training partitions, and ``report`` runs everything
applicable in one shot.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import pipeline
from .manifest import kfold as make_kfold
from .manifest import load_manifest, stratified_split
from .phantom import generate_cohort
from .reports import write_folds, write_split


def _fail_on_errors(errors) -> None:
    if errors:
        for case_id, message in errors:
            click.echo(f"error [{case_id}]: {message}", err=True)
        sys.exit(1)


@click.group()
def main() -> None:
    """Cardiac substructure segmentation evaluation toolkit."""


@main.command()
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Output directory.")
@click.option("--cect", default=8, show_default=True, help="Number of CECT cases.")
@click.option("--ncct", default=8, show_default=True, help="Number of NCCT cases.")
@click.option("--prone", default=0, show_default=True, help="Prone cases (among the NCCT cases).")
@click.option("--seed", default=0, show_default=True, help="Deterministic generator seed.")
@click.option("--noise", default=0.0, show_default=True, help="Gaussian image noise sigma in HU.")
def phantom(out: Path, cect: int, ncct: int, prone: int, seed: int, noise: float) -> None:
    """Generate a synthetic phantom cohort with images, labels, and dose."""
    manifest_path = generate_cohort(cect, ncct, prone, seed, out, noise_sigma_hu=noise)
    click.echo(f"wrote {cect + ncct} cases to {manifest_path}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option(
    "--predictor-cmd",
    required=True,
    help="Command template with {input} {sidecar} {output} {classes} placeholders.",
)
@click.option("--fusion", type=click.Choice(["uniform", "gaussian"]), default="uniform", show_default=True)
@click.option("--patch", default=128, show_default=True, help="Cubic window edge in voxels.")
@click.option("--overlap", default=0.5, show_default=True, help="Window overlap fraction.")
@click.option("--threads", default=1, show_default=True)
def infer(manifest_path: Path, out: Path, predictor_cmd: str, fusion: str, patch: int, overlap: float, threads: int) -> None:
    """Predict label masks for every case via sliding-window inference."""
    manifest = load_manifest(manifest_path)
    new_manifest, errors = pipeline.infer_cohort(
        manifest,
        predictor_cmd,
        out,
        fusion=fusion,
        patch=(patch, patch, patch),
        overlap_fraction=overlap,
        threads=threads,
    )
    click.echo(f"wrote predictions and {new_manifest}")
    _fail_on_errors(errors)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--threads", default=1, show_default=True)
def evaluate(manifest_path: Path, out: Path, threads: int) -> None:
    """Score predicted masks against manual references (DSC, HD95)."""
    manifest = load_manifest(manifest_path)
    scored, errors = pipeline.evaluate_cohort(manifest, out, threads=threads)
    click.echo(f"scored {len(scored)} cases into {out}")
    _fail_on_errors(errors)


@main.command()
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option(
    "--scores-b",
    type=click.Path(exists=True, path_type=Path),
    help="Second score table: run the paired comparison against --scores.",
)
@click.option(
    "--group-by",
    type=click.Choice(["contrast", "position", "sex"]),
    help="Grouped comparison over one score table (requires --manifest).",
)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--family-size", default=pipeline.DEFAULT_FAMILY_SIZE, show_default=True)
def stats(scores_path: Path, scores_b: Path | None, group_by: str | None, manifest_path: Path | None, out: Path, family_size: int) -> None:
    """Wilcoxon tests with Bonferroni-corrected p-values."""
    if (scores_b is None) == (group_by is None):
        raise click.UsageError("choose exactly one of --scores-b (paired) or --group-by (unpaired)")
    if scores_b is not None:
        pipeline.stats_paired(scores_path, scores_b, out, family_size=family_size)
    else:
        if manifest_path is None:
            raise click.UsageError("--group-by requires --manifest")
        manifest = load_manifest(manifest_path)
        pipeline.stats_grouped(scores_path, manifest, group_by, out, family_size=family_size)
    click.echo(f"wrote statistics to {out}")


@main.command()
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--covariate", type=click.Choice(["age", "bmi"]), required=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def correlate(scores_path: Path, manifest_path: Path, covariate: str, out: Path) -> None:
    """Spearman correlation of DSC with a continuous patient covariate."""
    manifest = load_manifest(manifest_path)
    pipeline.correlate_cohort(scores_path, manifest, covariate, out)
    click.echo(f"wrote correlation report to {out}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--vx-threshold", default=40.0, show_default=True, help="Gy threshold for V(x) structures.")
@click.option("--dvh-bin", default=0.1, show_default=True, help="DVH bin width in Gy.")
@click.option("--threads", default=1, show_default=True)
def dose(manifest_path: Path, out: Path, vx_threshold: float, dvh_bin: float, threads: int) -> None:
    """Dosimetric comparison between manual and predicted masks."""
    manifest = load_manifest(manifest_path)
    _, errors = pipeline.dose_cohort(
        manifest, out, vx_threshold_gy=vx_threshold, dvh_bin_gy=dvh_bin, threads=threads
    )
    click.echo(f"wrote dose report to {out}")
    _fail_on_errors(errors)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--cect", required=True, type=int, help="Training cases drawn from the CECT stratum.")
@click.option("--ncct", required=True, type=int, help="Training cases drawn from the NCCT stratum.")
@click.option("--seed", default=0, show_default=True)
def split(manifest_path: Path, out: Path, cect: int, ncct: int, seed: int) -> None:
    """Stratified balanced train/holdout split by contrast."""
    manifest = load_manifest(manifest_path)
    assignment = stratified_split(manifest, {"CECT": cect, "NCCT": ncct}, seed)
    write_split(assignment, out)
    click.echo(f"train={len(assignment.train)} holdout={len(assignment.holdout)} -> {out}")


@main.command()
@click.option("--split-dir", type=click.Path(exists=True, path_type=Path), help="Use train ids from split.json.")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, path_type=Path), help="Use all manifest cases.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--k", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
def kfold(split_dir: Path | None, manifest_path: Path | None, out: Path, k: int, seed: int) -> None:
    """Partition training cases into k balanced folds."""
    if (split_dir is None) == (manifest_path is None):
        raise click.UsageError("choose exactly one of --split-dir or --manifest")
    if split_dir is not None:
        import json

        ids = json.loads((split_dir / "split.json").read_text())["train"]
    else:
        ids = [rec.case_id for rec in load_manifest(manifest_path)]
    folds = make_kfold(ids, k, seed)
    write_folds(folds, seed, out)
    click.echo(f"fold sizes: {[len(f) for f in folds]} -> {out}")


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--threads", default=1, show_default=True)
@click.option("--family-size", default=pipeline.DEFAULT_FAMILY_SIZE, show_default=True)
def report(manifest_path: Path, out: Path, threads: int, family_size: int) -> None:
    """Evaluate plus every applicable analysis, in one output tree."""
    manifest = load_manifest(manifest_path)
    errors = pipeline.full_report(manifest, out, threads=threads, family_size=family_size)
    click.echo(f"wrote report tree to {out}")
    _fail_on_errors(errors)


if __name__ == "__main__":
    main()
