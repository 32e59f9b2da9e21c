"""``conetools`` command line.

Exit codes: 0 success, 1 findings or a failed gate, 2 usage or input errors.
"""

from __future__ import annotations

import dataclasses
import datetime
import functools
import json
import shutil
import sys
from pathlib import Path
from typing import Optional

import click

from . import evaluation, formats, imaging, quality, similarity, stats
from .config import ToolConfig, load_config
from .core import ContractError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


class _Exit(Exception):
    def __init__(self, code: int):
        self.code = code


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ContractError, OSError, MemoryError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(2)
    return wrapper


def _cfg() -> ToolConfig:
    return click.get_current_context().find_root().obj["config"]


def _emit(tool: str, result, output: Optional[str]) -> None:
    cfg = _cfg()
    doc = {"tool": tool}
    if cfg.report.timestamp:
        doc["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    doc["config"] = cfg.to_dict()
    doc["result"] = result
    text = json.dumps(doc, indent=2) + "\n"
    _write_text(text, output)


def _write_text(text: str, output: Optional[str]) -> None:
    if output in (None, "-"):
        click.echo(text, nl=False)
    else:
        Path(output).write_text(text, encoding="utf-8")


def _images_in(path: Path) -> list[Path]:
    return sorted(p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _parse_floats(text: Optional[str]) -> Optional[tuple[float, ...]]:
    if text is None:
        return None
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="YAML config file; CONETOOLS_<SECTION>__<KEY> env vars override it.")
@click.option("--jobs", type=click.IntRange(min=1), default=None, help="Worker cap (config key: jobs).")
@click.option("--no-timestamp", is_flag=True, help="Omit generated_at from reports (config key: report.timestamp).")
@click.pass_context
def main(ctx, config_path, jobs, no_timestamp):
    """Curation and quality tools for cone-annotation datasets."""
    try:
        cfg = load_config(config_path)
    except ContractError as e:
        raise click.UsageError(str(e))
    if jobs is not None:
        cfg = dataclasses.replace(cfg, jobs=jobs)
    if no_timestamp:
        cfg = cfg.override("report", timestamp=False)
    ctx.obj = {"config": cfg}


@main.command()
@click.argument("src", type=click.Path(exists=True, dir_okay=False))
@click.option("--from", "src_fmt", required=True, type=click.Choice([f.value for f in formats.FormatId]))
@click.option("--to", "dst_fmt", required=True, type=click.Choice([f.value for f in formats.FormatId]))
@click.option("--dims", help="Image size WxH (needed for darknet_yolo input).")
@click.option("-o", "--output", help="Output file (default stdout).")
@_guard
def convert(src, src_fmt, dst_fmt, dims, output):
    """Convert one annotation file between formats.

    Reads no config keys.
    """
    img_dims = None
    if dims:
        try:
            w, h = dims.lower().split("x")
            img_dims = (int(w), int(h))
        except ValueError:
            raise click.BadParameter(f"expected WxH, got {dims!r}", param_hint="--dims")
    name = Path(src).name
    for suffix in (".json", ".txt", ".xml"):
        name = name.removesuffix(suffix)
    out = formats.convert(Path(src).read_bytes(), src_fmt, dst_fmt, img_dims, name=name)
    if output in (None, "-"):
        click.echo(out.decode("utf-8"), nl=False)
    else:
        Path(output).write_bytes(out)


@main.command()
@click.argument("root", type=click.Path(exists=True, file_okay=False))
@click.option("-o", "--output")
@_guard
def validate(root, output):
    """Check the dataset directory layout and filenames.

    Config keys: layout.img_dir, layout.ann_dir.
    """
    cfg = _cfg()
    layout, findings = formats.validate_layout(root, cfg.layout.img_dir, cfg.layout.ann_dir)
    _emit("validate", {"teams": [t.team_id for t in layout.teams],
                       "findings": [dataclasses.asdict(f) for f in findings]}, output)
    sys.exit(1 if findings else 0)


# -- similarity ----------------------------------------------------------

def _feature_sets(inputs: tuple[str, ...], jobs: int) -> dict[str, list[similarity.FeatureVector]]:
    """Dataset id -> features, from FSFV files, image folders or a dataset tree."""
    cfg = _cfg()
    out = {}
    for raw in inputs:
        p = Path(raw)
        if p.is_file():
            out[p.stem] = similarity.load_features(p)
        elif _images_in(p):
            out[p.name] = similarity.extract_many(_images_in(p), jobs)
        else:
            for team in sorted(d for d in p.iterdir() if d.is_dir()):
                img_dir = team / cfg.layout.img_dir
                if img_dir.is_dir() and _images_in(img_dir):
                    out[team.name] = similarity.extract_many(_images_in(img_dir), jobs)
    if not out:
        raise ContractError("no images or feature files found")
    return out


@main.group(name="similarity")
def similarity_group():
    """Image similarity scores and diverse sampling."""


@similarity_group.command("score")
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--thresholds", help="Comma-separated cosine thresholds (config key: similarity.thresholds).")
@click.option("-o", "--output", help="JSON report path.")
@click.option("--csv", "csv_path", help="Also write the score table as CSV.")
@_guard
def similarity_score(inputs, thresholds, output, csv_path):
    """Local and global duplicate scores.

    INPUTS are FSFV feature files, image folders, or a dataset root whose team
    folders are the datasets. Config keys: similarity.thresholds, layout.img_dir, jobs.
    """
    cfg = _cfg().override("similarity", thresholds=_parse_floats(thresholds))
    click.get_current_context().find_root().obj["config"] = cfg
    sets = _feature_sets(inputs, cfg.jobs)
    report = similarity.score_report(sets, cfg.similarity.thresholds, cfg.jobs)
    _emit("similarity score", report.to_json(), output)
    if csv_path:
        Path(csv_path).write_text(report.to_csv(), encoding="utf-8")


@similarity_group.command("sample")
@click.argument("source", type=click.Path(exists=True))
@click.option("--threshold", type=float, help="Cosine threshold (config key: similarity.sample_threshold).")
@click.option("--copy-to", type=click.Path(file_okay=False), help="Copy kept images here.")
@click.option("-o", "--output")
@_guard
def similarity_sample(source, threshold, copy_to, output):
    """Greedily keep images whose similarity to all kept ones is below the threshold.

    SOURCE is an image folder or an FSFV file. Config keys:
    similarity.sample_threshold, jobs.
    """
    cfg = _cfg().override("similarity", sample_threshold=threshold)
    click.get_current_context().find_root().obj["config"] = cfg
    src = Path(source)
    if src.is_file():
        feats, paths = similarity.load_features(src), None
    else:
        paths = _images_in(src)
        feats = similarity.extract_many(paths, cfg.jobs)
    kept = similarity.sample_diverse(feats, cfg.similarity.sample_threshold)
    names = [feats[k].name for k in kept]
    if copy_to and paths is not None:
        Path(copy_to).mkdir(parents=True, exist_ok=True)
        for k in kept:
            shutil.copy2(paths[k], Path(copy_to) / paths[k].name)
    _emit("similarity sample", {"n_input": len(feats), "kept": names}, output)


@main.group(name="features")
def features_group():
    """Feature vector files."""


@features_group.command("extract")
@click.argument("image_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("output", type=click.Path(dir_okay=False))
@_guard
def features_extract(image_dir, output):
    """Extract built-in 4096-d features for every image in IMAGE_DIR into an FSFV file.

    Config keys: jobs.
    """
    feats = similarity.extract_many(_images_in(Path(image_dir)), _cfg().jobs)
    similarity.save_features(feats, output)
    click.echo(f"wrote {len(feats)} vectors to {output}", err=True)


# -- quality -------------------------------------------------------------

@main.command()
@click.argument("root", type=click.Path(exists=True, file_okay=False))
@click.option("-o", "--output")
@_guard
def sanity(root, output):
    """Rule-based label sanity checks over a dataset tree.

    Config keys: sanity.min_area, sanity.min_side, sanity.duplicate_iou,
    layout.img_dir, layout.ann_dir.
    """
    cfg = _cfg()
    findings = quality.sanity_check_tree(root, cfg.sanity, cfg.layout.img_dir, cfg.layout.ann_dir)
    _emit("sanity", {"findings": [dataclasses.asdict(f) for f in findings]}, output)
    sys.exit(1 if findings else 0)


@main.group(name="exam")
def exam_group():
    """Labeling exam."""


@exam_group.command("grade")
@click.argument("submission", type=click.Path(exists=True))
@click.argument("ground_truth", type=click.Path(exists=True))
@click.option("-o", "--output")
@click.option("--feedback", type=click.Path(dir_okay=False), help="Write human-readable feedback here.")
@_guard
def exam_grade(submission, ground_truth, output, feedback):
    """Grade a submission folder of annotation JSON files against ground truth.

    Config keys: exam.match_iou, exam.localization_iou, exam.min_recall,
    exam.min_precision, exam.min_mean_iou.
    """
    cfg = _cfg()
    sub = formats.load_annotations(submission)
    gt = formats.load_annotations(ground_truth)
    report = quality.grade_exam(sub, gt, cfg.exam)
    _emit("exam grade", report.to_json(), output)
    if feedback:
        Path(feedback).write_text(quality.exam_feedback(report, sub, gt), encoding="utf-8")
    sys.exit(0 if report.passed else 1)


@main.group(name="contribution")
def contribution_group():
    """Contribution requirements."""


@contribution_group.command("check")
@click.argument("team_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--features", "features_path", type=click.Path(exists=True, dir_okay=False),
              help="Precomputed FSFV file; otherwise built-in features are extracted.")
@click.option("-o", "--output")
@_guard
def contribution_check(team_dir, features_path, output):
    """Check on-board share and local similarity for one team folder.

    Config keys: contribution.min_onboard_ratio, contribution.max_local_dup_score,
    contribution.dup_threshold, layout.img_dir, layout.ann_dir, jobs.
    """
    cfg = _cfg()
    team = Path(team_dir)
    dataset = formats.load_annotations(team / cfg.layout.ann_dir)
    if features_path:
        feats = similarity.load_features(features_path)
    else:
        feats = similarity.extract_many(_images_in(team / cfg.layout.img_dir), cfg.jobs)
    report = quality.check_contribution(dataset, feats, cfg.contribution, cfg.jobs)
    _emit("contribution check", report.to_json(), output)
    sys.exit(0 if report.passed else 1)


# -- stats / eval --------------------------------------------------------

@main.command("stats")
@click.argument("path", type=click.Path(exists=True))
@click.option("-o", "--output")
@click.option("--csv", "csv_path", help="Also write histogram tables as CSV.")
@_guard
def stats_cmd(path, output, csv_path):
    """Dataset statistics over every annotation JSON under PATH.

    Config keys: stats.include_other, stats.min_combination_fraction, jobs.
    """
    cfg = _cfg()
    report = stats.compute_stats(formats.load_annotations(path), cfg.stats, cfg.jobs)
    _emit("stats", report.to_json(), output)
    if csv_path:
        Path(csv_path).write_text(report.histogram_csv(), encoding="utf-8")


@main.group(name="eval")
def eval_group():
    """Detector evaluation."""


@eval_group.command("ap")
@click.argument("detections", type=click.Path(exists=True, dir_okay=False))
@click.argument("ground_truth", type=click.Path(exists=True))
@click.option("--format", "det_format", type=click.Choice(["darknet", "json"]), default=None,
              help="Detection file format (default from extension).")
@click.option("--thresholds", help="Comma-separated IoU thresholds (config key: eval.thresholds).")
@click.option("--mode", type=click.Choice([evaluation.CLASS_AGNOSTIC, evaluation.PER_CLASS]),
              help="Matching mode (config key: eval.mode).")
@click.option("-o", "--output")
@click.option("--csv", "csv_path", help="Also write PR curves as CSV.")
@_guard
def eval_ap(detections, ground_truth, det_format, thresholds, mode, output, csv_path):
    """Average precision at each IoU threshold.

    Config keys: eval.thresholds, eval.mode, jobs.
    """
    cfg = _cfg().override("eval", thresholds=_parse_floats(thresholds), mode=mode)
    click.get_current_context().find_root().obj["config"] = cfg
    gts = formats.load_annotations(ground_truth)
    text = Path(detections).read_text(encoding="utf-8")
    det_format = det_format or ("json" if detections.endswith(".json") else "darknet")
    if det_format == "json":
        dets = evaluation.parse_detections_json(text)
    else:
        dets = evaluation.parse_darknet_results(text, {g.name: (g.width, g.height) for g in gts})
    report = evaluation.ap_sweep(dets, gts, cfg.eval.thresholds, cfg.eval.mode, cfg.jobs)
    _emit("eval ap", report.to_json(), output)
    if csv_path:
        Path(csv_path).write_text(report.pr_csv(), encoding="utf-8")


# -- imaging -------------------------------------------------------------

@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.argument("output", type=click.Path(dir_okay=False))
@click.option("--annotation", type=click.Path(exists=True, dir_okay=False), help="Supervisely-like JSON to shift.")
@click.option("--annotation-out", type=click.Path(dir_okay=False))
@click.option("--border", type=int, help="Border width in px (config key: imaging.border).")
@_guard
def crop(image, output, annotation, annotation_out, border):
    """Crop the watermark border from an image (and its annotation).

    Config keys: imaging.border.
    """
    cfg = _cfg().override("imaging", border=border)
    b = cfg.imaging.border
    imaging.crop_watermark(imaging.RasterImage.open(image), b).save(output)
    if annotation:
        ann = formats.parse_annotation(Path(annotation).read_bytes(), formats.FormatId.SUPERVISELY_LIKE,
                                       name=Path(image).name, strict=False)
        res = imaging.crop_annotation(ann, b)
        dst = annotation_out or str(Path(output)) + ".json"
        Path(dst).write_bytes(formats.write_annotation(res.image, formats.FormatId.SUPERVISELY_LIKE))
        click.echo(f"dropped {res.dropped} objects, clipped {len(res.clipped)}", err=True)


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.argument("annotation", type=click.Path(exists=True, dir_okay=False))
@click.argument("output", type=click.Path(dir_okay=False))
@click.option("--format", "ann_format", default="supervisely_like",
              type=click.Choice(["supervisely_like", "darknet_yolo"]))
@_guard
def viz(image, annotation, output, ann_format):
    """Render annotations onto an image; OUTPUT is always written as PNG.

    Reads no config keys.
    """
    raster = imaging.RasterImage.open(image)
    ann = formats.parse_annotation(Path(annotation).read_bytes(), ann_format, (raster.width, raster.height),
                                   name=Path(image).name, strict=False)
    out = imaging.render_annotations(raster, ann)
    from PIL import Image
    Image.fromarray(out.pixels, "RGB").save(output, format="PNG")


if __name__ == "__main__":
    main()
