"""Command-line interface over the full pipeline.

The stages compose through their declared outputs:

    synth -> build-dataset -> sample-queries -> train-qa / train-ssl
          -> eval-qa / eval-ssl / grid-export / answer / lift / serve

Every subcommand accepts --seed and --config (a JSON file with optional
"model", "train", "dataset", and "synth" sections); explicit flags override
config values.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import click

from .checkpoint import load_checkpoint, save_checkpoint
from .kg import (
    StudyArea,
    build_kg,
    degree_filter,
    load_kg,
    load_split,
    split_kg,
    write_entity_meta,
    write_split,
    write_triples,
)
from .metrics import eval_qa, eval_ssl, grid_cluster_export
from .model import MODES, Model, ModelConfig
from .query import ConjunctiveQuery, answer_query, lift as lift_op, read_query_file
from .sampler import (
    QADatasetConfig,
    build_qa_dataset,
    build_ssl_datasets,
    read_qa_dataset,
    read_ssl_datasets,
    write_qa_dataset,
    write_ssl_datasets,
)
from .synth import SynthConfig, synth_geokg
from .train import TrainConfig, train_qa, train_ssl


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _model_config(cfg: dict, mode: str | None, area: StudyArea | None) -> ModelConfig:
    section = dict(cfg.get("model", {}))
    if mode:
        section["mode"] = mode
    if "lambda_max" not in section and area is not None:
        # coarsest wavelength spans the study area
        section["lambda_max"] = 2.0 * max(
            area.max[0] - area.min[0], area.max[1] - area.min[1]
        )
    return ModelConfig(**section)


def _train_config(cfg: dict, seed: int, **overrides) -> TrainConfig:
    section = dict(cfg.get("train", {}))
    section["seed"] = seed
    for key, value in overrides.items():
        if value is not None:
            section[key] = value
    return TrainConfig.from_json(section)


common_options = [
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--config", "config_path", type=click.Path(exists=True), default=None),
]


def with_common(fn):
    for opt in reversed(common_options):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Spatially-explicit KG embeddings: train, evaluate, serve."""


@main.command()
@with_common
@click.option("--regions", type=int, default=16, show_default=True)
@click.option("--places", type=int, default=120, show_default=True)
@click.option("--agents", type=int, default=60, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def synth(seed, config_path, regions, places, agents, out):
    """Generate a synthetic geographic KG in the raw input formats."""
    cfg = _load_config(config_path).get("synth", {})
    kg = synth_geokg(
        SynthConfig(n_regions=regions, n_places=places, n_agents=agents, **cfg),
        seed=seed,
    )
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_triples(out_dir / "triples.tsv", kg.triples)
    write_entity_meta(
        out_dir / "entities.jsonl",
        ((e, kg.entities[e], kg.footprints.get(e)) for e in sorted(kg.entities)),
    )
    (out_dir / "area.json").write_text(json.dumps(kg.study_area.to_json()))
    click.echo(f"synthetic KG: {kg.stats()} -> {out_dir}")


@main.command("build-dataset")
@with_common
@click.option("--triples", "triples_path", type=click.Path(exists=True), required=True)
@click.option("--meta", "meta_path", type=click.Path(exists=True), required=True)
@click.option("--area", "area_path", type=click.Path(exists=True), required=True)
@click.option("--eta-geo", type=int, default=5, show_default=True)
@click.option("--eta-nongeo", type=int, default=10, show_default=True)
@click.option("--split", "split_ratio", default="90:1:9", show_default=True)
@click.option("--out", type=click.Path(), required=True)
def build_dataset(
    seed, config_path, triples_path, meta_path, area_path, eta_geo, eta_nongeo,
    split_ratio, out,
):
    """Validate, degree-filter, and split a raw triple/metadata dump."""
    kg = load_kg(triples_path, meta_path, area_path)
    kept = degree_filter(kg.triples, kg.geo_entities, eta_geo, eta_nongeo)
    surviving = {e for h, _, t in kept for e in (h, t)}
    records = [
        (e, kg.entities[e], kg.footprints.get(e)) for e in sorted(surviving)
    ]
    filtered = build_kg(records, (), kept, kg.study_area)
    ratio = tuple(float(p) for p in split_ratio.split(":"))
    if len(ratio) != 3:
        raise click.BadParameter("--split must be train:valid:test")
    split = split_kg(filtered, ratio, seed)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_split(split, out_dir)
    write_entity_meta(
        out_dir / "entities.jsonl",
        ((e, filtered.entities[e], filtered.footprints.get(e)) for e in sorted(surviving)),
    )
    shutil.copyfile(area_path, out_dir / "area.json")
    click.echo(f"kept {len(kept)}/{len(kg.triples)} triples -> {out_dir}")


@main.command("sample-queries")
@with_common
@click.option("--kg", "kg_dir", type=click.Path(exists=True), required=True)
@click.option("--per-dag", type=int, default=10, show_default=True)
@click.option("--per-dag-valid", type=int, default=None)
@click.option("--per-dag-test", type=int, default=None)
@click.option("--geo-only/--no-geo-only", default=True, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def sample_queries(
    seed, config_path, kg_dir, per_dag, per_dag_valid, per_dag_test, geo_only, out
):
    """Sample QA pairs for every DAG type and derive the SSL triple sets."""
    cfg = _load_config(config_path).get("dataset", {})
    split = load_split(kg_dir)
    ds_cfg = QADatasetConfig(
        per_dag={
            "train": per_dag,
            "valid": per_dag_valid if per_dag_valid is not None else max(1, per_dag // 10),
            "test": per_dag_test if per_dag_test is not None else max(1, per_dag // 10),
        },
        geo_only=geo_only,
        **cfg,
    )
    datasets = build_qa_dataset(split, ds_cfg, seed)
    write_qa_dataset(datasets, ds_cfg, seed, out)
    write_ssl_datasets(build_ssl_datasets(split), out)
    click.echo(
        f"QA examples: { {k: len(v) for k, v in datasets.items()} } -> {out}"
    )


@main.command("train-qa")
@with_common
@click.option("--kg", "kg_dir", type=click.Path(exists=True), required=True)
@click.option("--qa", "qa_dir", type=click.Path(exists=True), required=True)
@click.option(
    "--mode",
    type=click.Choice([m for m in MODES if m != "se-kge-ssl"]),
    default="se-kge-full",
    show_default=True,
)
@click.option("--steps", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--margin", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
def cmd_train_qa(
    seed, config_path, kg_dir, qa_dir, mode, steps, lr, batch_size, margin, out_path
):
    """Train a query-answering model (KG-structure + QA objectives)."""
    cfg = _load_config(config_path)
    split = load_split(kg_dir)
    qa = read_qa_dataset(qa_dir)
    model = Model.create(
        split.train, _model_config(cfg, mode, split.train.study_area), seed=seed
    )
    tc = _train_config(
        cfg, seed, steps=steps, lr=lr, batch_size=batch_size, margin=margin
    )
    history = train_qa(model, split, qa["train"], tc)
    save_checkpoint(model, out_path)
    history.write_csv(str(out_path) + ".history.csv")
    click.echo(
        f"trained {tc.steps} steps; final loss "
        f"{history.rows[-1]['loss_total']:.4f} -> {out_path}"
    )


@main.command("train-ssl")
@with_common
@click.option("--kg", "kg_dir", type=click.Path(exists=True), required=True)
@click.option("--ssl", "ssl_dir", type=click.Path(exists=True), required=True)
@click.option(
    "--mode",
    type=click.Choice(["se-kge-ssl", "se-kge-space"]),
    default="se-kge-ssl",
    show_default=True,
)
@click.option("--steps", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--batch-size", type=int, default=None)
@click.option("--margin", type=float, default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
def cmd_train_ssl(
    seed, config_path, kg_dir, ssl_dir, mode, steps, lr, batch_size, margin, out_path
):
    """Train a spatial-semantic-lifting model (link-prediction + lifting)."""
    cfg = _load_config(config_path)
    split = load_split(kg_dir)
    ssl = read_ssl_datasets(ssl_dir)
    model = Model.create(
        split.train, _model_config(cfg, mode, split.train.study_area), seed=seed
    )
    tc = _train_config(
        cfg, seed, steps=steps, lr=lr, batch_size=batch_size, margin=margin
    )
    history = train_ssl(model, split, ssl["train"], tc)
    save_checkpoint(model, out_path)
    history.write_csv(str(out_path) + ".history.csv")
    click.echo(
        f"trained {tc.steps} steps; final loss "
        f"{history.rows[-1]['loss_total']:.4f} -> {out_path}"
    )


@main.command("eval-qa")
@with_common
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--qa", "qa_dir", type=click.Path(exists=True), required=True)
@click.option("--split", "eval_split", default="test", show_default=True)
@click.option("--report", "report_path", type=click.Path(), required=True)
def cmd_eval_qa(seed, config_path, ckpt, qa_dir, eval_split, report_path):
    """AUC/APR per DAG type on a QA split."""
    model = load_checkpoint(ckpt)
    qa = read_qa_dataset(qa_dir)
    report = eval_qa(model, qa[eval_split], seed=seed)
    report.write(report_path)
    click.echo(report.to_text())


@main.command("eval-ssl")
@with_common
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--ssl", "ssl_dir", type=click.Path(exists=True), required=True)
@click.option("--split", "eval_split", default="test", show_default=True)
@click.option("--neg-size", type=int, default=10, show_default=True)
@click.option("--report", "report_path", type=click.Path(), required=True)
def cmd_eval_ssl(seed, config_path, ckpt, ssl_dir, eval_split, neg_size, report_path):
    """AUC/APR per relation signature on an SSL split."""
    model = load_checkpoint(ckpt)
    ssl = read_ssl_datasets(ssl_dir)
    report = eval_ssl(model, ssl[eval_split], neg_size=neg_size, seed=seed)
    report.write(report_path)
    click.echo(report.to_text())


@main.command("grid-export")
@with_common
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--cell-m", type=float, default=20_000.0, show_default=True)
@click.option("--k", type=int, default=8, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def cmd_grid_export(seed, config_path, ckpt, cell_m, k, out_path):
    """Cluster grid-cell location embeddings and export the labels."""
    model = load_checkpoint(ckpt)
    cells, meta = grid_cluster_export(model, cell_m=cell_m, k=k)
    with open(out_path, "w", encoding="utf-8") as f:
        for cell in cells:
            f.write(json.dumps(cell) + "\n")
    Path(str(out_path) + ".meta.json").write_text(json.dumps(meta, indent=2))
    click.echo(f"{meta['n_cells']} cells, k={meta['k']} -> {out_path}")


@main.command()
@with_common
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--query", "query_path", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=10, show_default=True)
def answer(seed, config_path, ckpt, query_path, k):
    """Answer the queries in a JSONL file (one ranking per line)."""
    model = load_checkpoint(ckpt)
    for rec in read_query_file(query_path):
        q = ConjunctiveQuery.from_json(rec)
        ranked = answer_query(model, q, k)
        click.echo(
            json.dumps({"ranked": [{"entity": e, "score": s} for e, s in ranked]})
        )


@main.command("lift")
@with_common
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--x", type=float, required=True)
@click.option("--y", type=float, required=True)
@click.option("--relation", required=True)
@click.option("--dir", "direction", type=click.Choice(["fwd", "inv"]), default="fwd")
@click.option("--k", type=int, default=10, show_default=True)
def cmd_lift(seed, config_path, ckpt, x, y, relation, direction, k):
    """Link a coordinate to entities through a relation."""
    model = load_checkpoint(ckpt)
    ranked = lift_op(model, (x, y), relation, direction, k)
    click.echo(json.dumps({"ranked": [{"entity": e, "score": s} for e, s in ranked]}))


@main.command()
@with_common
@click.option("--ckpt", type=click.Path(exists=True), required=True)
@click.option("--addr", default="127.0.0.1:8080", show_default=True)
@click.option("--static", "static_dir", type=click.Path(), default=None)
def serve(seed, config_path, ckpt, addr, static_dir):
    """Serve the HTTP inference API (and optionally the map explorer UI)."""
    from .server import serve as run_server

    model = load_checkpoint(ckpt)
    click.echo(f"serving {model.config.mode} on {addr}")
    run_server(model, addr, static_dir)


if __name__ == "__main__":
    main(prog_name="geokge")
