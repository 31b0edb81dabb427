//! Subcommand implementations. Each command is deterministic given the
//! configuration and seed; timing goes to stderr only, so artifact files are
//! byte-identical across re-runs.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use dsth::anchors::{build_anchor_model, AnchorModel};
use dsth::dataset::{
    is_relevant, split_dataset, synthesize_dataset, Dataset, DatasetSplit, SynthParams,
};
use dsth::eval::{mean_ap, precision_scope_curve, EvalReport, PerQueryAp, ScopePoint};
use dsth::hash::{learn_projection, HashModel};
use dsth::index::{pack, PackedCode, PackedCodeIndex};
use dsth::optim::DsthOptimizer;
use dsth::{io, Error, Result};

use crate::config::RunConfig;

fn stage<T>(verbose: bool, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{name}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("{name}: {m}")),
        Error::Dimension(m) => Error::Dimension(format!("{name}: {m}")),
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{name}: {io}"))),
        other => other,
    })?;
    if verbose {
        eprintln!("[{name}] {:.3}s", start.elapsed().as_secs_f64());
    } else {
        eprintln!("[{name}] done in {:.3}s", start.elapsed().as_secs_f64());
    }
    Ok(out)
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset<f64>> {
    let visual = io::read_matrix(&cfg.paths.visual)?;
    let text = io::read_matrix(&cfg.paths.text)?;
    let labels = dsth::dataset::LabelSet::new(io::read_labels(&cfg.paths.labels)?)?;
    Dataset::new(visual, text, labels)
}

fn split(cfg: &RunConfig, ds: &Dataset<f64>) -> Result<DatasetSplit> {
    split_dataset(ds, cfg.split.n_query, cfg.split.n_train, cfg.seed)
}

/// `synth`: generate the synthetic dataset files.
pub fn cmd_synth(cfg: &RunConfig, verbose: bool) -> Result<()> {
    cfg.echo()?;
    let ds = stage(verbose, "synth", || {
        synthesize_dataset::<f64>(&SynthParams {
            n_classes: cfg.synth.n_classes,
            per_class: cfg.synth.per_class,
            d_x: cfg.synth.d_x,
            d_y: cfg.synth.d_y,
            noise: cfg.synth.noise,
            cross_modal_consistency: cfg.synth.cross_modal_consistency,
            seed: cfg.seed,
        })
    })?;
    if let Some(dir) = cfg.paths.visual.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    io::write_matrix(&ds.visual, &cfg.paths.visual)?;
    io::write_matrix(&ds.text, &cfg.paths.text)?;
    io::write_labels(ds.labels.sets(), &cfg.paths.labels)?;
    println!(
        "synthesized {} samples ({} classes x {}), d_x={}, d_y={}, noise={}, consistency={}",
        ds.len(),
        cfg.synth.n_classes,
        cfg.synth.per_class,
        cfg.synth.d_x,
        cfg.synth.d_y,
        cfg.synth.noise,
        cfg.synth.cross_modal_consistency
    );
    Ok(())
}

/// `anchors`: build and persist the anchor model over the training split.
pub fn cmd_anchors(cfg: &RunConfig, verbose: bool) -> Result<AnchorModel<f64>> {
    cfg.echo()?;
    let ds = stage(verbose, "load", || load_dataset(cfg))?;
    let sp = split(cfg, &ds)?;
    let train_x = ds.visual.select_cols(&sp.training_ids);
    let model = stage(verbose, "anchors", || {
        build_anchor_model(
            &train_x,
            cfg.anchors.k,
            cfg.anchors.s,
            cfg.anchors.sigma,
            cfg.anchors.kmeans_max_iter,
            cfg.seed,
        )
    })?;
    model.save(cfg.paths.out_dir.join("anchors"))?;
    println!(
        "anchor model: K={}, s={}, sigma={:.6}, {} training samples",
        model.k(),
        model.s,
        model.sigma,
        model.n()
    );
    Ok(model)
}

#[derive(Serialize)]
struct TrainMetadata {
    variant: String,
    code_length: usize,
    n_train: usize,
    iterations: usize,
    initial_objective: f64,
    final_objective: f64,
}

/// `train`: anchors on the training split, the discrete optimizer, and hash
/// functions, persisting all artifacts.
pub fn cmd_train(cfg: &RunConfig, verbose: bool) -> Result<()> {
    cfg.echo()?;
    let ds = stage(verbose, "load", || load_dataset(cfg))?;
    let sp = split(cfg, &ds)?;
    let train_x = ds.visual.select_cols(&sp.training_ids);
    let train_y = ds.text.select_cols(&sp.training_ids);

    let anchors = stage(verbose, "anchors", || {
        build_anchor_model(
            &train_x,
            cfg.anchors.k.min(train_x.cols()),
            cfg.anchors.s.min(cfg.anchors.k.min(train_x.cols())),
            cfg.anchors.sigma,
            cfg.anchors.kmeans_max_iter,
            cfg.seed,
        )
    })?;
    anchors.save(cfg.paths.out_dir.join("anchors"))?;

    let opt_cfg = cfg.optimizer_config()?;
    let fit = stage(verbose, "fit", || {
        let optimizer = DsthOptimizer::new(&train_x, &train_y, &anchors, &opt_cfg)?;
        optimizer.fit()
    })?;

    let hash = stage(verbose, "hash-functions", || {
        learn_projection(&train_x, &fit.codes.to_signs::<f64>(), cfg.eta)
    })?;
    hash.save(cfg.paths.out_dir.join("hash"))?;

    let out = &cfg.paths.out_dir;
    let ids: Vec<u64> = sp.training_ids.iter().map(|&i| i as u64).collect();
    PackedCodeIndex::build(&fit.codes, &ids)?.save(out.join("codes_train.didx"))?;
    io::write_matrix(&fit.visual_basis, out.join("basis_visual.dmat"))?;
    io::write_matrix(&fit.text_transfer, out.join("transfer_text.dmat"))?;
    fs::write(out.join("trace.csv"), fit.trace.to_csv())?;
    let meta = TrainMetadata {
        variant: opt_cfg.variant.cli_name().to_string(),
        code_length: cfg.code_length,
        n_train: sp.training_ids.len(),
        iterations: fit.trace.records.len(),
        initial_objective: fit.initial_objective,
        final_objective: fit
            .trace
            .records
            .last()
            .map(|r| r.objective)
            .unwrap_or(fit.initial_objective),
    };
    fs::write(
        out.join("metadata.json"),
        serde_json::to_string_pretty(&meta).expect("metadata serializes"),
    )?;
    println!(
        "trained {} codes of {} bits in {} iterations (objective {:.4e} -> {:.4e})",
        sp.training_ids.len(),
        cfg.code_length,
        meta.iterations,
        meta.initial_objective,
        meta.final_objective
    );
    Ok(())
}

fn load_hash_model(cfg: &RunConfig) -> Result<HashModel<f64>> {
    HashModel::load(cfg.paths.out_dir.join("hash"))
}

/// `encode`: encode every column of a feature matrix, ids 0..N-1.
pub fn cmd_encode(
    cfg: &RunConfig,
    matrix_path: &Path,
    output: Option<&Path>,
    verbose: bool,
) -> Result<()> {
    cfg.echo()?;
    let hash = load_hash_model(cfg)?;
    let m: dsth::Mat64 = io::read_matrix(matrix_path)?;
    let codes = stage(verbose, "encode", || hash.encode_matrix(&m))?;
    let ids: Vec<u64> = (0..codes.len() as u64).collect();
    let index = PackedCodeIndex::build(&codes, &ids)?;
    let out_path = match output {
        Some(p) => p.to_path_buf(),
        None => matrix_path.with_extension("didx"),
    };
    index.save(&out_path)?;
    println!(
        "encoded {} columns into {}",
        codes.len(),
        out_path.display()
    );
    Ok(())
}

/// `index`: encode the database split through the hash model, keyed by
/// dataset ids.
pub fn cmd_index(cfg: &RunConfig, verbose: bool) -> Result<()> {
    cfg.echo()?;
    let ds = stage(verbose, "load", || load_dataset(cfg))?;
    let sp = split(cfg, &ds)?;
    let hash = load_hash_model(cfg)?;
    let db = ds.visual.select_cols(&sp.database_ids);
    let codes = stage(verbose, "encode-database", || hash.encode_matrix(&db))?;
    let ids: Vec<u64> = sp.database_ids.iter().map(|&i| i as u64).collect();
    let index = PackedCodeIndex::build(&codes, &ids)?;
    let path = cfg.paths.out_dir.join("database.didx");
    index.save(&path)?;
    println!(
        "indexed {} database codes into {}",
        index.len(),
        path.display()
    );
    Ok(())
}

fn encode_queries(
    hash: &HashModel<f64>,
    ds: &Dataset<f64>,
    query_ids: &[usize],
) -> Result<Vec<PackedCode>> {
    query_ids
        .iter()
        .map(|&q| Ok(pack(&hash.encode(ds.visual.col(q))?)))
        .collect()
}

/// `search`: rank an external query matrix against a saved index.
pub fn cmd_search(
    cfg: &RunConfig,
    queries_path: &Path,
    index_path: Option<&Path>,
    k: usize,
    verbose: bool,
) -> Result<()> {
    cfg.echo()?;
    let hash = load_hash_model(cfg)?;
    let default_index = cfg.paths.out_dir.join("database.didx");
    let index = PackedCodeIndex::load(index_path.unwrap_or(&default_index))?;
    let queries: dsth::Mat64 = io::read_matrix(queries_path)?;
    let codes = stage(verbose, "encode-queries", || hash.encode_matrix(&queries))?;

    let mut csv = String::from("query,rank,id,distance\n");
    for q in 0..codes.len() {
        let packed = pack(codes.column(q));
        for (rank, (id, dist)) in index.search_topk(&packed, k)?.into_iter().enumerate() {
            csv.push_str(&format!("{q},{rank},{id},{dist}\n"));
        }
    }
    let path = cfg.paths.out_dir.join("search.csv");
    fs::write(&path, csv)?;
    println!(
        "searched {} queries (top-{k}) into {}",
        codes.len(),
        path.display()
    );
    Ok(())
}

/// `eval`: encode the query split, rank against the database index, score
/// mAP@R and the precision-scope curve.
pub fn cmd_eval(cfg: &RunConfig, index_path: Option<&Path>, verbose: bool) -> Result<()> {
    cfg.echo()?;
    let ds = stage(verbose, "load", || load_dataset(cfg))?;
    let sp = split(cfg, &ds)?;
    let hash = load_hash_model(cfg)?;
    let default_index = cfg.paths.out_dir.join("database.didx");
    let index = PackedCodeIndex::load(index_path.unwrap_or(&default_index))?;
    let queries = stage(verbose, "encode-queries", || {
        encode_queries(&hash, &ds, &sp.query_ids)
    })?;

    let labels = &ds.labels;
    let relevant =
        |q: usize, id: u64| is_relevant(labels.labels(sp.query_ids[q]), labels.labels(id as usize));
    let self_ids: Option<Vec<u64>> = cfg
        .eval
        .exclude_query_from_db
        .then(|| sp.query_ids.iter().map(|&q| q as u64).collect());

    let outcome = stage(verbose, "map", || {
        mean_ap(&index, &queries, relevant, cfg.eval.r, self_ids.as_deref())
    })?;
    let curve = if cfg.eval.scopes.is_empty() {
        Vec::new()
    } else {
        stage(verbose, "precision-scope", || {
            precision_scope_curve(&index, &queries, relevant, &cfg.eval.scopes)
        })?
    };

    let report = EvalReport {
        variant: cfg.variant.clone(),
        code_length: hash.code_length,
        retrieval_depth: cfg.eval.r,
        map: outcome.map,
        per_query_ap: outcome
            .per_query
            .iter()
            .map(|&(query, ap)| PerQueryAp { query, ap })
            .collect(),
        excluded_queries: outcome.excluded,
        precision_scope: curve
            .into_iter()
            .map(|(scope, precision)| ScopePoint { scope, precision })
            .collect(),
    };
    let out = &cfg.paths.out_dir;
    fs::write(
        out.join("eval_report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    fs::write(out.join("per_query_ap.csv"), report.per_query_csv())?;
    fs::write(
        out.join("precision_scope.csv"),
        report.precision_scope_csv(),
    )?;
    println!(
        "mAP@{} = {:.4} over {} queries ({} excluded)",
        cfg.eval.r,
        report.map,
        report.per_query_ap.len(),
        report.excluded_queries.len()
    );
    Ok(())
}
