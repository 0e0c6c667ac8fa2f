//! One function per pipeline stage. Each checks its upstream, writes its
//! artifacts, records their hashes and leaves a run log.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hexembed::aggregate::{aggregate_mean, region_feature_share};
use hexembed::analysis::arithmetic::{embed_arithmetic, ArithmeticQuery, Sign};
use hexembed::analysis::pca::{pca_project, rgb_encode};
use hexembed::analysis::tsne::tsne_project;
use hexembed::autoencoder::{encode_batch, train, Dims, ModelFile};
use hexembed::clustering::{agglomerative_ward, cut_tree, split_difference, ClusterCut};
use hexembed::grid::{assign_network, CellAssignment, CellId};
use hexembed::ingest::{filter_driveable, parse_road_collection};
use hexembed::schema::{default_driveable_set, default_schema, encode_segment, tag_coverage_stats_for};
use hexembed::{FeatureSchema, ModelParams, RegionEmbedding, RoadNetwork};
use ndarray::Array2;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::Config;
use crate::error::CliError;
use crate::export::export_geojson;
use crate::tables::{self, prefixed, Table};
use crate::workspace::{sha256_file, InputFile, Manifest, RunLog, Stage, Timer, Workspace};

pub const ROADS: &str = "roads.jsonl";
pub const SCHEMA: &str = "schema.json";
pub const FEATURES: &str = "features.csv";
pub const TAG_STATS: &str = "tag_stats.json";
pub const ASSIGNMENT: &str = "assignment.csv";
pub const MODEL: &str = "model.json";
pub const LOSS_HISTORY: &str = "loss_history.csv";
pub const SEGMENT_EMBEDDINGS: &str = "segment_embeddings.csv";
pub const REGION_EMBEDDINGS: &str = "region_embeddings.csv";
pub const DENDROGRAM: &str = "dendrogram.csv";
pub const DENDROGRAM_TOP: &str = "dendrogram_top.csv";
pub const CUT: &str = "cut.csv";
pub const SPLIT_DIFFERENCES: &str = "split_differences.csv";
pub const CLUSTER_PROFILES: &str = "cluster_profiles.csv";
pub const PCA: &str = "pca.csv";
pub const PCA_VARIANCE: &str = "pca_variance.csv";
pub const RGB: &str = "rgb.csv";
pub const TSNE: &str = "tsne.csv";
pub const TSNE_KL: &str = "tsne_kl.csv";
pub const CLUSTERS_GEOJSON: &str = "clusters.geojson";
pub const RGB_GEOJSON: &str = "rgb.geojson";

type Notes = BTreeMap<String, Value>;

fn data<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{context}: {e}"))
}

/// Shared bookkeeping around a stage body, which returns the files it wrote.
fn run_stage(
    ws: &Workspace,
    cfg: &Config,
    stage: Stage,
    external: BTreeMap<String, String>,
    body: impl FnOnce(&mut Manifest, &mut Notes) -> Result<Vec<&'static str>, CliError>,
) -> Result<(), CliError> {
    let timer = Timer::start();
    let mut manifest = ws.check_upstream(stage, cfg)?;
    let mut inputs = ws.upstream_inputs(stage, &manifest);
    inputs.extend(external);
    let mut notes = Notes::new();
    log::info!("running {stage}");
    let outputs = body(&mut manifest, &mut notes)?;
    let hashes = ws.record(&mut manifest, stage, cfg, inputs.clone(), &outputs)?;
    ws.write_log(&RunLog {
        stage: stage.name().to_string(),
        seed: cfg.seed,
        started_unix_s: timer.started_unix_s(),
        duration_ms: timer.elapsed_ms(),
        config: cfg.clone(),
        inputs,
        outputs: hashes,
        notes,
    })
}

pub fn load_schema(cfg: &Config) -> Result<FeatureSchema, CliError> {
    match &cfg.schema {
        None => Ok(default_schema()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(data(&path.display().to_string()))?;
            FeatureSchema::from_json(&text).map_err(data(&path.display().to_string()))
        }
    }
}

fn driveable_set(cfg: &Config) -> Result<BTreeSet<String>, CliError> {
    if let Some(list) = &cfg.driveable {
        return Ok(list.iter().cloned().collect());
    }
    if cfg.schema.is_none() {
        return Ok(default_driveable_set());
    }
    let schema = load_schema(cfg)?;
    let highway = schema
        .key_index("highway")
        .ok_or_else(|| CliError::Usage("custom schema has no `highway` key; set `driveable` in the config".into()))?;
    Ok(schema.keys()[highway].bins.iter().filter(|b| !b.is_other()).map(|b| b.name.clone()).collect())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn ingest(ws: &Workspace, cfg: &Config, inputs: &[(PathBuf, String)]) -> Result<(), CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage("ingest needs at least one --input/--city pair".into()));
    }
    let mut files = Vec::new();
    let mut external = BTreeMap::new();
    for (path, city) in inputs {
        let abs = fs::canonicalize(path).map_err(data(&path.display().to_string()))?;
        let key = abs.display().to_string();
        let sha256 = sha256_file(&abs)?;
        external.insert(key.clone(), sha256.clone());
        files.push(InputFile { path: key, city: city.clone(), sha256 });
    }
    let allowed = driveable_set(cfg)?;
    run_stage(ws, cfg, Stage::Ingest, external, |manifest, notes| {
        let parsed = files
            .par_iter()
            .map(|f| {
                let bytes = fs::read(&f.path)?;
                parse_road_collection(&bytes, &f.city).map_err(data(&f.path))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut skipped = 0;
        let mut lists = 0;
        let mut networks = Vec::new();
        for (f, p) in files.iter().zip(parsed) {
            if p.warnings.skipped_features > 0 || p.warnings.list_values > 0 {
                log::warn!(
                    "{}: skipped {} features without line geometry, reduced {} list values",
                    f.path,
                    p.warnings.skipped_features,
                    p.warnings.list_values
                );
            }
            skipped += p.warnings.skipped_features;
            lists += p.warnings.list_values;
            networks.push(p.network);
        }
        let all = RoadNetwork::merge(networks).map_err(CliError::data)?;
        let kept = filter_driveable(&all, &allowed);
        if kept.is_empty() {
            return Err(CliError::Data("no driveable segments in the inputs".into()));
        }
        let mut out = BufWriter::new(fs::File::create(ws.path(ROADS))?);
        kept.write_jsonl(&mut out).map_err(CliError::data)?;
        out.flush()?;
        notes.insert("segments_parsed".into(), json!(all.len()));
        notes.insert("segments_driveable".into(), json!(kept.len()));
        notes.insert("skipped_features".into(), json!(skipped));
        notes.insert("list_values".into(), json!(lists));
        manifest.inputs = files.clone();
        Ok(vec![ROADS])
    })
}

pub fn featurize(ws: &Workspace, cfg: &Config) -> Result<(), CliError> {
    let mut external = BTreeMap::new();
    if let Some(path) = &cfg.schema {
        let abs = fs::canonicalize(path).map_err(data(&path.display().to_string()))?;
        external.insert(abs.display().to_string(), sha256_file(&abs)?);
    }
    run_stage(ws, cfg, Stage::Featurize, external, |manifest, notes| {
        let schema = load_schema(cfg)?;
        let net = tables::read_roads(&ws.path(ROADS))?;
        let rows: BTreeMap<&str, Vec<u8>> = net
            .segments()
            .par_iter()
            .map(|s| (s.id.as_str(), encode_segment(s, &schema).bits))
            .collect();
        let mut header = vec!["segment_id".to_string()];
        header.extend(schema.column_names());
        let mut t = Table::create(&ws.path(FEATURES), &header)?;
        for (id, bits) in &rows {
            t.row(std::iter::once(id.to_string()).chain(bits.iter().map(u8::to_string)))?;
        }
        t.finish()?;
        fs::write(ws.path(SCHEMA), schema.to_json())?;
        let keys: Vec<&str> = schema.keys().iter().map(|k| k.name.as_str()).collect();
        let stats = tag_coverage_stats_for(&net, &keys).map_err(CliError::data)?;
        write_json(&ws.path(TAG_STATS), &stats)?;
        notes.insert("columns".into(), json!(schema.width()));
        manifest.schema_version = Some(schema.version().to_string());
        Ok(vec![SCHEMA, FEATURES, TAG_STATS])
    })
}

pub fn index(ws: &Workspace, cfg: &Config) -> Result<(), CliError> {
    run_stage(ws, cfg, Stage::Index, BTreeMap::new(), |manifest, notes| {
        let net = tables::read_roads(&ws.path(ROADS))?;
        let asg = assign_network(&net, cfg.resolution).map_err(CliError::data)?;
        let mut t = Table::create(&ws.path(ASSIGNMENT), &["segment_id", "cell_address"])?;
        for (seg, cells) in asg.segment_to_cells() {
            for cell in cells {
                t.row([seg.clone(), cell.to_string()])?;
            }
        }
        t.finish()?;
        notes.insert("regions".into(), json!(asg.cell_to_segments().len()));
        manifest.resolution = Some(cfg.resolution);
        Ok(vec![ASSIGNMENT])
    })
}

fn feature_matrix(rows: &BTreeMap<String, Vec<u8>>, width: usize) -> Array2<f64> {
    let ids: Vec<&Vec<u8>> = rows.values().collect();
    Array2::from_shape_fn((ids.len(), width), |(i, j)| f64::from(ids[i][j]))
}

fn read_schema_file(ws: &Workspace) -> Result<FeatureSchema, CliError> {
    let text = fs::read_to_string(ws.path(SCHEMA))?;
    FeatureSchema::from_json(&text).map_err(data(SCHEMA))
}

fn read_features_checked(ws: &Workspace, schema: &FeatureSchema) -> Result<BTreeMap<String, Vec<u8>>, CliError> {
    let (columns, rows) = tables::read_features(&ws.path(FEATURES))?;
    if columns != schema.column_names() {
        return Err(CliError::Data(format!("{FEATURES} columns do not match {SCHEMA}")));
    }
    Ok(rows)
}

pub fn train_model(ws: &Workspace, cfg: &Config) -> Result<(), CliError> {
    run_stage(ws, cfg, Stage::Train, BTreeMap::new(), |manifest, notes| {
        let schema = read_schema_file(ws)?;
        let rows = read_features_checked(ws, &schema)?;
        let data = feature_matrix(&rows, schema.width());
        let groups: Option<Vec<String>> = match cfg.train.split {
            hexembed::autoencoder::SplitMode::Uniform => None,
            hexembed::autoencoder::SplitMode::Stratified => {
                let net = tables::read_roads(&ws.path(ROADS))?;
                let city: BTreeMap<&str, &str> = net.segments().iter().map(|s| (s.id.as_str(), s.city.as_str())).collect();
                Some(rows.keys().map(|id| city.get(id.as_str()).copied().unwrap_or_default().to_string()).collect())
            }
        };
        let dims = Dims {
            input: schema.width(),
            hidden: cfg.model.hidden,
            latent: cfg.model.latent,
        };
        let report = train(data.view(), dims, &cfg.train_config(), groups.as_deref()).map_err(CliError::data)?;
        write_json(&ws.path(MODEL), &ModelFile::from_params(&report.params, cfg.seed, schema.version()))?;
        let mut t = Table::create(&ws.path(LOSS_HISTORY), &["epoch", "train_loss", "test_loss"])?;
        for e in &report.history {
            t.row([e.epoch.to_string(), e.train.to_string(), e.test.to_string()])?;
        }
        t.finish()?;
        if let Some(last) = report.history.last() {
            log::info!("final train loss {} test loss {}", last.train, last.test);
            notes.insert("final_train_loss".into(), json!(last.train));
            notes.insert("final_test_loss".into(), json!(last.test));
        }
        notes.insert("train_rows".into(), json!(report.train_rows.len()));
        notes.insert("test_rows".into(), json!(report.test_rows.len()));
        manifest.seed = Some(cfg.seed);
        Ok(vec![MODEL, LOSS_HISTORY])
    })
}

pub fn read_model(path: &Path) -> Result<ModelParams, CliError> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(data(MODEL))?;
    file.to_params().map_err(data(MODEL))
}

pub fn embed(ws: &Workspace, cfg: &Config) -> Result<(), CliError> {
    run_stage(ws, cfg, Stage::Embed, BTreeMap::new(), |_, notes| {
        let schema = read_schema_file(ws)?;
        let rows = read_features_checked(ws, &schema)?;
        let params = read_model(&ws.path(MODEL))?;
        let z = encode_batch(&params, feature_matrix(&rows, schema.width()).view()).map_err(CliError::data)?;
        let mut header = vec!["segment_id".to_string()];
        header.extend(prefixed("z", z.ncols()));
        let mut t = Table::create(&ws.path(SEGMENT_EMBEDDINGS), &header)?;
        for (id, row) in rows.keys().zip(z.rows()) {
            t.row(std::iter::once(id.clone()).chain(row.iter().map(f64::to_string)))?;
        }
        t.finish()?;
        notes.insert("segments".into(), json!(z.nrows()));
        Ok(vec![SEGMENT_EMBEDDINGS])
    })
}

pub fn aggregate(ws: &Workspace, cfg: &Config) -> Result<(), CliError> {
    run_stage(ws, cfg, Stage::Aggregate, BTreeMap::new(), |_, notes| {
        let asg = tables::read_assignment(&ws.path(ASSIGNMENT), cfg.resolution)?;
        let emb = tables::read_vectors(&ws.path(SEGMENT_EMBEDDINGS))?;
        let regions = aggregate_mean(&asg, &emb).map_err(CliError::data)?;
        write_regions(&ws.path(REGION_EMBEDDINGS), &regions)?;
        notes.insert("regions".into(), json!(regions.len()));
        Ok(vec![REGION_EMBEDDINGS])
    })
}

fn write_regions(path: &Path, regions: &BTreeMap<CellId, RegionEmbedding>) -> Result<(), CliError> {
    let dim = regions.values().next().map_or(0, |r| r.values.len());
    let mut header = vec!["cell_address".to_string()];
    header.extend(prefixed("v", dim));
    header.push("segment_count".into());
    let mut t = Table::create(path, &header)?;
    for (cell, r) in regions {
        let fields = std::iter::once(cell.to_string())
            .chain(r.values.iter().map(f64::to_string))
            .chain(std::iter::once(r.segment_count.to_string()));
        t.row(fields)?;
    }
    t.finish()
}

fn write_cut(path: &Path, cut: &ClusterCut) -> Result<(), CliError> {
    let mut t = Table::create(path, &["cell_address", "cluster_id"])?;
    for (cell, id) in &cut.labels {
        t.row([cell.to_string(), id.to_string()])?;
    }
    t.finish()
}

pub fn cluster(ws: &Workspace, cfg: &Config) -> Result<(), CliError> {
    run_stage(ws, cfg, Stage::Cluster, BTreeMap::new(), |_, notes| {
        let schema = read_schema_file(ws)?;
        let features = read_features_checked(ws, &schema)?;
        let asg = tables::read_assignment(&ws.path(ASSIGNMENT), cfg.resolution)?;
        let regions = tables::read_regions(&ws.path(REGION_EMBEDDINGS))?;
        let dendrogram = agglomerative_ward(&regions).map_err(CliError::data)?;
        let n = dendrogram.len();
        if cfg.k > n {
            return Err(CliError::Data(format!("k = {} exceeds the {n} regions", cfg.k)));
        }

        let header = ["merge_index", "left", "right", "distance", "size"];
        let mut full = Table::create(&ws.path(DENDROGRAM), &header)?;
        let mut top = Table::create(&ws.path(DENDROGRAM_TOP), &header)?;
        let first_top = dendrogram.merges.len().saturating_sub(cfg.top_merges);
        for (i, m) in dendrogram.merges.iter().enumerate() {
            let row = [i.to_string(), m.left.to_string(), m.right.to_string(), m.distance.to_string(), m.size.to_string()];
            if i >= first_top {
                top.row(&row)?;
            }
            full.row(row)?;
        }
        full.finish()?;
        top.finish()?;

        let cuts = (1..=cfg.k)
            .map(|k| cut_tree(&dendrogram, k))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::data)?;
        let cut = cuts.last().expect("k >= 1");
        write_cut(&ws.path(CUT), cut)?;

        let columns = schema.column_names();
        let key_columns: Vec<_> = (0..schema.keys().len()).map(|k| schema.key_columns(k)).collect();
        let mut t = Table::create(
            &ws.path(SPLIT_DIFFERENCES),
            &["k", "parent", "new_cluster", "old_cluster", "column", "per_column", "per_key"],
        )?;
        for pair in cuts.windows(2) {
            let diff = split_difference(&pair[0], &pair[1], &asg, &features, &key_columns, cfg.share_mode).map_err(CliError::data)?;
            for (j, name) in columns.iter().enumerate() {
                t.row([
                    pair[1].k.to_string(),
                    diff.parent.to_string(),
                    diff.new_cluster.to_string(),
                    diff.old_cluster.to_string(),
                    name.clone(),
                    diff.per_column[j].to_string(),
                    diff.per_key[j].to_string(),
                ])?;
            }
        }
        t.finish()?;

        let mut header = vec!["cluster_id".to_string(), "regions".to_string()];
        header.extend(columns.iter().cloned());
        let mut t = Table::create(&ws.path(CLUSTER_PROFILES), &header)?;
        for (id, size) in cut.sizes().into_iter().enumerate() {
            let shares = region_feature_share(&asg, &features, &cut.members(id), cfg.share_mode).map_err(CliError::data)?;
            t.row([id.to_string(), size.to_string()].into_iter().chain(shares.iter().map(f64::to_string)))?;
        }
        t.finish()?;
        notes.insert("regions".into(), json!(n));
        notes.insert("cluster_sizes".into(), json!(cut.sizes()));
        Ok(vec![DENDROGRAM, DENDROGRAM_TOP, CUT, SPLIT_DIFFERENCES, CLUSTER_PROFILES])
    })
}

/// Cities whose segments touch each region.
fn region_cities(ws: &Workspace, cfg: &Config) -> Result<BTreeMap<CellId, Vec<String>>, CliError> {
    let net = tables::read_roads(&ws.path(ROADS))?;
    let asg: CellAssignment = tables::read_assignment(&ws.path(ASSIGNMENT), cfg.resolution)?;
    Ok(asg.cell_cities(&net))
}

fn cells_of_city(cities: &BTreeMap<CellId, Vec<String>>, city: &str) -> Result<BTreeSet<CellId>, CliError> {
    let cells: BTreeSet<CellId> = cities.iter().filter(|(_, cs)| cs.iter().any(|c| c == city)).map(|(&c, _)| c).collect();
    if cells.is_empty() {
        let known: BTreeSet<&String> = cities.values().flatten().collect();
        return Err(CliError::Data(format!("no regions in city `{city}` (known: {known:?})")));
    }
    Ok(cells)
}

pub fn project(ws: &Workspace, cfg: &Config) -> Result<(), CliError> {
    run_stage(ws, cfg, Stage::Project, BTreeMap::new(), |_, notes| {
        let regions = tables::read_regions(&ws.path(REGION_EMBEDDINGS))?;

        let (projection, pca) = pca_project(&regions, 3).map_err(CliError::data)?;
        let mut t = Table::create(&ws.path(PCA), &["cell_address", "x", "y", "z"])?;
        for (cell, v) in &projection.coords {
            t.row(std::iter::once(cell.to_string()).chain(v.iter().map(f64::to_string)))?;
        }
        t.finish()?;
        let mut t = Table::create(&ws.path(PCA_VARIANCE), &["component", "explained_variance", "explained_variance_ratio"])?;
        for (i, (v, r)) in pca.explained_variance.iter().zip(&pca.explained_variance_ratio).enumerate() {
            t.row([i.to_string(), v.to_string(), r.to_string()])?;
        }
        t.finish()?;
        let rgb = rgb_encode(&projection).map_err(CliError::data)?;
        let mut t = Table::create(&ws.path(RGB), &["cell_address", "r", "g", "b"])?;
        for (cell, c) in &rgb {
            t.row([cell.to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string()])?;
        }
        t.finish()?;

        let subset: BTreeMap<CellId, RegionEmbedding> = match &cfg.tsne.city {
            None => regions,
            Some(city) => {
                let keep = cells_of_city(&region_cities(ws, cfg)?, city)?;
                regions.into_iter().filter(|(c, _)| keep.contains(c)).collect()
            }
        };
        let (projection, result) = tsne_project(&subset, &cfg.tsne_config()).map_err(CliError::data)?;
        let mut t = Table::create(&ws.path(TSNE), &["cell_address", "x", "y"])?;
        for (cell, v) in &projection.coords {
            t.row(std::iter::once(cell.to_string()).chain(v.iter().map(f64::to_string)))?;
        }
        t.finish()?;
        let mut t = Table::create(&ws.path(TSNE_KL), &["iteration", "kl"])?;
        for (it, kl) in &result.kl_history {
            t.row([it.to_string(), kl.to_string()])?;
        }
        t.finish()?;
        notes.insert("tsne_regions".into(), json!(subset.len()));
        notes.insert("tsne_perplexity".into(), json!(result.perplexity));
        notes.insert("tsne_jittered".into(), json!(result.jittered));
        notes.insert("pca_explained_variance_ratio".into(), json!(pca.explained_variance_ratio));
        Ok(vec![PCA, PCA_VARIANCE, RGB, TSNE, TSNE_KL])
    })
}

pub fn export(ws: &Workspace, cfg: &Config) -> Result<(), CliError> {
    run_stage(ws, cfg, Stage::Export, BTreeMap::new(), |_, notes| {
        let regions = tables::read_regions(&ws.path(REGION_EMBEDDINGS))?;
        let count = |cell: &CellId| json!(regions.get(cell).map_or(0, |r| r.segment_count));

        let (_, labels) = tables::read_cell_ints(&ws.path(CUT))?;
        let props: BTreeMap<CellId, Map<String, Value>> = labels
            .iter()
            .map(|(cell, v)| (*cell, Map::from_iter([("cluster_id".into(), json!(v[0])), ("segment_count".into(), count(cell))])))
            .collect();
        write_json(&ws.path(CLUSTERS_GEOJSON), &export_geojson(&props))?;

        let (_, colours) = tables::read_cell_ints(&ws.path(RGB))?;
        let props: BTreeMap<CellId, Map<String, Value>> = colours
            .iter()
            .map(|(cell, v)| {
                let m = Map::from_iter([
                    ("r".into(), json!(v[0])),
                    ("g".into(), json!(v[1])),
                    ("b".into(), json!(v[2])),
                    ("segment_count".into(), count(cell)),
                ]);
                (*cell, m)
            })
            .collect();
        write_json(&ws.path(RGB_GEOJSON), &export_geojson(&props))?;
        notes.insert("features".into(), json!(labels.len()));
        Ok(vec![CLUSTERS_GEOJSON, RGB_GEOJSON])
    })
}

/// An arithmetic query as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct ArithRequest {
    pub plus: Vec<String>,
    pub minus: Vec<String>,
    pub within: Option<String>,
    pub keep_operands: bool,
    pub average: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ArithAnswer {
    pub cell: CellId,
    pub distance: f64,
}

pub fn arith(ws: &Workspace, cfg: &Config, req: &ArithRequest) -> Result<ArithAnswer, CliError> {
    let timer = Timer::start();
    let manifest = ws.check_upstream(Stage::Arith, cfg)?;
    let parse = |s: &String| s.parse::<CellId>().map_err(|e| CliError::Usage(e.to_string()));
    let mut terms = Vec::new();
    for s in &req.plus {
        terms.push((Sign::Plus, parse(s)?));
    }
    for s in &req.minus {
        terms.push((Sign::Minus, parse(s)?));
    }
    if terms.is_empty() {
        return Err(CliError::Usage("arith needs at least one --plus or --minus cell".into()));
    }
    let regions = tables::read_regions(&ws.path(REGION_EMBEDDINGS))?;
    let constraint = match &req.within {
        None => regions.keys().copied().collect(),
        Some(city) => cells_of_city(&region_cities(ws, cfg)?, city)?,
    };
    let query = ArithmeticQuery {
        terms,
        constraint,
        keep_operands: req.keep_operands,
        average: req.average,
    };
    let resolved = embed_arithmetic(&query, &regions).map_err(CliError::data)?;
    let answer = ArithAnswer {
        cell: resolved.result,
        distance: resolved.distance,
    };
    let notes = Notes::from([
        ("plus".into(), json!(req.plus)),
        ("minus".into(), json!(req.minus)),
        ("within".into(), json!(req.within)),
        ("result".into(), json!(answer)),
    ]);
    ws.write_log(&RunLog {
        stage: Stage::Arith.name().to_string(),
        seed: cfg.seed,
        started_unix_s: timer.started_unix_s(),
        duration_ms: timer.elapsed_ms(),
        config: cfg.clone(),
        inputs: ws.upstream_inputs(Stage::Arith, &manifest),
        outputs: BTreeMap::new(),
        notes,
    })?;
    Ok(answer)
}

/// Every stage from `ingest` through `export`.
pub fn run_all(ws: &Workspace, cfg: &Config, inputs: &[(PathBuf, String)]) -> Result<(), CliError> {
    ingest(ws, cfg, inputs)?;
    featurize(ws, cfg)?;
    index(ws, cfg)?;
    train_model(ws, cfg)?;
    embed(ws, cfg)?;
    aggregate(ws, cfg)?;
    cluster(ws, cfg)?;
    project(ws, cfg)?;
    export(ws, cfg)
}

/// Writes the synthetic corpus: one GeoJSON per city plus planted labels.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<Vec<(PathBuf, String)>, CliError> {
    fs::create_dir_all(dir)?;
    let g = hexembed::fixture::gridville(seed);
    let mut written = Vec::new();
    for (city, fc) in g.city_collections() {
        let path = dir.join(format!("{city}.geojson"));
        write_json(&path, &fc)?;
        written.push((path, city));
    }
    fs::write(dir.join("labels.csv"), g.labels_csv())?;
    Ok(written)
}
