//! The pipeline stages behind each command.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use corisk_core::blocks::{
    assign_groups, covariate_index, extract_block_maxima, standardize_covariates, summarize_groups, BlockRecord,
    SiteMap, StandardizationReport,
};
use corisk_core::detection::{
    describe_event, scan_frame, BoundaryPolyline, EventContext, EventKind, NearMissEvent, ScenarioIndex,
};
use corisk_core::dynamics::VehicleSpec;
use corisk_core::geometry::Point;
use corisk_core::gev::GevParams;
use corisk_core::hbsgrp::{
    bgr_diagnostic, block_labels, fit_metrics, run_chain, HbModel, Layout, McmcConfig, ModelSpec, PosteriorChain,
    Variant, INTERCEPT, METRIC_DRAWS,
};
use corisk_core::kinematics::{preprocess as clean_track, ProcessedTrack, RawTrack};
use corisk_core::risk::{
    exceedance_prob, group_cor, posterior_bands, threshold_sweep, total_cf, Band, CORConfig, SummaryMode,
};
use corisk_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::config::Loaded;
use crate::error::{CliError, Result};
use crate::io::{self, num, GroupRow, Standardization};
use crate::manifest::{Manifest, Recorder};
use crate::parallel;
use crate::synth;

pub const STAGES: [&str; 7] = ["preprocess", "detect", "blocks", "fit", "risk", "validate", "synth"];

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn info(msg: impl std::fmt::Display) {
    eprintln!("{msg}");
}

/// Removes a stage's previous outputs so that reruns leave no stale files.
fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::missing(path, stage))
    }
}

fn processed_dir(cfg: &Loaded) -> PathBuf {
    cfg.stage_dir("preprocess").join("tracks")
}

fn events_path(cfg: &Loaded) -> PathBuf {
    cfg.stage_dir("detect").join("events.csv")
}

fn fit_dir(cfg: &Loaded, kind: EventKind, variant: Variant) -> PathBuf {
    cfg.stage_dir("fit").join(kind.code()).join(variant.label())
}

fn kind_label(kind: EventKind) -> &'static str {
    kind.code()
}

fn load_specs(cfg: &Loaded, rec: &mut Recorder) -> Result<BTreeMap<String, VehicleSpec>> {
    match &cfg.config.paths.dimensions {
        Some(p) => {
            let p = cfg.resolve(p);
            let specs = io::read_dimensions(&p)?;
            rec.input(&p);
            Ok(specs)
        }
        None => Ok(BTreeMap::new()),
    }
}

fn load_boundaries(cfg: &Loaded, rec: &mut Recorder) -> Result<Vec<BoundaryPolyline>> {
    match &cfg.config.paths.boundaries {
        Some(p) => {
            let p = cfg.resolve(p);
            let b = io::read_boundaries(&p)?;
            rec.input(&p);
            Ok(b)
        }
        None => Ok(Vec::new()),
    }
}

fn load_site(cfg: &Loaded, rec: &mut Recorder) -> Result<SiteMap> {
    let p = cfg.resolve(&cfg.config.paths.site_map);
    let site = io::read_site_map(&p)?;
    rec.input(&p);
    Ok(site)
}

fn load_processed(cfg: &Loaded, rec: &mut Recorder) -> Result<Vec<ProcessedTrack>> {
    let dir = processed_dir(cfg);
    require(&dir, "preprocess")?;
    let specs = load_specs(cfg, rec)?;
    let files = io::list_csv(&dir)?;
    let tracks = parallel::map(&files, cfg.jobs, |p| io::read_processed(p, &specs));
    for f in &files {
        rec.input(f);
    }
    tracks.into_iter().collect()
}

/// Data errors raised while relating events back to tracks.
fn data_err(e: CoreError) -> CliError {
    CliError::Data(e.to_string())
}

pub fn preprocess(cfg: &Loaded) -> Result<Option<Manifest>> {
    let mut rec = Recorder::start("preprocess");
    let dir = cfg.resolve(&cfg.config.paths.tracks);
    require(&dir, "synth` or provide `paths.tracks")?;
    let files = io::list_csv(&dir)?;
    if files.is_empty() {
        warn(format!("no CSV files in {}; nothing to do", dir.display()));
        return Ok(None);
    }
    let specs = load_specs(cfg, &mut rec)?;
    let mut tracks: Vec<RawTrack> = Vec::new();
    let mut seen = BTreeSet::new();
    for f in &files {
        for t in io::read_track_file(f)? {
            if !seen.insert(t.agent_id().to_string()) {
                return Err(CliError::Data(format!(
                    "{}: agent `{}` also appears in another file",
                    f.display(),
                    t.agent_id()
                )));
            }
            tracks.push(t);
        }
        rec.input(f);
    }
    let out_stage = cfg.stage_dir("preprocess");
    fresh_dir(&out_stage)?;
    let out_dir = processed_dir(cfg);
    let pc = cfg.config.preprocess;
    let results = parallel::map(&tracks, cfg.jobs, |t| {
        let spec = specs.get(t.agent_id()).copied().unwrap_or_default();
        match clean_track(t, spec, &pc) {
            Ok(p) => {
                let path = out_dir.join(format!("{}.csv", p.agent_id));
                let line = format!("  {}: {} frames", p.agent_id, t.frames().len());
                io::write_processed(&path, cfg.seed(), &p).map(|_| Some((path, line)))
            }
            Err(CoreError::TooShort { agent, len, min }) => {
                warn(format!("skipping track `{agent}`: {len} frames, {min} required"));
                Ok(None)
            }
            Err(e) => Err(CliError::Data(e.to_string())),
        }
    });
    let mut written = 0;
    let missing = tracks.iter().filter(|t| !specs.contains_key(t.agent_id())).count();
    for r in results {
        if let Some((path, line)) = r? {
            println!("{line}");
            rec.output(&path);
            written += 1;
        }
    }
    if missing > 0 && cfg.config.paths.dimensions.is_some() {
        warn(format!("{missing} vehicles have no dimensions; using a default car"));
    }
    info(format!("preprocess: {written} of {} tracks written", tracks.len()));
    rec.finish(cfg, &out_stage).map(Some)
}

/// Scans every frame, in parallel over contiguous frame chunks. The merge
/// keeps frame order, so the result equals a serial scan.
pub fn scan_parallel(
    index: &ScenarioIndex<'_>,
    boundaries: &[BoundaryPolyline],
    det: &corisk_core::detection::DetectionConfig,
    jobs: usize,
) -> Result<Vec<NearMissEvent>> {
    det.validate()?;
    let keys: Vec<i64> = index.frame_keys().collect();
    let chunks: Vec<&[i64]> = keys.chunks(32).collect();
    let parts = parallel::map(&chunks, jobs, |chunk| {
        let mut out = Vec::new();
        for &k in *chunk {
            out.extend(scan_frame(index, k, boundaries, det)?);
        }
        Ok::<_, CoreError>(out)
    });
    let mut events = Vec::new();
    for p in parts {
        events.extend(p?);
    }
    Ok(events)
}

pub fn detect(cfg: &Loaded) -> Result<Manifest> {
    let mut rec = Recorder::start("detect");
    let tracks = load_processed(cfg, &mut rec)?;
    let boundaries = load_boundaries(cfg, &mut rec)?;
    let index = ScenarioIndex::new(&tracks).map_err(data_err)?;
    let events = scan_parallel(&index, &boundaries, &cfg.config.detection, cfg.jobs)?;
    let dir = cfg.stage_dir("detect");
    fresh_dir(&dir)?;
    let path = events_path(cfg);
    io::write_events(&path, cfg.seed(), &events)?;
    rec.output(&path);
    let vv = events.iter().filter(|e| e.kind == EventKind::VehicleVehicle).count();
    info(format!(
        "detect: {} tracks, {} frames, {vv} V-V and {} V-I events",
        tracks.len(),
        index.frame_keys().count(),
        events.len() - vv
    ));
    rec.finish(cfg, &dir)
}

/// Seconds during which at least one vehicle is inside each group.
fn group_exposure(index: &ScenarioIndex<'_>, site: &SiteMap) -> BTreeMap<usize, f64> {
    let mut frames: BTreeMap<usize, usize> = BTreeMap::new();
    for key in index.frame_keys() {
        let groups: BTreeSet<usize> =
            index.present(key).filter_map(|(t, i)| site.locate(&Point::new(t.frames[i].x, t.frames[i].y))).collect();
        for g in groups {
            *frames.entry(g).or_default() += 1;
        }
    }
    frames.into_iter().map(|(g, n)| (g, n as f64 * index.period())).collect()
}

pub fn blocks(cfg: &Loaded) -> Result<Manifest> {
    let mut rec = Recorder::start("blocks");
    let events_file = events_path(cfg);
    require(&events_file, "detect")?;
    let events = io::read_events(&events_file)?;
    rec.input(&events_file);
    let tracks = load_processed(cfg, &mut rec)?;
    let boundaries = load_boundaries(cfg, &mut rec)?;
    let site = load_site(cfg, &mut rec)?;
    let index = ScenarioIndex::new(&tracks).map_err(data_err)?;

    let contexts: Vec<EventContext> = parallel::map(&events, cfg.jobs, |e| describe_event(&index, e, &boundaries))
        .into_iter()
        .collect::<std::result::Result<_, _>>()
        .map_err(data_err)?;
    let assignment = assign_groups(events.into_iter().zip(contexts), &site);
    if assignment.dropped > 0 {
        warn(format!("{} events lie outside every group region", assignment.dropped));
    }
    let bc = cfg.config.blocks;
    let records = extract_block_maxima(&assignment.events, &bc, Some(&site))?;
    let exposure = group_exposure(&index, &site);

    let mut groups = Vec::new();
    let mut standardization = Standardization::new();
    for kind in [EventKind::VehicleVehicle, EventKind::VehicleInfrastructure] {
        let mut of_kind: Vec<BlockRecord> = records.iter().filter(|r| r.kind == kind).cloned().collect();
        let summary = summarize_groups(&of_kind, bc.min_blocks_per_group);
        for g in site.groups() {
            let s = summary.iter().find(|s| s.group == g.group_id);
            let (blocks, events) = s.map_or((0, 0), |s| (s.blocks, s.events));
            let small = blocks < bc.min_blocks_per_group;
            if small && blocks > 0 {
                warn(format!(
                    "{} group {}: {blocks} blocks, fewer than {}",
                    kind_label(kind),
                    g.group_id,
                    bc.min_blocks_per_group
                ));
            }
            groups.push(GroupRow {
                kind,
                group: g.group_id,
                blocks,
                events,
                exposure: exposure.get(&g.group_id).copied().unwrap_or(0.0),
                small,
            });
        }
        if !of_kind.is_empty() {
            // A lone block has no spread: every continuous covariate is
            // constant and only its intercept can be fitted.
            let report = match of_kind.len() {
                1 => standardize_covariates(&mut [of_kind[0].clone(), of_kind[0].clone()])?,
                _ => standardize_covariates(&mut of_kind)?,
            };
            for name in report.excluded() {
                info(format!("{}: covariate {name} is constant and excluded", kind_label(kind)));
            }
            standardization.insert(kind.code().to_string(), report);
        }
    }

    let dir = cfg.stage_dir("blocks");
    fresh_dir(&dir)?;
    let paths = [dir.join("blocks.csv"), dir.join("groups.csv"), dir.join("standardization.json")];
    io::write_blocks(&paths[0], cfg.seed(), &records)?;
    io::write_groups(&paths[1], cfg.seed(), &groups)?;
    io::write_json(&paths[2], &standardization)?;
    for p in &paths {
        rec.output(p);
    }
    info(format!(
        "blocks: {} block maxima from {} grouped events in {} groups",
        records.len(),
        assignment.events.len(),
        site.regions().len()
    ));
    rec.finish(cfg, &dir)
}

/// Block data of one kind with standardized covariates.
struct KindData {
    kind: EventKind,
    records: Vec<BlockRecord>,
    report: StandardizationReport,
}

fn load_kind_data(cfg: &Loaded, rec: &mut Recorder) -> Result<Vec<KindData>> {
    let dir = cfg.stage_dir("blocks");
    let (blocks_file, std_file) = (dir.join("blocks.csv"), dir.join("standardization.json"));
    require(&blocks_file, "blocks")?;
    require(&std_file, "blocks")?;
    let records = io::read_blocks(&blocks_file)?;
    let standardization: Standardization = io::read_json(&std_file)?;
    rec.input(&blocks_file);
    rec.input(&std_file);
    let mut out = Vec::new();
    for &kind in &cfg.config.fit.kinds {
        let raw: Vec<&BlockRecord> = records.iter().filter(|r| r.kind == kind).collect();
        let Some(report) = standardization.get(kind.code()) else {
            if !raw.is_empty() {
                warn(format!("{}: only {} block(s); skipped", kind_label(kind), raw.len()));
            }
            continue;
        };
        let records =
            raw.into_iter().map(|r| BlockRecord { covariates: report.apply(&r.covariates), ..r.clone() }).collect();
        out.push(KindData { kind, records, report: report.clone() });
    }
    Ok(out)
}

fn check_terms(spec: &ModelSpec, data: &KindData) -> Result<()> {
    for terms in [&spec.location, &spec.log_scale, &spec.shape] {
        for name in terms.fixed.iter().chain(&terms.random).filter(|n| *n != INTERCEPT) {
            let i = covariate_index(name).expect("validated name");
            if data.report.columns[i].excluded {
                return Err(CliError::Data(format!(
                    "covariate `{name}` is constant in the {} blocks; remove it from the model terms",
                    kind_label(data.kind)
                )));
            }
        }
    }
    Ok(())
}

fn group_count(site: &SiteMap) -> usize {
    site.groups().iter().map(|g| g.group_id).max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    #[serde(rename = "q2.5")]
    pub q025: f64,
    #[serde(rename = "q97.5")]
    pub q975: f64,
    /// Missing with a single chain or an infinite value.
    pub bgr: Option<f64>,
}

/// Contents of `summary.json` of one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub kind: EventKind,
    pub variant: Variant,
    pub records: usize,
    pub spec: ModelSpec,
    pub mcmc: McmcConfig,
    pub parameters: Vec<ParamRow>,
    pub max_bgr: Option<f64>,
    pub converged: bool,
    /// Information criteria; missing when a plug-in or pointwise density
    /// vanishes, as with a single block outside the posterior-mean support.
    pub dic: Option<f64>,
    pub p_dic: Option<f64>,
    pub waic: Option<f64>,
    pub p_waic: Option<f64>,
    pub looic: Option<f64>,
    pub p_loo: Option<f64>,
    pub lppd: Option<f64>,
    /// Posterior draws behind the information criteria.
    pub metric_draws: usize,
    pub blocks: Vec<String>,
    /// Final acceptance rate of each block, per chain.
    pub acceptance: Vec<Vec<f64>>,
}

impl FitSummary {
    /// Posterior means in the order of `layout`.
    pub fn means_for(&self, layout: &Layout) -> Result<Vec<f64>> {
        let names: Vec<&str> = self.parameters.iter().map(|p| p.name.as_str()).collect();
        if names != layout.names().iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(CliError::Data("fit summary parameters do not match its model".into()));
        }
        Ok(self.parameters.iter().map(|p| p.mean).collect())
    }
}

struct FitTask {
    kind: EventKind,
    spec: ModelSpec,
    model: HbModel,
    mcmc: McmcConfig,
    inits: Vec<Vec<f64>>,
}

pub fn fit(cfg: &Loaded) -> Result<Manifest> {
    let mut rec = Recorder::start("fit");
    let data = load_kind_data(cfg, &mut rec)?;
    let site = load_site(cfg, &mut rec)?;
    let k = group_count(&site);
    let c = &cfg.config;
    let mut tasks = Vec::new();
    for d in &data {
        for &variant in &c.fit.variants {
            let spec = c.model.spec(variant, k);
            spec.validate()?;
            check_terms(&spec, d)?;
            let model = HbModel::new(&d.records, &spec, &c.priors).map_err(data_err)?;
            let mcmc = McmcConfig {
                seed: cfg.substream(&format!("fit/{}/{}", d.kind.code(), variant.label())),
                ..c.mcmc.clone()
            };
            let inits = model.chain_inits(&mcmc)?;
            tasks.push(FitTask { kind: d.kind, spec, model, mcmc, inits });
        }
    }
    let jobs: Vec<(usize, usize)> =
        tasks.iter().enumerate().flat_map(|(t, task)| (0..task.mcmc.chains).map(move |ch| (t, ch))).collect();
    let mut runs = parallel::map(&jobs, cfg.jobs, |&(t, ch)| {
        let task = &tasks[t];
        run_chain(&task.model, &task.inits[ch], &task.mcmc, ch)
    })
    .into_iter();

    let dir = cfg.stage_dir("fit");
    fresh_dir(&dir)?;
    let mut comparison = Vec::new();
    let mut unconverged = Vec::new();
    for task in &tasks {
        let task_runs = runs.by_ref().take(task.mcmc.chains).collect::<std::result::Result<Vec<_>, _>>()?;
        let names = task.model.layout().names().to_vec();
        let chain = PosteriorChain::from_runs(names, task_runs, &task.mcmc)?;
        let summary = summarize_fit(task, &chain, c.fit.bgr_threshold)?;
        let out = fit_dir(cfg, task.kind, task.spec.variant);
        let (chains_file, summary_file) = (out.join("chains.csv"), out.join("summary.json"));
        io::write_chains(&chains_file, "fit", cfg.seed(), &chain)?;
        io::write_json(&summary_file, &summary)?;
        rec.output(&chains_file);
        rec.output(&summary_file);
        let label = format!("{} {}", kind_label(task.kind), task.spec.variant.label());
        let show = |v: Option<f64>| v.map_or("n/a".into(), |v| format!("{v:.3}"));
        info(format!(
            "fit: {label:<10} n={:<5} DIC {:>10}  WAIC {:>10}  LOOIC {:>10}  max BGR {}",
            summary.records,
            show(summary.dic),
            show(summary.waic),
            show(summary.looic),
            summary.max_bgr.map_or("n/a".into(), |b| format!("{b:.4}"))
        ));
        if summary.dic.is_none() || summary.waic.is_none() || summary.looic.is_none() {
            warn(format!("{label}: information criteria are not finite"));
        }
        if !summary.converged {
            unconverged.push(label.clone());
        }
        comparison.push(vec![
            task.kind.code().to_string(),
            task.spec.variant.label().to_string(),
            summary.records.to_string(),
            summary.dic.map_or(String::new(), num),
            summary.waic.map_or(String::new(), num),
            summary.looic.map_or(String::new(), num),
            summary.max_bgr.map_or(String::new(), num),
            summary.converged.to_string(),
        ]);
    }
    let comparison_file = dir.join("comparison.csv");
    io::write_csv(
        &comparison_file,
        "fit",
        cfg.seed(),
        &["kind", "variant", "records", "dic", "waic", "looic", "max_bgr", "converged"],
        comparison,
    )?;
    rec.output(&comparison_file);
    let manifest = rec.finish(cfg, &dir)?;
    if !unconverged.is_empty() {
        let msg = format!("BGR above {} for {}", c.fit.bgr_threshold, unconverged.join(", "));
        if c.fit.require_convergence {
            return Err(CliError::Numeric(msg));
        }
        warn(msg);
    }
    Ok(manifest)
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn summarize_fit(task: &FitTask, chain: &PosteriorChain, threshold: f64) -> Result<FitSummary> {
    let bgr: Vec<Option<f64>> = if chain.n_chains() >= 2 {
        bgr_diagnostic(chain)?.into_iter().map(|b| b.is_finite().then_some(b)).collect()
    } else {
        vec![None; chain.n_params()]
    };
    let max_bgr = if chain.n_chains() >= 2 {
        Some(bgr.iter().map(|b| b.unwrap_or(f64::INFINITY)).fold(f64::NEG_INFINITY, f64::max)).filter(|b| b.is_finite())
    } else {
        None
    };
    let converged = chain.n_chains() < 2 || max_bgr.is_some_and(|b| b <= threshold);
    let m = fit_metrics(chain, &task.model);
    Ok(FitSummary {
        kind: task.kind,
        variant: task.spec.variant,
        records: task.model.n_records(),
        spec: task.spec.clone(),
        mcmc: task.mcmc.clone(),
        parameters: chain
            .summarize()
            .into_iter()
            .zip(bgr)
            .map(|(s, bgr)| ParamRow { name: s.name, mean: s.mean, sd: s.sd, q025: s.q025, q975: s.q975, bgr })
            .collect(),
        max_bgr,
        converged,
        dic: finite(m.dic),
        p_dic: finite(m.p_dic),
        waic: finite(m.waic),
        p_waic: finite(m.p_waic),
        looic: finite(m.looic),
        p_loo: finite(m.p_loo),
        lppd: finite(m.lppd),
        metric_draws: m.n_draws,
        blocks: block_labels(&task.spec)?,
        acceptance: chain.acceptance.clone(),
    })
}

/// A fitted model ready for risk evaluation.
struct Fitted {
    data: KindData,
    summary: FitSummary,
    layout: Layout,
    dir: PathBuf,
}

fn load_fitted(cfg: &Loaded, rec: &mut Recorder) -> Result<Vec<Fitted>> {
    let variant = cfg.config.risk.variant;
    let mut out = Vec::new();
    for data in load_kind_data(cfg, rec)? {
        let dir = fit_dir(cfg, data.kind, variant);
        let file = dir.join("summary.json");
        require(&file, "fit")?;
        let summary: FitSummary = io::read_json(&file)?;
        rec.input(&file);
        if summary.kind != data.kind || summary.variant != variant || summary.records != data.records.len() {
            return Err(CliError::Data(format!(
                "{} does not match the current blocks; rerun `corisk fit`",
                file.display()
            )));
        }
        let layout = Layout::new(&summary.spec)?;
        out.push(Fitted { data, summary, layout, dir });
    }
    Ok(out)
}

fn block_params(layout: &Layout, theta: &[f64], records: &[BlockRecord]) -> Result<Vec<GevParams>> {
    records
        .iter()
        .map(|r| {
            let p = layout.gev_params(theta, r.group - 1, &r.covariates);
            GevParams::new(p.mu, p.sigma, p.xi).map_err(|e| CliError::Numeric(e.to_string()))
        })
        .collect()
}

/// Group ids in order with the positions of their blocks.
fn blocks_by_group(records: &[BlockRecord]) -> BTreeMap<usize, Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        m.entry(r.group).or_default().push(i);
    }
    m
}

/// Per-group COR, per-block probabilities and the corridor total.
type CorridorRisk = (Vec<(usize, f64)>, Vec<f64>, f64);

/// COR of every group and the corridor total for one parameter set.
fn corridor(
    records: &[BlockRecord],
    params: &[GevParams],
    exposure: &BTreeMap<usize, f64>,
    omega: f64,
    mode: SummaryMode,
) -> Result<CorridorRisk> {
    let mut cors = Vec::new();
    let mut probs = vec![0.0; records.len()];
    for (g, idx) in blocks_by_group(records) {
        let t = exposure.get(&g).copied().unwrap_or(0.0);
        let blocks: Vec<(usize, GevParams)> = idx.iter().map(|&i| (records[i].y, params[i])).collect();
        let gc = group_cor(g, &blocks, &CORConfig { omega, exposure: t, mode })
            .map_err(|e| CliError::Data(format!("group {g}: {e}")))?;
        for (&i, p) in idx.iter().zip(&gc.probs) {
            probs[i] = *p;
        }
        cors.push(gc);
    }
    let total = total_cf(&cors);
    Ok((total.per_group, probs, total.total))
}

fn exposures(cfg: &Loaded, kind: EventKind, groups: &[GroupRow]) -> BTreeMap<usize, f64> {
    groups
        .iter()
        .filter(|g| g.kind == kind)
        .map(|g| (g.group, cfg.config.risk.exposure.unwrap_or(g.exposure)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub kind: EventKind,
    pub variant: Variant,
    pub omega: f64,
    pub mode: SummaryMode,
    /// Corridor total of the group risks, per second.
    pub cf_total: f64,
    pub cf_band: Option<Band>,
    pub posterior_draws: usize,
}

pub fn risk(cfg: &Loaded) -> Result<Manifest> {
    let mut rec = Recorder::start("risk");
    let fitted = load_fitted(cfg, &mut rec)?;
    let groups_file = cfg.stage_dir("blocks").join("groups.csv");
    require(&groups_file, "blocks")?;
    let groups = io::read_groups(&groups_file)?;
    rec.input(&groups_file);
    let rc = &cfg.config.risk;

    let mut block_rows = Vec::new();
    let mut group_rows = Vec::new();
    let mut summaries = Vec::new();
    for f in &fitted {
        let records = &f.data.records;
        let exposure = exposures(cfg, f.data.kind, &groups);
        let theta = f.summary.means_for(&f.layout)?;
        let params = block_params(&f.layout, &theta, records)?;
        let (per_group, probs, cf_total) = corridor(records, &params, &exposure, rc.omega, rc.mode)?;

        let mut block_bands = vec![None; records.len()];
        let mut group_bands: BTreeMap<usize, Band> = BTreeMap::new();
        let mut cf_band = None;
        let mut n_draws = 0;
        if rc.mode == SummaryMode::FullPosterior {
            let chains_file = f.dir.join("chains.csv");
            require(&chains_file, "fit")?;
            let (names, chains) = io::read_chains(&chains_file)?;
            rec.input(&chains_file);
            if names != f.layout.names() {
                return Err(CliError::Data(format!("{}: parameters do not match the summary", chains_file.display())));
            }
            let chain = PosteriorChain {
                names,
                chains,
                burn_in: f.summary.mcmc.burn_in,
                thin: f.summary.mcmc.thin,
                seed: f.summary.mcmc.seed,
                acceptance: f.summary.acceptance.clone(),
            };
            let draws = chain.thinned_draws(METRIC_DRAWS);
            n_draws = draws.len();
            let per_draw = parallel::map(&draws, cfg.jobs, |theta| {
                let params = block_params(&f.layout, theta, records)?;
                corridor(records, &params, &exposure, rc.omega, rc.mode)
            });
            let mut prob_matrix = Vec::with_capacity(n_draws * records.len());
            let mut group_draws: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut totals = Vec::with_capacity(n_draws);
            for d in per_draw {
                let (pg, p, total) = d?;
                prob_matrix.extend(p);
                for (g, c) in pg {
                    group_draws.entry(g).or_default().push(c);
                }
                totals.push(total);
            }
            for (i, b) in posterior_bands(&prob_matrix, records.len()).into_iter().enumerate() {
                block_bands[i] = Some(b);
            }
            group_bands = group_draws.into_iter().map(|(g, v)| (g, Band::of(&v))).collect();
            cf_band = Some(Band::of(&totals));
        }

        let band_cells = |b: Option<&Band>| match b {
            Some(b) => vec![num(b.q025), num(b.q50), num(b.q975)],
            None => vec![String::new(), String::new(), String::new()],
        };
        for (i, r) in records.iter().enumerate() {
            let mut row = vec![
                f.data.kind.code().to_string(),
                r.group.to_string(),
                r.block.to_string(),
                r.y.to_string(),
                num(r.z),
                num(params[i].mu),
                num(params[i].sigma),
                num(params[i].xi),
                num(probs[i]),
            ];
            row.extend(band_cells(block_bands[i].as_ref()));
            block_rows.push(row);
        }
        let by_group = blocks_by_group(records);
        for (g, cor) in per_group {
            let idx = &by_group[&g];
            let mut row = vec![
                f.data.kind.code().to_string(),
                g.to_string(),
                idx.len().to_string(),
                idx.iter().map(|&i| records[i].y).sum::<usize>().to_string(),
                num(exposure.get(&g).copied().unwrap_or(0.0)),
                num(cor),
            ];
            row.extend(band_cells(group_bands.get(&g)));
            group_rows.push(row);
        }
        info(format!("risk: {} CF_total {} per second at omega {}", kind_label(f.data.kind), cf_total, rc.omega));
        summaries.push(RiskSummary {
            kind: f.data.kind,
            variant: rc.variant,
            omega: rc.omega,
            mode: rc.mode,
            cf_total,
            cf_band,
            posterior_draws: n_draws,
        });
    }

    let dir = cfg.stage_dir("risk");
    fresh_dir(&dir)?;
    let seed = cfg.seed();
    let files = [dir.join("cor_blocks.csv"), dir.join("cor_groups.csv"), dir.join("summary.json")];
    io::write_csv(
        &files[0],
        "risk",
        seed,
        &["kind", "group", "block", "y", "z", "mu", "sigma", "xi", "p_crash", "p_q2.5", "p_q50", "p_q97.5"],
        block_rows,
    )?;
    io::write_csv(
        &files[1],
        "risk",
        seed,
        &["kind", "group", "blocks", "events", "exposure_s", "cor", "cor_q2.5", "cor_q50", "cor_q97.5"],
        group_rows,
    )?;
    io::write_json(&files[2], &summaries)?;
    for p in &files {
        rec.output(p);
    }
    rec.finish(cfg, &dir)
}

/// Share of ground-truth events matched by a detected event of the same
/// kind and pairing at the same frame with `|t_c error| ≤ Δt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub truth_events: usize,
    pub recovered: usize,
    pub rate: f64,
    pub max_abs_tc_error: Option<f64>,
    pub tolerance: f64,
}

pub fn recovery(truth: &[io::TruthRow], events: &[NearMissEvent], dt: f64, period: f64) -> Recovery {
    let mut by_key: BTreeMap<(EventKind, &str, &str), Vec<&NearMissEvent>> = BTreeMap::new();
    for e in events {
        by_key.entry((e.kind, &e.ego, &e.other)).or_default().push(e);
    }
    let mut recovered = 0;
    let mut max_err: Option<f64> = None;
    for g in truth {
        let hit = by_key
            .get(&(g.kind, g.ego.as_str(), g.other.as_str()))
            .and_then(|v| v.iter().find(|e| (e.frame_t - g.frame_t).abs() < 0.5 * period));
        if let Some(e) = hit {
            let err = (e.t_c - g.t_c).abs();
            max_err = Some(max_err.map_or(err, |m: f64| m.max(err)));
            if err <= dt + 1e-9 {
                recovered += 1;
            }
        }
    }
    let n = truth.len();
    Recovery {
        truth_events: n,
        recovered,
        rate: if n == 0 { 1.0 } else { recovered as f64 / n as f64 },
        max_abs_tc_error: max_err,
        tolerance: dt,
    }
}

pub fn validate(cfg: &Loaded) -> Result<Manifest> {
    let mut rec = Recorder::start("validate");
    let fitted = load_fitted(cfg, &mut rec)?;
    let rc = &cfg.config.risk;
    let mut rows = Vec::new();
    for f in &fitted {
        let records = &f.data.records;
        let theta = f.summary.means_for(&f.layout)?;
        let params = block_params(&f.layout, &theta, records)?;
        let observed: Vec<f64> = records.iter().map(|r| -r.z).collect();
        let sweep = threshold_sweep(&rc.grid, &observed, |w| params.iter().map(|p| exceedance_prob(p, w)).collect())
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        for r in sweep {
            if r.skipped() {
                info(format!("validate: {} omega {}: single class, skipped", kind_label(f.data.kind), r.omega));
            }
            rows.push(vec![
                f.data.kind.code().to_string(),
                num(r.omega),
                r.cases.to_string(),
                r.controls.to_string(),
                r.auc.map_or(String::new(), num),
                if r.skipped() { "skipped" } else { "ok" }.to_string(),
            ]);
        }
    }
    let dir = cfg.stage_dir("validate");
    fresh_dir(&dir)?;
    let sweep_file = dir.join("roc_sweep.csv");
    io::write_csv(&sweep_file, "validate", cfg.seed(), &["kind", "omega", "cases", "controls", "auc", "status"], rows)?;
    rec.output(&sweep_file);

    if let Some(truth_path) = &cfg.config.paths.ground_truth {
        let truth_path = cfg.resolve(truth_path);
        let events_file = events_path(cfg);
        if truth_path.exists() && events_file.exists() {
            let truth = io::read_truth(&truth_path)?;
            let events = io::read_events(&events_file)?;
            rec.input(&truth_path);
            rec.input(&events_file);
            let r = recovery(&truth, &events, cfg.config.detection.horizon.dt, cfg.config.synth.sample_period);
            info(format!(
                "validate: recovered {} of {} ground-truth events ({:.1}%)",
                r.recovered,
                r.truth_events,
                100.0 * r.rate
            ));
            if r.rate < 0.95 {
                warn("detection recovered fewer than 95% of ground-truth events");
            }
            let file = dir.join("detection_recovery.json");
            io::write_json(&file, &r)?;
            rec.output(&file);
        }
    }
    rec.finish(cfg, &dir)
}

fn required_path(cfg: &Loaded, p: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    p.as_ref().map(|p| cfg.resolve(p)).ok_or_else(|| CliError::Config(format!("synth needs paths.{name}")))
}

pub fn synth(cfg: &Loaded) -> Result<Manifest> {
    let mut rec = Recorder::start("synth");
    let c = &cfg.config;
    let spec = &c.synth;
    let corpus = synth::generate(spec, &c.detection, cfg.substream("synth"))?;
    let seed = cfg.seed();
    let tracks_dir = cfg.resolve(&c.paths.tracks);
    let dims_file = required_path(cfg, &c.paths.dimensions, "dimensions")?;
    let boundaries_file = required_path(cfg, &c.paths.boundaries, "boundaries")?;
    let truth_file = required_path(cfg, &c.paths.ground_truth, "ground_truth")?;
    let site_file = cfg.resolve(&c.paths.site_map);

    if tracks_dir.exists() {
        for f in io::list_csv(&tracks_dir)? {
            if f.file_name().is_some_and(|n| n.to_string_lossy().starts_with("scenario_")) {
                fs::remove_file(&f).map_err(|e| CliError::io(&f, e))?;
            }
        }
    }
    let mut dims = Vec::new();
    for s in &corpus.scenarios {
        let path = tracks_dir.join(format!("scenario_{:04}.csv", s.index));
        let tracks: Vec<_> = s.vehicles.iter().map(|v| (v.id.clone(), v.frames.clone())).collect();
        io::write_track_file(&path, "synth", seed, &tracks)?;
        rec.output(&path);
        dims.extend(s.vehicles.iter().map(|v| (v.id.clone(), v.spec)));
    }
    io::write_dimensions(&dims_file, "synth", seed, &dims)?;
    io::write_boundaries(&boundaries_file, &corpus.boundaries)?;
    io::write_site_map(&site_file, &corpus.regions)?;
    io::write_truth(&truth_file, seed, &corpus.truth)?;
    for p in [&dims_file, &boundaries_file, &site_file, &truth_file] {
        rec.output(p);
    }
    if spec.scenarios_per_group < c.blocks.min_blocks_per_group {
        warn(format!(
            "{} scenarios per group yield fewer than {} blocks per group",
            spec.scenarios_per_group, c.blocks.min_blocks_per_group
        ));
    }
    info(format!(
        "synth: {} scenarios in {} groups, {} vehicles, {} ground-truth events",
        corpus.scenarios.len(),
        spec.groups.len(),
        dims.len(),
        corpus.truth.len()
    ));
    let dir = cfg.stage_dir("synth");
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    rec.finish(cfg, &dir)
}

/// Runs a stage by name.
pub fn run(stage: &str, cfg: &Loaded) -> Result<()> {
    match stage {
        "preprocess" => preprocess(cfg).map(|_| ()),
        "detect" => detect(cfg).map(|_| ()),
        "blocks" => blocks(cfg).map(|_| ()),
        "fit" => fit(cfg).map(|_| ()),
        "risk" => risk(cfg).map(|_| ()),
        "validate" => validate(cfg).map(|_| ()),
        "synth" => synth(cfg).map(|_| ()),
        other => Err(CliError::Config(format!("unknown stage `{other}`"))),
    }
}
