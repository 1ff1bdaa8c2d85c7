use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trackae::airport::AirportConfig;
use trackae::anomaly::{
    calibrate_threshold, classify_anomaly, read_reports, score_all, summarize, write_reports, AnomalyClass, ThresholdMethod,
};
use trackae::autoencoder::{init_model, load_checkpoint, save_checkpoint, train, write_train_report, Autoencoder};
use trackae::features::{apply_norm, batch_tensor, fit_norm_stats, read_features, split_train_test, write_features, FeatureSeries};
use trackae::pipeline::{csv_files, detect_and_classify, ingest_files, Ingested};
use trackae::selfcheck::{run_all, CheckOptions};
use trackae::synth::{gen_nominal, inject, write_labels, AirportProfile, InjectionSpec};
use trackae::transfer::{compare_transfer, fine_tune, write_transfer_csv, TransferSpec};
use trackae::{clip_terminal, parse_tracks, write_tracks, Error, Track};

use crate::config::{require, RunConfig};
use crate::plot;
use crate::CliError;

type CliResult<T> = std::result::Result<T, CliError>;

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

pub const FEATURES: &str = "features.csv";
pub const CHECKPOINT: &str = "model.ckpt";
pub const REPORTS: &str = "reports.csv";
pub const SERIES: &str = "series.csv";
pub const RECONSTRUCTED: &str = "reconstructed.csv";
pub const DETECT_META: &str = "detect.json";
pub const AIRPORT: &str = "airport.toml";

/// Written next to the reports so later commands know the threshold used.
#[derive(Debug, Serialize, Deserialize)]
struct DetectMeta {
    checkpoint: PathBuf,
    delta: f64,
    tracks: usize,
}

impl Ctx {
    fn create(&self, name: &str) -> CliResult<BufWriter<File>> {
        std::fs::create_dir_all(&self.out).map_err(|e| data(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| data(format!("cannot create {}: {e}", path.display())))
    }

    /// Flag, then config entry, then the file an earlier command leaves in
    /// the output directory.
    fn resolve(&self, flag: Option<PathBuf>, configured: Option<&PathBuf>, default_name: Option<&str>) -> Option<PathBuf> {
        flag.or_else(|| configured.cloned()).or_else(|| default_name.map(|n| self.out.join(n)))
    }

    fn airport(&self, flag: Option<PathBuf>) -> CliResult<AirportConfig> {
        let path = self.resolve(flag, self.cfg.paths.airport.as_ref(), Some(AIRPORT));
        let path = require("airport config", path.as_ref())?;
        AirportConfig::load(path).map_err(|e| with_path(path, e))
    }

    fn checkpoint_path(&self, flag: Option<PathBuf>) -> Option<PathBuf> {
        self.resolve(flag, self.cfg.paths.checkpoint.as_ref(), Some(CHECKPOINT))
    }
}

fn data(msg: String) -> CliError {
    CliError::Data(msg)
}

fn with_path(path: &Path, e: Error) -> CliError {
    let code = CliError::from(e);
    code.map_msg(|m| format!("{}: {m}", path.display()))
}

fn track_files(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        csv_files(path).map_err(|e| with_path(path, e))
    }
}

fn read_feature_file(path: &Path) -> CliResult<Vec<FeatureSeries>> {
    let f = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    read_features(f).map_err(|e| with_path(path, e))
}

fn load_tracks(path: &Path) -> CliResult<(Vec<Track>, usize)> {
    let mut tracks = Vec::new();
    let mut rejects = 0;
    for file in track_files(path)? {
        let f = File::open(&file).map_err(|e| data(format!("{}: {e}", file.display())))?;
        let parsed = parse_tracks(f).map_err(|e| with_path(&file, e))?;
        rejects += parsed.rejects.len();
        tracks.extend(parsed.tracks);
    }
    Ok((tracks, rejects))
}

fn ingest(ctx: &Ctx, tracks: &Path, airport: &AirportConfig, len: usize) -> CliResult<Ingested> {
    let files = track_files(tracks)?;
    let got = ingest_files(&files, airport, &ctx.cfg.filter, len);
    for (path, err) in &got.file_errors {
        eprintln!("warning: skipped {}: {err}", path.display());
    }
    if got.processed.is_empty() {
        return Err(data(format!("no tracks in {}", tracks.display())));
    }
    Ok(got)
}

fn write_flags_and_rejects(ctx: &Ctx, got: &Ingested) -> CliResult<()> {
    let mut flags = ctx.create("flags.csv")?;
    writeln!(flags, "flight_id,reasons")?;
    for p in got.processed.iter().filter(|p| !p.verdict.is_normal()) {
        let reasons: Vec<&str> = p.verdict.reasons().iter().map(|r| r.code()).collect();
        writeln!(flags, "{},{}", p.track.flight_id, reasons.join(";"))?;
    }
    let mut rejects = ctx.create("rejects.csv")?;
    writeln!(rejects, "flight_id,line,reason")?;
    for r in &got.rejects {
        let line = r.line.map(|l| l.to_string()).unwrap_or_default();
        writeln!(rejects, "{},{line},\"{}\"", r.flight_id, r.reason.replace('"', "'"))?;
    }
    for (path, err) in &got.file_errors {
        writeln!(rejects, ",,\"{}: {}\"", path.display(), err.replace('"', "'"))?;
    }
    Ok(())
}

pub fn cmd_ingest(ctx: &Ctx, tracks: Option<PathBuf>, airport: Option<PathBuf>) -> CliResult<()> {
    let tracks = ctx.resolve(tracks, ctx.cfg.paths.tracks.as_ref(), None);
    let tracks = require("tracks directory", tracks.as_ref())?;
    let airport = ctx.airport(airport)?;
    let len = ctx.cfg.model_config()?.input_length;
    let got = ingest(ctx, tracks, &airport, len)?;
    let normal = got.normal_series();
    write_features(ctx.create(FEATURES)?, &normal)?;
    write_flags_and_rejects(ctx, &got)?;
    println!(
        "ingested {} tracks: {} preliminary normal, {} flagged, {} rejected",
        got.processed.len(),
        normal.len(),
        got.processed.len() - normal.len(),
        got.rejects.len()
    );
    if normal.is_empty() {
        return Err(data("no tracks passed the preliminary-normal filter".into()));
    }
    Ok(())
}

fn training_split(ctx: &Ctx, features: Option<PathBuf>) -> CliResult<(Vec<FeatureSeries>, Vec<FeatureSeries>)> {
    let path = ctx.resolve(features, ctx.cfg.paths.features.as_ref(), Some(FEATURES));
    let path = require("feature file", path.as_ref())?;
    let all = read_feature_file(path)?;
    if all.is_empty() {
        return Err(data(format!("no tracks in {}", path.display())));
    }
    Ok(split_train_test(&all, &ctx.cfg.split_spec()?))
}

pub fn cmd_train(ctx: &Ctx, features: Option<PathBuf>, checkpoint: Option<PathBuf>) -> CliResult<()> {
    let config = ctx.cfg.model_config()?;
    let (train_raw, test_raw) = training_split(ctx, features)?;
    if train_raw.is_empty() {
        return Err(data("training split is empty".into()));
    }
    let mut model = init_model(config)?;
    model.norm_stats = fit_norm_stats(&train_raw)?;
    let train_set: Vec<FeatureSeries> = train_raw.iter().map(|s| apply_norm(s, &model.norm_stats)).collect();
    let report = train(&mut model, &train_set, &ctx.cfg.train_options())?;
    let path = ctx.checkpoint_path(checkpoint).expect("default checkpoint path");
    std::fs::create_dir_all(&ctx.out)?;
    save_checkpoint(&model, None, &path)?;
    write_train_report(ctx.create("train_report.csv")?, &report)?;
    println!(
        "trained on {} series ({} held out) for {} epochs: final loss {:.6}, train MAE {:.6}",
        train_raw.len(),
        test_raw.len(),
        report.epochs_run,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        report.final_train_mae
    );
    println!("checkpoint: {}", path.display());
    Ok(())
}

pub fn cmd_calibrate(
    ctx: &Ctx,
    features: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    quantile: Option<f64>,
) -> CliResult<()> {
    let path = ctx.checkpoint_path(checkpoint);
    let path = require("checkpoint", path.as_ref())?;
    let model = load_checkpoint(path)?.model;
    let method = quantile.map_or(ctx.cfg.threshold, |q| ThresholdMethod::Quantile { q });
    method.validate()?;
    let (train_raw, test_raw) = training_split(ctx, features)?;
    let norm = |xs: &[FeatureSeries]| -> Vec<FeatureSeries> { xs.iter().map(|s| apply_norm(s, &model.norm_stats)).collect() };
    let train_set = norm(&train_raw);
    let policy = calibrate_threshold(&model, &train_set, method)?;
    let delta = policy.delta()?;
    save_checkpoint(&model, Some(&policy), path)?;

    let mut out = ctx.create("calibration.csv")?;
    writeln!(out, "flight_id,split,mae,alarm")?;
    let mut alarms = [0usize; 2];
    for (i, (split, set)) in [("train", train_set), ("test", norm(&test_raw))].into_iter().enumerate() {
        for (s, mae) in set.iter().zip(score_all(&model, &set)?) {
            alarms[i] += usize::from(mae > delta);
            writeln!(out, "{},{split},{mae},{}", s.flight_id, mae > delta)?;
        }
    }
    println!("threshold {delta:.6} ({method:?}) from {} training series", train_raw.len());
    println!("alarms: {} of {} train, {} of {} held out", alarms[0], train_raw.len(), alarms[1], test_raw.len());
    Ok(())
}

fn reconstruct_physical(model: &Autoencoder, series: &[FeatureSeries]) -> CliResult<Vec<FeatureSeries>> {
    let mut out = Vec::with_capacity(series.len());
    for chunk in series.chunks(64) {
        let normed: Vec<FeatureSeries> = chunk.iter().map(|s| apply_norm(s, &model.norm_stats)).collect();
        let refs: Vec<&FeatureSeries> = normed.iter().collect();
        let rec = model.reconstruct(&batch_tensor(&refs)?)?;
        for (s, t) in chunk.iter().zip(rec.unstack()) {
            out.push(model.norm_stats.invert(&FeatureSeries::from_tensor(s.flight_id.clone(), &t)?));
        }
    }
    Ok(out)
}

pub fn cmd_detect(ctx: &Ctx, tracks: Option<PathBuf>, airport: Option<PathBuf>, checkpoint: Option<PathBuf>) -> CliResult<()> {
    let ckpt_path = ctx.checkpoint_path(checkpoint);
    let ckpt_path = require("checkpoint", ckpt_path.as_ref())?;
    let tracks = ctx.resolve(tracks, ctx.cfg.paths.tracks.as_ref(), None);
    let tracks = require("tracks directory", tracks.as_ref())?;
    let ckpt = load_checkpoint(ckpt_path)?;
    let policy = ckpt.threshold.unwrap_or_default();
    let delta = policy.delta()?;
    let airport = ctx.airport(airport)?;
    let model = ckpt.model;
    let got = ingest(ctx, tracks, &airport, model.config.input_length)?;
    let reports = detect_and_classify(&model, &policy, &got.processed, &airport, &ctx.cfg.classifier)?;
    write_reports(ctx.create(REPORTS)?, &reports)?;
    let series: Vec<FeatureSeries> = got.processed.iter().map(|p| p.series.clone()).collect();
    write_features(ctx.create(SERIES)?, &series)?;
    write_features(ctx.create(RECONSTRUCTED)?, &reconstruct_physical(&model, &series)?)?;
    write_flags_and_rejects(ctx, &got)?;
    let meta = DetectMeta { checkpoint: ckpt_path.to_path_buf(), delta, tracks: reports.len() };
    serde_json::to_writer_pretty(ctx.create(DETECT_META)?, &meta).map_err(|e| data(e.to_string()))?;
    let flagged = reports.iter().filter(|r| r.is_anomaly).count();
    println!("scored {} tracks against threshold {delta:.6}: {flagged} anomalous", reports.len());
    Ok(())
}

pub fn cmd_classify(ctx: &Ctx, tracks: Option<PathBuf>, airport: Option<PathBuf>, reports: Option<PathBuf>) -> CliResult<()> {
    let tracks = ctx.resolve(tracks, ctx.cfg.paths.tracks.as_ref(), None);
    let tracks = require("tracks directory", tracks.as_ref())?;
    if let Some(r) = &reports {
        require("reports file", Some(r))?;
    }
    let airport = ctx.airport(airport)?;
    let (all, _) = load_tracks(tracks)?;
    if all.is_empty() {
        return Err(data(format!("no tracks in {}", tracks.display())));
    }
    let classify = |t: &Track| clip_terminal(t, &airport).map(|seg| classify_anomaly(t, &seg, &airport, &ctx.cfg.classifier));

    match reports {
        Some(path) => {
            let f = File::open(&path).map_err(|e| data(format!("{}: {e}", path.display())))?;
            let mut reports = read_reports(f).map_err(|e| with_path(&path, e))?;
            let by_id: HashMap<&str, &Track> = all.iter().map(|t| (t.flight_id.as_str(), t)).collect();
            for r in reports.iter_mut().filter(|r| r.is_anomaly) {
                let track = by_id
                    .get(r.flight_id.as_str())
                    .ok_or_else(|| data(format!("flight {} is in the reports but not in {}", r.flight_id, tracks.display())))?;
                r.taxonomy = classify(track);
            }
            write_reports(ctx.create(REPORTS)?, &reports)?;
            println!("classified {} anomalies", reports.iter().filter(|r| r.is_anomaly).count());
        }
        None => {
            let mut out = ctx.create("classes.csv")?;
            writeln!(out, "flight_id,category")?;
            for t in &all {
                let class = classify(t).map_or_else(|| "outside_terminal".to_string(), |c| c.code());
                writeln!(out, "{},{class}", t.flight_id)?;
            }
            println!("classified {} tracks", all.len());
        }
    }
    Ok(())
}

pub fn cmd_report(ctx: &Ctx, reports: Option<PathBuf>, near_threshold: Option<f64>, delta: Option<f64>) -> CliResult<()> {
    let path = reports.unwrap_or_else(|| ctx.out.join(REPORTS));
    let path = require("reports file", Some(&path))?;
    if let Some(band) = near_threshold {
        if !(band >= 0.0) {
            return Err(CliError::Usage(format!("--near-threshold must be non-negative, got {band}")));
        }
    }
    let f = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let reports = read_reports(f).map_err(|e| with_path(path, e))?;
    let stats = summarize(&reports);
    let text = stats.to_text();
    print!("{text}");
    ctx.create("summary.txt")?.write_all(text.as_bytes())?;
    stats.write_csv(ctx.create("summary.csv")?)?;

    if let Some(band) = near_threshold {
        let delta = match delta {
            Some(d) => d,
            None => {
                let meta_path = path.with_file_name(DETECT_META);
                let text = std::fs::read_to_string(&meta_path).map_err(|_| {
                    CliError::Usage(format!("no threshold: pass --delta or keep {} next to the reports", DETECT_META))
                })?;
                let meta: DetectMeta =
                    serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", meta_path.display())))?;
                meta.delta
            }
        };
        let mut near: Vec<_> = reports.iter().filter(|r| (r.mae - delta).abs() < band).collect();
        near.sort_by(|a, b| (a.mae - delta).abs().total_cmp(&(b.mae - delta).abs()).then(a.flight_id.cmp(&b.flight_id)));
        let mut out = ctx.create("near_threshold.csv")?;
        writeln!(out, "flight_id,mae,delta,mae_minus_delta,is_anomaly")?;
        for r in &near {
            writeln!(out, "{},{},{delta},{},{}", r.flight_id, r.mae, r.mae - delta, r.is_anomaly)?;
        }
        println!("{} tracks within {band} of threshold {delta:.6}", near.len());
    }
    Ok(())
}

pub struct TransferArgs {
    pub source: Option<PathBuf>,
    pub tracks: Option<PathBuf>,
    pub airport: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub compare: bool,
    pub loss_target: Option<f64>,
}

pub fn cmd_transfer(ctx: &Ctx, args: TransferArgs) -> CliResult<()> {
    let source = ctx.checkpoint_path(args.source);
    let source = require("source checkpoint", source.as_ref())?;
    let tracks = ctx.resolve(args.tracks, ctx.cfg.paths.tracks.as_ref(), None);
    let tracks = require("target tracks directory", tracks.as_ref())?;
    if args.compare && args.loss_target.is_none() {
        return Err(CliError::Usage("--compare needs --loss-target".into()));
    }
    let airport = ctx.airport(args.airport)?;
    let mut opts = ctx.cfg.train_options();
    if let Some(e) = args.epochs {
        opts.epochs = e;
    }
    let spec = TransferSpec::new(source, opts);
    let len = load_checkpoint(source)?.model.config.input_length;
    let target = ingest(ctx, tracks, &airport, len)?.normal_series();
    if target.is_empty() {
        return Err(data("no target tracks passed the preliminary-normal filter".into()));
    }
    let (model, report) = fine_tune(&spec, &target)?;
    std::fs::create_dir_all(&ctx.out)?;
    save_checkpoint(&model, None, ctx.out.join("transfer.ckpt"))?;
    println!("fine-tuned on {} target series: final loss {:.6}", target.len(), report.epoch_losses.last().copied().unwrap_or(f64::NAN));

    if args.compare {
        let source_model = load_checkpoint(source)?.model;
        let freeze: Vec<&str> = spec.freeze.iter().map(String::as_str).collect();
        let cmp = compare_transfer(&source_model, &freeze, &target, args.loss_target.unwrap(), opts.epochs, &opts)?;
        write_transfer_csv(ctx.create("transfer.csv")?, &cmp)?;
        println!(
            "epochs to loss {}: fine-tune {}, scratch {} (speedup {:.2})",
            cmp.loss_target,
            cmp.finetune_epochs_to_target,
            cmp.scratch_epochs_to_target.unwrap_or(0),
            cmp.speedup_ratio.unwrap_or(f64::NAN)
        );
    } else {
        write_train_report(ctx.create("transfer.csv")?, &report)?;
    }
    Ok(())
}

pub fn cmd_synth(ctx: &Ctx, profile: Option<PathBuf>, n: usize, inject_per_type: usize) -> CliResult<()> {
    let profile = match profile {
        Some(p) => {
            let p = require("profile", Some(&p))?;
            let text = std::fs::read_to_string(p)?;
            toml::from_str::<AirportProfile>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => AirportProfile::default(),
    };
    profile.validate()?;
    let seed = ctx.cfg.seed;
    let mut tracks = gen_nominal(&profile, n, seed)?;
    let mut labels: Vec<(String, Option<AnomalyClass>)> = tracks.iter().map(|t| (t.flight_id.clone(), None)).collect();
    let bases = match inject_per_type {
        0 => Vec::new(),
        k => gen_nominal(&profile, k * AnomalyClass::INJECTABLE.len(), seed ^ 0x5eed_1a7e)?,
    };
    for (i, base) in bases.iter().enumerate() {
        let kind = AnomalyClass::INJECTABLE[i / inject_per_type];
        let t = inject(base, &InjectionSpec::for_profile(kind, seed.wrapping_add(i as u64), &profile))?;
        labels.push((t.flight_id.clone(), Some(kind)));
        tracks.push(t);
    }
    std::fs::create_dir_all(ctx.out.join("tracks"))?;
    write_tracks(ctx.create("tracks/synth.csv")?, &tracks)?;
    write_labels(ctx.create("labels.csv")?, &labels)?;
    ctx.create(AIRPORT)?.write_all(profile.airport_config().to_config_string().as_bytes())?;
    println!("wrote {} nominal and {} injected tracks to {}", n, bases.len(), ctx.out.join("tracks").display());
    Ok(())
}

fn safe_file_name(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn cmd_plot(ctx: &Ctx, flight_id: &str, report_dir: Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = report_dir.unwrap_or_else(|| ctx.out.clone());
    for name in [SERIES, RECONSTRUCTED, REPORTS] {
        require("detect output", Some(&dir.join(name)))?;
    }
    let find = |name: &str| -> CliResult<FeatureSeries> {
        read_feature_file(&dir.join(name))?
            .into_iter()
            .find(|s| s.flight_id == flight_id)
            .ok_or_else(|| data(format!("unknown flight_id {flight_id} in {}", dir.join(name).display())))
    };
    let original = find(SERIES)?;
    let recon = find(RECONSTRUCTED)?;
    let reports = read_reports(File::open(dir.join(REPORTS))?)?;
    let mae = reports
        .iter()
        .find(|r| r.flight_id == flight_id)
        .map(|r| r.mae)
        .ok_or_else(|| data(format!("unknown flight_id {flight_id} in {}", dir.join(REPORTS).display())))?;
    let delta = std::fs::read_to_string(dir.join(DETECT_META))
        .ok()
        .and_then(|t| serde_json::from_str::<DetectMeta>(&t).ok())
        .map(|m| m.delta);
    let svg = plot::render(&original, &recon, mae, delta);
    let name = format!("plot_{}.svg", safe_file_name(flight_id));
    ctx.create(&name)?.write_all(svg.as_bytes())?;
    let path = ctx.out.join(name);
    println!("{}", path.display());
    Ok(path)
}

pub fn cmd_check(ctx: &Ctx, inject_fault: bool) -> CliResult<()> {
    let opts = CheckOptions { seed: ctx.cfg.seed, inject_fault, ..CheckOptions::default() };
    let results = run_all(&opts)?;
    let mut worst = 0.0f64;
    let mut failed = BTreeSet::new();
    for r in &results {
        let status = if r.passed() { "pass" } else { "FAIL" };
        println!(
            "{status} {:<24} cases {:>3}  max error {:.3e}  (tol {:.0e}, {} kink probes skipped)",
            r.name, r.cases, r.max_error, r.tolerance, r.skipped
        );
        if !r.passed() {
            failed.insert(r.name);
            worst = worst.max(r.max_error);
        }
    }
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        let names: Vec<&str> = failed.into_iter().collect();
        Err(CliError::Numerical(format!("{} failed, max observed error {worst:.3e}", names.join(", "))))
    }
}
