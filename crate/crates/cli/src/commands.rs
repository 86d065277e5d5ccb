use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context as _, Result};
use oraldx_core::datapipe::{
    build_plan, generate_synthetic_corpus, read_counts_csv, AugConfig, Manifest, Ratios, SynthParams,
};
use oraldx_core::engine::{Engine, EngineConfig};
use oraldx_core::evaluation::{
    compare_modes, export_atlas, render_reproduction, run_experiment, zone_report, ExperimentConfig,
    PredictionLog, PublishedTable, ZoneReport,
};
use oraldx_core::fusion::{CollapsedFusion, FusionWeights};
use oraldx_core::reasoning::{
    render_fast, render_standard, run_standard, ClarificationRequest, DialogueScript, ScriptedResponder,
    SessionState,
};
use oraldx_core::taxonomy::Taxonomy;
use oraldx_core::trainer::TrainConfig;
use oraldx_service::StoreConfig;
use serde::{Deserialize, Serialize};

use crate::{AtlasArgs, DiagnoseArgs, EvalArgs, PartitionArgs, PlanAugArgs, ServeArgs, SynthArgs, TrainArgs};

/// Body of `--case` files and of `olp_case.json`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseFile {
    case_text: String,
    image_features: Vec<f64>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn load_engine(dir: &Path, threshold: Option<f64>) -> Result<Engine> {
    let mut engine = Engine::load(dir).with_context(|| format!("loading model {}", dir.display()))?;
    if let Some(t) = threshold {
        let mut config = engine.config.clone();
        config.gating.threshold = t;
        engine = Engine::new(engine.taxonomy, engine.fusion, engine.model, config, engine.atlas)?;
    }
    Ok(engine)
}

/// Reads answers from stdin; an empty line or end of input waives.
fn ask_stdin(request: &ClarificationRequest) -> Option<String> {
    eprintln!("Level {}: {}", request.level, request.question);
    eprint!("> ");
    let _ = io::stderr().flush();
    let mut line = String::new();
    match io::stdin().lock().read_line(&mut line) {
        Ok(0) | Err(_) => None,
        Ok(_) => Some(line.trim().to_string()).filter(|s| !s.is_empty()),
    }
}

pub fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let engine = load_engine(&args.model, args.threshold)?;
    let case: CaseFile = serde_json::from_reader(open(&args.case)?)
        .with_context(|| format!("parsing {}", args.case.display()))?;
    let top_k = args.top_k.unwrap_or(engine.config.top_k);
    if top_k == 0 {
        bail!("--top-k must be at least 1");
    }

    if args.mode.fast {
        if args.script.is_some() {
            bail!("--script only applies to --standard");
        }
        let mut config = engine.config.clone();
        config.top_k = top_k;
        let engine = Engine::new(engine.taxonomy, engine.fusion, engine.model, config, None)?;
        let diagnosis = engine.fast(&case.case_text, &case.image_features)?;
        print!("{}", render_fast(&diagnosis));
        if let Some(out) = &args.out {
            write_json(out, &diagnosis)?;
        }
        return Ok(());
    }

    let ctx = engine.context();
    let mut session = SessionState::start_with_id(&ctx, "cli".into(), &case.case_text, &case.image_features)?;
    let run = match &args.script {
        Some(path) => {
            let script = DialogueScript::load(path).with_context(|| format!("loading {}", path.display()))?;
            let mut responder = ScriptedResponder::new(script);
            run_standard(&ctx, &mut session, &mut responder, top_k)?
        }
        None => {
            let mut responder = ask_stdin;
            run_standard(&ctx, &mut session, &mut responder, top_k)?
        }
    };
    print!("{}", render_standard(&run.finding, &session.transcript));
    if run.waived > 0 {
        println!("({} question(s) waived)", run.waived);
    }
    if let Some(out) = &args.out {
        write_json(out, &session)?;
    }
    Ok(())
}

pub fn plan_aug(args: PlanAugArgs) -> Result<()> {
    let counts =
        read_counts_csv(open(&args.counts)?).with_context(|| format!("reading {}", args.counts.display()))?;
    let config = AugConfig {
        a: args.a,
        b: args.b,
        ..AugConfig::default()
    };
    let plan = build_plan(&counts, &config)?;
    let csv = plan.to_csv();
    print!("{csv}");
    println!(
        "classes {}, initial {}, target {}",
        counts.len(),
        plan.total_initial(),
        plan.total_target()
    );
    if let Some(out) = &args.out {
        write_text(out, &csv)?;
    }
    Ok(())
}

pub fn partition(args: PartitionArgs) -> Result<()> {
    let mut manifest =
        Manifest::load(&args.manifest).with_context(|| format!("reading {}", args.manifest.display()))?;
    let ratios = Ratios([args.ratios[0], args.ratios[1], args.ratios[2]]);
    let result = oraldx_core::datapipe::partition(&manifest.disease_ids(), &ratios, args.seed)?;
    manifest.apply_partition(&result);
    println!("seed {}", args.seed);
    println!("{}", result.summary());
    for w in &result.warnings {
        eprintln!("warning: {}", w.message);
    }
    if let Some(out) = &args.out {
        let mut buf = Vec::new();
        manifest.write(&mut buf)?;
        write_text(out, std::str::from_utf8(&buf)?)?;
    }
    Ok(())
}

fn synth_params(base: SynthParams, per_class: Option<usize>) -> SynthParams {
    SynthParams {
        cases_per_disease: per_class.unwrap_or(base.cases_per_disease),
        ..base
    }
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let defaults = SynthParams::default();
    let params = SynthParams {
        noise_sigma: args.noise_sigma.unwrap_or(defaults.noise_sigma),
        zone2_overlap: args.zone2_overlap.unwrap_or(defaults.zone2_overlap),
        zone1_noise_boost: args.zone1_noise_boost.unwrap_or(defaults.zone1_noise_boost),
        ..synth_params(defaults, Some(args.per_class))
    };
    let taxonomy = Taxonomy::bundled();
    let corpus = generate_synthetic_corpus(&taxonomy, args.seed, &params)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    corpus.manifest.save(args.out.join("manifest.jsonl"))?;
    let (case_text, image_features) = corpus.olp_like_case(&taxonomy)?;
    write_json(
        &args.out.join("olp_case.json"),
        &CaseFile {
            case_text,
            image_features,
        },
    )?;
    write_text(
        &args.out.join("olp_script.toml"),
        &corpus.olp_script(&taxonomy).to_toml(),
    )?;
    println!("seed {}", args.seed);
    println!(
        "{} cases written to {}",
        corpus.manifest.len(),
        args.out.display()
    );
    Ok(())
}

/// `train --config` file; every table is optional.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    seed: u64,
    standard: bool,
    synth: SynthParams,
    train: TrainConfig,
    engine: EngineConfig,
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut file: TrainFile = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TrainFile::default(),
    };
    if let Some(seed) = args.seed {
        file.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        file.train.epochs = epochs;
    }
    file.synth = synth_params(file.synth, args.per_class);
    file.standard |= args.standard;

    let taxonomy = Taxonomy::bundled();
    let fusion = FusionWeights::seeded(file.seed);
    let fuser = CollapsedFusion::new(&fusion);
    let experiment = ExperimentConfig {
        corpus_seed: file.seed,
        synth: file.synth,
        train: file.train.clone(),
        backend_seed: file.engine.backend_seed,
        gating: file.engine.gating.clone(),
        bands: file.engine.bands,
        top_k: file.engine.top_k,
        standard: file.standard,
    };
    let result = run_experiment(&taxonomy, &fusion, &fuser, &experiment)?;
    let atlas = export_atlas(&taxonomy, &result.mean_embeddings, &result.mean_confidence)?;
    let engine = Engine::new(taxonomy, fusion, result.model, file.engine, Some(atlas))?;
    engine.save(&args.out)?;
    write_text(&args.out.join("loss.csv"), &result.training.to_csv())?;
    write_text(&args.out.join("predictions.csv"), &result.log.to_csv())?;

    let last = result
        .training
        .epochs
        .last()
        .expect("initial loss is always recorded");
    println!("seed {}", file.seed);
    println!(
        "epochs {}, loss {:.4} -> {:.4}",
        file.train.epochs,
        result.training.initial().total,
        last.total
    );
    print!("{}", result.report.render());
    println!("model written to {}", args.out.display());
    Ok(())
}

fn print_report(report: &ZoneReport) {
    print!("{}", report.render());
    println!("Overall: {}", report.overall_line());
    if let Ok(delta) = compare_modes(report, "fast", "standard") {
        print!("{}", delta.render());
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let report = if let Some(path) = &args.source.log {
        let log =
            PredictionLog::read_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?;
        let taxonomy = Taxonomy::bundled();
        log.validate(&taxonomy)?;
        let report = zone_report(&log, &taxonomy)?;
        print_report(&report);
        report
    } else {
        let path = args.source.table.as_ref().expect("clap requires one source");
        let table =
            PublishedTable::read_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?;
        let report = table.to_report()?;
        print_report(&report);
        print!("{}", render_reproduction(&table.reproduce()?));
        report
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}

pub fn atlas(args: AtlasArgs) -> Result<()> {
    let engine = load_engine(&args.model, None)?;
    let Some(atlas) = &engine.atlas else {
        bail!("{} has no atlas.json", args.model.display());
    };
    write_json(&args.out, atlas)?;
    println!("{} points written to {}", atlas.points.len(), args.out.display());
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let engine = Arc::new(load_engine(&args.model, args.threshold)?);
    let config = StoreConfig {
        data_dir: args.data_dir,
        idle_timeout: Duration::from_secs(args.idle_timeout),
    };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(oraldx_service::serve(engine, config, args.addr, async {
        let _ = tokio::signal::ctrl_c().await;
    }))
}
