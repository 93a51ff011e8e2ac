use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use leapfactual::codec::{train_vae, GenerativeCodec};
use leapfactual::data::glyphs::{gen_glyphs, N_CLASSES, SIDE};
use leapfactual::data::toy::{gen_toy, ToyConfig, CLASS_NAMES};
use leapfactual::data::{build_latent_bank, split, LabeledSet, LatentBank, SampleShape, SplitSpec};
use leapfactual::experiments::image::{augment_rows, augment_run, comparison_rows, comparison_run, AugmentConfig};
use leapfactual::experiments::per_seed;
use leapfactual::experiments::toy::{fig3_panels, toy_eval_rows, toy_eval_run, write_fig3, NearestCenterOracle, TOY_CLASSES};
use leapfactual::flow::{train_flow, CfmTrainConfig};
use leapfactual::metrics::{write_report_csv, MetricRow};
use leapfactual::oracle::{train_classifier, ClassifierOracle, ClassifierTrainConfig};
use leapfactual::transport::{leapfactual, CeMode, LeapOutcome, LeapRun};
use leapfactual::Seed;
use leapfactual_service::render::png_gray8;
use leapfactual_service::store::OracleKind;
use leapfactual_service::{ModelSet, ServerConfig};
use serde_json::json;

use crate::artifacts::{self, load_classifier, load_flow, load_shared_codec, save_classifier};
use crate::config::{Dataset, RunConfig};
use crate::data::{load_idx, load_toy, save_idx, toy_split, write_toy_csv, IDX_FILES, TOY_FILE};
use crate::exit::Invalid;

fn seed(cfg: &RunConfig) -> Seed {
    Seed(cfg.seed)
}

fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{},{l}\n", i + 1));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn gen_data(cfg: &RunConfig, toy: bool, n: Option<usize>) -> Result<()> {
    let dir = cfg.data_dir();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    if toy {
        let n = n.unwrap_or(cfg.toy.n_per_class);
        if n == 0 {
            return Err(Invalid("--n must be positive".into()).into());
        }
        let set = gen_toy::<f32>(&ToyConfig {
            n_per_class: n,
            seed: seed(cfg).derive("toy-data").0,
        })?;
        write_toy_csv(&dir.join(TOY_FILE), &set)?;
        println!("wrote {} points, {TOY_CLASSES} classes to {}", set.len(), dir.join(TOY_FILE).display());
    } else {
        let n = n.unwrap_or(cfg.image.n_per_class);
        if n == 0 {
            return Err(Invalid("--n must be positive".into()).into());
        }
        let set = gen_glyphs::<f32>(n, seed(cfg).derive("glyphs").0)?;
        let s = split(
            set.len(),
            &SplitSpec {
                train_fraction: cfg.data.train_fraction,
                seed: seed(cfg).derive("split").0,
                subsample: None,
            },
        )?;
        let (train, test) = (set.subset(&s.train), set.subset(&s.test));
        save_idx(&dir, &train, &test)?;
        println!(
            "wrote {} training and {} test glyphs ({SIDE}x{SIDE}, {N_CLASSES} classes) as {}",
            train.len(),
            test.len(),
            IDX_FILES.join(", ")
        );
    }
    Ok(())
}

pub fn train_vae_cmd(cfg: &RunConfig) -> Result<()> {
    if cfg.dataset == Dataset::Toy {
        return Err(Invalid("the toy world is used directly as latent space; train-vae needs --dataset idx".into()).into());
    }
    let (train, test) = load_idx(cfg)?;
    tracing::info!(samples = train.len(), epochs = cfg.image.vae.epochs, "training VAE");
    let (vae, log) = train_vae(&train, &cfg.image.vae, seed(cfg).derive("vae"))?;
    vae.save(artifacts::codec_dir(cfg))?;
    let out = output_dir(cfg)?;
    write_loss_csv(&out.join("train_vae.csv"), &log.epoch_losses)?;
    println!(
        "final loss {:.6}, held-out reconstruction MSE {:.6}; saved to {}",
        log.epoch_losses.last().copied().unwrap_or(f64::NAN),
        vae.reconstruction_mse(&test.samples)?,
        artifacts::codec_dir(cfg).display()
    );
    Ok(())
}

fn classifier_data(cfg: &RunConfig) -> Result<(LabeledSet<f32>, LabeledSet<f32>, ClassifierTrainConfig)> {
    Ok(match cfg.dataset {
        Dataset::Toy => {
            let (train, test) = toy_split(cfg, &load_toy(cfg)?)?;
            (train, test, cfg.toy.classifier.clone())
        }
        Dataset::Idx => {
            let (train, test) = load_idx(cfg)?;
            (train, test, cfg.image.classifier.clone())
        }
    })
}

pub fn train_classifier_cmd(cfg: &RunConfig) -> Result<()> {
    let (train, test, ccfg) = classifier_data(cfg)?;
    tracing::info!(samples = train.len(), epochs = ccfg.epochs, "training classifier");
    let (clf, report) = train_classifier(&train, Some(&test), &ccfg, seed(cfg).derive("classifier"))?;
    let path = save_classifier(cfg, &clf)?;
    write_loss_csv(&output_dir(cfg)?.join("train_classifier.csv"), &report.epoch_losses)?;
    println!(
        "train accuracy {:.4}, held-out accuracy {:.4}; saved to {}",
        report.train_accuracy,
        report.heldout_accuracy.unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

pub fn train_flow_cmd(cfg: &RunConfig) -> Result<()> {
    let (bank, fcfg, flow_seed) = match cfg.dataset {
        // Toy latents carry their ground-truth square as label.
        Dataset::Toy => {
            let set = load_toy(cfg)?;
            let bank = LatentBank::new(set.samples, set.labels, TOY_CLASSES)?;
            (bank, cfg.toy.flow.clone(), seed(cfg).derive("toy-flow"))
        }
        Dataset::Idx => {
            let (train, _) = load_idx(cfg)?;
            let codec = load_shared_codec(cfg)?;
            let clf = load_classifier(cfg)?;
            let bank = build_latent_bank(&train, codec.as_ref(), &clf)?;
            let fcfg = CfmTrainConfig {
                latent_dim: codec.latent_dim(),
                n_classes: N_CLASSES,
                ..cfg.image.flow.clone()
            };
            (bank, fcfg, seed(cfg).derive("flow"))
        }
    };
    let empty = bank.empty_classes();
    if !empty.is_empty() {
        tracing::warn!(?empty, "classes without latents cannot be landed on");
    }
    tracing::info!(latents = bank.len(), epochs = fcfg.epochs, "training flow");
    let started = std::time::Instant::now();
    let (field, log) = train_flow(&bank, &fcfg, flow_seed)?;
    let dir = artifacts::flow_dir(cfg);
    field.save(&dir, fcfg.sigma)?;
    log.save_csv(output_dir(cfg)?.join("train_flow.csv"))?;
    println!(
        "final loss {:.6} after {} epochs in {:.1} s; saved to {}",
        log.epochs.last().map(|e| e.loss).unwrap_or(f64::NAN),
        log.epochs.len(),
        started.elapsed().as_secs_f64(),
        dir.display()
    );
    Ok(())
}

/// `--input` is either comma-separated raw values or an index into the
/// held-out set (the toy file for the toy world).
fn explain_source(cfg: &RunConfig, input: &str, want: usize) -> Result<Vec<f32>> {
    let x: Vec<f32> = if input.contains(',') {
        input
            .split(',')
            .map(|v| v.trim().parse::<f32>().map_err(|e| Invalid(format!("--input value {v:?}: {e}"))))
            .collect::<Result<_, _>>()?
    } else {
        let i: usize = input
            .trim()
            .parse()
            .map_err(|_| Invalid(format!("--input {input:?} is neither an index nor a value list")))?;
        let set = match cfg.dataset {
            Dataset::Toy => load_toy(cfg)?,
            Dataset::Idx => load_idx(cfg)?.1,
        };
        if i >= set.len() {
            return Err(Invalid(format!("--input index {i} out of range ({} samples)", set.len())).into());
        }
        set.samples.row(i).to_vec()
    };
    if x.len() != want {
        return Err(Invalid(format!("--input has {} values, expected {want}", x.len())).into());
    }
    Ok(x)
}

fn write_sample(dir: &Path, name: &str, x: &[f32], shape: SampleShape) -> Result<()> {
    if let SampleShape::Image { rows, cols } = shape {
        std::fs::write(dir.join(format!("{name}.png")), png_gray8(x, cols, rows)?)?;
    }
    Ok(())
}

/// Asks for labels on stdin, showing each query as coordinates or a PNG.
fn drive_with_stdin(run: &mut LeapRun<f32>, codec: &dyn GenerativeCodec<f32>, field: &leapfactual::flow::FlowField<f32>, dir: &Path) -> Result<()> {
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    while let Some(z) = run.pending_latent() {
        let x = codec.decode_one(z)?;
        match codec.input_shape() {
            SampleShape::Image { .. } => {
                write_sample(dir, "query", &x, codec.input_shape())?;
                print!("query {}: label for {} > ", run.queries(), dir.join("query.png").display());
            }
            SampleShape::Vector { .. } => print!("query {}: label for {x:?} > ", run.queries()),
        }
        std::io::stdout().flush()?;
        let line = lines.next().ok_or_else(|| Invalid("stdin closed before the search finished".into()))??;
        let label: usize = line.trim().parse().map_err(|_| Invalid(format!("{:?} is not a class index", line.trim())))?;
        if let Err(e) = run.supply_label(label, field, 0) {
            eprintln!("{e}");
        }
    }
    Ok(())
}

pub fn explain(cfg: &RunConfig, input: &str, target: usize, mode: CeMode, out: Option<PathBuf>) -> Result<()> {
    let codec = load_shared_codec(cfg)?;
    let field = load_flow(cfg)?;
    let n = field.n_classes();
    if target >= n {
        return Err(Invalid(format!("--target {target} out of range for {n} classes")).into());
    }
    let x = explain_source(cfg, input, codec.input_shape().len())?;
    let config = cfg.leapfactual.for_mode(mode);
    for w in config.validate()? {
        tracing::warn!("{w}");
    }
    let dir = out.unwrap_or_else(|| cfg.output_dir().join("explain"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let run = match cfg.oracle {
        OracleKind::Local => {
            let clf = load_classifier(cfg)?;
            let source_label = clf.predict(&x).map_err(|e| anyhow::anyhow!("{e}"))?;
            if source_label == target {
                tracing::warn!(target, "source is already classified as the target; running injection-only refinement");
            }
            match leapfactual(&x, target, codec.as_ref(), &clf, &field, &config)? {
                LeapOutcome::Done { run, .. } => run,
                LeapOutcome::Suspended(_) => anyhow::bail!("local classifier suspended the search"),
            }
        }
        OracleKind::Human => {
            let mut run = LeapRun::new(codec.encode_one(&x)?, target, n, config.clone())?;
            drive_with_stdin(&mut run, codec.as_ref(), &field, &dir)?;
            run
        }
    };
    let trajectory = run.trajectory();
    let x_ce = codec.decode_one(run.latent())?;
    std::fs::write(dir.join("trajectory.jsonl"), trajectory.to_jsonl())?;
    let summary = json!({
        "mode": mode,
        "target": target,
        "source_label": trajectory.source().and_then(|e| e.label),
        "final_label": trajectory.final_label,
        "queries": run.queries(),
        "blend_leaps": run.blend_leaps(),
        "inject_leaps": run.inject_leaps(),
        "stopped_early": trajectory.stopped_early,
        "input": x,
        "counterfactual": x_ce,
    });
    std::fs::write(dir.join("counterfactual.json"), serde_json::to_vec_pretty(&summary)?)?;
    write_sample(&dir, "source", &x, codec.input_shape())?;
    write_sample(&dir, "counterfactual", &x_ce, codec.input_shape())?;
    println!(
        "final label {} (target {target}) after {} blending and {} injection leaps; wrote {}",
        trajectory.final_label.map_or("none".into(), |l| l.to_string()),
        run.blend_leaps(),
        run.inject_leaps(),
        dir.display()
    );
    Ok(())
}

pub fn demo_toy(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let mut toy_cfg = cfg.clone();
    toy_cfg.dataset = Dataset::Toy;
    let field = load_flow(&toy_cfg)?;
    if field.latent_dim() != 2 || field.n_classes() != TOY_CLASSES {
        return Err(Invalid("the stored flow is not a toy-world flow".into()).into());
    }
    let panels = fig3_panels(&field, &NearestCenterOracle, cfg.leapfactual.euler_steps, seed(cfg).derive("fig3"))?;
    let dir = out.unwrap_or_else(|| cfg.output_dir().join("demo-toy"));
    write_fig3(&dir, &panels)?;
    for p in &panels {
        println!("panel {}: {} ({} trajectories)", p.name, p.title, p.trajectories.len());
    }
    println!("wrote panel JSON Lines and SVG files to {}", dir.display());
    Ok(())
}

fn report(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_report_csv(rows, &mut buf)?;
    std::fs::write(path, &buf).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        println!("{:<22} {:>10.4} ± {:.4}  (n={})", r.metric, r.mean, r.stderr, r.n_runs);
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn experiment_augment(cfg: &RunConfig, mode: CeMode, fraction: f64, seeds: &[u64]) -> Result<()> {
    let acfg = AugmentConfig {
        pipeline: cfg.image.clone(),
        weak_fraction: cfg.augment.weak_fraction,
        fraction,
    };
    acfg.validate().map_err(|e| Invalid(e.to_string()))?;
    let runs = per_seed(seeds, |s| {
        tracing::info!(seed = s.0, "augmentation run");
        augment_run(&acfg, s)
    })?;
    let arm = match mode {
        CeMode::Ce => "ce",
        CeMode::Reliable => "reliable",
    };
    let rows: Vec<MetricRow> = augment_rows(&runs)?
        .into_iter()
        .filter(|r| r.metric.ends_with(":baseline") || r.metric.ends_with(&format!(":{arm}")))
        .collect();
    report(&rows, &output_dir(cfg)?.join(format!("augment_{arm}.csv")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Toy,
    Image,
}

pub fn eval(cfg: &RunConfig, suite: Suite, seeds: &[u64]) -> Result<()> {
    let (rows, name) = match suite {
        Suite::Toy => {
            let runs = per_seed(seeds, |s| {
                tracing::info!(seed = s.0, "toy evaluation run");
                toy_eval_run(&cfg.toy, &cfg.leapfactual, cfg.eval.toy_queries, s)
            })?;
            (toy_eval_rows(&runs)?, "eval_toy.csv")
        }
        Suite::Image => {
            let runs = per_seed(seeds, |s| {
                tracing::info!(seed = s.0, "image evaluation run");
                comparison_run(&cfg.image, s)
            })?;
            (comparison_rows(&runs)?, "eval_image.csv")
        }
    };
    report(&rows, &output_dir(cfg)?.join(name))
}

fn model_set(cfg: &RunConfig) -> Result<ModelSet> {
    let field = load_flow(cfg)?;
    let classifier = match load_classifier(cfg) {
        Ok(c) => Some(c),
        Err(e) if cfg.oracle == OracleKind::Human => {
            tracing::warn!("{e:#}; local-oracle sessions disabled");
            None
        }
        Err(e) => return Err(e),
    };
    let mut models = match cfg.dataset {
        Dataset::Toy => {
            let mut m = ModelSet::toy(field);
            m.sources = load_toy(cfg).ok();
            m.class_names = CLASS_NAMES.iter().map(|s| s.to_string()).collect();
            m
        }
        Dataset::Idx => {
            let mut m = ModelSet::new(load_shared_codec(cfg)?, field);
            m.sources = load_idx(cfg).ok().map(|(_, test)| test);
            m
        }
    };
    if let Some(c) = classifier {
        models.local_oracle = Some(Box::new(c));
    }
    models.default_config = cfg.leapfactual.clone();
    models.default_oracle = cfg.oracle;
    Ok(models)
}

pub fn serve(cfg: &RunConfig, host: &str, port: u16, assets: Option<PathBuf>, ttl_hours: f64) -> Result<()> {
    if !(ttl_hours > 0.0 && ttl_hours.is_finite()) {
        return Err(Invalid(format!("--session-ttl-hours must be positive, got {ttl_hours}")).into());
    }
    let addr = format!("{host}:{port}")
        .parse()
        .map_err(|e| Invalid(format!("address {host}:{port}: {e}")))?;
    let models = model_set(cfg)?;
    let mut server = ServerConfig::new(addr, cfg.session_dir());
    server.assets_dir = assets;
    server.session_ttl = Some(Duration::from_secs_f64(ttl_hours * 3600.0));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(leapfactual_service::serve(models, server))?;
    Ok(())
}
