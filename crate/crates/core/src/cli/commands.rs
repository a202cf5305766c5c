use super::{CliError, Command, ConfigError, Options, RunConfig};
use crate::dataset::{generate_from_library, read_dataset, write_dataset, Record};
use crate::diff::{load_checkpoint, save_checkpoint, CheckpointHeader, ParamSet};
use crate::encoder::{embed_graph, EncoderConfig, PreparedGraph};
use crate::encoding::node_rwse;
use crate::pipeline::{
    ablation_run, finetune, label_fraction_sweep, make_splits, predict, run_dir, sample_subset, score, summarize,
    write_csv_rows, write_json, AblationSpec, LabeledData, SplitManifest, Task, MIN_SUBSET,
};
use crate::pretrain::{prepare_item, pretrain, write_log, PretrainOutcome, TARGET_PREFIX};
use crate::seed::{derive_seed, hash_str, rng_from};
use crate::stamp::{config_hash, RunStamp};
use clap::ArgMatches;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Resolved configuration, provenance stamp and output locations of one invocation.
struct Ctx<'a> {
    cfg: RunConfig,
    stamp: RunStamp,
    out: &'a Path,
    dir: PathBuf,
    jobs: usize,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    #[serde(flatten)]
    stamp: &'a RunStamp,
    #[serde(flatten)]
    body: T,
}

fn stamped<'a, T: Serialize>(stamp: &'a RunStamp, body: T) -> Stamped<'a, T> {
    Stamped { stamp, body }
}

impl<'a> Ctx<'a> {
    fn new(name: &str, extra: serde_json::Value, opts: &'a Options, m: &ArgMatches) -> Result<Self, CliError> {
        let cfg = opts.resolve(m)?;
        let hash = config_hash(&serde_json::json!({ "command": name, "args": extra, "config": cfg }));
        let stamp = RunStamp::new(hash, cfg.seed);
        let dir = run_dir(&opts.out, &stamp.config_hash, cfg.seed);
        std::fs::create_dir_all(&dir)?;
        let body = serde_json::json!({ "command": name, "args": extra, "config": cfg });
        write_json(&dir.join("config.json"), &stamped(&stamp, body))?;
        log::info!("run directory {}", dir.display());
        Ok(Self {
            cfg,
            stamp,
            out: &opts.out,
            dir,
            jobs: opts.jobs.max(1),
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.out.join(p)
    }

    fn records(&self) -> Result<Vec<Record>, CliError> {
        let d = &self.cfg.data;
        Ok(match &d.path {
            Some(p) => read_dataset(&self.resolve(p))?,
            None => generate_from_library(d.family.library(), d.family.prefix(), d.synthetic_count, d.seed)?
                .into_iter()
                .map(|s| s.record)
                .collect(),
        })
    }

    fn enc(&self) -> EncoderConfig {
        self.cfg.pretrain.encoder
    }

    fn header(&self, note: &str) -> CheckpointHeader {
        CheckpointHeader {
            config_hash: self.stamp.config_hash.clone(),
            seed: self.stamp.seed,
            code_version: self.stamp.code_version.clone(),
            note: note.to_string(),
        }
    }

    fn load(&self, p: &Path) -> Result<ParamSet, CliError> {
        let (header, params) = load_checkpoint(&self.resolve(p))?;
        log::info!(
            "loaded {} (config {}, seed {})",
            p.display(),
            header.config_hash,
            header.seed
        );
        Ok(params)
    }

    fn data(&self, records: &[Record]) -> Result<(LabeledData, SplitManifest), CliError> {
        let manifest = make_splits(records, self.cfg.seed)?;
        let data = LabeledData::from_records(records, &self.cfg.data.label, self.enc().pe_steps)?;
        write_json(&self.dir.join("splits.json"), &stamped(&self.stamp, &manifest))?;
        Ok((data, manifest))
    }

    fn pretrain(&self, data: &LabeledData, manifest: &SplitManifest) -> Result<PretrainOutcome, CliError> {
        let graphs = data.graphs_for(&manifest.pretrain)?;
        let outcome = pretrain(&graphs, &self.cfg.pretrain)?;
        write_log(&self.dir.join("pretrain_log.jsonl"), &self.stamp, &outcome.log)?;
        if outcome.degenerate {
            log::warn!("embedding spread stayed below the collapse threshold; run flagged DEGENERATE");
            eprintln!("warning: pretraining flagged DEGENERATE (embedding collapse)");
        }
        Ok(outcome)
    }
}

pub(super) fn dispatch(command: &Command, m: &ArgMatches) -> Result<(), CliError> {
    let opts = match command {
        Command::GenData { opts, .. }
        | Command::Pretrain { opts }
        | Command::Finetune { opts, .. }
        | Command::Sweep { opts, .. }
        | Command::Ablate { opts }
        | Command::SubgraphDump { opts, .. }
        | Command::Encode { opts, .. }
        | Command::Eval { opts, .. } => opts,
    };
    super::init_logging(opts.verbose);
    match command {
        Command::GenData { output, .. } => {
            let ctx = Ctx::new("gen-data", serde_json::json!({ "output": output }), opts, m)?;
            gen_data(&ctx, output)
        }
        Command::Pretrain { .. } => pretrain_cmd(&Ctx::new("pretrain", serde_json::Value::Null, opts, m)?),
        Command::Finetune { checkpoint, labels, .. } => {
            let args = serde_json::json!({ "checkpoint": checkpoint, "labels": labels });
            finetune_cmd(&Ctx::new("finetune", args, opts, m)?, checkpoint.as_deref(), *labels)
        }
        Command::Sweep { checkpoint, .. } => {
            let args = serde_json::json!({ "checkpoint": checkpoint });
            sweep_cmd(&Ctx::new("sweep", args, opts, m)?, checkpoint.as_deref())
        }
        Command::Ablate { .. } => ablate_cmd(&Ctx::new("ablate", serde_json::Value::Null, opts, m)?),
        Command::SubgraphDump { id, .. } => {
            let ctx = Ctx::new("subgraph-dump", serde_json::json!({ "id": id }), opts, m)?;
            subgraph_dump(&ctx, id.as_deref())
        }
        Command::Encode {
            checkpoint, dump_pe, ..
        } => {
            let args = serde_json::json!({ "checkpoint": checkpoint, "dump_pe": dump_pe });
            encode_cmd(
                &Ctx::new("encode", args, opts, m)?,
                checkpoint.as_deref(),
                dump_pe.as_deref(),
            )
        }
        Command::Eval { model, .. } => {
            let ctx = Ctx::new("eval", serde_json::json!({ "model": model }), opts, m)?;
            eval_cmd(&ctx, model)
        }
    }
}

fn gen_data(ctx: &Ctx, output: &Path) -> Result<(), CliError> {
    let records = ctx.records()?;
    let path = ctx.resolve(output);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_dataset(&records, &path)?;
    let mut sidecar = path.clone().into_os_string();
    sidecar.push(".stamp.json");
    let body = serde_json::json!({
        "records": records.len(),
        "dataset_hash": crate::pipeline::dataset_hash(&records),
    });
    write_json(Path::new(&sidecar), &stamped(&ctx.stamp, &body))?;
    write_json(&ctx.dir.join("gen_data.json"), &stamped(&ctx.stamp, &body))?;
    println!("{} records written to {}", records.len(), path.display());
    Ok(())
}

fn pretrain_cmd(ctx: &Ctx) -> Result<(), CliError> {
    let records = ctx.records()?;
    let (data, manifest) = ctx.data(&records)?;
    let outcome = ctx.pretrain(&data, &manifest)?;
    save_checkpoint(
        &ctx.dir.join("checkpoint.bin"),
        &ctx.header("all parameters"),
        &outcome.all_params,
    )?;
    save_checkpoint(
        &ctx.dir.join("encoder.bin"),
        &ctx.header("target encoder"),
        &outcome.export,
    )?;
    let last = outcome.log.last();
    let body = serde_json::json!({
        "epochs": outcome.log.len(),
        "final_loss": last.map(|l| l.loss),
        "final_emb_std": last.map(|l| l.emb_std),
        "degenerate": outcome.degenerate,
        "pretrain_graphs": manifest.pretrain.len(),
    });
    write_json(&ctx.dir.join("pretrain.json"), &stamped(&ctx.stamp, &body))?;
    println!("{}", ctx.dir.join("encoder.bin").display());
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    id: &'a str,
    target: f64,
    prediction: f64,
    /// Class probabilities joined by `;`, empty for regression.
    scores: String,
    config_hash: &'a str,
    seed: u64,
    code_version: &'a str,
}

fn prediction_rows<'a>(
    ctx: &'a Ctx,
    test: &'a [crate::pipeline::Example<'a>],
    predictions: &[Vec<f64>],
    task: Task,
) -> Vec<PredictionRow<'a>> {
    test.iter()
        .zip(predictions)
        .map(|(e, p)| {
            let (prediction, scores) = match task {
                Task::Regression => (p[0], String::new()),
                Task::Classification => {
                    let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
                    let joined = p.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(";");
                    (best as f64, joined)
                }
            };
            PredictionRow {
                id: e.id,
                target: e.target.value(),
                prediction,
                scores,
                config_hash: &ctx.stamp.config_hash,
                seed: ctx.stamp.seed,
                code_version: &ctx.stamp.code_version,
            }
        })
        .collect()
}

fn finetune_cmd(ctx: &Ctx, checkpoint: Option<&Path>, labels: Option<usize>) -> Result<(), CliError> {
    let ft = &ctx.cfg.finetune;
    let records = ctx.records()?;
    let (data, manifest) = ctx.data(&records)?;
    let count = labels.unwrap_or_else(|| (ctx.cfg.data.label_fraction * records.len() as f64).round() as usize);
    if count < MIN_SUBSET {
        return Err(ConfigError::new(
            "data.label_fraction",
            format!("{count} labels; at least {MIN_SUBSET} are needed"),
        )
        .into());
    }
    let mut pool = data.positions(&manifest.finetune)?;
    if count > pool.len() {
        let mut wide = data.positions(&manifest.pretrain)?;
        wide.extend(pool);
        pool = wide;
    }
    let init = checkpoint.map(|p| ctx.load(p)).transpose()?;
    let subset = sample_subset(
        &data,
        &pool,
        count,
        ft.task,
        ft.classes,
        derive_seed(&[ctx.cfg.seed, 0x4654]),
    )?;
    let train = data.examples(&subset, ft.task)?;
    let test = data.examples(&data.positions(&manifest.test)?, ft.task)?;
    let mut outcome = finetune(init.as_ref(), &ctx.enc(), &train, &test, ft, ctx.cfg.seed)?;
    outcome.report.config_hash = ctx.stamp.config_hash.clone();
    outcome.report.seed = ctx.stamp.seed;
    write_json(&ctx.dir.join("metrics.json"), &outcome.report)?;
    write_csv_rows(
        &ctx.dir.join("predictions.csv"),
        &prediction_rows(ctx, &test, &outcome.predictions, ft.task),
    )?;
    save_checkpoint(
        &ctx.dir.join("model.bin"),
        &ctx.header(ft.task.as_str()),
        &outcome.params,
    )?;
    match ft.task {
        Task::Regression => println!(
            "test R² {:.4}  RMSE {:.4}",
            outcome.report.r2.unwrap_or(f64::NAN),
            outcome.report.rmse.unwrap_or(f64::NAN)
        ),
        Task::Classification => {
            println!("test macro-AUPRC {:.4}", outcome.report.auprc_macro.unwrap_or(f64::NAN))
        }
    }
    Ok(())
}

fn sweep_cmd(ctx: &Ctx, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let records = ctx.records()?;
    let (data, manifest) = ctx.data(&records)?;
    let pretrained = match checkpoint {
        Some(p) => ctx.load(p)?,
        None => {
            let outcome = ctx.pretrain(&data, &manifest)?;
            save_checkpoint(
                &ctx.dir.join("encoder.bin"),
                &ctx.header("target encoder"),
                &outcome.export,
            )?;
            outcome.export
        }
    };
    let rows = label_fraction_sweep(
        &data,
        &manifest,
        &pretrained,
        &ctx.enc(),
        &ctx.cfg.finetune,
        &ctx.cfg.sweep,
        &ctx.stamp,
        ctx.jobs,
    )?;
    write_csv_rows(&ctx.dir.join("sweep.csv"), &rows)?;
    let summary = summarize(&rows);
    write_json(
        &ctx.dir.join("summary.json"),
        &stamped(&ctx.stamp, serde_json::json!({ "rows": summary })),
    )?;
    for s in &summary {
        let (name, mean, std) = match (s.r2_mean, s.auprc_mean) {
            (Some(m), _) => ("R²", m, s.r2_std.unwrap_or(0.0)),
            (None, Some(m)) => ("AUPRC", m, s.auprc_std.unwrap_or(0.0)),
            (None, None) => ("-", f64::NAN, f64::NAN),
        };
        println!(
            "{:>6.3} {:<10} {name} {mean:.4} ± {std:.4} ({} runs)",
            s.fraction,
            format!("{:?}", s.arm),
            s.runs
        );
    }
    Ok(())
}

fn ablate_cmd(ctx: &Ctx) -> Result<(), CliError> {
    let a = &ctx.cfg.ablation;
    let mut spec = AblationSpec::new(a.knob);
    if !a.values.is_empty() {
        spec.values = a
            .values
            .iter()
            .map(|v| {
                a.knob
                    .parse_value(v)
                    .map_err(|e| ConfigError::new("ablation.values", e))
            })
            .collect::<Result<_, _>>()?;
    }
    spec.seeds = a.seeds.clone();
    spec.label_fraction = a.label_fraction;
    let records = ctx.records()?;
    let (data, manifest) = ctx.data(&records)?;
    let table = ablation_run(&data, &manifest, &ctx.cfg.pretrain, &ctx.cfg.finetune, &spec)?;
    let markdown = format!(
        "{}\n<!-- config_hash={} seed={} code_version={} -->\n",
        table.to_markdown().trim_end(),
        ctx.stamp.config_hash,
        ctx.stamp.seed,
        ctx.stamp.code_version
    );
    let name = format!("ablation_{}", a.knob.as_str());
    std::fs::write(ctx.dir.join(format!("{name}.md")), &markdown)?;
    write_json(&ctx.dir.join(format!("{name}.json")), &stamped(&ctx.stamp, &table))?;
    print!("{markdown}");
    Ok(())
}

#[derive(Serialize)]
struct SubgraphDump {
    graph_id: String,
    node_count: usize,
    context_nodes: Vec<usize>,
    targets: Vec<Vec<usize>>,
    pool: Vec<Vec<usize>>,
    context_shortfall: bool,
    attempts: usize,
    /// Positional token of every target.
    target_tokens: Vec<Vec<f64>>,
}

fn subgraph_dump(ctx: &Ctx, id: Option<&str>) -> Result<(), CliError> {
    let records = ctx.records()?;
    let record = match id {
        Some(id) => records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| CliError::Runtime(format!("unknown record id {id}")))?,
        None => records
            .first()
            .ok_or_else(|| CliError::Runtime("dataset is empty".into()))?,
    };
    let pg = PreparedGraph::new(hash_str(&record.id), record.build_graph()?, ctx.enc().pe_steps);
    let seed = derive_seed(&[ctx.cfg.seed, 0, pg.key]);
    let item = prepare_item(&pg, 0, &ctx.cfg.pretrain, seed)?;
    let s = &item.selection;
    if s.context_shortfall {
        log::warn!("context of {} fell short of the requested size", record.id);
    }
    let dump = SubgraphDump {
        graph_id: record.id.clone(),
        node_count: pg.graph.node_count(),
        context_nodes: s.context.node_ids.clone(),
        targets: s.targets.iter().map(|t| t.node_ids.clone()).collect(),
        pool: s.pool.iter().map(|p| p.node_ids.clone()).collect(),
        context_shortfall: s.context_shortfall,
        attempts: s.attempts,
        target_tokens: (0..item.tokens.rows).map(|i| item.tokens.row(i).to_vec()).collect(),
    };
    write_json(&ctx.dir.join("subgraphs.json"), &stamped(&ctx.stamp, &dump))?;
    println!("{}", ctx.dir.join("subgraphs.json").display());
    Ok(())
}

fn stamp_fields(ctx: &Ctx) -> [String; 3] {
    [
        ctx.stamp.config_hash.clone(),
        ctx.stamp.seed.to_string(),
        ctx.stamp.code_version.clone(),
    ]
}

fn encode_cmd(ctx: &Ctx, checkpoint: Option<&Path>, dump_pe: Option<&Path>) -> Result<(), CliError> {
    let enc = ctx.enc();
    let params = match checkpoint {
        Some(p) => ctx.load(p)?,
        None => enc.init_params(TARGET_PREFIX, &mut rng_from(&[ctx.cfg.seed, 0x454e_4344])),
    };
    let records = ctx.records()?;
    let path = ctx.dir.join("embeddings.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut head = vec!["id".to_string()];
    head.extend((0..enc.hidden).map(|i| format!("e{i}")));
    head.extend(["config_hash", "seed", "code_version"].map(String::from));
    w.write_record(&head)?;
    let mut pe_rows = Vec::new();
    for r in &records {
        let pg = PreparedGraph::new(hash_str(&r.id), r.build_graph()?, enc.pe_steps);
        let z = embed_graph(&params, TARGET_PREFIX, &pg.input, &enc)?;
        let mut row = vec![r.id.clone()];
        row.extend(z.data.iter().map(|v| format!("{v}")));
        row.extend(stamp_fields(ctx));
        w.write_record(&row)?;
        if dump_pe.is_some() {
            let pe = node_rwse(&pg.graph, enc.pe_steps);
            for v in 0..pe.rows {
                let mut row = vec![r.id.clone(), v.to_string()];
                row.extend(pe.row(v).iter().map(|x| format!("{x}")));
                row.extend(stamp_fields(ctx));
                pe_rows.push(row);
            }
        }
    }
    w.flush()?;
    if let Some(p) = dump_pe {
        let path = ctx.resolve(p);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(&path)?;
        let mut head = vec!["id".to_string(), "node".to_string()];
        head.extend((0..enc.pe_steps).map(|k| format!("rw{}", k + 1)));
        head.extend(["config_hash", "seed", "code_version"].map(String::from));
        w.write_record(&head)?;
        for row in pe_rows {
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    println!("{}", path.display());
    Ok(())
}

fn eval_cmd(ctx: &Ctx, model: &Path) -> Result<(), CliError> {
    let ft = &ctx.cfg.finetune;
    let params = ctx.load(model)?;
    let records = ctx.records()?;
    let (data, manifest) = ctx.data(&records)?;
    let test = data.examples(&data.positions(&manifest.test)?, ft.task)?;
    let enc = ctx.enc();
    let predictions = test
        .iter()
        .map(|e| predict(&params, &enc, &e.graph.input, ft.task))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = score(ft, &test, &predictions)?;
    report.config_hash = ctx.stamp.config_hash.clone();
    report.seed = ctx.stamp.seed;
    report.pretrained = true;
    write_json(&ctx.dir.join("eval.json"), &report)?;
    write_csv_rows(
        &ctx.dir.join("predictions.csv"),
        &prediction_rows(ctx, &test, &predictions, ft.task),
    )?;
    println!("{}", ctx.dir.join("eval.json").display());
    Ok(())
}
