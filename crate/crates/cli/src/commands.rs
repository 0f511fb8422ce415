use std::fs;
use std::path::{Path, PathBuf};

use gpnas_core::ablation::{run_ablation, AblationSpec};
use gpnas_core::config::{TaskConfig, PRESET_NAMES};
use gpnas_core::data::{load_dataset, save_dataset, LabelKind, Schema, TaskDataset};
use gpnas_core::ensemble::{ensemble_fit, ensemble_predict, load_model, save_model};
use gpnas_core::labels::oriented_labels;
use gpnas_core::metrics::kendall_tau;
use gpnas_core::synth::{synth_task, truth_to_csv, SynthSpec};
use gpnas_core::tuner::{tune_weights, weight_dims, Objective, TuneSpec};
use gpnas_core::Error;

use crate::{
    AblateArgs, DataOptions, EvaluateArgs, Failure, LabelArg, ObjectiveArg, PredictArgs, SynthArgs,
    TrainArgs, TuneArgs,
};

type CmdResult = Result<(), Failure>;

impl From<LabelArg> for LabelKind {
    fn from(l: LabelArg) -> LabelKind {
        match l {
            LabelArg::Rank => LabelKind::Rank,
            LabelArg::Score => LabelKind::Score,
        }
    }
}

fn require_file(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)).into())
    }
}

fn require_out_dir(path: &Path) -> CmdResult {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(Failure::usage(format!("output directory {} does not exist", dir.display())))
        }
        _ => Ok(()),
    }
}

fn write(path: &Path, body: &str) -> CmdResult {
    fs::write(path, body).map_err(|e| Error::io(path, e).into())
}

/// A preset name, else a JSON config file.
fn resolve_config(name: &str) -> Result<TaskConfig, Failure> {
    if let Some(cfg) = TaskConfig::preset(name) {
        return Ok(cfg);
    }
    let path = Path::new(name);
    if !path.is_file() {
        return Err(Failure::usage(format!(
            "unknown config '{name}': not a preset ({}) or a file",
            PRESET_NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(TaskConfig::from_json(&text)?)
}

fn load(path: &Path, opts: &DataOptions) -> Result<TaskDataset, Failure> {
    let schema = Schema {
        label_kind: Some(opts.label_kind.into()),
        cardinalities: (opts.cardinalities.len() > 1).then(|| opts.cardinalities.clone()),
        ..Schema::default()
    };
    let ds = load_dataset(path, &schema)?;
    match opts.cardinalities.as_slice() {
        [c] => Ok(TaskDataset::new(
            ds.task_id,
            ds.records,
            Some(vec![*c; ds.cardinalities.len()]),
            ds.label_kind,
        )?),
        _ => Ok(ds),
    }
}

pub fn synth(a: SynthArgs) -> CmdResult {
    let truth_path = a.truth.clone().unwrap_or_else(|| sidecar_path(&a.out));
    require_out_dir(&a.out)?;
    require_out_dir(&truth_path)?;
    let task = synth_task(&SynthSpec {
        n: a.n,
        dim: a.dim,
        cardinality: a.cardinality,
        noise: a.noise,
        seed: a.seed,
        informative: a.informative,
        interaction: a.interaction,
    })?;
    save_dataset(&task.dataset, &a.out)?;
    write(&truth_path, &truth_to_csv(&task.truth))?;
    println!(
        "wrote {} records to {} and ground truth to {}",
        task.dataset.len(),
        a.out.display(),
        truth_path.display()
    );
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    out.with_file_name(format!("{stem}.truth.csv"))
}

pub fn train(a: TrainArgs) -> CmdResult {
    if a.out.len() != a.data.len() {
        return Err(Failure::usage(format!("{} --data but {} --out paths", a.data.len(), a.out.len())));
    }
    if a.config.len() != 1 && a.config.len() != a.data.len() {
        return Err(Failure::usage("give one --config or one per --data"));
    }
    let configs = a.config.iter().map(|c| resolve_config(c)).collect::<Result<Vec<_>, _>>()?;
    for (d, o) in a.data.iter().zip(&a.out) {
        require_file(d)?;
        require_out_dir(o)?;
    }
    let config_for = |i: usize| &configs[if configs.len() == 1 { 0 } else { i }];

    // One worker per task; results are reported in argument order.
    let results: Vec<CmdResult> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..a.data.len())
            .map(|i| {
                let (data, out, opts) = (&a.data[i], &a.out[i], &a.data_options);
                let cfg = config_for(i);
                s.spawn(move || -> CmdResult {
                    let ds = load(data, opts)?;
                    let model = ensemble_fit(&ds, cfg)?;
                    save_model(&model, out)?;
                    Ok(())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
    });
    for (i, r) in results.into_iter().enumerate() {
        r?;
        println!("trained {} -> {}", a.data[i].display(), a.out[i].display());
    }
    Ok(())
}

pub fn tune(a: TuneArgs) -> CmdResult {
    let config = resolve_config(&a.config)?;
    require_file(&a.data)?;
    require_out_dir(&a.out)?;
    if let Some(t) = &a.trace {
        require_out_dir(t)?;
    }
    if !(a.upper.is_finite() && a.upper > 0.0) {
        return Err(Failure::usage("--upper must be > 0"));
    }
    let ds = load(&a.data, &a.data_options)?;
    let dims = weight_dims(&ds, &config)?;
    let spec = TuneSpec {
        bounds: vec![(0.0, a.upper); dims],
        budget: a.budget,
        init_points: a.init_points,
        objective: match a.objective {
            ObjectiveArg::Validation => Objective::ValidationTau,
            ObjectiveArg::Training => Objective::TrainingTau,
        },
        ..TuneSpec::new(dims, a.seed)
    };
    let (weights, trace) = tune_weights(&ds, &config, &spec)?;
    let tuned = TaskConfig { tuned_weights: Some(weights.clone()), ..config };
    write(&a.out, &(tuned.to_json() + "\n"))?;
    if let Some(t) = &a.trace {
        write(t, &(serde_json::to_string_pretty(&trace).expect("trace serializes") + "\n"))?;
    }
    println!("best tau {:.6} after {} evaluations", trace.best_value, trace.values.len());
    println!("weights {}", weights.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>().join(","));
    Ok(())
}

pub fn predict(a: PredictArgs) -> CmdResult {
    require_file(&a.model)?;
    require_file(&a.data)?;
    require_out_dir(&a.out)?;
    let model = load_model(&a.model)?;
    let schema = Schema { label_kind: Some(a.label_kind.into()), ..Schema::default() };
    let raw = load_dataset(&a.data, &schema)?;
    // Encode against the training cardinalities.
    let test = TaskDataset::new(
        raw.task_id,
        raw.records,
        (raw.cardinalities.len() == model.cardinalities().len()).then(|| model.cardinalities().to_vec()),
        raw.label_kind,
    )?;
    let (scores, ranks) = ensemble_predict(&model, &test)?;
    let mut out = String::from("index,score,rank\n");
    for (i, (s, r)) in scores.iter().zip(&ranks).enumerate() {
        out.push_str(&format!("{i},{s},{r}\n"));
    }
    write(&a.out, &out)?;
    println!("wrote {} predictions to {}", scores.len(), a.out.display());
    Ok(())
}

/// Values from a file with a header row, larger meaning better.
fn read_oriented(path: &Path, label_kind: LabelKind) -> Result<Vec<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').map(str::trim).collect();
    if header.last() == Some(&"label") {
        let ds = load_dataset(path, &Schema { label_kind: Some(label_kind), ..Schema::default() })?;
        return Ok(oriented_labels(&ds)?);
    }
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (column, negate) = match (col("score"), col("rank")) {
        (Some(c), _) => (c, false),
        (None, Some(c)) => (c, true),
        _ => {
            return Err(Error::Parse(format!(
                "{}: expected a 'score' or 'rank' column, or a dataset with 'label'",
                path.display()
            ))
            .into())
        }
    };
    let index = col("index");
    let mut pairs = Vec::new();
    for (line_no, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |c: usize| -> Result<f64, Failure> {
            fields.get(c).and_then(|f| f.parse::<f64>().ok()).ok_or_else(|| {
                Error::Parse(format!("{}: bad value on line {}", path.display(), line_no + 1)).into()
            })
        };
        let v = parse(column)?;
        let i = match index {
            Some(c) => parse(c)? as usize,
            None => pairs.len(),
        };
        pairs.push((i, if negate { -v } else { v }));
    }
    pairs.sort_by_key(|p| p.0);
    if pairs.iter().enumerate().any(|(k, p)| p.0 != k) {
        return Err(Error::Parse(format!("{}: index column must be 0..n-1", path.display())).into());
    }
    Ok(pairs.into_iter().map(|p| p.1).collect())
}

pub fn evaluate(a: EvaluateArgs) -> CmdResult {
    if a.predictions.len() != a.truth.len() {
        return Err(Failure::usage("give one --truth per --predictions"));
    }
    for p in a.predictions.iter().chain(&a.truth) {
        require_file(p)?;
    }
    let mut taus = Vec::new();
    for (i, (p, t)) in a.predictions.iter().zip(&a.truth).enumerate() {
        let pred = read_oriented(p, LabelKind::Score)?;
        let truth = read_oriented(t, a.label_kind.into())?;
        let tau = kendall_tau(&pred, &truth)?.tau;
        println!("task {i}: tau = {tau:.6}");
        taus.push(tau);
    }
    println!("mean: tau = {:.6}", taus.iter().sum::<f64>() / taus.len() as f64);
    Ok(())
}

pub fn ablate(a: AblateArgs) -> CmdResult {
    let config = resolve_config(&a.config)?;
    require_file(&a.data)?;
    if let Some(o) = &a.out {
        require_out_dir(o)?;
    }
    let ds = load(&a.data, &a.data_options)?;
    let spec = AblationSpec {
        seeds: a.seeds,
        seed: a.seed,
        tune_budget: (!a.no_tune).then_some(a.budget),
        tune_init_points: AblationSpec::default().tune_init_points.min(a.budget),
        ..AblationSpec::default()
    };
    let rows = run_ablation(&ds, &config, &spec)?;
    println!("{:<28} {:>8} {:>8}", "rung", "mean", "std");
    for r in &rows {
        println!("{:<28} {:>8.4} {:>8.4}", r.rung.label(), r.mean, r.std);
    }
    if let Some(o) = &a.out {
        write(o, &(serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"))?;
    }
    Ok(())
}

pub fn show_config(name: &str) -> CmdResult {
    println!("{}", resolve_config(name)?.to_json());
    Ok(())
}
