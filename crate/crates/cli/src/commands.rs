use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fairtest_core::bench::DeskBenchmark;
use fairtest_core::coverage::CoverageReport;
use fairtest_core::data::{read_pairs, write_dataset, write_pairs, AttrTag, SamplePair, Transform};
use fairtest_core::experiment::{
    enhancement_inputs, enhancement_study, fair_pairs, mutation_study, Analysis, Picker,
};
use fairtest_core::generation::{generate_unfair, summarize, GenConfig, GenSummary};
use fairtest_core::nn::save_model;
use fairtest_core::selection::select_fairness_neurons;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{RunConfig, TransformConfig};
use crate::error::{at, CliError};

/// Output directory that remembers what was written to it.
pub struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    /// Path for `name`, creating parent directories and recording it.
    fn path(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.files.push(name.to_string());
        Ok(p)
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.path(name)?, text)?;
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        std::fs::write(self.path(name)?, text)?;
        Ok(())
    }

    fn pairs(
        &mut self,
        name: &str,
        pairs: &[SamplePair],
        dim: usize,
        class_count: usize,
        attributes: &BTreeMap<AttrTag, String>,
    ) -> Result<(), CliError> {
        let p = self.path(name)?;
        write_pairs(&p, pairs, dim, class_count, attributes)?;
        self.files.push(format!("{name}.attrs"));
        Ok(())
    }

    /// Writes `manifest.json` last, listing every file of the run.
    pub fn manifest(mut self, command: &str, config: &RunConfig, summary: Value) -> Result<(), CliError> {
        let mut files = std::mem::take(&mut self.files);
        files.sort();
        let manifest = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "outputs": files,
            "summary": summary,
        });
        self.json("manifest.json", &manifest)
    }
}

pub fn synth(cfg: &RunConfig, out: &mut Out) -> Result<Value, CliError> {
    let bench = DeskBenchmark::build(&cfg.bench)?;
    let attrs = bench.train.attributes().clone();
    let dim = bench.train.dim();
    let classes = bench.train.class_count();

    save_model(&bench.model, out.path("model.json")?)?;
    write_dataset(out.path("train.dft")?, &bench.train)?;
    out.files.push("train.dft.attrs".into());
    write_dataset(out.path("test.dft")?, &bench.test)?;
    out.files.push("test.dft.attrs".into());
    out.pairs("train_pairs.dft", &bench.train_pairs, dim, classes, &attrs)?;
    out.pairs("test_pairs.dft", &bench.test_pairs, dim, classes, &attrs)?;

    let transform = match &bench.transform {
        Transform::PatchFlip(p) => TransformConfig::PatchFlip {
            patch_indices: p.patch_indices().to_vec(),
            values: p
                .value_map()
                .iter()
                .map(|(tag, fill)| (attrs.get(tag).cloned().unwrap_or_else(|| tag.to_string()), fill.clone()))
                .collect(),
        },
        Transform::ExplicitPairing(_) => TransformConfig::Paired {
            train_pairs: "train_pairs.dft".into(),
            test_pairs: "test_pairs.dft".into(),
        },
    };
    let ready = RunConfig {
        model: Some("model.json".into()),
        train_data: Some("train.dft".into()),
        test_data: Some("test.dft".into()),
        transform: Some(transform),
        ..cfg.clone()
    };
    let text = toml::to_string(&ready)
        .map_err(|e| CliError::new("serialization", e.to_string()))?;
    out.text("fairtest.toml", &text)?;

    Ok(json!({
        "train_samples": bench.train.len(),
        "test_samples": bench.test.len(),
        "train_pairs": bench.train_pairs.len(),
        "test_pairs": bench.test_pairs.len(),
        "train_accuracy": bench.train_accuracy,
        "test_accuracy": bench.test_accuracy,
    }))
}

pub fn select_neurons(cfg: &RunConfig, out: &mut Out) -> Result<Value, CliError> {
    let inputs = cfg.inputs()?;
    let map = select_fairness_neurons(&inputs.model, &inputs.train_pairs, cfg.alpha, cfg.top_k)?;
    out.text("neuron_map.csv", &map.to_csv())?;
    let layers: Vec<Value> = map
        .layers
        .iter()
        .map(|l| {
            json!({
                "layer": l.layer,
                "neurons": l.stats.len(),
                "significant": map.significant_count(l.layer),
                "selected": l.selected,
            })
        })
        .collect();
    let summary = json!({
        "alpha": map.alpha,
        "critical_value": map.critical_value,
        "top_k": map.top_k,
        "group_sizes": map.group_sizes,
        "low_power": map.low_power(),
        "pairs": inputs.train_pairs.len(),
        "layers": layers,
    });
    out.json("summary.json", &summary)?;
    Ok(summary)
}

/// A `--suite` argument: `name=path[+path...]` or a bare path.
struct Suite {
    name: String,
    paths: Vec<String>,
}

fn parse_suite(arg: &str) -> Result<Suite, CliError> {
    let (name, rest) = match arg.split_once('=') {
        Some((n, r)) => (n.to_string(), r),
        None => (arg.to_string(), arg),
    };
    let paths: Vec<String> = rest.split('+').filter(|p| !p.is_empty()).map(str::to_string).collect();
    if name.is_empty() {
        return Err(CliError::new("configuration", format!("suite {arg:?} has an empty name")));
    }
    Ok(Suite { name, paths })
}

#[derive(Serialize)]
struct SuiteCoverage {
    name: String,
    paths: Vec<String>,
    pairs: usize,
    reports: Vec<CoverageReport>,
}

pub fn coverage(cfg: &RunConfig, suites: &[String], out: &mut Out) -> Result<Value, CliError> {
    let metrics = cfg.metrics()?;
    let inputs = cfg.inputs()?;
    let analysis = Analysis::new(&inputs.model, &inputs.train_pairs, &cfg.study())?;

    let mut loaded: Vec<(Suite, Vec<SamplePair>)> = Vec::new();
    if suites.is_empty() {
        let suite = Suite {
            name: "test".into(),
            paths: Vec::new(),
        };
        loaded.push((suite, inputs.test_pairs.clone()));
    }
    for arg in suites {
        let suite = parse_suite(arg)?;
        let mut pairs = Vec::new();
        for p in &suite.paths {
            pairs.extend(at(read_pairs(p), Path::new(p))?.pairs);
        }
        loaded.push((suite, pairs));
    }

    let mut results = Vec::new();
    for (suite, pairs) in loaded {
        let reports = analysis.reports(&inputs.model, &pairs, &metrics)?;
        results.push(SuiteCoverage {
            name: suite.name,
            paths: suite.paths,
            pairs: pairs.len(),
            reports,
        });
    }
    let table: Vec<Value> = metrics
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let ratios: Vec<Value> = results
                .iter()
                .map(|s| json!({ "suite": s.name, "ratio": s.reports[i].ratio }))
                .collect();
            json!({ "metric": m, "ratios": ratios })
        })
        .collect();
    let report = json!({
        "bins": cfg.bins,
        "profile": analysis.profile,
        "suites": results,
        "table": table,
    });
    out.json("coverage.json", &report)?;
    Ok(json!({ "table": table }))
}

#[derive(Serialize)]
struct StrategyRun {
    #[serde(flatten)]
    summary: GenSummary,
    file: String,
}

pub fn generate(cfg: &RunConfig, out: &mut Out) -> Result<Value, CliError> {
    cfg.metrics()?;
    let inputs = cfg.inputs()?;
    let attrs = inputs.train.attributes().clone();
    let dim = inputs.train.dim();
    let classes = inputs.train.class_count();

    let seeds = fair_pairs(&inputs.model, &inputs.test_pairs)?;
    out.pairs("fair.dft", &seeds, dim, classes, &attrs)?;
    let mut all = Vec::new();
    let mut runs = Vec::new();
    for strategy in cfg.strategies() {
        let gen = GenConfig {
            strategy,
            ..cfg.generation.clone()
        };
        let results = generate_unfair(&inputs.model, &seeds, &gen)?;
        let summary = summarize(strategy, gen.max_iterations, &results);
        let found: Vec<SamplePair> = results
            .into_iter()
            .filter(|r| r.success)
            .map(|r| r.final_pair)
            .collect();
        let file = format!("generated_{}.dft", strategy.name());
        out.pairs(&file, &found, dim, classes, &attrs)?;
        all.extend(found);
        runs.push(StrategyRun { summary, file });
    }
    out.pairs("generated.dft", &all, dim, classes, &attrs)?;
    Ok(json!({
        "seeds": seeds.len(),
        "generated": all.len(),
        "strategies": runs,
    }))
}

pub fn enhance(cfg: &RunConfig, out: &mut Out) -> Result<Value, CliError> {
    cfg.metrics()?;
    let inputs = cfg.inputs()?;
    let material = inputs.material();
    let study_cfg = cfg.study();
    let pool = enhancement_inputs(&material, &cfg.generation)?;
    let study = enhancement_study(&material, &study_cfg, &cfg.enhancement, &pool)?;

    let mut rows = Vec::new();
    for (row, model) in study.rows.iter().zip(&study.models) {
        let label = row.picker.label();
        let metric = match row.picker {
            Picker::KmSt(m) => Some(m),
            Picker::Random => None,
        };
        out.json(
            &format!("selection/{label}.json"),
            &json!({
                "picker": row.picker,
                "metric": metric,
                "select_fraction": cfg.enhancement.select_fraction,
                "k_sections": cfg.enhancement.k_sections,
                "seed": cfg.enhancement.seed,
                "candidates": study.candidates,
                "selected": row.selected.len(),
                "sections": row.sections,
                "indices": row.selected,
            }),
        )?;
        save_model(model, out.path(&format!("models/{label}.json"))?)?;
        rows.push(json!({
            "picker": row.picker,
            "accuracy_before": study.baseline_accuracy,
            "accuracy_after": row.accuracy,
            "fairness_before": study.baseline_fairness,
            "fairness_after": row.fairness_score,
            "warning": row.warning,
        }));
    }
    let report = json!({
        "candidates": study.candidates,
        "n_select": study.n_select,
        "validation_pairs": study.validation_pairs,
        "rows": rows,
    });
    out.json("report.json", &report)?;
    Ok(report)
}

pub fn mutate(cfg: &RunConfig, out: &mut Out) -> Result<Value, CliError> {
    cfg.metrics()?;
    let inputs = cfg.inputs()?;
    let study = mutation_study(&inputs.material(), &cfg.sweep, &cfg.study())?;

    let csv_path = out.path("mutants.csv")?;
    let mut csv = csv::Writer::from_path(csv_path)?;
    let mut header = vec!["index", "operator", "intensity", "seed", "accuracy", "fairness_score"];
    header.extend(study.metrics.iter().map(|m| m.name()));
    csv.write_record(&header)?;
    for (i, (row, model)) in study.rows.iter().zip(&study.mutants).enumerate() {
        save_model(model, out.path(&format!("mutants/{i:03}_{}.json", row.operator.name()))?)?;
        let mut record = vec![
            i.to_string(),
            row.operator.name().to_string(),
            row.intensity.to_string(),
            row.seed.to_string(),
            row.accuracy.to_string(),
            row.fairness_score.to_string(),
        ];
        record.extend(row.coverage.iter().map(f64::to_string));
        csv.write_record(&record)?;
    }
    csv.flush()?;

    let correlations: BTreeMap<&str, Option<f64>> = study
        .metrics
        .iter()
        .map(|m| m.name())
        .zip(study.correlations.iter().copied())
        .collect();
    let report = json!({
        "mutants": study.rows.len(),
        "suite_size": study.suite_size,
        "fairness_range": study.fairness_range(),
        "sign_agreements": study.sign_agreements(),
        "correlations": correlations,
        "matrix": study.matrix,
    });
    out.json("correlation.json", &report)?;
    Ok(report)
}
