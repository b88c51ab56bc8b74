use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use mlcat::baselines::{run_baseline, BaselineConfig, FeatureKind, Transform};
use mlcat::data::{
    split_dataset, Dataset, EmbeddingFile, Embeddings, Example, LabelSchema, LabelSpace,
};
use mlcat::labels::{LabelMatrix, LabelSet};
use mlcat::ling::LexiconSet;
use mlcat::metrics::mean_kappa;
use mlcat::train::{artifact_embeddings, run_experiment, Corpus, ModelArtifact, RunConfig};
use mlcat::Error;

#[derive(Parser)]
#[command(
    name = "mlcat",
    version,
    about = "Hierarchical multi-label text classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train `runs` models and report averaged test metrics.
    Train(TrainArgs),
    /// Score a saved model on a labeled dataset.
    Eval(ModelArgs),
    /// Print predicted labels and probabilities.
    Predict(ModelArgs),
    /// Print the most attended words and sentences.
    Explain(ExplainArgs),
    /// Mean Cohen's kappa between two annotations of the same posts.
    Kappa {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Logistic-regression baselines (label powerset or binary relevance).
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct Inputs {
    /// Embedding file for a source, `id=path`; WEMB or SEMB is detected.
    #[arg(long = "emb", value_name = "ID=PATH")]
    emb: Vec<String>,
    /// Lexicon directory, or `sample` for the bundled lexicons.
    #[arg(long)]
    lexicons: Option<String>,
    /// `child -> parent` category file replacing the built-in schema.
    #[arg(long)]
    schema: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any config key, `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    inputs: Inputs,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset file, or `id<TAB>text` lines for predict and explain.
    #[arg(long)]
    data: PathBuf,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    inputs: Inputs,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 2)]
    k: usize,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "lp")]
    transform: String,
    /// `word`, `char` or `avg:<source>`.
    #[arg(long, default_value = "word")]
    features: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    inputs: Inputs,
}

fn split_pair<'a>(text: &'a str, what: &str) -> Result<(&'a str, &'a str), Error> {
    text.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| Error::Config(format!("{what} must look like key=value, got {text:?}")))
}

impl Inputs {
    fn schema(&self) -> anyhow::Result<LabelSchema> {
        match &self.schema {
            Some(p) => Ok(LabelSchema::parse(&fs::read_to_string(p)?)?),
            None => Ok(LabelSchema::standard()),
        }
    }

    fn lexicons(&self) -> anyhow::Result<Option<LexiconSet>> {
        Ok(match self.lexicons.as_deref() {
            None => None,
            Some("sample") => Some(LexiconSet::sample()),
            Some(dir) => Some(LexiconSet::load_dir(Path::new(dir))?),
        })
    }

    fn embedding_paths(&self) -> anyhow::Result<BTreeMap<String, PathBuf>> {
        self.emb
            .iter()
            .map(|e| {
                split_pair(e, "--emb")
                    .map(|(k, v)| (k.to_lowercase(), PathBuf::from(v)))
                    .map_err(Into::into)
            })
            .collect()
    }
}

fn load_embeddings(paths: &BTreeMap<String, PathBuf>) -> anyhow::Result<Embeddings> {
    let mut emb = Embeddings::default();
    for (id, path) in paths {
        match EmbeddingFile::load(path).with_context(|| format!("loading {}", path.display()))? {
            EmbeddingFile::Word(t) => {
                info!("{id}: {} words of width {}", t.len(), t.dim());
                emb.word.insert(id.clone(), t);
            }
            EmbeddingFile::Sentence(s) => {
                info!("{id}: {} posts of width {}", s.len(), s.dim());
                emb.sentence.insert(id.clone(), s);
            }
        }
    }
    Ok(emb)
}

/// A dataset file, or `id<TAB>text` lines without labels.
fn load_posts(path: &Path, schema: &LabelSchema) -> anyhow::Result<Vec<Example>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with("#schema=") {
        return Ok(Dataset::parse(&text)?.examples(schema)?);
    }
    let mut posts = Vec::new();
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let at = offset;
        offset += raw.len();
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let (id, body) = line.split_once('\t').ok_or_else(|| Error::Parse {
            offset: at,
            message: "expected id<TAB>text".into(),
        })?;
        let sentences =
            mlcat::data::tokenize_post(body).map_err(|_| Error::EmptyPost(id.to_string()))?;
        posts.push(Example {
            id: id.to_string(),
            sentences,
            labels: LabelSet::new(),
        });
    }
    if posts.is_empty() {
        return Err(Error::EmptyInput(format!("no posts in {}", path.display())).into());
    }
    Ok(posts)
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    let flags = [
        ("arch", args.arch.clone()),
        ("loss", args.loss.clone()),
        ("runs", args.runs.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &args.set {
        let (k, v) = split_pair(kv, "--set")?;
        cfg.set(k, v)?;
    }
    if let Some(d) = args.data {
        cfg.data = Some(d);
    }
    if let Some(o) = args.out {
        cfg.out = Some(o);
    }
    if let Some(l) = &args.inputs.lexicons {
        cfg.lexicons = Some(PathBuf::from(l));
    }
    cfg.embeddings.extend(args.inputs.embedding_paths()?);
    if cfg.arch.is_empty() {
        bail!(Error::Config(
            "no architecture given (--arch or arch = ...)".into()
        ));
    }
    let data = cfg
        .data
        .clone()
        .ok_or_else(|| Error::Config("no dataset given (--data or data = ...)".into()))?;

    let schema = args.inputs.schema()?;
    let lexicons = match cfg.lexicons.as_deref().and_then(Path::to_str) {
        None => None,
        Some("sample") => Some(LexiconSet::sample()),
        Some(dir) => Some(LexiconSet::load_dir(Path::new(dir))?),
    };
    let corpus = Corpus {
        examples: Dataset::load(&data)?.examples(&schema)?,
        embeddings: load_embeddings(&cfg.embeddings)?,
        schema,
        lexicons,
    };
    let output = run_experiment(&cfg, &corpus)?;

    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    fs::create_dir_all(&out)?;
    for (i, a) in output.artifacts.iter().enumerate() {
        a.save(&out.join(format!("model-{i}.json")))?;
    }
    fs::write(out.join("config.txt"), cfg.render())?;
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&output.summary)?,
    )?;
    let m = &output.summary.mean;
    for (seed, r) in output.summary.seeds.iter().zip(&output.summary.runs) {
        println!(
            "seed {seed}: f_i={:.4} f_micro={:.4}",
            r.summary.f_i, r.summary.f_micro
        );
    }
    println!(
        "mean over {} runs: f_i={:.4} acc_i={:.4} f_macro={:.4} f_micro={:.4}",
        output.summary.runs.len(),
        m.f_i,
        m.acc_i,
        m.f_macro,
        m.f_micro
    );
    println!("models and report written to {}", out.display());
    Ok(())
}

struct Loaded {
    artifact: ModelArtifact,
    examples: Vec<Example>,
    emb: Embeddings,
}

fn load_model(args: &ModelArgs) -> anyhow::Result<Loaded> {
    let artifact = ModelArtifact::load(&args.model)
        .with_context(|| format!("loading {}", args.model.display()))?;
    let schema = args.inputs.schema()?;
    if schema.merged() != artifact.labels.as_slice() {
        bail!(Error::Schema(
            "the model was trained on a different label schema".into()
        ));
    }
    let examples = load_posts(&args.data, &schema)?;
    let emb = load_embeddings(&args.inputs.embedding_paths()?)?;
    let lexicons = args.inputs.lexicons()?;
    let emb = artifact_embeddings(&artifact, &emb, lexicons.as_ref(), &examples)?;
    Ok(Loaded {
        artifact,
        examples,
        emb,
    })
}

fn eval(args: ModelArgs) -> anyhow::Result<()> {
    let l = load_model(&args)?;
    let report = l
        .artifact
        .to_classifier()?
        .evaluate(&l.examples, &l.emb, &l.artifact.labels)?;
    match &args.out {
        Some(p) => emit(Some(p), &report.to_json()?),
        None => emit(None, &report.to_key_value()),
    }
}

fn predict(args: ModelArgs) -> anyhow::Result<()> {
    let l = load_model(&args)?;
    let c = l.artifact.to_classifier()?;
    let probs = c.predict_proba(&l.examples, &l.emb)?;
    let mut text = String::new();
    for (e, p) in l.examples.iter().zip(&probs) {
        let labels: Vec<&str> = c
            .decoder
            .decode(p)?
            .iter()
            .map(|&j| l.artifact.labels[j].as_str())
            .collect();
        let p: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
        text.push_str(&format!(
            "{}\t{}\t{}\n",
            e.id,
            labels.join(";"),
            p.join(" ")
        ));
    }
    emit(args.out.as_deref(), &text)
}

fn explain(args: ExplainArgs) -> anyhow::Result<()> {
    let l = load_model(&args.model)?;
    let reports = l
        .artifact
        .to_classifier()?
        .explain(&l.examples, &l.emb, args.k)?;
    let mut text = String::new();
    for r in &reports {
        let ranking: Vec<String> = r.ranking.iter().map(|i| (i + 1).to_string()).collect();
        text.push_str(&format!(
            "{}\tsentences by attention: {}\n",
            r.id,
            ranking.join(" ")
        ));
        for s in &r.sentences {
            let words: Vec<&str> = s.top_words.iter().map(|(w, _)| w.as_str()).collect();
            text.push_str(&format!(
                "  {}\t{:.3}\t({})\n",
                s.index + 1,
                s.weight,
                words.join(", ")
            ));
        }
    }
    emit(args.model.out.as_deref(), &text)
}

fn annotation_matrix(
    d: &Dataset,
    schema: &LabelSchema,
    space: LabelSpace,
) -> anyhow::Result<LabelMatrix> {
    let rows = match space {
        LabelSpace::Merged => d.merged_labels(schema)?,
        LabelSpace::Fine => d
            .posts
            .iter()
            .map(|p| {
                p.labels
                    .iter()
                    .map(|l| {
                        schema
                            .fine_index(l)
                            .ok_or_else(|| Error::Schema(format!("unknown category {l:?}")))
                    })
                    .collect::<Result<LabelSet, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?,
    };
    let width = if space == LabelSpace::Fine {
        schema.fine().len()
    } else {
        schema.merged().len()
    };
    Ok(LabelMatrix::new(width, rows)?)
}

fn kappa(first: &Path, second: &Path, schema: Option<&Path>) -> anyhow::Result<()> {
    let schema = match schema {
        Some(p) => LabelSchema::parse(&fs::read_to_string(p)?)?,
        None => LabelSchema::standard(),
    };
    let a = Dataset::load(first)?;
    let mut b = Dataset::load(second)?;
    let order: BTreeMap<&str, usize> = a
        .posts
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.as_str(), i))
        .collect();
    if b.posts.len() != a.posts.len() || b.posts.iter().any(|p| !order.contains_key(p.id.as_str()))
    {
        bail!(Error::Schema(
            "the two files must annotate the same post ids".into()
        ));
    }
    b.posts.sort_by_key(|p| order[p.id.as_str()]);
    let space = if a.space == LabelSpace::Fine && b.space == LabelSpace::Fine {
        LabelSpace::Fine
    } else {
        LabelSpace::Merged
    };
    let k = mean_kappa(
        &annotation_matrix(&a, &schema, space)?,
        &annotation_matrix(&b, &schema, space)?,
    )?;
    println!("mean_kappa={k:.6}");
    Ok(())
}

fn baseline(args: BaselineArgs) -> anyhow::Result<()> {
    let schema = args.inputs.schema()?;
    let examples = Dataset::load(&args.data)?.examples(&schema)?;
    let emb = load_embeddings(&args.inputs.embedding_paths()?)?;
    let cfg = BaselineConfig::new(
        args.transform.parse::<Transform>()?,
        args.features.parse::<FeatureKind>()?,
    );
    let split = split_dataset(examples.len(), args.seed, true)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
    let report = run_baseline(
        &cfg,
        &pick(&split.train),
        &pick(&split.test),
        &emb,
        schema.merged(),
    )?;
    println!("{} with {} features", cfg.transform, cfg.features);
    match &args.out {
        Some(p) => emit(Some(p), &report.to_json()?),
        None => emit(None, &report.to_key_value()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Explain(a) => explain(a),
        Command::Kappa {
            first,
            second,
            schema,
        } => kappa(&first, &second, schema.as_deref()),
        Command::Baseline(a) => baseline(a),
    }
}

fn category(err: &anyhow::Error) -> &'static str {
    match err.downcast_ref::<Error>() {
        Some(e) => e.category(),
        None if err.downcast_ref::<std::io::Error>().is_some() => "io",
        None if err.downcast_ref::<serde_json::Error>().is_some() => "serialization",
        None => "error",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", category(&e));
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::anyhow;

    #[test]
    fn pairs() {
        assert_eq!(
            split_pair("elmo = a.wemb", "--emb").unwrap(),
            ("elmo", "a.wemb")
        );
        assert!(split_pair("elmo", "--emb").is_err());
        assert!(split_pair("=x", "--emb").is_err());
    }

    #[test]
    fn categories() {
        assert_eq!(category(&anyhow!(Error::Config("x".into()))), "config");
        let wrapped = anyhow::Error::from(Error::Schema("x".into())).context("while loading");
        assert_eq!(category(&wrapped), "schema");
        assert_eq!(category(&anyhow!("plain")), "error");
    }
}
