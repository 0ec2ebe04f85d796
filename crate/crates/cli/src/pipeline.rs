//! The experiment grid: synthesize or load corpora, train one mapping
//! network per source, build the dev similarity table, fuse every source
//! subset over the eval set, and tabulate accuracy and PER per cell.
//!
//! Cells are keyed deterministically: the multilingual cell first, then the
//! all-source cross-lingual cell, then every proper subset in decreasing
//! size (lexicographic within a size). All randomness flows from one master
//! seed, so a rerun with the same config writes byte-identical artifacts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use amfuse_core::fusion::{
    self, derive_weights, FusionMode, SimEntry, SimilarityTable, WeightVector,
};
use amfuse_core::inventory::ClassInventory;
use amfuse_core::metrics::{build_report_set, EvalReport, Reference};
use amfuse_core::net::{save_network, train, MappingNetwork, TrainingConfig};
use amfuse_core::pgm;
use amfuse_core::posterior::Posteriorgram;
use amfuse_core::seed;
use amfuse_core::synth;

use crate::args::RunMatrixArgs;
use crate::commands::{
    cross_restrict_weights, effective_seed, fuse_labeled, note, restrict_table, round6,
    trace_text, train_summary,
};
use crate::error::{at_path, CliError};

// --- configuration ------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Experiment name (recorded in the results tables).
    pub name: String,
    /// Language whose class space everything is mapped into.
    pub target: String,
    /// Source languages, each of which gets its own mapping network.
    pub sources: Vec<String>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Master seed; the --seed flag overrides it.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Top-n accuracy sizes for the per-cell reports; must include 1.
    #[serde(default = "default_topn")]
    pub topn: Vec<usize>,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub fusion: FusionSection,
}

fn default_topn() -> Vec<usize> {
    vec![1, 2, 5, 10]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    /// Built-in corpus family: default, confusable, graded or fusion.
    #[serde(default)]
    pub preset: Option<String>,
    /// Pre-generated corpus root holding train/, dev/ and eval/ directories.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_train_utts")]
    pub train_utterances: usize,
    #[serde(default = "default_heldout_utts")]
    pub dev_utterances: usize,
    #[serde(default = "default_heldout_utts")]
    pub eval_utterances: usize,
}

fn default_train_utts() -> usize {
    40
}

fn default_heldout_utts() -> usize {
    8
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub hidden: [usize; 3],
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub epsilon_floor: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let base = TrainingConfig::default();
        Self {
            hidden: [64, 64, 64],
            batch_size: base.batch_size,
            learning_rate: base.learning_rate,
            momentum: base.momentum,
            max_epochs: base.max_epochs,
            patience: base.patience,
            epsilon_floor: base.epsilon_floor,
        }
    }
}

impl TrainingSection {
    fn to_config(&self, seed: u64) -> TrainingConfig {
        TrainingConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            epsilon_floor: self.epsilon_floor,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionSection {
    /// Entropy temperature for weight derivation.
    pub temperature: f64,
    /// Weight kept by the target model in the multilingual cell.
    pub target_share: f64,
    /// Optional explicit multilingual weight vector; when set, derivation
    /// is skipped and cross cells renormalize the listed source weights.
    pub weights_file: Option<PathBuf>,
}

impl Default for FusionSection {
    fn default() -> Self {
        Self {
            temperature: fusion::DEFAULT_TEMPERATURE,
            target_share: fusion::DEFAULT_TARGET_SHARE,
            weights_file: None,
        }
    }
}

// --- corpora -------------------------------------------------------------------

const ROLES: [&str; 3] = ["train", "dev", "eval"];
const TRAIN: usize = 0;
const DEV: usize = 1;
const EVAL: usize = 2;

enum Corpora {
    Generated(Box<[synth::SynthCorpus; 3]>),
    Loaded(Box<[synth::CorpusDir; 3]>),
}

impl Corpora {
    fn pgs(&self, role: usize) -> &BTreeMap<String, Vec<Posteriorgram>> {
        match self {
            Corpora::Generated(c) => &c[role].posteriorgrams,
            Corpora::Loaded(c) => &c[role].posteriorgrams,
        }
    }

    fn set(&self, role: usize, lang: &str) -> Result<&[Posteriorgram], CliError> {
        self.pgs(role)
            .get(lang)
            .map(Vec::as_slice)
            .ok_or_else(|| {
                CliError::Validation(format!(
                    "language {lang:?} is missing from the {} corpus",
                    ROLES[role]
                ))
            })
    }
}

fn lang_tag_ok(tag: &str) -> bool {
    !tag.is_empty()
        && tag
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn validate_pipeline(cfg: &PipelineConfig, out_root: &Path) -> Result<(), CliError> {
    let fail = |m: String| Err(CliError::Validation(m));
    if cfg.sources.is_empty() {
        return fail("at least one source language is required".into());
    }
    for tag in cfg.sources.iter().chain([&cfg.target]) {
        if !lang_tag_ok(tag) {
            return fail(format!(
                "language tag {tag:?} may only use letters, digits, '_' and '-'"
            ));
        }
    }
    let unique: BTreeSet<&String> = cfg.sources.iter().collect();
    if unique.len() != cfg.sources.len() {
        return fail("source languages repeat".into());
    }
    if cfg.sources.contains(&cfg.target) {
        return fail(format!(
            "target {:?} also appears in the sources",
            cfg.target
        ));
    }
    if cfg.topn.is_empty() {
        return fail("topn must list at least one value".into());
    }
    if cfg.topn.contains(&0) {
        return fail("topn values must be at least 1".into());
    }
    if !cfg.topn.contains(&1) {
        return fail("topn must include 1 (the results table reports top-1)".into());
    }

    match (&cfg.corpus.preset, &cfg.corpus.dir) {
        (Some(_), Some(_)) => {
            return fail("corpus settings give both a preset and a directory".into())
        }
        (None, None) => return fail("corpus settings need a preset or a directory".into()),
        (Some(_), None) => {
            if cfg.corpus.train_utterances == 0
                || cfg.corpus.dev_utterances == 0
                || cfg.corpus.eval_utterances == 0
            {
                return fail("corpus utterance counts must be at least 1".into());
            }
        }
        (None, Some(dir)) => {
            if dir == out_root {
                return fail("the corpus directory and the output directory must differ".into());
            }
        }
    }

    let t = &cfg.training;
    if t.hidden.contains(&0) {
        return fail("hidden widths must be nonzero".into());
    }
    if t.batch_size == 0 {
        return fail("batch_size must be at least 1".into());
    }
    if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
        return fail(format!("learning_rate {} is not positive", t.learning_rate));
    }
    if !(0.0..1.0).contains(&t.momentum) {
        return fail(format!("momentum {} is outside [0,1)", t.momentum));
    }
    if !(t.epsilon_floor > 0.0 && t.epsilon_floor <= 1e-6) {
        return fail(format!(
            "epsilon_floor {} is outside (0, 1e-6]",
            t.epsilon_floor
        ));
    }

    let f = &cfg.fusion;
    if !(f.temperature > 0.0 && f.temperature.is_finite()) {
        return fail(format!("temperature {} is not positive", f.temperature));
    }
    if !(0.0..=1.0).contains(&f.target_share) {
        return fail(format!("target_share {} is outside [0,1]", f.target_share));
    }
    Ok(())
}

fn load_corpora(cfg: &PipelineConfig, seed: u64) -> Result<Corpora, CliError> {
    let corpora = match (&cfg.corpus.preset, &cfg.corpus.dir) {
        (Some(name), None) => {
            let counts = [
                cfg.corpus.train_utterances,
                cfg.corpus.dev_utterances,
                cfg.corpus.eval_utterances,
            ];
            let mut out = Vec::with_capacity(3);
            for role in 0..3 {
                // Disjoint seeds per role; the preset's generative model does
                // not depend on the seed, so the roles stay compatible.
                let role_cfg = synth::preset_config(name, counts[role], seed::mix(seed, 1 + role as u64))
                    .ok_or_else(|| {
                        CliError::Validation(format!(
                            "unknown preset {name:?}; expected default, confusable, graded or fusion"
                        ))
                    })?;
                out.push(synth::generate(&role_cfg)?);
            }
            let [a, b, c]: [synth::SynthCorpus; 3] =
                out.try_into().expect("exactly three corpora");
            Corpora::Generated(Box::new([a, b, c]))
        }
        (None, Some(root)) => {
            let mut out = Vec::with_capacity(3);
            for role in ROLES {
                let dir = root.join(role);
                out.push(synth::read_corpus_dir(&dir).map_err(|e| at_path(e, &dir))?);
            }
            let [a, b, c]: [synth::CorpusDir; 3] = out.try_into().expect("exactly three corpora");
            Corpora::Loaded(Box::new([a, b, c]))
        }
        _ => unreachable!("validate_pipeline enforces exactly one corpus spec"),
    };

    for role in 0..3 {
        for lang in cfg.sources.iter().chain([&cfg.target]) {
            corpora.set(role, lang)?;
        }
    }
    Ok(corpora)
}

fn inventories_for(
    cfg: &PipelineConfig,
    corpora: &Corpora,
    seed: u64,
) -> Result<BTreeMap<String, ClassInventory>, CliError> {
    match corpora {
        Corpora::Generated(_) => {
            // Inventories derive from the templates, which are identical for
            // every role seed; build them from a fresh config.
            let name = cfg.corpus.preset.as_deref().expect("preset mode");
            let synth_cfg = synth::preset_config(name, 1, seed).expect("preset already validated");
            let mut out = BTreeMap::new();
            for lang in synth_cfg.language_tags() {
                out.insert(lang.clone(), synth::synth_inventory(&synth_cfg, &lang)?);
            }
            Ok(out)
        }
        Corpora::Loaded(c) => Ok(c[TRAIN].inventories.clone()),
    }
}

fn load_explicit_weights(
    cfg: &PipelineConfig,
    path: &Path,
) -> Result<WeightVector, CliError> {
    let wv = WeightVector::load(path).map_err(|e| at_path(e, path))?;
    if wv.mode != FusionMode::Multilingual {
        return Err(CliError::Validation(format!(
            "{}: the pipeline weight file must be multilingual (a target weight plus every source)",
            path.display()
        )));
    }
    fusion::validate_weights(&wv).map_err(|e| at_path(e, path))?;
    let have: BTreeSet<&String> = wv.source_weights.iter().map(|(l, _)| l).collect();
    let want: BTreeSet<&String> = cfg.sources.iter().collect();
    if have != want {
        return Err(CliError::Validation(format!(
            "{}: weight file sources {:?} do not match the configured sources {:?}",
            path.display(),
            have,
            want
        )));
    }
    for (lang, w) in &wv.source_weights {
        if *w <= 0.0 {
            return Err(CliError::Validation(format!(
                "{}: source {lang:?} has weight {w}; every source needs positive weight so \
                 cross-lingual subsets stay well-defined",
                path.display()
            )));
        }
    }
    Ok(wv)
}

// --- cells ----------------------------------------------------------------------

struct Cell {
    name: String,
    langs: Vec<String>,
    multi: bool,
}

/// Lexicographic index combinations of size `k` from `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        out.push(combo.clone());
        // Advance the rightmost index that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] != i + n - k {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

/// Cell order: multilingual full set, cross-lingual full set, then every
/// proper source subset by decreasing size.
fn build_cells(sources: &[String]) -> Vec<Cell> {
    let k = sources.len();
    let mut cells = vec![
        Cell {
            name: "multi-mf".into(),
            langs: sources.to_vec(),
            multi: true,
        },
        Cell {
            name: "cross-mf".into(),
            langs: sources.to_vec(),
            multi: false,
        },
    ];
    for size in (1..k).rev() {
        for combo in combinations(k, size) {
            let langs: Vec<String> = combo.iter().map(|&i| sources[i].clone()).collect();
            cells.push(Cell {
                name: format!("cross-{}", langs.join("+")),
                langs,
                multi: false,
            });
        }
    }
    cells
}

// --- results tables ---------------------------------------------------------------

struct ResultRow {
    cell: String,
    /// One flag per configured source, in config order.
    included: Vec<bool>,
    uses_target: bool,
    top1: f64,
    per: f64,
}

fn yn(b: bool) -> &'static str {
    if b {
        "Y"
    } else {
        "N"
    }
}

fn results_text(cfg: &PipelineConfig, rows: &[ResultRow]) -> String {
    let mut headers: Vec<String> = vec!["cell".into()];
    headers.extend(cfg.sources.iter().cloned());
    headers.extend(["target".into(), "top1".into(), "per".into()]);

    let row_cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.cell.clone()];
            v.extend(r.included.iter().map(|&b| yn(b).to_string()));
            v.push(yn(r.uses_target).into());
            v.push(format!("{:.6}", r.top1));
            v.push(format!("{:.6}", r.per));
            v
        })
        .collect();

    let widths: Vec<usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            row_cells
                .iter()
                .map(|r| r[i].len())
                .chain([h.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = format!("# {}\n", cfg.name);
    let push_row = |cells: &[String], out: &mut String| {
        let last = cells.len() - 1;
        for (i, c) in cells.iter().enumerate() {
            if i == last {
                out.push_str(c);
            } else {
                out.push_str(&format!("{:<w$}  ", c, w = widths[i]));
            }
        }
        out.push('\n');
    };
    push_row(&headers, &mut out);
    for r in &row_cells {
        push_row(r, &mut out);
    }
    out
}

fn results_csv(cfg: &PipelineConfig, rows: &[ResultRow]) -> String {
    let mut out = String::from("cell,");
    out.push_str(&cfg.sources.join(","));
    out.push_str(",target,top1,per\n");
    for r in rows {
        out.push_str(&r.cell);
        for &b in &r.included {
            out.push(',');
            out.push_str(yn(b));
        }
        out.push_str(&format!(",{},{:.6},{:.6}\n", yn(r.uses_target), r.top1, r.per));
    }
    out
}

// --- the pipeline -----------------------------------------------------------------

pub fn cmd_run_matrix(
    args: &RunMatrixArgs,
    seed_flag: Option<u64>,
    verbose: bool,
) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| at_path(e, &args.config))?;
    let cfg: PipelineConfig = toml::from_str(&text).map_err(|e| at_path(e, &args.config))?;
    let out_root = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| {
            CliError::Usage("no output directory: pass --out or set out_dir in the config".into())
        })?;
    let seed = effective_seed(seed_flag, cfg.seed);
    let results = run_matrix(&cfg, &out_root, seed, verbose)?;
    print!("{results}");
    Ok(())
}

fn report_for(
    refs: &[Posteriorgram],
    hyps: &[Posteriorgram],
    inv: &ClassInventory,
    ns: &[usize],
) -> Result<EvalReport, CliError> {
    let references: Vec<Reference> = refs.iter().map(Reference::Posteriors).collect();
    let hyp_refs: Vec<&Posteriorgram> = hyps.iter().collect();
    Ok(build_report_set(&references, &hyp_refs, inv, ns)?)
}

fn save_pgm_set(dir: &Path, pgs: &[Posteriorgram]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| at_path(e, dir))?;
    for pg in pgs {
        let path = dir.join(format!("{}.pgm", pg.utterance_id));
        pgm::save_posteriorgram(pg, &path).map_err(|e| at_path(e, &path))?;
    }
    Ok(())
}

/// Runs the whole grid; returns the human-readable results table (which is
/// also written to `results.txt`).
pub fn run_matrix(
    cfg: &PipelineConfig,
    out_root: &Path,
    seed: u64,
    verbose: bool,
) -> Result<String, CliError> {
    validate_pipeline(cfg, out_root)?;
    let corpora = load_corpora(cfg, seed)?;
    let inventories = inventories_for(cfg, &corpora, seed)?;
    let inv_t = inventories.get(&cfg.target).ok_or_else(|| {
        CliError::Validation(format!("no inventory for target {:?}", cfg.target))
    })?;
    let explicit = cfg
        .fusion
        .weights_file
        .as_ref()
        .map(|p| load_explicit_weights(cfg, p))
        .transpose()?;

    // All validation is done; writes may begin.
    fs::create_dir_all(out_root).map_err(|e| at_path(e, out_root))?;
    if let Corpora::Generated(roles) = &corpora {
        for (role, corpus) in ROLES.iter().zip(roles.iter()) {
            let dir = out_root.join("corpora").join(role);
            synth::write_corpus_dir(corpus, &dir).map_err(|e| at_path(e, &dir))?;
        }
    }

    // One mapping network per source; mapped dev/eval sets kept in memory.
    let tgt = &cfg.target;
    let d_t = corpora.set(TRAIN, tgt)?[0].dim();
    let nets_dir = out_root.join("nets");
    fs::create_dir_all(&nets_dir).map_err(|e| at_path(e, &nets_dir))?;
    let mut mapped: [BTreeMap<String, Vec<Posteriorgram>>; 2] =
        [BTreeMap::new(), BTreeMap::new()];
    for s in &cfg.sources {
        let d_s = corpora.set(TRAIN, s)?[0].dim();
        let net = MappingNetwork::init(s, tgt, d_s, cfg.training.hidden, d_t, seed);
        let tc = cfg.training.to_config(seed);
        let (net, trace) = train(
            net,
            corpora.set(TRAIN, s)?,
            corpora.set(TRAIN, tgt)?,
            corpora.set(DEV, s)?,
            corpora.set(DEV, tgt)?,
            &tc,
        )?;
        note(verbose, train_summary(&net, &trace));
        save_network(&net, nets_dir.join(format!("{s}.mnw")))
            .map_err(|e| at_path(e, &nets_dir))?;
        fs::write(nets_dir.join(format!("{s}.trace.txt")), trace_text(&trace))
            .map_err(|e| at_path(e, &nets_dir))?;

        for (slot, role) in [(0usize, DEV), (1usize, EVAL)] {
            let set: Vec<Posteriorgram> = corpora
                .set(role, s)?
                .iter()
                .map(|pg| net.map_posteriorgram(pg))
                .collect::<Result<_, _>>()?;
            save_pgm_set(
                &out_root.join("mapped").join(ROLES[role]).join(s),
                &set,
            )?;
            mapped[slot].insert(s.clone(), set);
        }
    }

    // Similarity table from the mapped dev sets, rounded exactly as eval
    // reports print, so table entries match what the reports show.
    let mut table = SimilarityTable::default();
    for s in &cfg.sources {
        let report = report_for(corpora.set(DEV, tgt)?, &mapped[0][s], inv_t, &[1])?;
        table.insert(
            s.clone(),
            SimEntry {
                avg_entropy: round6(report.avg_entropy),
                top1_accuracy: round6(report.top_n_accuracy[&1]),
            },
        );
        note(
            verbose,
            format!(
                "dev mapping quality {s}->{tgt}: top1={:.6} entropy={:.6}",
                report.top_n_accuracy[&1], report.avg_entropy
            ),
        );
    }
    table
        .save(out_root.join("simtable.txt"))
        .map_err(|e| at_path(e, &out_root.join("simtable.txt")))?;

    // The grid.
    let weights_dir = out_root.join("weights");
    let reports_dir = out_root.join("reports");
    fs::create_dir_all(&weights_dir).map_err(|e| at_path(e, &weights_dir))?;
    fs::create_dir_all(&reports_dir).map_err(|e| at_path(e, &reports_dir))?;
    let eval_tgt = corpora.set(EVAL, tgt)?;
    let mut rows = Vec::new();
    for cell in build_cells(&cfg.sources) {
        let wv = match &explicit {
            Some(file_wv) => {
                if cell.multi {
                    file_wv.clone()
                } else {
                    cross_restrict_weights(file_wv, &cell.langs)?
                }
            }
            None => {
                let restricted = restrict_table(&table, &cell.langs)?;
                derive_weights(
                    &restricted,
                    if cell.multi {
                        FusionMode::Multilingual
                    } else {
                        FusionMode::CrossLingual
                    },
                    cfg.fusion.temperature,
                    cell.multi,
                    cfg.fusion.target_share,
                )?
            }
        };
        let wts_path = weights_dir.join(format!("{}.wts", cell.name));
        wv.save(&wts_path).map_err(|e| at_path(e, &wts_path))?;

        let mut fused = Vec::with_capacity(eval_tgt.len());
        for (i, tgt_pg) in eval_tgt.iter().enumerate() {
            let labeled: Vec<(String, &Posteriorgram)> = cell
                .langs
                .iter()
                .map(|s| (s.clone(), &mapped[1][s][i]))
                .collect();
            let target_arg = cell.multi.then_some(tgt_pg);
            fused.push(fuse_labeled(target_arg, &labeled, &wv)?);
        }
        save_pgm_set(&out_root.join("fused").join(&cell.name), &fused)?;

        let report = report_for(eval_tgt, &fused, inv_t, &cfg.topn)?;
        let report_path = reports_dir.join(format!("{}.txt", cell.name));
        fs::write(&report_path, report.to_text()).map_err(|e| at_path(e, &report_path))?;
        note(
            verbose,
            format!(
                "cell {}: top1={:.6} per={:.6}",
                cell.name, report.top_n_accuracy[&1], report.per
            ),
        );

        rows.push(ResultRow {
            cell: cell.name.clone(),
            included: cfg.sources.iter().map(|s| cell.langs.contains(s)).collect(),
            uses_target: cell.multi,
            top1: report.top_n_accuracy[&1],
            per: report.per,
        });
    }

    let txt = results_text(cfg, &rows);
    let csv = results_csv(cfg, &rows);
    fs::write(out_root.join("results.txt"), &txt)
        .map_err(|e| at_path(e, &out_root.join("results.txt")))?;
    fs::write(out_root.join("results.csv"), &csv)
        .map_err(|e| at_path(e, &out_root.join("results.csv")))?;
    Ok(txt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn combinations_are_lexicographic_and_complete() {
        assert_eq!(
            combinations(4, 2),
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(5, 1).len(), 5);
    }

    #[test]
    fn cells_cover_every_nonempty_subset_once() {
        let cells = build_cells(&tags(&["lb", "lc", "ld"]));
        let names: Vec<&str> = cells.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "multi-mf",
                "cross-mf",
                "cross-lb+lc",
                "cross-lb+ld",
                "cross-lc+ld",
                "cross-lb",
                "cross-lc",
                "cross-ld"
            ]
        );
        assert!(cells[0].multi);
        assert!(cells.iter().skip(1).all(|c| !c.multi));
        // 1 multi + (2^3 - 1) cross subsets.
        assert_eq!(cells.len(), 1 + 7);
    }

    #[test]
    fn single_source_grid_has_two_cells() {
        let cells = build_cells(&tags(&["src"]));
        let names: Vec<&str> = cells.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["multi-mf", "cross-mf"]);
    }

    fn minimal_cfg() -> PipelineConfig {
        toml::from_str(
            r#"
            name = "t"
            target = "la"
            sources = ["lb", "lc"]
            [corpus]
            preset = "default"
            "#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_fill_in() {
        let cfg = minimal_cfg();
        assert_eq!(cfg.topn, vec![1, 2, 5, 10]);
        assert_eq!(cfg.training.hidden, [64, 64, 64]);
        assert_eq!(cfg.training.batch_size, 256);
        assert_eq!(cfg.fusion.temperature, 0.25);
        assert_eq!(cfg.fusion.target_share, 0.5);
        assert_eq!(cfg.corpus.train_utterances, 40);
        validate_pipeline(&cfg, Path::new("out")).unwrap();
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_shapes() {
        let err = toml::from_str::<PipelineConfig>(
            r#"
            name = "t"
            target = "la"
            sources = ["lb"]
            bogus = 1
            [corpus]
            preset = "default"
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"));

        let mut cfg = minimal_cfg();
        cfg.sources = vec!["la".into()];
        let err = validate_pipeline(&cfg, Path::new("out")).unwrap_err();
        assert_eq!(err.exit_code(), 3);

        let mut cfg = minimal_cfg();
        cfg.topn = vec![2, 5];
        let err = validate_pipeline(&cfg, Path::new("out")).unwrap_err();
        assert!(err.to_string().contains("top-1"));
    }

    #[test]
    fn results_tables_align_and_mark_sources() {
        let cfg = minimal_cfg();
        let rows = vec![
            ResultRow {
                cell: "multi-mf".into(),
                included: vec![true, true],
                uses_target: true,
                top1: 0.9123456,
                per: 0.0456789,
            },
            ResultRow {
                cell: "cross-lb".into(),
                included: vec![true, false],
                uses_target: false,
                top1: 0.5,
                per: 1.25,
            },
        ];
        let txt = results_text(&cfg, &rows);
        let lines: Vec<&str> = txt.lines().collect();
        assert_eq!(lines[0], "# t");
        assert!(lines[1].starts_with("cell"));
        assert!(lines[2].contains("0.912346"));
        assert!(lines[3].contains("cross-lb"));
        // Column positions line up.
        let top1_col = lines[1].find("top1").unwrap();
        assert_eq!(&lines[2][top1_col..top1_col + 2], "0.");
        assert_eq!(&lines[3][top1_col..top1_col + 2], "0.");

        let csv = results_csv(&cfg, &rows);
        assert_eq!(csv.lines().next().unwrap(), "cell,lb,lc,target,top1,per");
        assert!(csv.contains("multi-mf,Y,Y,Y,0.912346,0.045679"));
        assert!(csv.contains("cross-lb,Y,N,N,0.500000,1.250000"));
    }
}
