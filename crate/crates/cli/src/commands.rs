//! Implementations of the individual subcommands.
//!
//! Every command follows the same discipline: load and validate every input
//! first, do the numeric work, and only then create output files, so a
//! validation failure never leaves partial artifacts behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use amfuse_core::fusion::{
    derive_weights, fuse_posteriorgrams, FusionMode, SimilarityTable, WeightVector,
};
use amfuse_core::inventory::ClassInventory;
use amfuse_core::metrics::{build_report_set, Reference};
use amfuse_core::net::{
    load_network, save_network, train, MappingNetwork, StopReason, TrainingConfig, TrainingTrace,
};
use amfuse_core::pgm;
use amfuse_core::posterior::{LabelSequence, Posteriorgram};
use amfuse_core::synth;

use crate::args::{EvalArgs, FuseArgs, GenSynthArgs, MapArgs, TrainMapArgs};
use crate::error::{at_path, CliError};

/// Seed used when neither --seed nor a config file provides one.
pub const DEFAULT_SEED: u64 = 42;

pub fn effective_seed(flag: Option<u64>, config_seed: Option<u64>) -> u64 {
    flag.or(config_seed).unwrap_or(DEFAULT_SEED)
}

pub fn note(verbose: bool, msg: impl AsRef<str>) {
    if verbose {
        eprintln!("info: {}", msg.as_ref());
    }
}

// --- shared input plumbing ---------------------------------------------------

/// Expands directories into their `.pgm` files (sorted by name); plain paths
/// pass through.
pub fn expand_pgm_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| at_path(e, p))?
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| at_path(e, p))?
                .into_iter()
                .map(|e| e.path())
                .filter(|q| q.is_file() && q.extension().is_some_and(|x| x == "pgm"))
                .collect();
            if found.is_empty() {
                return Err(CliError::Validation(format!(
                    "{}: directory holds no .pgm files",
                    p.display()
                )));
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Like [`expand_pgm_paths`] but keeps every regular file, for references
/// that may be label files.
fn expand_any_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| at_path(e, p))?
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| at_path(e, p))?
                .into_iter()
                .map(|e| e.path())
                .filter(|q| q.is_file())
                .collect();
            if found.is_empty() {
                return Err(CliError::Validation(format!(
                    "{}: directory is empty",
                    p.display()
                )));
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Loads one posteriorgram and checks its rows are valid distributions.
pub fn load_pgm(path: &Path) -> Result<Posteriorgram, CliError> {
    let pg = pgm::load_posteriorgram(path).map_err(|e| at_path(e, path))?;
    pg.validate_rows().map_err(|e| at_path(e, path))?;
    Ok(pg)
}

pub fn load_pgm_set(paths: &[PathBuf]) -> Result<Vec<Posteriorgram>, CliError> {
    paths.iter().map(|p| load_pgm(p)).collect()
}

/// All posteriorgrams must agree on language and class count.
fn check_uniform(set: &[Posteriorgram], what: &str) -> Result<(), CliError> {
    let first = &set[0];
    for pg in set {
        if pg.lang != first.lang {
            return Err(CliError::Validation(format!(
                "{what} set mixes languages {:?} and {:?}",
                first.lang, pg.lang
            )));
        }
        if pg.dim() != first.dim() {
            return Err(CliError::Validation(format!(
                "{what} set mixes class counts {} and {}",
                first.dim(),
                pg.dim()
            )));
        }
    }
    Ok(())
}

/// Rounds to the 6-decimal value the report printer would show, so numbers
/// that flow onward (similarity tables) match what a reader of the report
/// would copy.
pub fn round6(v: f64) -> f64 {
    format!("{v:.6}").parse().expect("formatted float reparses")
}

/// Fuses with sources looked up by language label in the weight vector's
/// own order, so callers never depend on input order.
pub fn fuse_labeled(
    target: Option<&Posteriorgram>,
    sources: &[(String, &Posteriorgram)],
    wv: &WeightVector,
) -> Result<Posteriorgram, CliError> {
    let mut by_label: BTreeMap<&str, &Posteriorgram> = BTreeMap::new();
    for (label, pg) in sources {
        if by_label.insert(label, pg).is_some() {
            return Err(CliError::Validation(format!(
                "duplicate source label {label:?}"
            )));
        }
    }
    let mut ordered = Vec::with_capacity(wv.source_weights.len());
    for (lang, _) in &wv.source_weights {
        let pg = by_label.remove(lang.as_str()).ok_or_else(|| {
            CliError::Validation(format!("no input posteriorgram for source {lang:?}"))
        })?;
        ordered.push(pg);
    }
    if let Some((extra, _)) = by_label.pop_first() {
        return Err(CliError::Validation(format!(
            "input {extra:?} has no weight"
        )));
    }
    Ok(fuse_posteriorgrams(target, &ordered, wv)?)
}

// --- gen-synth ----------------------------------------------------------------

pub fn gen_synth(args: &GenSynthArgs, seed_flag: Option<u64>, verbose: bool) -> Result<(), CliError> {
    let cfg = match (&args.preset, &args.config) {
        (Some(name), None) => {
            let seed = effective_seed(seed_flag, None);
            synth::preset_config(name, args.utts.unwrap_or(16), seed).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown preset {name:?}; expected default, confusable, graded or fusion"
                ))
            })?
        }
        (None, Some(path)) => {
            if args.utts.is_some() {
                return Err(CliError::Usage(
                    "--utts only applies to --preset corpora; set n_utterances in the config"
                        .into(),
                ));
            }
            let text = fs::read_to_string(path).map_err(|e| at_path(e, path))?;
            let mut cfg: synth::SynthConfig =
                toml::from_str(&text).map_err(|e| at_path(e, path))?;
            if let Some(s) = seed_flag {
                cfg.seed = s;
            }
            cfg
        }
        _ => unreachable!("clap enforces exactly one of --preset/--config"),
    };
    cfg.validate()?;
    note(
        verbose,
        format!(
            "generating {} utterances x {} languages (seed {})",
            cfg.n_utterances,
            cfg.languages.len(),
            cfg.seed
        ),
    );
    let corpus = synth::generate(&cfg)?;
    synth::write_corpus_dir(&corpus, &args.out).map_err(|e| at_path(e, &args.out))?;
    println!(
        "wrote corpus: {} languages, {} utterances, {} frames -> {}",
        cfg.languages.len(),
        corpus.utterance_ids.len(),
        corpus.n_frames(),
        args.out.display()
    );
    Ok(())
}

// --- train-map ----------------------------------------------------------------

fn training_config_from(args: &TrainMapArgs, seed: u64) -> Result<TrainingConfig, CliError> {
    if args.batch_size == 0 {
        return Err(CliError::Usage("--batch-size must be at least 1".into()));
    }
    if !(args.learning_rate > 0.0 && args.learning_rate.is_finite()) {
        return Err(CliError::Usage(format!(
            "--learning-rate must be positive and finite, got {}",
            args.learning_rate
        )));
    }
    if !(0.0..1.0).contains(&args.momentum) {
        return Err(CliError::Usage(format!(
            "--momentum must lie in [0,1), got {}",
            args.momentum
        )));
    }
    if !(args.epsilon_floor > 0.0 && args.epsilon_floor <= 1e-6) {
        return Err(CliError::Usage(format!(
            "--epsilon-floor must lie in (0, 1e-6], got {}",
            args.epsilon_floor
        )));
    }
    Ok(TrainingConfig {
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        max_epochs: args.max_epochs,
        patience: args.patience,
        seed,
        epsilon_floor: args.epsilon_floor,
    })
}

/// Splits paired sets into train/dev by holding out the last `fraction` of
/// utterances in sorted-id order.
fn split_dev(
    sources: Vec<Posteriorgram>,
    targets: Vec<Posteriorgram>,
    fraction: f64,
) -> Result<(Vec<Posteriorgram>, Vec<Posteriorgram>, Vec<Posteriorgram>, Vec<Posteriorgram>), CliError>
{
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CliError::Usage(format!(
            "--dev-fraction must lie in (0,1), got {fraction}"
        )));
    }
    let mut ids: Vec<&str> = sources.iter().map(|p| p.utterance_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != sources.len() {
        return Err(CliError::Validation(
            "source set repeats an utterance id".into(),
        ));
    }
    let n = ids.len();
    let k = ((n as f64 * fraction).round() as usize).max(1);
    if k >= n {
        return Err(CliError::Validation(format!(
            "dev split of {k} from {n} utterances leaves no training data; \
             pass --dev-source/--dev-target or lower --dev-fraction"
        )));
    }
    let dev_ids: std::collections::BTreeSet<String> =
        ids[n - k..].iter().map(|s| s.to_string()).collect();
    let (mut ts, mut tt, mut ds, mut dt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for pg in sources {
        if dev_ids.contains(&pg.utterance_id) {
            ds.push(pg);
        } else {
            ts.push(pg);
        }
    }
    for pg in targets {
        if dev_ids.contains(&pg.utterance_id) {
            dt.push(pg);
        } else {
            tt.push(pg);
        }
    }
    Ok((ts, tt, ds, dt))
}

pub fn stop_reason_str(r: StopReason) -> &'static str {
    match r {
        StopReason::MaxEpochs => "max-epochs",
        StopReason::EarlyStopping => "early-stopping",
        StopReason::Diverged => "diverged",
    }
}

pub fn trace_text(trace: &TrainingTrace) -> String {
    let mut s = String::from("epoch train_kl dev_kl dev_top1\n");
    for (i, e) in trace.epochs.iter().enumerate() {
        s.push_str(&format!(
            "{} {:.6} {:.6} {:.6}\n",
            i + 1,
            e.train_kl,
            e.dev_kl,
            e.dev_top1
        ));
    }
    s.push_str(&format!("stop {}\n", stop_reason_str(trace.stop_reason)));
    s.push_str(&format!("best_epoch {}\n", trace.best_epoch));
    s
}

pub fn train_summary(net: &MappingNetwork, trace: &TrainingTrace) -> String {
    let (dev_kl, dev_top1) = trace
        .epochs
        .get(trace.best_epoch.wrapping_sub(1))
        .map(|e| (format!("{:.6}", e.dev_kl), format!("{:.6}", e.dev_top1)))
        .unwrap_or_else(|| ("n/a".into(), "n/a".into()));
    format!(
        "trained {}->{}: epochs={} best_epoch={} stop={} dev_kl={} dev_top1={}",
        net.source_lang,
        net.target_lang,
        trace.epochs.len(),
        trace.best_epoch,
        stop_reason_str(trace.stop_reason),
        dev_kl,
        dev_top1
    )
}

pub fn train_map(args: &TrainMapArgs, seed_flag: Option<u64>, verbose: bool) -> Result<(), CliError> {
    if args.hidden.len() != 3 {
        return Err(CliError::Usage(format!(
            "--hidden needs exactly three widths, got {}",
            args.hidden.len()
        )));
    }
    let hidden = [args.hidden[0], args.hidden[1], args.hidden[2]];
    if hidden.contains(&0) {
        return Err(CliError::Usage("--hidden widths must be nonzero".into()));
    }
    let seed = effective_seed(seed_flag, None);
    let cfg = training_config_from(args, seed)?;

    let sources = load_pgm_set(&expand_pgm_paths(&args.source)?)?;
    let targets = load_pgm_set(&expand_pgm_paths(&args.target)?)?;
    check_uniform(&sources, "source")?;
    check_uniform(&targets, "target")?;

    let explicit_dev = !args.dev_source.is_empty();
    let (train_src, train_tgt, dev_src, dev_tgt) = if explicit_dev {
        let ds = load_pgm_set(&expand_pgm_paths(&args.dev_source)?)?;
        let dt = load_pgm_set(&expand_pgm_paths(&args.dev_target)?)?;
        check_uniform(&ds, "dev source")?;
        check_uniform(&dt, "dev target")?;
        if ds[0].lang != sources[0].lang || dt[0].lang != targets[0].lang {
            return Err(CliError::Validation(
                "dev set languages differ from the training set languages".into(),
            ));
        }
        (sources, targets, ds, dt)
    } else {
        split_dev(sources, targets, args.dev_fraction)?
    };

    let (src_lang, d_s) = (train_src[0].lang.clone(), train_src[0].dim());
    let (tgt_lang, d_t) = (train_tgt[0].lang.clone(), train_tgt[0].dim());
    note(
        verbose,
        format!(
            "training {src_lang}->{tgt_lang}: {} train / {} dev utterances, hidden {:?}, seed {seed}",
            train_src.len(),
            dev_src.len(),
            hidden
        ),
    );

    let net = MappingNetwork::init(&src_lang, &tgt_lang, d_s, hidden, d_t, seed);
    let (net, trace) = train(net, &train_src, &train_tgt, &dev_src, &dev_tgt, &cfg)?;

    save_network(&net, &args.out).map_err(|e| at_path(e, &args.out))?;
    if let Some(tp) = &args.trace {
        fs::write(tp, trace_text(&trace)).map_err(|e| at_path(e, tp))?;
    }
    println!("{}", train_summary(&net, &trace));
    Ok(())
}

// --- map ------------------------------------------------------------------------

pub fn map_cmd(args: &MapArgs, verbose: bool) -> Result<(), CliError> {
    if args.out.is_some() && args.inputs.len() != 1 {
        return Err(CliError::Usage(format!(
            "--out takes exactly one input, got {}; use --out-dir",
            args.inputs.len()
        )));
    }
    let net = load_network(&args.net).map_err(|e| at_path(e, &args.net))?;
    let inputs = load_pgm_set(&expand_pgm_paths(&args.inputs)?)?;
    for pg in &inputs {
        if pg.lang != net.source_lang {
            return Err(CliError::Validation(format!(
                "{}: posteriorgram language {:?} does not match the network's source {:?}",
                pg.utterance_id, pg.lang, net.source_lang
            )));
        }
        if pg.dim() != net.source_dim() {
            return Err(CliError::Validation(format!(
                "{}: {} classes where the network expects {}",
                pg.utterance_id,
                pg.dim(),
                net.source_dim()
            )));
        }
    }
    note(
        verbose,
        format!(
            "mapping {} posteriorgram(s) {}->{}",
            inputs.len(),
            net.source_lang,
            net.target_lang
        ),
    );

    match (&args.out, &args.out_dir) {
        (Some(out), None) => {
            if inputs.len() != 1 {
                return Err(CliError::Usage(format!(
                    "--out takes exactly one input, got {}; use --out-dir",
                    inputs.len()
                )));
            }
            let mapped = net.map_posteriorgram(&inputs[0])?;
            pgm::save_posteriorgram(&mapped, out).map_err(|e| at_path(e, out))?;
        }
        (None, Some(dir)) => {
            let mut seen = std::collections::BTreeSet::new();
            for pg in &inputs {
                if !seen.insert(&pg.utterance_id) {
                    return Err(CliError::Validation(format!(
                        "two inputs share utterance id {:?}",
                        pg.utterance_id
                    )));
                }
            }
            let mapped: Vec<Posteriorgram> = inputs
                .iter()
                .map(|pg| net.map_posteriorgram(pg))
                .collect::<Result<_, _>>()?;
            fs::create_dir_all(dir).map_err(|e| at_path(e, dir))?;
            for m in &mapped {
                let path = dir.join(format!("{}.pgm", m.utterance_id));
                pgm::save_posteriorgram(m, &path).map_err(|e| at_path(e, &path))?;
            }
        }
        _ => unreachable!("clap enforces exactly one of --out/--out-dir"),
    }
    println!("mapped {} posteriorgram(s)", inputs.len());
    Ok(())
}

// --- fuse -----------------------------------------------------------------------

struct FuseInput {
    label: Option<String>,
    path: PathBuf,
}

fn parse_fuse_inputs(
    raw: &[String],
    mode: FusionMode,
    derive: bool,
) -> Result<(Option<PathBuf>, Vec<FuseInput>), CliError> {
    let (target_raw, source_raw) = match mode {
        FusionMode::Multilingual => (Some(raw[0].clone()), &raw[1..]),
        FusionMode::CrossLingual => (None, raw),
    };
    let mut sources = Vec::with_capacity(source_raw.len());
    for s in source_raw {
        if derive {
            let (label, path) = s.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "with --derive-weights every source input needs a `lang=` prefix, got {s:?}"
                ))
            })?;
            if label.is_empty() || path.is_empty() {
                return Err(CliError::Usage(format!("malformed input {s:?}")));
            }
            sources.push(FuseInput {
                label: Some(label.to_string()),
                path: PathBuf::from(path),
            });
        } else {
            sources.push(FuseInput {
                label: None,
                path: PathBuf::from(s),
            });
        }
    }
    Ok((target_raw.map(PathBuf::from), sources))
}

pub fn fuse_cmd(args: &FuseArgs, verbose: bool) -> Result<(), CliError> {
    let mode = FusionMode::parse(&args.mode).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown mode {:?}; expected multi or cross",
            args.mode
        ))
    })?;
    let derive = args.derive_weights;
    let (target_path, source_inputs) = parse_fuse_inputs(&args.inputs, mode, derive)?;

    let target_pg = target_path.as_deref().map(load_pgm).transpose()?;
    let mut sources: Vec<(String, Posteriorgram)> = Vec::with_capacity(source_inputs.len());
    for (i, inp) in source_inputs.iter().enumerate() {
        let pg = load_pgm(&inp.path)?;
        let label = inp.label.clone().unwrap_or_else(|| format!("src{}", i + 1));
        sources.push((label, pg));
    }

    let wv = if derive {
        let table_path = args.sim_table.as_ref().expect("clap ties --sim-table to --derive-weights");
        let table = SimilarityTable::load(table_path).map_err(|e| at_path(e, table_path))?;
        let mut restricted = SimilarityTable::default();
        for (label, _) in &sources {
            let entry = table.entries.get(label).ok_or_else(|| {
                CliError::Validation(format!(
                    "source {label:?} is not in the similarity table {}",
                    table_path.display()
                ))
            })?;
            restricted.insert(label.clone(), *entry);
        }
        derive_weights(
            &restricted,
            mode,
            args.tau,
            mode == FusionMode::Multilingual,
            args.target_share,
        )?
    } else {
        let w = args.weights.as_ref().expect("clap requires --weights here");
        if w.len() != args.inputs.len() {
            return Err(CliError::Usage(format!(
                "{} weights for {} inputs",
                w.len(),
                args.inputs.len()
            )));
        }
        let (target_weight, source_w) = match mode {
            FusionMode::Multilingual => (w[0], &w[1..]),
            FusionMode::CrossLingual => (0.0, &w[..]),
        };
        WeightVector {
            mode,
            target_weight,
            source_weights: sources
                .iter()
                .zip(source_w)
                .map(|((label, _), &wi)| (label.clone(), wi))
                .collect(),
        }
    };

    if verbose {
        let mut parts: Vec<String> = vec![format!("target={}", wv.target_weight)];
        parts.extend(
            wv.source_weights
                .iter()
                .map(|(l, w)| format!("{l}={w}")),
        );
        note(true, format!("fusing with weights: {}", parts.join(" ")));
    }

    let labeled: Vec<(String, &Posteriorgram)> = sources
        .iter()
        .map(|(l, pg)| (l.clone(), pg))
        .collect();
    let fused = fuse_labeled(target_pg.as_ref(), &labeled, &wv)?;
    pgm::save_posteriorgram(&fused, &args.out).map_err(|e| at_path(e, &args.out))?;
    println!(
        "fused {} input(s) ({}) -> {}",
        args.inputs.len(),
        wv.mode.as_str(),
        args.out.display()
    );
    Ok(())
}

// --- eval -----------------------------------------------------------------------

enum RefData {
    Pg(Posteriorgram),
    Labels(LabelSequence),
}

fn load_reference(path: &Path, inv: &ClassInventory) -> Result<RefData, CliError> {
    let mut head = [0u8; 4];
    let is_pgm = {
        let mut f = fs::File::open(path).map_err(|e| at_path(e, path))?;
        match f.read_exact(&mut head) {
            Ok(()) => &head == pgm::MAGIC,
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => false,
            Err(e) => return Err(at_path(e, path)),
        }
    };
    if is_pgm {
        let pg = load_pgm(path)?;
        Ok(RefData::Pg(pg))
    } else {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if stem.is_empty() {
            return Err(CliError::Validation(format!(
                "{}: cannot take an utterance id from the file name",
                path.display()
            )));
        }
        let labels = LabelSequence::load(stem, path).map_err(|e| at_path(e, path))?;
        labels
            .validate_against(inv.size())
            .map_err(|e| at_path(e, path))?;
        Ok(RefData::Labels(labels))
    }
}

pub fn eval_cmd(args: &EvalArgs, verbose: bool) -> Result<(), CliError> {
    if args.topn.is_empty() {
        return Err(CliError::Usage("--topn needs at least one value".into()));
    }
    let inv = ClassInventory::load(&args.inventory).map_err(|e| at_path(e, &args.inventory))?;
    let hyps = load_pgm_set(&expand_pgm_paths(&args.hyp)?)?;
    let refs: Vec<RefData> = expand_any_paths(&args.reference)?
        .iter()
        .map(|p| load_reference(p, &inv))
        .collect::<Result<_, _>>()?;

    note(
        verbose,
        format!(
            "scoring {} hypothesis utterance(s) against {} reference(s)",
            hyps.len(),
            refs.len()
        ),
    );

    let references: Vec<Reference> = refs
        .iter()
        .map(|r| match r {
            RefData::Pg(pg) => Reference::Posteriors(pg),
            RefData::Labels(ls) => Reference::Labels(ls),
        })
        .collect();
    let hyp_refs: Vec<&Posteriorgram> = hyps.iter().collect();
    let report = build_report_set(&references, &hyp_refs, &inv, &args.topn)?;

    print!("{}", report.to_text());
    if let Some(out) = &args.out {
        fs::write(out, report.to_text()).map_err(|e| at_path(e, out))?;
    }
    Ok(())
}

// --- small shared pieces for the pipeline ---------------------------------------

/// Restricts a similarity table to `langs`, erroring on missing entries.
pub fn restrict_table(
    table: &SimilarityTable,
    langs: &[String],
) -> Result<SimilarityTable, CliError> {
    let mut out = SimilarityTable::default();
    for lang in langs {
        let entry = table.entries.get(lang).ok_or_else(|| {
            CliError::Validation(format!("source {lang:?} is not in the similarity table"))
        })?;
        out.insert(lang.clone(), *entry);
    }
    Ok(out)
}

/// Drops the target term of a multilingual weight vector and renormalizes
/// the kept sources to sum to 1 (cross-lingual use of explicit weights).
pub fn cross_restrict_weights(
    wv: &WeightVector,
    langs: &[String],
) -> Result<WeightVector, CliError> {
    let kept: Vec<(String, f64)> = wv
        .source_weights
        .iter()
        .filter(|(l, _)| langs.contains(l))
        .cloned()
        .collect();
    if kept.len() != langs.len() {
        return Err(CliError::Validation(
            "weight vector is missing one of the requested sources".into(),
        ));
    }
    let total: f64 = kept.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(CliError::Validation(
            "requested sources carry zero total weight; cross weights are undefined".into(),
        ));
    }
    Ok(WeightVector {
        mode: FusionMode::CrossLingual,
        target_weight: 0.0,
        source_weights: kept.into_iter().map(|(l, w)| (l, w / total)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use amfuse_core::fusion::SimEntry;
    use ndarray::Array2;

    fn pg(id: &str, lang: &str, t: usize, d: usize) -> Posteriorgram {
        Posteriorgram::new(id, lang, Array2::from_elem((t, d), 1.0 / d as f32)).unwrap()
    }

    #[test]
    fn split_dev_holds_out_last_ids() {
        let sources = vec![pg("u1", "a", 3, 4), pg("u2", "a", 3, 4), pg("u3", "a", 3, 4)];
        let targets = vec![pg("u1", "b", 3, 5), pg("u2", "b", 3, 5), pg("u3", "b", 3, 5)];
        let (ts, tt, ds, dt) = split_dev(sources, targets, 0.34).unwrap();
        assert_eq!(ts.len(), 2);
        assert_eq!(tt.len(), 2);
        assert_eq!(ds.len(), 1);
        assert_eq!(dt.len(), 1);
        assert_eq!(ds[0].utterance_id, "u3");
        assert_eq!(dt[0].utterance_id, "u3");
    }

    #[test]
    fn split_dev_refuses_to_consume_everything() {
        let sources = vec![pg("u1", "a", 3, 4)];
        let targets = vec![pg("u1", "b", 3, 5)];
        let err = split_dev(sources, targets, 0.5).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn round6_matches_report_formatting() {
        assert_eq!(round6(0.123456789), 0.123457);
        assert_eq!(round6(1.0), 1.0);
        let v = 0.9876543;
        assert_eq!(format!("{:.6}", round6(v)), format!("{v:.6}"));
    }

    #[test]
    fn fuse_labeled_orders_by_weight_vector() {
        // Weight order bb-then-aa while inputs are given aa-then-bb: the
        // result must follow the weights, not the input order.
        let aa = pg("u", "t", 2, 3);
        let mut bb = pg("u", "t", 2, 3);
        bb.frames[(0, 0)] = 0.5;
        bb.frames[(0, 1)] = 0.25;
        bb.frames[(0, 2)] = 0.25;
        let wv = WeightVector {
            mode: FusionMode::CrossLingual,
            target_weight: 0.0,
            source_weights: vec![("bb".into(), 1.0), ("aa".into(), 0.0)],
        };
        let labeled = vec![("aa".to_string(), &aa), ("bb".to_string(), &bb)];
        let fused = fuse_labeled(None, &labeled, &wv).unwrap();
        assert_eq!(fused.frames[(0, 0)], 0.5);
    }

    #[test]
    fn fuse_labeled_rejects_unknown_and_missing_labels() {
        let aa = pg("u", "t", 2, 3);
        let wv = WeightVector {
            mode: FusionMode::CrossLingual,
            target_weight: 0.0,
            source_weights: vec![("bb".into(), 1.0)],
        };
        let labeled = vec![("aa".to_string(), &aa)];
        let err = fuse_labeled(None, &labeled, &wv).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn cross_restrict_renormalizes() {
        let wv = WeightVector {
            mode: FusionMode::Multilingual,
            target_weight: 0.5,
            source_weights: vec![("a".into(), 0.3), ("b".into(), 0.1), ("c".into(), 0.1)],
        };
        let cross = cross_restrict_weights(&wv, &["a".into(), "b".into()]).unwrap();
        assert_eq!(cross.target_weight, 0.0);
        assert!((cross.source_weights[0].1 - 0.75).abs() < 1e-12);
        assert!((cross.source_weights[1].1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn restrict_table_errors_on_missing_language() {
        let mut table = SimilarityTable::default();
        table.insert(
            "a",
            SimEntry {
                avg_entropy: 1.0,
                top1_accuracy: 0.5,
            },
        );
        assert!(restrict_table(&table, &["a".into()]).is_ok());
        let err = restrict_table(&table, &["zz".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
