//! Synthetic multilingual posteriorgram corpora with known ground truth.
//!
//! A corpus is driven by a shared latent phone sequence per utterance: a
//! Markov chain with a self-loop probability (geometric run lengths) whose
//! states stand for phones, with state 0 reserved for silence. Each
//! language observes the same latent sequence through its own emission
//! model: `row = softmax(template[latent] + gaussian logit noise)`. Because
//! the generative model is known, the Bayes-optimal class-to-class mapping
//! is computable — by exact enumeration when both languages are noise-free,
//! by Monte Carlo otherwise — and upper-bounds what any trained mapping
//! network can reach.
//!
//! Utterances draw from per-utterance seeds derived from the corpus seed,
//! so generation order (or parallelism) cannot change the data.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inventory::{ClassInventory, InventoryError};
use crate::metrics::{self, Reference};
use crate::pgm::{self, PgmError};
use crate::posterior::{LabelSequence, Posteriorgram, PosteriorError};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("language {0:?} is not in the corpus")]
    MissingLanguage(String),
    #[error("corpus directory is malformed: {0}")]
    BadCorpusDir(String),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Pgm(#[from] PgmError),
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One language's emission model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub lang: String,
    pub class_count: usize,
    /// n_latent_phones x class_count logit rows.
    pub templates: Vec<Vec<f64>>,
    pub noise_sigma: f64,
}

/// Full description of a synthetic corpus; equal configs generate
/// bit-identical corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Latent phone count; latent 0 is silence.
    pub n_latent_phones: usize,
    pub languages: Vec<LanguageSpec>,
    /// Probability of staying in the current latent phone each frame;
    /// leaving moves uniformly to one of the other phones.
    pub self_loop_prob: f64,
    pub n_utterances: usize,
    /// Inclusive frame-count range per utterance.
    pub frames_range: (usize, usize),
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: String| Err(SynthError::InvalidConfig(msg));
        if self.n_latent_phones == 0 {
            return fail("need at least one latent phone".into());
        }
        if !(self.self_loop_prob > 0.0 && self.self_loop_prob < 1.0) {
            return fail(format!(
                "self-loop probability {} outside (0,1)",
                self.self_loop_prob
            ));
        }
        if self.n_utterances == 0 {
            return fail("need at least one utterance".into());
        }
        let (lo, hi) = self.frames_range;
        if lo == 0 || lo > hi {
            return fail(format!("bad frame range {lo}..={hi}"));
        }
        if self.languages.is_empty() {
            return fail("need at least one language".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for spec in &self.languages {
            if spec.lang.is_empty() || spec.lang.contains(';') || spec.lang.contains(char::is_whitespace) {
                return fail(format!("bad language tag {:?}", spec.lang));
            }
            if !seen.insert(&spec.lang) {
                return fail(format!("duplicate language tag {:?}", spec.lang));
            }
            if spec.class_count < 2 {
                return fail(format!("{}: need at least 2 classes", spec.lang));
            }
            if spec.templates.len() != self.n_latent_phones {
                return fail(format!(
                    "{}: {} template rows for {} latent phones",
                    spec.lang,
                    spec.templates.len(),
                    self.n_latent_phones
                ));
            }
            for (l, row) in spec.templates.iter().enumerate() {
                if row.len() != spec.class_count {
                    return fail(format!(
                        "{}: template row {l} has {} logits for {} classes",
                        spec.lang,
                        row.len(),
                        spec.class_count
                    ));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return fail(format!("{}: template row {l} holds non-finite logits", spec.lang));
                }
            }
            if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
                return fail(format!("{}: bad noise sigma {}", spec.lang, spec.noise_sigma));
            }
        }
        Ok(())
    }

    pub fn language(&self, lang: &str) -> Result<&LanguageSpec, SynthError> {
        self.languages
            .iter()
            .find(|s| s.lang == lang)
            .ok_or_else(|| SynthError::MissingLanguage(lang.to_string()))
    }

    pub fn language_tags(&self) -> Vec<String> {
        self.languages.iter().map(|s| s.lang.clone()).collect()
    }
}

/// Generated data: per language one posteriorgram per utterance, plus the
/// shared latent labels.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub utterance_ids: Vec<String>,
    /// lang -> posteriorgrams, index-aligned with `utterance_ids`.
    pub posteriorgrams: BTreeMap<String, Vec<Posteriorgram>>,
    /// Shared latent phone labels, index-aligned with `utterance_ids`.
    pub latent_labels: Vec<LabelSequence>,
}

impl SynthCorpus {
    pub fn pg_set(&self, lang: &str) -> Result<&[Posteriorgram], SynthError> {
        self.posteriorgrams
            .get(lang)
            .map(Vec::as_slice)
            .ok_or_else(|| SynthError::MissingLanguage(lang.to_string()))
    }

    pub fn n_frames(&self) -> usize {
        self.latent_labels.iter().map(|l| l.labels.len()).sum()
    }
}

fn sample_latents(
    rng: &mut ChaCha8Rng,
    frames: usize,
    n_latent: usize,
    self_loop: f64,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(frames);
    let mut current = rng.random_range(0..n_latent);
    out.push(current);
    for _ in 1..frames {
        if n_latent > 1 && rng.random::<f64>() >= self_loop {
            // Uniform over the other phones.
            let step = rng.random_range(1..n_latent);
            current = (current + step) % n_latent;
        }
        out.push(current);
    }
    out
}

fn softmax_into(logits: &[f64], out: &mut [f32]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0f64;
    for &v in logits {
        sum += (v - max).exp();
    }
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = ((v - max).exp() / sum) as f32;
    }
}

/// Generates the corpus described by `cfg`. Each utterance runs on its own
/// seed stream, so the result is independent of generation order.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let mut posteriorgrams: BTreeMap<String, Vec<Posteriorgram>> = cfg
        .languages
        .iter()
        .map(|s| (s.lang.clone(), Vec::with_capacity(cfg.n_utterances)))
        .collect();
    let mut latent_labels = Vec::with_capacity(cfg.n_utterances);
    let mut utterance_ids = Vec::with_capacity(cfg.n_utterances);

    for u in 0..cfg.n_utterances {
        let id = format!("utt{u:05}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(cfg.seed, u as u64));
        let frames = rng.random_range(cfg.frames_range.0..=cfg.frames_range.1);
        let latents = sample_latents(&mut rng, frames, cfg.n_latent_phones, cfg.self_loop_prob);

        for spec in &cfg.languages {
            let noise = if spec.noise_sigma > 0.0 {
                Some(Normal::new(0.0, spec.noise_sigma).expect("sigma validated"))
            } else {
                None
            };
            let mut m = Array2::<f32>::zeros((frames, spec.class_count));
            let mut logits = vec![0.0f64; spec.class_count];
            for (t, &l) in latents.iter().enumerate() {
                logits.copy_from_slice(&spec.templates[l]);
                if let Some(n) = &noise {
                    for v in logits.iter_mut() {
                        *v += n.sample(&mut rng);
                    }
                }
                softmax_into(
                    &logits,
                    m.row_mut(t).as_slice_mut().expect("row is contiguous"),
                );
            }
            posteriorgrams
                .get_mut(&spec.lang)
                .expect("key inserted above")
                .push(Posteriorgram::new(id.clone(), spec.lang.clone(), m)?);
        }

        latent_labels.push(LabelSequence {
            utterance_id: id.clone(),
            labels: latents,
        });
        utterance_ids.push(id);
    }

    Ok(SynthCorpus {
        config: cfg.clone(),
        utterance_ids,
        posteriorgrams,
        latent_labels,
    })
}

/// Name of latent phone `l`: `sil` for 0, `p<l>` otherwise.
pub fn latent_phone_name(l: usize) -> String {
    if l == 0 {
        "sil".to_string()
    } else {
        format!("p{l}")
    }
}

/// Class inventory of one synthetic language: class `c` is named after the
/// lowest latent phone whose template peaks at `c`, or gets a filler name
/// `u<c>` when no latent peaks there.
pub fn synth_inventory(cfg: &SynthConfig, lang: &str) -> Result<ClassInventory, SynthError> {
    let spec = cfg.language(lang)?;
    let mut phone_of_class: Vec<String> = (0..spec.class_count).map(|c| format!("u{c}")).collect();
    for (l, row) in spec.templates.iter().enumerate().rev() {
        let peak = metrics::argmax(row.iter().copied()).expect("class_count >= 2");
        phone_of_class[peak] = latent_phone_name(l);
    }
    Ok(ClassInventory::new(spec.lang.clone(), phone_of_class, "sil")?)
}

/// Bayes-optimal class-to-class lookup: row `s` is the conditional
/// distribution of the target model's argmax class given source argmax `s`.
#[derive(Debug, Clone)]
pub struct BayesOracle {
    pub source_lang: String,
    pub target_lang: String,
    /// source_dim x target_dim; every row a distribution.
    pub table: Array2<f64>,
}

impl BayesOracle {
    pub fn source_dim(&self) -> usize {
        self.table.nrows()
    }

    pub fn target_dim(&self) -> usize {
        self.table.ncols()
    }

    /// Conditional target-class distribution for one source class.
    pub fn lookup(&self, source_class: usize) -> Vec<f64> {
        self.table.row(source_class).to_vec()
    }

    /// Maps a source posteriorgram by replacing every frame with the
    /// conditional distribution of its argmax class.
    pub fn map_posteriorgram(&self, pg: &Posteriorgram) -> Result<Posteriorgram, SynthError> {
        if pg.dim() != self.source_dim() {
            return Err(SynthError::InvalidConfig(format!(
                "posteriorgram has {} classes, oracle expects {}",
                pg.dim(),
                self.source_dim()
            )));
        }
        let mut m = Array2::<f32>::zeros((pg.n_frames(), self.target_dim()));
        for (t, c) in pg.argmax_classes().into_iter().enumerate() {
            for (k, &v) in self.table.row(c).iter().enumerate() {
                m[(t, k)] = v as f32;
            }
        }
        Ok(Posteriorgram {
            utterance_id: pg.utterance_id.clone(),
            lang: self.target_lang.clone(),
            frames: m,
        })
    }
}

/// Default Monte Carlo sample count for [`bayes_map_oracle`].
pub const ORACLE_DEFAULT_SAMPLES: usize = 200_000;

/// Computes the Bayes-optimal source-class to target-class lookup under
/// `cfg`'s generative model. Noise-free pairs are enumerated exactly over
/// the latent phones (whose stationary distribution is uniform); noisy
/// pairs are estimated with `n_samples` Monte Carlo draws. Source classes
/// the model can never produce fall back to a uniform row.
pub fn bayes_map_oracle(
    cfg: &SynthConfig,
    source_lang: &str,
    target_lang: &str,
    n_samples: usize,
) -> Result<BayesOracle, SynthError> {
    cfg.validate()?;
    let src = cfg.language(source_lang)?;
    let tgt = cfg.language(target_lang)?;

    let mut counts = Array2::<f64>::zeros((src.class_count, tgt.class_count));
    if src.noise_sigma == 0.0 && tgt.noise_sigma == 0.0 {
        // The self-loop chain is doubly stochastic, so every latent phone is
        // equally likely at any frame; enumeration over latents is exact.
        for l in 0..cfg.n_latent_phones {
            let s = metrics::argmax(src.templates[l].iter().copied()).expect("non-empty row");
            let t = metrics::argmax(tgt.templates[l].iter().copied()).expect("non-empty row");
            counts[(s, t)] += 1.0;
        }
    } else {
        if n_samples == 0 {
            return Err(SynthError::InvalidConfig(
                "Monte Carlo oracle needs n_samples >= 1".into(),
            ));
        }
        let stream = format!("oracle:{source_lang}:{target_lang}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix_str(cfg.seed, &stream));
        let src_noise = Normal::new(0.0, src.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
        let tgt_noise = Normal::new(0.0, tgt.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
        let mut logits = vec![0.0f64; src.class_count.max(tgt.class_count)];
        for _ in 0..n_samples {
            let l = rng.random_range(0..cfg.n_latent_phones);
            // argmax of the logits equals argmax of their softmax, so the
            // normalization step is skipped entirely.
            let s = {
                let buf = &mut logits[..src.class_count];
                buf.copy_from_slice(&src.templates[l]);
                if src.noise_sigma > 0.0 {
                    for v in buf.iter_mut() {
                        *v += src_noise.sample(&mut rng);
                    }
                }
                metrics::argmax(buf.iter().copied()).expect("non-empty row")
            };
            let t = {
                let buf = &mut logits[..tgt.class_count];
                buf.copy_from_slice(&tgt.templates[l]);
                if tgt.noise_sigma > 0.0 {
                    for v in buf.iter_mut() {
                        *v += tgt_noise.sample(&mut rng);
                    }
                }
                metrics::argmax(buf.iter().copied()).expect("non-empty row")
            };
            counts[(s, t)] += 1.0;
        }
    }

    let mut table = counts;
    let uniform = 1.0 / tgt.class_count as f64;
    for mut row in table.rows_mut() {
        let total: f64 = row.sum();
        if total > 0.0 {
            row.mapv_inplace(|v| v / total);
        } else {
            row.fill(uniform);
        }
    }
    Ok(BayesOracle {
        source_lang: source_lang.to_string(),
        target_lang: target_lang.to_string(),
        table,
    })
}

/// Frame accuracy of the oracle lookup on a corpus: oracle-mapped source
/// posteriorgrams scored against the target model's argmax.
pub fn oracle_accuracy(
    corpus: &SynthCorpus,
    oracle: &BayesOracle,
    source_lang: &str,
    target_lang: &str,
) -> Result<f64, SynthError> {
    let src_set = corpus.pg_set(source_lang)?;
    let tgt_set = corpus.pg_set(target_lang)?;
    let mut cmf = 0usize;
    let mut frames = 0usize;
    for (src, tgt) in src_set.iter().zip(tgt_set) {
        let hyp = oracle.map_posteriorgram(src)?;
        let (c, _) = metrics::frame_accuracy(&Reference::Posteriors(tgt), &hyp)?;
        cmf += c;
        frames += hyp.n_frames();
    }
    Ok(cmf as f64 / frames as f64)
}

// --- Preset configurations -------------------------------------------------
//
// All presets share the same construction: 12 latent phones, logit templates
// with a single peak of height PEAK_LOGIT per latent, and peak classes laid
// out by a fixed stride so different corpus seeds (train/dev/eval splits)
// describe the same generative model.

/// Peak template logit used by all presets; against a zero background and
/// sigma <= 0.5 noise, argmax flips are vanishingly rare.
pub const PEAK_LOGIT: f64 = 4.0;

const PRESET_LATENTS: usize = 12;
const PRESET_SELF_LOOP: f64 = 0.85;
const PRESET_FRAMES: (usize, usize) = (180, 220);

/// One-peak template rows: latent `l` peaks at `peaks[l]`.
fn peak_templates(peaks: &[usize], class_count: usize) -> Vec<Vec<f64>> {
    peaks
        .iter()
        .map(|&p| {
            let mut row = vec![0.0f64; class_count];
            row[p] = PEAK_LOGIT;
            row
        })
        .collect()
}

/// Distinct peak classes via a stride coprime to the class count.
fn strided_peaks(n_latent: usize, class_count: usize, stride: usize) -> Vec<usize> {
    (0..n_latent).map(|l| (l * stride) % class_count).collect()
}

fn language(lang: &str, class_count: usize, peaks: &[usize], noise_sigma: f64) -> LanguageSpec {
    LanguageSpec {
        lang: lang.to_string(),
        class_count,
        templates: peak_templates(peaks, class_count),
        noise_sigma,
    }
}

/// Four languages with distinct class counts and one-to-one latent-to-class
/// layouts; moderate noise. The mapping task is unambiguous, so oracle
/// accuracy is essentially 1 and trained networks should land close to it.
pub fn default_corpus_config(n_utterances: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_latent_phones: PRESET_LATENTS,
        languages: vec![
            language("la", 16, &strided_peaks(PRESET_LATENTS, 16, 5), 0.5),
            language("lb", 20, &strided_peaks(PRESET_LATENTS, 20, 3), 0.5),
            language("lc", 24, &strided_peaks(PRESET_LATENTS, 24, 7), 0.5),
            language("ld", 18, &strided_peaks(PRESET_LATENTS, 18, 5), 0.5),
        ],
        self_loop_prob: PRESET_SELF_LOOP,
        n_utterances,
        frames_range: PRESET_FRAMES,
        seed,
    }
}

/// Merges latent phones pairwise in the source: latents 2g and 2g+1 share
/// one source class, so the source signal cannot distinguish them, while
/// the target keeps them apart. The best possible top-1 mapping accuracy is
/// 0.5; the right answer is almost always in the top 2.
pub fn confusable_corpus_config(n_utterances: usize, seed: u64) -> SynthConfig {
    let source_peaks: Vec<usize> = (0..PRESET_LATENTS).map(|l| (l / 2) * 2).collect();
    SynthConfig {
        n_latent_phones: PRESET_LATENTS,
        languages: vec![
            language("src", 16, &source_peaks, 0.5),
            language("tgt", 20, &strided_peaks(PRESET_LATENTS, 20, 3), 0.5),
        ],
        self_loop_prob: PRESET_SELF_LOOP,
        n_utterances,
        frames_range: PRESET_FRAMES,
        seed,
    }
}

/// Merges `n_merged_pairs` adjacent non-silence latent pairs, starting from
/// (1,2): every merged pair shares the first member's peak class.
fn merged_peaks(class_count: usize, stride: usize, n_merged_pairs: usize) -> Vec<usize> {
    let mut peaks = strided_peaks(PRESET_LATENTS, class_count, stride);
    for g in 0..n_merged_pairs {
        let a = 1 + 2 * g;
        peaks[a + 1] = peaks[a];
    }
    peaks
}

/// A target plus three sources of graded distinguishability: `s1` keeps all
/// latents apart, `s2` merges two pairs, `s3` merges four. More merging
/// means higher mapped entropy and lower mapping accuracy, by construction.
pub fn graded_similarity_config(n_utterances: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_latent_phones: PRESET_LATENTS,
        languages: vec![
            language("tgt", 20, &strided_peaks(PRESET_LATENTS, 20, 3), 0.5),
            language("s1", 16, &merged_peaks(16, 5, 0), 0.5),
            language("s2", 16, &merged_peaks(16, 5, 2), 0.5),
            language("s3", 16, &merged_peaks(16, 5, 4), 0.5),
        ],
        self_loop_prob: PRESET_SELF_LOOP,
        n_utterances,
        frames_range: PRESET_FRAMES,
        seed,
    }
}

/// Like the default layout but with a crisp target and heavily noised
/// sources, so that no single source is reliable and averaging several of
/// them pays off.
pub fn fusion_corpus_config(n_utterances: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        n_latent_phones: PRESET_LATENTS,
        languages: vec![
            language("la", 16, &strided_peaks(PRESET_LATENTS, 16, 5), 0.5),
            language("lb", 20, &strided_peaks(PRESET_LATENTS, 20, 3), 1.25),
            language("lc", 24, &strided_peaks(PRESET_LATENTS, 24, 7), 1.25),
            language("ld", 18, &strided_peaks(PRESET_LATENTS, 18, 5), 1.25),
        ],
        self_loop_prob: PRESET_SELF_LOOP,
        n_utterances,
        frames_range: PRESET_FRAMES,
        seed,
    }
}

/// Looks up a preset by name: `default`, `confusable`, `graded`, `fusion`.
pub fn preset_config(name: &str, n_utterances: usize, seed: u64) -> Option<SynthConfig> {
    match name {
        "default" => Some(default_corpus_config(n_utterances, seed)),
        "confusable" => Some(confusable_corpus_config(n_utterances, seed)),
        "graded" => Some(graded_similarity_config(n_utterances, seed)),
        "fusion" => Some(fusion_corpus_config(n_utterances, seed)),
        _ => None,
    }
}

// --- Corpus directory layout ------------------------------------------------

/// Writes a corpus as a directory: `manifest.txt`, one inventory per
/// language under `inventories/`, posteriorgram files under `<lang>/`, and
/// latent labels under `labels/`.
pub fn write_corpus_dir(corpus: &SynthCorpus, dir: impl AsRef<Path>) -> Result<(), SynthError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let mut manifest = fs::File::create(dir.join("manifest.txt"))?;
    for lang in corpus.posteriorgrams.keys() {
        writeln!(manifest, "lang {lang}")?;
    }
    for id in &corpus.utterance_ids {
        writeln!(manifest, "utt {id}")?;
    }

    let inv_dir = dir.join("inventories");
    fs::create_dir_all(&inv_dir)?;
    for lang in corpus.posteriorgrams.keys() {
        let inv = synth_inventory(&corpus.config, lang)?;
        inv.save(inv_dir.join(format!("{lang}.inv")))?;
    }

    for (lang, pgs) in &corpus.posteriorgrams {
        let lang_dir = dir.join(lang);
        fs::create_dir_all(&lang_dir)?;
        for pg in pgs {
            pgm::save_posteriorgram(pg, lang_dir.join(format!("{}.pgm", pg.utterance_id)))?;
        }
    }

    let label_dir = dir.join("labels");
    fs::create_dir_all(&label_dir)?;
    for ls in &corpus.latent_labels {
        ls.save(label_dir.join(format!("{}.lab", ls.utterance_id)))?;
    }
    Ok(())
}

/// A corpus read back from disk (the generating config is not stored).
#[derive(Debug, Clone)]
pub struct CorpusDir {
    pub languages: Vec<String>,
    pub utterance_ids: Vec<String>,
    pub posteriorgrams: BTreeMap<String, Vec<Posteriorgram>>,
    pub latent_labels: Vec<LabelSequence>,
    pub inventories: BTreeMap<String, ClassInventory>,
}

impl CorpusDir {
    pub fn pg_set(&self, lang: &str) -> Result<&[Posteriorgram], SynthError> {
        self.posteriorgrams
            .get(lang)
            .map(Vec::as_slice)
            .ok_or_else(|| SynthError::MissingLanguage(lang.to_string()))
    }
}

/// Reads a directory written by [`write_corpus_dir`].
pub fn read_corpus_dir(dir: impl AsRef<Path>) -> Result<CorpusDir, SynthError> {
    let dir = dir.as_ref();
    let manifest = fs::read_to_string(dir.join("manifest.txt"))
        .map_err(|e| SynthError::BadCorpusDir(format!("manifest.txt: {e}")))?;
    let mut languages = Vec::new();
    let mut utterance_ids = Vec::new();
    for line in manifest.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t.split_once(' ') {
            Some(("lang", tag)) => languages.push(tag.to_string()),
            Some(("utt", id)) => utterance_ids.push(id.to_string()),
            _ => return Err(SynthError::BadCorpusDir(format!("bad manifest line {t:?}"))),
        }
    }
    if languages.is_empty() || utterance_ids.is_empty() {
        return Err(SynthError::BadCorpusDir(
            "manifest lists no languages or no utterances".into(),
        ));
    }

    let mut posteriorgrams = BTreeMap::new();
    let mut inventories = BTreeMap::new();
    for lang in &languages {
        let mut pgs = Vec::with_capacity(utterance_ids.len());
        for id in &utterance_ids {
            let path = dir.join(lang).join(format!("{id}.pgm"));
            pgs.push(pgm::load_posteriorgram(&path)?);
        }
        posteriorgrams.insert(lang.clone(), pgs);
        let inv = ClassInventory::load(dir.join("inventories").join(format!("{lang}.inv")))?;
        inventories.insert(lang.clone(), inv);
    }

    let mut latent_labels = Vec::with_capacity(utterance_ids.len());
    for id in &utterance_ids {
        latent_labels.push(LabelSequence::load(
            id.clone(),
            dir.join("labels").join(format!("{id}.lab")),
        )?);
    }

    Ok(CorpusDir {
        languages,
        utterance_ids,
        posteriorgrams,
        latent_labels,
        inventories,
    })
}
