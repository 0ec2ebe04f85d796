//! Evaluation metrics: frame accuracy, top-n accuracy, entropy, a greedy
//! frame decoder, and phoneme error rate via edit distance.
//!
//! Conventions fixed here and used everywhere: argmax ties break to the
//! lowest index; entropy is measured in nats with probabilities floored at
//! [`ENTROPY_EPSILON`]; PER normalizes by reference length (and may exceed
//! 1); multi-utterance aggregation walks utterances in sorted-id order so
//! results never depend on input order.

use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

use crate::inventory::ClassInventory;
use crate::posterior::{LabelSequence, Posteriorgram};

/// Probability floor inside entropy logs.
pub const ENTROPY_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("utterance {utt}: reference and hypothesis are not frame-aligned")]
    AlignMismatch { utt: String },
    #[error("dimension mismatch: reference has {reference} classes, hypothesis {hypothesis}")]
    DimensionMismatch { reference: usize, hypothesis: usize },
    #[error("reference label {label} at frame {index} is outside the {size}-class space")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        size: usize,
    },
    #[error("top-n count {n} is outside [1, {d}]")]
    NOutOfRange { n: usize, d: usize },
    #[error("reference phone sequence is empty")]
    EmptyReference,
    #[error("reference/hypothesis utterance sets differ: {0}")]
    SetMismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Index of the largest value; ties break to the lowest index.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<usize> = None;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none() || v > best_v {
            best = Some(i);
            best_v = v;
        }
    }
    best
}

/// The ground truth a hypothesis is scored against: either the target
/// model's posteriorgram (argmax taken per frame) or hard per-frame labels.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    Posteriors(&'a Posteriorgram),
    Labels(&'a LabelSequence),
}

impl Reference<'_> {
    pub fn utterance_id(&self) -> &str {
        match self {
            Reference::Posteriors(pg) => &pg.utterance_id,
            Reference::Labels(ls) => &ls.utterance_id,
        }
    }

    pub fn n_frames(&self) -> usize {
        match self {
            Reference::Posteriors(pg) => pg.n_frames(),
            Reference::Labels(ls) => ls.labels.len(),
        }
    }

    /// Per-frame reference classes, checked against a `d`-class space.
    fn classes(&self, d: usize) -> Result<Vec<usize>, MetricsError> {
        match self {
            Reference::Posteriors(pg) => {
                if pg.dim() != d {
                    return Err(MetricsError::DimensionMismatch {
                        reference: pg.dim(),
                        hypothesis: d,
                    });
                }
                Ok(pg.argmax_classes())
            }
            Reference::Labels(ls) => {
                for (index, &label) in ls.labels.iter().enumerate() {
                    if label >= d {
                        return Err(MetricsError::LabelOutOfRange {
                            index,
                            label,
                            size: d,
                        });
                    }
                }
                Ok(ls.labels.clone())
            }
        }
    }
}

fn check_aligned(reference: &Reference, hypothesis: &Posteriorgram) -> Result<(), MetricsError> {
    if reference.n_frames() != hypothesis.n_frames()
        || reference.utterance_id() != hypothesis.utterance_id
    {
        return Err(MetricsError::AlignMismatch {
            utt: hypothesis.utterance_id.clone(),
        });
    }
    Ok(())
}

/// Count and fraction of frames whose hypothesis argmax matches the
/// reference class.
pub fn frame_accuracy(
    reference: &Reference,
    hypothesis: &Posteriorgram,
) -> Result<(usize, f64), MetricsError> {
    check_aligned(reference, hypothesis)?;
    let ref_classes = reference.classes(hypothesis.dim())?;
    let hyp_classes = hypothesis.argmax_classes();
    let cmf = ref_classes
        .iter()
        .zip(hyp_classes.iter())
        .filter(|(r, h)| r == h)
        .count();
    Ok((cmf, cmf as f64 / hypothesis.n_frames() as f64))
}

/// True iff class `r` is among the `n` largest entries of `row` (ties at the
/// n-th value break to the lowest index).
fn topn_hit(row: &[f64], r: usize, n: usize) -> bool {
    let pr = row[r];
    let mut beating = 0usize;
    for (k, &v) in row.iter().enumerate() {
        if v > pr || (v == pr && k < r) {
            beating += 1;
        }
    }
    beating < n
}

fn topn_hit_counts(
    ref_classes: &[usize],
    hypothesis: &Posteriorgram,
    ns: &[usize],
) -> Result<BTreeMap<usize, usize>, MetricsError> {
    let d = hypothesis.dim();
    for &n in ns {
        if n < 1 || n > d {
            return Err(MetricsError::NOutOfRange { n, d });
        }
    }
    let mut hits: BTreeMap<usize, usize> = ns.iter().map(|&n| (n, 0)).collect();
    let mut row = vec![0.0f64; d];
    for (t, &r) in ref_classes.iter().enumerate() {
        for (c, &v) in hypothesis.frames.row(t).iter().enumerate() {
            row[c] = f64::from(v);
        }
        for (&n, hit_count) in hits.iter_mut() {
            if topn_hit(&row, r, n) {
                *hit_count += 1;
            }
        }
    }
    Ok(hits)
}

/// For each `n`, the fraction of frames whose reference class lies among the
/// `n` most probable hypothesis classes.
pub fn topn_accuracy(
    reference: &Reference,
    hypothesis: &Posteriorgram,
    ns: &[usize],
) -> Result<BTreeMap<usize, f64>, MetricsError> {
    check_aligned(reference, hypothesis)?;
    let ref_classes = reference.classes(hypothesis.dim())?;
    let t = hypothesis.n_frames() as f64;
    Ok(topn_hit_counts(&ref_classes, hypothesis, ns)?
        .into_iter()
        .map(|(n, hits)| (n, hits as f64 / t))
        .collect())
}

/// Shannon entropy of one distribution, in nats.
pub fn frame_entropy(row: &[f64]) -> f64 {
    // The trailing + 0.0 turns a -0.0 sum (delta distributions) into +0.0.
    -row.iter()
        .map(|&p| p * p.max(ENTROPY_EPSILON).ln())
        .sum::<f64>()
        + 0.0
}

/// Mean frame entropy of one posteriorgram, in nats.
pub fn avg_entropy(pg: &Posteriorgram) -> f64 {
    let total: f64 = pg
        .frames
        .rows()
        .into_iter()
        .map(|r| {
            let row: Vec<f64> = r.iter().map(|&v| f64::from(v)).collect();
            frame_entropy(&row)
        })
        .sum();
    total / pg.n_frames() as f64
}

/// Frame-weighted mean entropy over a set of posteriorgrams, accumulated in
/// sorted-utterance-id order.
pub fn avg_entropy_set(pgs: &[&Posteriorgram]) -> f64 {
    let mut order: Vec<&&Posteriorgram> = pgs.iter().collect();
    order.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let mut total = 0.0f64;
    let mut frames = 0usize;
    for pg in order {
        total += avg_entropy(pg) * pg.n_frames() as f64;
        frames += pg.n_frames();
    }
    total / frames as f64
}

/// Maps per-frame classes to phone labels, collapsing runs and dropping
/// silence: a phone is emitted only when it differs from the last emitted
/// phone, so the output never holds two consecutive equal phones even when
/// silence separated two runs of the same phone.
pub fn decode_classes(classes: &[usize], inv: &ClassInventory) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for &c in classes {
        let phone = &inv.phone_of_class[c];
        if phone == &inv.silence_phone {
            continue;
        }
        if out.last().map(|p| p == phone).unwrap_or(false) {
            continue;
        }
        out.push(phone.clone());
    }
    out
}

/// Frame-wise argmax decoding of a posteriorgram into a phone sequence.
pub fn greedy_decode(pg: &Posteriorgram, inv: &ClassInventory) -> Vec<String> {
    decode_classes(&pg.argmax_classes(), inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn distance(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

/// Levenshtein alignment with unit costs. Among equal-cost alignments the
/// backtrace prefers substitution over deletion over insertion, so the
/// reported counts are deterministic. `per` may exceed 1.
pub fn phoneme_error_rate<T: PartialEq>(
    reference: &[T],
    hypothesis: &[T],
) -> Result<(f64, EditCounts), MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let counts = edit_counts(reference, hypothesis);
    let per = counts.distance() as f64 / reference.len() as f64;
    Ok((per, counts))
}

fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let (r, h) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; h + 1]; r + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=h {
        d[0][j] = j;
    }
    for i in 1..=r {
        for j in 1..=h {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let del = d[i - 1][j] + 1;
            let ins = d[i][j - 1] + 1;
            d[i][j] = sub.min(del).min(ins);
        }
    }

    let mut counts = EditCounts::default();
    let (mut i, mut j) = (r, h);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let step = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if d[i][j] == d[i - 1][j - 1] + step {
                counts.substitutions += step;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// All metrics for one (reference, hypothesis) pair in one bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_frames: usize,
    /// Correctly mapped frames: hypothesis argmax equals reference class.
    pub cmf: usize,
    pub top_n_accuracy: BTreeMap<usize, f64>,
    /// Mean hypothesis entropy, nats.
    pub avg_entropy: f64,
    pub per: f64,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.cmf as f64 / self.n_frames as f64
    }

    /// Flat key-value text block, one metric per line, 6-decimal reals.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "frames={}", self.n_frames)?;
        writeln!(w, "cmf={}", self.cmf)?;
        for (n, acc) in &self.top_n_accuracy {
            writeln!(w, "top{n}={acc:.6}")?;
        }
        writeln!(w, "avg_entropy_nats={:.6}", self.avg_entropy)?;
        writeln!(w, "per={:.6}", self.per)?;
        writeln!(w, "sub={}", self.substitutions)?;
        writeln!(w, "ins={}", self.insertions)?;
        writeln!(w, "del={}", self.deletions)?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("report text is ASCII")
    }
}

/// Computes every metric for one utterance. The phone sequences for PER come
/// from greedy decoding of both sides over `inv`.
pub fn build_report(
    reference: &Reference,
    hypothesis: &Posteriorgram,
    inv: &ClassInventory,
    ns: &[usize],
) -> Result<EvalReport, MetricsError> {
    check_aligned(reference, hypothesis)?;
    if hypothesis.dim() != inv.size() {
        return Err(MetricsError::DimensionMismatch {
            reference: inv.size(),
            hypothesis: hypothesis.dim(),
        });
    }
    let ref_classes = reference.classes(hypothesis.dim())?;
    let (cmf, _) = frame_accuracy(reference, hypothesis)?;
    let hits = topn_hit_counts(&ref_classes, hypothesis, ns)?;
    let t = hypothesis.n_frames() as f64;

    let ref_seq = decode_classes(&ref_classes, inv);
    let hyp_seq = greedy_decode(hypothesis, inv);
    let (per, counts) = phoneme_error_rate(&ref_seq, &hyp_seq)?;

    Ok(EvalReport {
        n_frames: hypothesis.n_frames(),
        cmf,
        top_n_accuracy: hits.into_iter().map(|(n, c)| (n, c as f64 / t)).collect(),
        avg_entropy: avg_entropy(hypothesis),
        per,
        substitutions: counts.substitutions,
        insertions: counts.insertions,
        deletions: counts.deletions,
    })
}

/// Aggregates every metric over paired reference/hypothesis sets, matching
/// utterances by id and walking them in sorted-id order. Frame metrics are
/// frame-weighted; PER pools edit counts over the whole set. An utterance
/// whose reference decodes to an empty phone sequence contributes its
/// hypothesis phones as pure insertions; the set as a whole must still have
/// a non-empty pooled reference.
pub fn build_report_set(
    references: &[Reference],
    hypotheses: &[&Posteriorgram],
    inv: &ClassInventory,
    ns: &[usize],
) -> Result<EvalReport, MetricsError> {
    if references.len() != hypotheses.len() {
        return Err(MetricsError::SetMismatch(format!(
            "{} references vs {} hypotheses",
            references.len(),
            hypotheses.len()
        )));
    }
    let mut hyp_by_id: BTreeMap<&str, &Posteriorgram> = BTreeMap::new();
    for &pg in hypotheses {
        if hyp_by_id.insert(&pg.utterance_id, pg).is_some() {
            return Err(MetricsError::SetMismatch(format!(
                "duplicate hypothesis utterance {:?}",
                pg.utterance_id
            )));
        }
    }
    let mut refs_by_id: BTreeMap<&str, &Reference> = BTreeMap::new();
    for r in references {
        if refs_by_id.insert(r.utterance_id(), r).is_some() {
            return Err(MetricsError::SetMismatch(format!(
                "duplicate reference utterance {:?}",
                r.utterance_id()
            )));
        }
    }

    let mut n_frames = 0usize;
    let mut cmf = 0usize;
    let mut hits: BTreeMap<usize, usize> = ns.iter().map(|&n| (n, 0)).collect();
    let mut entropy_total = 0.0f64;
    let mut counts = EditCounts::default();
    let mut ref_len = 0usize;

    for (id, reference) in &refs_by_id {
        let hypothesis = *hyp_by_id.get(id).ok_or_else(|| {
            MetricsError::SetMismatch(format!("reference utterance {id:?} has no hypothesis"))
        })?;
        check_aligned(reference, hypothesis)?;
        if hypothesis.dim() != inv.size() {
            return Err(MetricsError::DimensionMismatch {
                reference: inv.size(),
                hypothesis: hypothesis.dim(),
            });
        }
        let ref_classes = reference.classes(hypothesis.dim())?;
        let (u_cmf, _) = frame_accuracy(reference, hypothesis)?;
        cmf += u_cmf;
        n_frames += hypothesis.n_frames();
        for (n, c) in topn_hit_counts(&ref_classes, hypothesis, ns)? {
            *hits.get_mut(&n).expect("key sets match") += c;
        }
        entropy_total += avg_entropy(hypothesis) * hypothesis.n_frames() as f64;

        let ref_seq = decode_classes(&ref_classes, inv);
        let hyp_seq = greedy_decode(hypothesis, inv);
        if ref_seq.is_empty() {
            counts.insertions += hyp_seq.len();
        } else {
            let u_counts = edit_counts(&ref_seq, &hyp_seq);
            counts.substitutions += u_counts.substitutions;
            counts.insertions += u_counts.insertions;
            counts.deletions += u_counts.deletions;
            ref_len += ref_seq.len();
        }
    }
    if let Some(id) = hyp_by_id
        .keys()
        .find(|id| !refs_by_id.contains_key(*id))
    {
        return Err(MetricsError::SetMismatch(format!(
            "hypothesis utterance {id:?} has no reference"
        )));
    }
    if ref_len == 0 {
        return Err(MetricsError::EmptyReference);
    }

    let t = n_frames as f64;
    Ok(EvalReport {
        n_frames,
        cmf,
        top_n_accuracy: hits.into_iter().map(|(n, c)| (n, c as f64 / t)).collect(),
        avg_entropy: entropy_total / t,
        per: counts.distance() as f64 / ref_len as f64,
        substitutions: counts.substitutions,
        insertions: counts.insertions,
        deletions: counts.deletions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn inv(labels: &[&str]) -> ClassInventory {
        ClassInventory::new(
            "x",
            labels.iter().map(|s| s.to_string()).collect(),
            "sil",
        )
        .unwrap()
    }

    fn pg_from_classes(id: &str, classes: &[usize], d: usize) -> Posteriorgram {
        let mut m = Array2::from_elem((classes.len(), d), 0.0f32);
        for (t, &c) in classes.iter().enumerate() {
            m[(t, c)] = 1.0;
        }
        Posteriorgram::new(id, "x", m).unwrap()
    }

    #[test]
    fn identical_posteriorgrams_score_one() {
        let pg = pg_from_classes("u", &[0, 1, 2, 1], 3);
        let (cmf, acc) = frame_accuracy(&Reference::Posteriors(&pg), &pg).unwrap();
        assert_eq!(cmf, 4);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn label_reference_counts_matches() {
        let labels = LabelSequence {
            utterance_id: "u".into(),
            labels: vec![0, 1, 2],
        };
        let hyp = pg_from_classes("u", &[0, 1, 0], 3);
        let (cmf, acc) = frame_accuracy(&Reference::Labels(&labels), &hyp).unwrap();
        assert_eq!(cmf, 2);
        assert_abs_diff_eq!(acc, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn random_hypothesis_accuracy_near_chance() {
        use rand::Rng;
        use rand::SeedableRng;
        let d = 8usize;
        let t = 10_000usize;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(404);
        let labels = LabelSequence {
            utterance_id: "u".into(),
            labels: (0..t).map(|_| rng.random_range(0..d)).collect(),
        };
        let classes: Vec<usize> = (0..t).map(|_| rng.random_range(0..d)).collect();
        let hyp = pg_from_classes("u", &classes, d);
        let (_, acc) = frame_accuracy(&Reference::Labels(&labels), &hyp).unwrap();
        let p = 1.0 / d as f64;
        let sigma = (p * (1.0 - p) / t as f64).sqrt();
        assert!(
            (acc - p).abs() < 5.0 * sigma,
            "accuracy {acc} too far from chance {p}"
        );
    }

    #[test]
    fn misalignment_is_an_error() {
        let a = pg_from_classes("u", &[0, 1], 3);
        let b = pg_from_classes("u", &[0, 1, 2], 3);
        assert!(matches!(
            frame_accuracy(&Reference::Posteriors(&a), &b),
            Err(MetricsError::AlignMismatch { .. })
        ));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax([0.2, 0.4, 0.4].into_iter()), Some(1));
        assert_eq!(argmax([0.5, 0.5].into_iter()), Some(0));
        assert_eq!(argmax(std::iter::empty()), None);
    }

    #[test]
    fn topn_hand_case() {
        let labels = LabelSequence {
            utterance_id: "u".into(),
            labels: vec![2],
        };
        let hyp = Posteriorgram::new("u", "x", array![[0.4f32, 0.35, 0.25]]).unwrap();
        let accs = topn_accuracy(&Reference::Labels(&labels), &hyp, &[1, 2, 3]).unwrap();
        assert_eq!(accs[&1], 0.0);
        assert_eq!(accs[&2], 0.0);
        assert_eq!(accs[&3], 1.0);
    }

    #[test]
    fn topn_rejects_out_of_range_n() {
        let pg = pg_from_classes("u", &[0], 3);
        assert!(matches!(
            topn_accuracy(&Reference::Posteriors(&pg), &pg, &[4]),
            Err(MetricsError::NOutOfRange { n: 4, d: 3 })
        ));
        assert!(matches!(
            topn_accuracy(&Reference::Posteriors(&pg), &pg, &[0]),
            Err(MetricsError::NOutOfRange { n: 0, d: 3 })
        ));
    }

    #[test]
    fn topn_ties_break_low() {
        // Reference class 1 ties class 0 at the top; index 0 wins the first
        // slot, so class 1 needs n >= 2.
        let labels = LabelSequence {
            utterance_id: "u".into(),
            labels: vec![1],
        };
        let hyp = Posteriorgram::new("u", "x", array![[0.4f32, 0.4, 0.2]]).unwrap();
        let accs = topn_accuracy(&Reference::Labels(&labels), &hyp, &[1, 2]).unwrap();
        assert_eq!(accs[&1], 0.0);
        assert_eq!(accs[&2], 1.0);
    }

    #[test]
    fn entropy_hand_values() {
        assert_eq!(frame_entropy(&[1.0, 0.0, 0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(
            frame_entropy(&[0.25, 0.25, 0.25, 0.25]),
            1.3862943611198906,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            frame_entropy(&[0.5, 0.25, 0.25]),
            1.0397207708399179,
            epsilon = 1e-12
        );
    }

    #[test]
    fn avg_entropy_set_is_frame_weighted() {
        // 1 uniform frame over 4 classes (ln 4) + 3 delta frames (0):
        // the mean must be ln4 / 4 regardless of utterance order.
        let u1 = Posteriorgram::new("b", "x", Array2::from_elem((1, 4), 0.25f32)).unwrap();
        let u2 = pg_from_classes("a", &[0, 1, 2], 4);
        let expected = 1.3862943611198906 / 4.0;
        assert_abs_diff_eq!(avg_entropy_set(&[&u1, &u2]), expected, epsilon = 1e-7);
        assert_abs_diff_eq!(avg_entropy_set(&[&u2, &u1]), expected, epsilon = 1e-7);
    }

    #[test]
    fn decode_collapses_and_strips_silence() {
        let iv = inv(&["sil", "a", "b"]);
        // phones: a a a b b sil a
        let pg = pg_from_classes("u", &[1, 1, 1, 2, 2, 0, 1], 3);
        assert_eq!(greedy_decode(&pg, &iv), vec!["a", "b", "a"]);

        let silence = pg_from_classes("u", &[0, 0, 0], 3);
        assert!(greedy_decode(&silence, &iv).is_empty());

        let single = pg_from_classes("u", &[2], 3);
        assert_eq!(greedy_decode(&single, &iv), vec!["b"]);
    }

    #[test]
    fn decode_never_emits_consecutive_duplicates_across_silence() {
        let iv = inv(&["sil", "a", "b"]);
        // a sil a: the silence gap does not resurrect a duplicate 'a'.
        let pg = pg_from_classes("u", &[1, 0, 1], 3);
        assert_eq!(greedy_decode(&pg, &iv), vec!["a"]);
    }

    #[test]
    fn per_hand_cases() {
        let (per, c) = phoneme_error_rate(&["a", "b", "c"], &["a", "b", "c"]).unwrap();
        assert_eq!(per, 0.0);
        assert_eq!(c, EditCounts::default());

        let (per, c) = phoneme_error_rate(&["a", "b", "c"], &["a", "c"]).unwrap();
        assert_abs_diff_eq!(per, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(c.distance(), 1);
        assert_eq!(c.deletions, 1);

        // One substitution plus one insertion; per exceeds 1.
        let (per, c) = phoneme_error_rate(&["a"], &["b", "b"]).unwrap();
        assert_eq!(per, 2.0);
        assert_eq!(c.substitutions, 1);
        assert_eq!(c.insertions, 1);
        assert_eq!(c.deletions, 0);
    }

    #[test]
    fn per_rejects_empty_reference() {
        assert!(matches!(
            phoneme_error_rate::<&str>(&[], &["a"]),
            Err(MetricsError::EmptyReference)
        ));
    }

    /// Uniform-cost search over edit prefixes: an algorithm independent of
    /// the DP table, used as the distance oracle.
    fn edit_distance_search(a: &[u8], b: &[u8]) -> usize {
        use std::collections::HashSet;
        let slide = |mut i: usize, mut j: usize| {
            while i < a.len() && j < b.len() && a[i] == b[j] {
                i += 1;
                j += 1;
            }
            (i, j)
        };
        let mut frontier: HashSet<(usize, usize)> = HashSet::new();
        frontier.insert(slide(0, 0));
        let mut cost = 0usize;
        loop {
            if frontier.contains(&(a.len(), b.len())) {
                return cost;
            }
            let mut next = HashSet::new();
            for &(i, j) in &frontier {
                if i < a.len() && j < b.len() {
                    next.insert(slide(i + 1, j + 1));
                }
                if i < a.len() {
                    next.insert(slide(i + 1, j));
                }
                if j < b.len() {
                    next.insert(slide(i, j + 1));
                }
            }
            frontier = next;
            cost += 1;
        }
    }

    #[test]
    fn dp_matches_search_oracle_on_small_alphabet() {
        // Every pair over {0,1} with lengths <= 4.
        let mut seqs: Vec<Vec<u8>> = vec![vec![]];
        for len in 1..=4usize {
            for code in 0..(1usize << len) {
                seqs.push((0..len).map(|k| ((code >> k) & 1) as u8).collect());
            }
        }
        for a in &seqs {
            for b in &seqs {
                let dp = edit_counts(a, b).distance();
                assert_eq!(
                    dp,
                    edit_distance_search(a, b),
                    "distance mismatch on {a:?} vs {b:?}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn edit_distance_is_symmetric(
            a in proptest::collection::vec(0u8..3, 0..8),
            b in proptest::collection::vec(0u8..3, 0..8),
        ) {
            prop_assert_eq!(edit_counts(&a, &b).distance(), edit_counts(&b, &a).distance());
        }

        #[test]
        fn counts_are_consistent(
            a in proptest::collection::vec(0u8..3, 1..8),
            b in proptest::collection::vec(0u8..3, 0..8),
        ) {
            let c = edit_counts(&a, &b);
            // Insertions and deletions must explain the length difference.
            prop_assert_eq!(
                a.len() as i64 - b.len() as i64,
                c.deletions as i64 - c.insertions as i64
            );
        }

        #[test]
        fn topn_is_monotone_in_n(
            rows in proptest::collection::vec(
                proptest::collection::vec(0.01f64..1.0, 5),
                1..20
            ),
            labels in proptest::collection::vec(0usize..5, 20)
        ) {
            let t = rows.len();
            let mut m = Array2::zeros((t, 5));
            for (i, row) in rows.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                for (j, &v) in row.iter().enumerate() {
                    m[(i, j)] = (v / sum) as f32;
                }
            }
            let hyp = Posteriorgram::new("u", "x", m).unwrap();
            let ls = LabelSequence { utterance_id: "u".into(), labels: labels[..t].to_vec() };
            let accs = topn_accuracy(&Reference::Labels(&ls), &hyp, &[1, 2, 3, 4, 5]).unwrap();
            let (_, top1) = frame_accuracy(&Reference::Labels(&ls), &hyp).unwrap();
            prop_assert!((accs[&1] - top1).abs() < 1e-12);
            for n in 1..5usize {
                prop_assert!(accs[&n] <= accs[&(n + 1)] + 1e-12);
            }
            prop_assert!((accs[&5] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn report_on_identity_is_perfect() {
        let iv = inv(&["sil", "a", "b", "c"]);
        let pg = pg_from_classes("u", &[1, 1, 2, 0, 3], 4);
        let report =
            build_report(&Reference::Posteriors(&pg), &pg, &iv, &[1, 2, 4]).unwrap();
        assert_eq!(report.n_frames, 5);
        assert_eq!(report.cmf, 5);
        assert_eq!(report.accuracy(), 1.0);
        assert_eq!(report.per, 0.0);
        assert!(report.top_n_accuracy.values().all(|&a| a == 1.0));
    }

    #[test]
    fn report_text_format_is_stable() {
        let iv = inv(&["sil", "a", "b", "c"]);
        let reference = pg_from_classes("u", &[1, 2, 3], 4);
        let hyp = pg_from_classes("u", &[1, 2, 1], 4);
        let report =
            build_report(&Reference::Posteriors(&reference), &hyp, &iv, &[1, 2]).unwrap();
        let text = report.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "frames=3");
        assert_eq!(lines[1], "cmf=2");
        assert!(lines[2].starts_with("top1=0.666667"));
        assert!(lines[3].starts_with("top2="));
        assert!(lines[4].starts_with("avg_entropy_nats=0.000000"));
        // ref phones [a,b,c], hyp phones [a,b,a]: one substitution.
        assert!(lines[5].starts_with("per=0.333333"));
        assert_eq!(lines[6], "sub=1");
        assert_eq!(lines[7], "ins=0");
        assert_eq!(lines[8], "del=0");
    }

    #[test]
    fn set_report_pools_counts() {
        let iv = inv(&["sil", "a", "b"]);
        let r1 = pg_from_classes("u1", &[1, 2], 3);
        let h1 = pg_from_classes("u1", &[1, 1], 3);
        let r2 = pg_from_classes("u2", &[2, 2, 1], 3);
        let h2 = pg_from_classes("u2", &[2, 2, 1], 3);
        let report = build_report_set(
            &[Reference::Posteriors(&r1), Reference::Posteriors(&r2)],
            &[&h1, &h2],
            &iv,
            &[1],
        )
        .unwrap();
        assert_eq!(report.n_frames, 5);
        assert_eq!(report.cmf, 4);
        // u1: ref [a,b] vs hyp [a] -> one deletion; u2 exact.
        // Pooled reference length 4.
        assert_eq!(report.deletions, 1);
        assert_abs_diff_eq!(report.per, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn set_report_all_silence_reference_contributes_insertions() {
        let iv = inv(&["sil", "a", "b"]);
        let r1 = pg_from_classes("u1", &[0, 0], 3);
        let h1 = pg_from_classes("u1", &[1, 0], 3);
        let r2 = pg_from_classes("u2", &[1, 2], 3);
        let h2 = pg_from_classes("u2", &[1, 2], 3);
        let report = build_report_set(
            &[Reference::Posteriors(&r1), Reference::Posteriors(&r2)],
            &[&h1, &h2],
            &iv,
            &[1],
        )
        .unwrap();
        // u1 reference decodes empty: hyp [a] counts as one insertion.
        assert_eq!(report.insertions, 1);
        assert_abs_diff_eq!(report.per, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn set_report_requires_matching_ids() {
        let iv = inv(&["sil", "a"]);
        let r = pg_from_classes("u1", &[1], 2);
        let h = pg_from_classes("u2", &[1], 2);
        assert!(matches!(
            build_report_set(&[Reference::Posteriors(&r)], &[&h], &iv, &[1]),
            Err(MetricsError::SetMismatch(_))
        ));
    }
}
