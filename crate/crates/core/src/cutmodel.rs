//! Per-turn cut classifier: hand features, a linear map and a sigmoid,
//! trained with full-batch gradient descent on binary cross-entropy.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dialogue;
use crate::error::{Error, Result};
use crate::intent::IntentLabel;
use crate::metrics::rouge_n;
use crate::segment::Segmentation;

pub const FEATURE_NAMES: [&str; 12] = [
    "position",
    "length",
    "speaker_change_next",
    "question",
    "intent_why",
    "intent_what",
    "intent_where",
    "intent_when",
    "intent_confirm",
    "intent_abstain",
    "overlap_next",
    "overlap_prev",
];

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the loss.
pub const BCE_EPS: f64 = 1e-12;

/// Gradient components below this magnitude count as zero in [`grad_check`].
pub const GRAD_ABS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Features of turn `turn_index` (1-based), in [`FEATURE_NAMES`] order.
///
/// # Panics
///
/// If `turn_index` is outside `1..=N` or `intents` is shorter than the dialogue.
pub fn featurize(dialogue: &Dialogue, turn_index: usize, intents: &[IntentLabel]) -> FeatureVector {
    let n = dialogue.len();
    assert!((1..=n).contains(&turn_index), "turn {turn_index} outside 1..={n}");
    let turn = &dialogue.turns[turn_index - 1];
    let next = dialogue.turn(turn_index + 1);
    let prev = turn_index.checked_sub(1).and_then(|i| dialogue.turn(i));

    let mut values = Vec::with_capacity(FEATURE_NAMES.len());
    values.push(turn_index as f64 / n as f64);
    values.push((turn.tokens.len() as f64 / 50.0).min(1.0));
    values.push(indicator(next.is_some_and(|t| t.speaker != turn.speaker)));
    values.push(indicator(turn.text.contains('?')));
    let intent = intents[turn_index - 1];
    values.extend(IntentLabel::ALL.iter().map(|&l| indicator(l == intent)));
    values.push(next.map_or(0.0, |t| rouge_n(&turn.tokens, &t.tokens, 1).f1));
    values.push(prev.map_or(0.0, |t| rouge_n(&turn.tokens, &t.tokens, 1).f1));
    FeatureVector { values }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn featurize_dialogue(dialogue: &Dialogue, intents: &[IntentLabel]) -> Result<Vec<FeatureVector>> {
    if intents.len() != dialogue.len() {
        return Err(Error::LengthMismatch {
            expected: dialogue.len(),
            found: intents.len(),
        });
    }
    Ok((1..=dialogue.len()).map(|i| featurize(dialogue, i, intents)).collect())
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutClassifier {
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl CutClassifier {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let model = CutClassifier {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights,
            bias,
        };
        model.validate()?;
        Ok(model)
    }

    /// All-zero parameters; every probability is 0.5.
    pub fn zeros() -> Self {
        CutClassifier::new(vec![0.0; FEATURE_NAMES.len()], 0.0).unwrap()
    }

    fn validate(&self) -> Result<()> {
        if self.weights.len() != self.feature_names.len() {
            return Err(Error::Dimension {
                model: self.weights.len(),
                features: self.feature_names.len(),
            });
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invalid("model parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, features: &FeatureVector) -> Result<f64> {
        if features.dim() != self.dim() {
            return Err(Error::Dimension {
                model: self.dim(),
                features: features.dim(),
            });
        }
        Ok(dot(&self.weights, &features.values) + self.bias)
    }

    /// Probabilities, kept inside `[BCE_EPS, 1 - BCE_EPS]` so saturated
    /// logits never round to exactly 0 or 1.
    pub fn predict(&self, features: &[FeatureVector]) -> Result<Vec<f64>> {
        features
            .iter()
            .map(|f| self.logit(f).map(|z| sigmoid(z).clamp(BCE_EPS, 1.0 - BCE_EPS)))
            .collect()
    }

    /// One probability per turn.
    pub fn predict_probs(&self, dialogue: &Dialogue, intents: &[IntentLabel]) -> Result<Vec<f64>> {
        self.predict(&featurize_dialogue(dialogue, intents)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: CutClassifier = serde_json::from_str(&text)?;
        model.validate()?;
        if model.feature_names.iter().map(String::as_str).ne(FEATURE_NAMES) {
            return Err(Error::Invalid(format!(
                "{}: feature names {:?} do not match this build",
                path.display(),
                model.feature_names
            )));
        }
        Ok(model)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean binary cross-entropy with probabilities clamped to `[ε, 1 - ε]`.
pub fn bce_loss(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: probs.len(),
            found: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / probs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            epochs: 1000,
            seed: 0,
            l2: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::TrainConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::TrainConfig("epochs must be at least 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::TrainConfig(format!("l2 must be non-negative, got {}", self.l2)));
        }
        Ok(())
    }
}

/// Regularized objective: mean BCE plus `l2 / 2 * |w|^2` (bias unpenalized).
pub fn objective(model: &CutClassifier, features: &[FeatureVector], labels: &[bool], l2: f64) -> Result<f64> {
    let probs = model.predict(features)?;
    let reg = 0.5 * l2 * dot(&model.weights, &model.weights);
    Ok(bce_loss(&probs, labels)? + reg)
}

/// Analytic gradient of [`objective`] as `(d/dw, d/db)`.
pub fn gradient(
    model: &CutClassifier,
    features: &[FeatureVector],
    labels: &[bool],
    l2: f64,
) -> Result<(Vec<f64>, f64)> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = features.len() as f64;
    let mut gw = vec![0.0; model.dim()];
    let mut gb = 0.0;
    for (f, &y) in features.iter().zip(labels) {
        let residual = sigmoid(model.logit(f)?) - indicator(y);
        for (g, x) in gw.iter_mut().zip(&f.values) {
            *g += residual * x;
        }
        gb += residual;
    }
    for (g, w) in gw.iter_mut().zip(&model.weights) {
        *g = *g / n + l2 * w;
    }
    Ok((gw, gb / n))
}

/// Loss trajectory of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Objective after each epoch.
    pub losses: Vec<f64>,
    pub examples: usize,
}

/// Full-batch gradient descent from a small seeded initialization.
///
/// Examples are put in a canonical order first, so permuting the input does
/// not change the result. The returned parameters are the best seen, which
/// makes `final_loss <= initial_loss`.
pub fn fit(features: &[FeatureVector], labels: &[bool], cfg: &TrainConfig) -> Result<(CutClassifier, TrainReport)> {
    cfg.validate()?;
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = FEATURE_NAMES.len();
    if let Some(f) = features.iter().find(|f| f.dim() != dim) {
        return Err(Error::Dimension {
            model: dim,
            features: f.dim(),
        });
    }

    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| {
        features[a]
            .values
            .iter()
            .zip(&features[b].values)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(labels[a].cmp(&labels[b]))
    });
    let features: Vec<FeatureVector> = order.iter().map(|&i| features[i].clone()).collect();
    let labels: Vec<bool> = order.iter().map(|&i| labels[i]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = (0..dim).map(|_| rng.random_range(-0.01..0.01)).collect();
    let mut model = CutClassifier::new(weights, 0.0)?;

    let initial_loss = objective(&model, &features, &labels, cfg.l2)?;
    let mut best = (model.clone(), initial_loss);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (gw, gb) = gradient(&model, &features, &labels, cfg.l2)?;
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= cfg.lr * g;
        }
        model.bias -= cfg.lr * gb;
        let loss = objective(&model, &features, &labels, cfg.l2)?;
        if !loss.is_finite() {
            return Err(Error::TrainConfig(format!("training diverged at lr {}", cfg.lr)));
        }
        losses.push(loss);
        if loss < best.1 {
            best = (model.clone(), loss);
        }
    }
    let (model, final_loss) = best;
    Ok((
        model,
        TrainReport {
            initial_loss,
            final_loss,
            losses,
            examples: features.len(),
        },
    ))
}

/// One training dialogue with its pseudo-label cuts.
#[derive(Debug, Clone)]
pub struct CutSample {
    pub dialogue: Dialogue,
    pub intents: Vec<IntentLabel>,
    pub cuts: Segmentation,
}

/// Feature rows and labels for positions `1..N-1`; position `N` can never be
/// a cut and is left out.
pub fn training_examples(samples: &[CutSample]) -> Result<(Vec<FeatureVector>, Vec<bool>)> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for sample in samples {
        let n = sample.dialogue.len();
        if sample.cuts.n_turns() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: sample.cuts.n_turns(),
            });
        }
        let mut rows = featurize_dialogue(&sample.dialogue, &sample.intents)?;
        rows.truncate(n - 1);
        let y = sample.cuts.labels();
        labels.extend_from_slice(&y[..n - 1]);
        features.extend(rows);
    }
    Ok((features, labels))
}

pub fn train(samples: &[CutSample], cfg: &TrainConfig) -> Result<(CutClassifier, TrainReport)> {
    let (features, labels) = training_examples(samples)?;
    fit(&features, &labels, cfg)
}

/// Largest relative difference between the analytic gradient and central
/// finite differences with step `h`. Components where both are below
/// [`GRAD_ABS_TOL`] count as agreeing.
pub fn grad_check(model: &CutClassifier, features: &[FeatureVector], labels: &[bool], l2: f64, h: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::Invalid(format!("step {h} outside [1e-7, 1e-3]")));
    }
    let (gw, gb) = gradient(model, features, labels, l2)?;
    let mut worst: f64 = 0.0;
    #[allow(clippy::needless_range_loop)]
    for i in 0..=model.dim() {
        let mut plus = model.clone();
        let mut minus = model.clone();
        let analytic = if i < model.dim() {
            plus.weights[i] += h;
            minus.weights[i] -= h;
            gw[i]
        } else {
            plus.bias += h;
            minus.bias -= h;
            gb
        };
        let numeric = (objective(&plus, features, labels, l2)? - objective(&minus, features, labels, l2)?) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs());
        if scale >= GRAD_ABS_TOL {
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    Ok(worst)
}

/// Externally computed per-turn probabilities: `{"id", "probs"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbRecord {
    pub id: String,
    pub probs: Vec<f64>,
}

impl ProbRecord {
    pub fn validate(&self, n_turns: usize) -> Result<()> {
        if self.probs.len() != n_turns {
            return Err(Error::LengthMismatch {
                expected: n_turns,
                found: self.probs.len(),
            });
        }
        if let Some(p) = self.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Invalid(format!("{}: probability {p} outside [0, 1]", self.id)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::{default_rules, label_dialogue};
    use proptest::prelude::*;
    use rand::Rng;

    fn dialogue() -> Dialogue {
        Dialogue::from_pairs(
            "d",
            &[
                ("A", "Where are you?"),
                ("B", "at the station"),
                ("B", "at the station"),
                ("A", "ok"),
            ],
        )
        .unwrap()
    }

    fn intents(d: &Dialogue) -> Vec<IntentLabel> {
        label_dialogue(d, &default_rules())
    }

    #[test]
    fn feature_shape_and_boundaries() {
        let d = dialogue();
        let i = intents(&d);
        let f = featurize(&d, 1, &i);
        assert_eq!(f.dim(), 12);
        assert_eq!(f.values[3], 1.0);
        assert_eq!(f.values[4 + IntentLabel::Where.ordinal()], 1.0);
        assert_eq!(f.values[4..10].iter().sum::<f64>(), 1.0);
        let last = featurize(&d, 4, &i);
        assert_eq!((last.values[0], last.values[2], last.values[10]), (1.0, 0.0, 0.0));
        let first = featurize(&d, 1, &i);
        assert_eq!(first.values[11], 0.0);
        let twin = featurize(&d, 2, &i);
        assert_eq!(twin.values[10], 1.0);
        assert_eq!(twin.values[2], 0.0);
    }

    #[test]
    fn sigmoid_values() {
        let d = dialogue();
        let i = intents(&d);
        assert!(CutClassifier::zeros()
            .predict_probs(&d, &i)
            .unwrap()
            .iter()
            .all(|&p| p == 0.5));
        let saturated = CutClassifier::new(vec![0.0; 12], 10.0).unwrap();
        assert!(saturated.predict_probs(&d, &i).unwrap().iter().all(|&p| p > 0.9999));
        let unit = CutClassifier::new(vec![0.0; 12], 1.0).unwrap();
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((unit.predict_probs(&d, &i).unwrap()[0] - expected).abs() < 1e-12);
        assert!((expected - 0.73106).abs() < 1e-5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0).is_finite());
    }

    #[test]
    fn dimension_mismatch() {
        let model = CutClassifier {
            feature_names: vec!["a".into()],
            weights: vec![1.0],
            bias: 0.0,
        };
        let d = dialogue();
        assert!(matches!(
            model.predict_probs(&d, &intents(&d)),
            Err(Error::Dimension { model: 1, features: 12 })
        ));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn bce_examples() {
        assert!(bce_loss(&[1.0, 0.0], &[true, false]).unwrap() < 1e-11);
        assert!((bce_loss(&[0.5; 4], &[true, false, true, false]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((bce_loss(&[0.9], &[false]).unwrap() - (-(0.1f64).ln())).abs() < 1e-12);
        assert!((bce_loss(&[0.9], &[false]).unwrap() - 2.302585).abs() < 1e-6);
        assert!(matches!(bce_loss(&[0.5], &[]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::TrainConfig(_))));
        let bad = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let parsed: std::result::Result<TrainConfig, _> = serde_json::from_str(r#"{"lr": 0.5, "momentum": 0.9}"#);
        assert!(parsed.is_err());
    }

    fn toy_data(seed: u64, n: usize) -> (Vec<FeatureVector>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features: Vec<FeatureVector> = (0..n)
            .map(|_| FeatureVector {
                values: (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
            })
            .collect();
        let labels = features.iter().map(|f| f.values[0] + f.values[5] > 0.0).collect();
        (features, labels)
    }

    #[test]
    fn training_reduces_loss_and_is_order_invariant() {
        let (features, labels) = toy_data(1, 60);
        let cfg = TrainConfig {
            epochs: 300,
            ..TrainConfig::default()
        };
        let (model, report) = fit(&features, &labels, &cfg).unwrap();
        assert!(report.final_loss <= report.initial_loss);
        assert!(report.losses.windows(2).all(|w| w[1] <= w[0] + 1e-15));

        let mut rev_f = features.clone();
        let mut rev_l = labels.clone();
        rev_f.reverse();
        rev_l.reverse();
        let (again, _) = fit(&rev_f, &rev_l, &cfg).unwrap();
        assert_eq!(model, again);
    }

    #[test]
    fn train_uses_non_final_positions() {
        let d = dialogue();
        let sample = CutSample {
            intents: intents(&d),
            cuts: Segmentation::new(vec![1], 4).unwrap(),
            dialogue: d,
        };
        let (f, y) = training_examples(std::slice::from_ref(&sample)).unwrap();
        assert_eq!((f.len(), y), (3, vec![true, false, false]));
        assert!(matches!(train(&[], &TrainConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn grad_check_and_step_size() {
        let (features, labels) = toy_data(7, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = CutClassifier::new((0..12).map(|_| rng.random_range(-1.0..1.0)).collect(), 0.3).unwrap();
        let fine = grad_check(&model, &features, &labels, 1e-4, 1e-5).unwrap();
        let coarse = grad_check(&model, &features, &labels, 1e-4, 1e-3).unwrap();
        assert!(fine < 1e-5, "{fine}");
        assert!(coarse > fine);
        assert!(grad_check(&model, &features, &labels, 1e-4, 1e-2).is_err());
    }

    #[test]
    fn grad_check_at_zero_gradient() {
        // Two mirrored points with opposite labels and no L2: the zero model
        // sits at the optimum along every axis.
        let x = FeatureVector { values: vec![1.0; 12] };
        let features = vec![x.clone(), x];
        let labels = vec![true, false];
        let (gw, gb) = gradient(&CutClassifier::zeros(), &features, &labels, 0.0).unwrap();
        assert!(gw.iter().all(|g| g.abs() < 1e-15) && gb.abs() < 1e-15);
        assert_eq!(
            grad_check(&CutClassifier::zeros(), &features, &labels, 0.0, 1e-5).unwrap(),
            0.0
        );
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = CutClassifier::new((0..12).map(|i| i as f64 * 0.25 - 1.0).collect(), -0.5).unwrap();
        model.save(&path).unwrap();
        assert_eq!(CutClassifier::load(&path).unwrap(), model);
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["feature_names"].as_array().unwrap().len(), 12);

        fs::write(&path, r#"{"feature_names": ["a"], "weights": [1.0, 2.0], "bias": 0}"#).unwrap();
        assert!(CutClassifier::load(&path).is_err());
    }

    proptest! {
        #[test]
        fn convex_along_segments(seed in 0u64..1000, t in 0.0f64..1.0) {
            let (features, labels) = toy_data(seed, 15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let a = CutClassifier::new((0..12).map(|_| rng.random_range(-3.0..3.0)).collect(), rng.random_range(-3.0..3.0)).unwrap();
            let b = CutClassifier::new((0..12).map(|_| rng.random_range(-3.0..3.0)).collect(), rng.random_range(-3.0..3.0)).unwrap();
            let mix = CutClassifier::new(
                a.weights.iter().zip(&b.weights).map(|(x, y)| t * x + (1.0 - t) * y).collect(),
                t * a.bias + (1.0 - t) * b.bias,
            ).unwrap();
            let la = objective(&a, &features, &labels, 1e-4).unwrap();
            let lb = objective(&b, &features, &labels, 1e-4).unwrap();
            let lm = objective(&mix, &features, &labels, 1e-4).unwrap();
            prop_assert!(lm <= t * la + (1.0 - t) * lb + 1e-9);
        }

        #[test]
        fn probs_strictly_inside_unit_interval(w in prop::collection::vec(-20.0f64..20.0, 12), b in -20.0f64..20.0) {
            let d = dialogue();
            let model = CutClassifier::new(w, b).unwrap();
            let probs = model.predict_probs(&d, &intents(&d)).unwrap();
            prop_assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0));
            prop_assert!(crate::segment::cuts_from_probs(&probs, 0.5).is_ok());
        }
    }
}
