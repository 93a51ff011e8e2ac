//! Classifier oracles. Counterfactual search only ever asks an oracle for a
//! class index, so anything that can label a sample can be explained: a
//! trained softmax network, a scripted test double, or a person.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::Scalar;
use crate::tensor::{Activation, Adam, DenseNet, Matrix};

#[derive(Debug, Error)]
pub enum OracleError {
    /// No answer is available yet; the caller should park its state.
    #[error("oracle suspended awaiting an answer")]
    Suspended,
    #[error("oracle cannot provide {0}")]
    Unsupported(&'static str),
    #[error("oracle returned label {label} but only {n_classes} classes exist")]
    InvalidLabel { label: usize, n_classes: usize },
    #[error(transparent)]
    Model(#[from] Error),
}

pub trait ClassifierOracle<T: Scalar> {
    fn n_classes(&self) -> usize;

    fn predict(&self, x: &[T]) -> Result<usize, OracleError>;

    /// Class probabilities; only differentiable local models provide these.
    fn predict_proba(&self, _x: &[T]) -> Result<Vec<T>, OracleError> {
        Err(OracleError::Unsupported("class probabilities"))
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Row-wise softmax.
pub fn softmax<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
pub fn cross_entropy<T: Scalar>(logits: &Matrix<T>, targets: &[usize]) -> Result<(T, Matrix<T>)> {
    if logits.rows() != targets.len() {
        return Err(Error::shape("cross_entropy", logits.rows(), targets.len()));
    }
    let probs = softmax(logits);
    let n = T::from_usize(targets.len().max(1)).unwrap();
    let tiny = T::min_positive_value();
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (r, &t) in targets.iter().enumerate() {
        loss -= probs.get(r, t).max(tiny).ln();
        let g = grad.get(r, t);
        grad.set(r, t, g - T::one());
    }
    grad.scale_inplace(T::one() / n);
    Ok((loss / n, grad))
}

/// Softmax classifier backed by a dense network emitting logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalClassifier<T> {
    pub net: DenseNet<T>,
}

impl<T: Scalar> LocalClassifier<T> {
    pub fn logits(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.net.forward(x)
    }

    pub fn proba_batch(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(softmax(&self.net.forward(x)?))
    }

    pub fn predict_batch(&self, x: &Matrix<T>) -> Result<Vec<usize>> {
        let logits = self.net.forward(x)?;
        Ok(logits.iter_rows().map(argmax).collect())
    }

    pub fn accuracy_on(&self, set: &LabeledSet<T>) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::Empty("accuracy on an empty dataset"));
        }
        let pred = self.predict_batch(&set.samples)?;
        let hits = pred.iter().zip(&set.labels).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / set.len() as f64)
    }
}

impl<T: Scalar> ClassifierOracle<T> for LocalClassifier<T> {
    fn n_classes(&self) -> usize {
        self.net.output_dim()
    }

    fn predict(&self, x: &[T]) -> Result<usize, OracleError> {
        Ok(self.predict_batch(&Matrix::row_vector(x))?[0])
    }

    fn predict_proba(&self, x: &[T]) -> Result<Vec<T>, OracleError> {
        Ok(self.proba_batch(&Matrix::row_vector(x))?.into_vec())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierTrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            epochs: 30,
            batch_size: 64,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierReport {
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub heldout_accuracy: Option<f64>,
}

pub fn train_classifier<T: Scalar>(
    train: &LabeledSet<T>,
    heldout: Option<&LabeledSet<T>>,
    config: &ClassifierTrainConfig,
    seed: Seed,
) -> Result<(LocalClassifier<T>, ClassifierReport)> {
    if train.is_empty() {
        return Err(Error::Empty("classifier training set"));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut dims = vec![train.samples.cols()];
    dims.extend(&config.hidden);
    dims.push(train.n_classes);
    let net = DenseNet::new(&dims, Activation::LEAKY_RELU_02, Activation::Identity, seed.derive("classifier"))?;
    let mut clf = LocalClassifier { net };
    let mut adam = Adam::new(T::lit(config.lr));
    let mut rng = seed.stream("classifier-shuffle");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = train.samples.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let tape = clf.net.forward_tape(&x)?;
            let (loss, dlogits) = cross_entropy(tape.output(), &y)?;
            let (grads, _) = clf.net.backward_tape(&tape, &dlogits)?;
            adam.step_net(&mut clf.net, &grads)?;
            total += loss.to_f64_lossy() * chunk.len() as f64;
        }
        if !clf.net.is_finite() {
            return Err(Error::NonFinite("classifier training".into()));
        }
        epoch_losses.push(total / train.len() as f64);
    }
    let report = ClassifierReport {
        epoch_losses,
        train_accuracy: clf.accuracy_on(train)?,
        heldout_accuracy: heldout.filter(|h| !h.is_empty()).map(|h| clf.accuracy_on(h)).transpose()?,
    };
    Ok((clf, report))
}

/// Replays a fixed label sequence, then suspends. Never invents labels.
#[derive(Debug, Default)]
pub struct ScriptedOracle {
    n_classes: usize,
    script: Mutex<VecDeque<usize>>,
    queries: Mutex<usize>,
}

impl ScriptedOracle {
    pub fn new(n_classes: usize, labels: impl IntoIterator<Item = usize>) -> Self {
        Self {
            n_classes,
            script: Mutex::new(labels.into_iter().collect()),
            queries: Mutex::new(0),
        }
    }

    pub fn queries(&self) -> usize {
        *self.queries.lock().unwrap()
    }
}

impl<T: Scalar> ClassifierOracle<T> for ScriptedOracle {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict(&self, _x: &[T]) -> Result<usize, OracleError> {
        *self.queries.lock().unwrap() += 1;
        let label = self.script.lock().unwrap().pop_front().ok_or(OracleError::Suspended)?;
        if label >= self.n_classes {
            return Err(OracleError::InvalidLabel {
                label,
                n_classes: self.n_classes,
            });
        }
        Ok(label)
    }
}

pub const DEFAULT_HUMAN_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Default)]
struct Inbox {
    question: Option<Vec<f64>>,
    answer: Option<usize>,
}

/// A person answering label queries through a shared inbox.
///
/// `predict` publishes the sample and blocks until [`HumanHandle::answer`]
/// is called or the timeout elapses, in which case it reports
/// [`OracleError::Suspended`].
#[derive(Debug, Clone)]
pub struct HumanOracle {
    n_classes: usize,
    timeout: Duration,
    inbox: Arc<(Mutex<Inbox>, Condvar)>,
}

/// The annotator's side of a [`HumanOracle`].
#[derive(Debug, Clone)]
pub struct HumanHandle {
    n_classes: usize,
    inbox: Arc<(Mutex<Inbox>, Condvar)>,
}

impl HumanOracle {
    pub fn new(n_classes: usize, timeout: Duration) -> (Self, HumanHandle) {
        let inbox = Arc::new((Mutex::new(Inbox::default()), Condvar::new()));
        (
            Self {
                n_classes,
                timeout,
                inbox: inbox.clone(),
            },
            HumanHandle { n_classes, inbox },
        )
    }
}

impl HumanHandle {
    /// The sample currently awaiting a label.
    pub fn pending(&self) -> Option<Vec<f64>> {
        self.inbox.0.lock().unwrap().question.clone()
    }

    pub fn answer(&self, label: usize) -> Result<(), OracleError> {
        if label >= self.n_classes {
            return Err(OracleError::InvalidLabel {
                label,
                n_classes: self.n_classes,
            });
        }
        let (lock, cv) = &*self.inbox;
        let mut inbox = lock.lock().unwrap();
        inbox.answer = Some(label);
        cv.notify_all();
        Ok(())
    }
}

impl<T: Scalar> ClassifierOracle<T> for HumanOracle {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict(&self, x: &[T]) -> Result<usize, OracleError> {
        let (lock, cv) = &*self.inbox;
        let mut inbox = lock.lock().unwrap();
        inbox.answer = None;
        inbox.question = Some(x.iter().map(|v| v.to_f64_lossy()).collect());
        let (mut inbox, _) = cv
            .wait_timeout_while(inbox, self.timeout, |i| i.answer.is_none())
            .unwrap();
        match inbox.answer.take() {
            Some(label) => {
                inbox.question = None;
                Ok(label)
            }
            None => Err(OracleError::Suspended),
        }
    }
}
