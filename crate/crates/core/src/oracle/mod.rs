//! Exact information quantities on small tabular tasks with a scalar
//! latent, used to check `I(A;G|S) <= I(Z;G|S) <= E[KL(encoder || prior)]`.

pub mod quadrature;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{kl_component, softmax};
use crate::policy::{Policy, PolicyError, RecurrentState};
use crate::scalar::Scalar;
use quadrature::{integrate, NormalRule, MAX_HERMITE_ORDER};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("invalid tabular task: {0}")]
    InvalidTask(String),
    #[error("quadrature for {what} did not converge (last order {order})")]
    Quadrature { what: &'static str, order: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Largest `|S| * |G|` handled exactly.
pub const MAX_PAIRS: usize = 64;
/// Tolerance of the bound-chain checks.
pub const BOUND_TOLERANCE: f64 = 1e-6;

const START_ORDER: usize = 16;

/// Finite states, goals and actions with fixed state and goal weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularTask<F> {
    pub goal_prior: Vec<F>,
    pub state_weights: Vec<F>,
    pub actions: usize,
}

impl<F: Scalar> TabularTask<F> {
    /// Uniform state weights.
    pub fn new(states: usize, goal_prior: Vec<F>, actions: usize) -> Result<Self, OracleError> {
        let w = F::one() / F::from_usize(states.max(1)).unwrap();
        let task = Self {
            goal_prior,
            state_weights: vec![w; states],
            actions,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn states(&self) -> usize {
        self.state_weights.len()
    }

    pub fn goals(&self) -> usize {
        self.goal_prior.len()
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::InvalidTask(m));
        if self.states() == 0 || self.goals() == 0 || self.actions == 0 {
            return bad("states, goals and actions must be nonempty".into());
        }
        if self.states() * self.goals() > MAX_PAIRS {
            return bad(format!("|S|*|G| = {} exceeds {MAX_PAIRS}", self.states() * self.goals()));
        }
        let tol = F::lit(1e-9).max(F::epsilon() * F::lit(64.0));
        for (name, v) in [("goal_prior", &self.goal_prior), ("state_weights", &self.state_weights)] {
            let total: F = v.iter().copied().sum();
            if v.iter().any(|&p| !(p >= F::zero())) || (total - F::one()).abs() > tol {
                return bad(format!("{name} is not a probability vector"));
            }
        }
        Ok(())
    }
}

/// A goal-conditioned policy with a scalar latent, evaluable at every
/// `(state, goal)` pair of a [`TabularTask`].
pub trait TabularPolicy<F> {
    /// Encoder `(mean, std)` of `p(z | s, g)`.
    fn encoder(&self, state: usize, goal: usize) -> (F, F);
    /// Decoder probabilities `p(a | s, z)`, written into `out`.
    fn decoder_probs(&self, state: usize, z: F, out: &mut [F]);
}

/// Random task with up to the given sizes (at least 2 goals and actions)
/// and a goal prior drawn from normalised `U(0.1, 1)` weights.
pub fn random_task<F: Scalar, R: Rng + ?Sized>(rng: &mut R, max_states: usize, max_goals: usize, max_actions: usize) -> TabularTask<F> {
    let states = rng.random_range(1..=max_states.max(1));
    let goals = rng.random_range(2..=max_goals.max(2));
    let actions = rng.random_range(2..=max_actions.max(2));
    let raw: Vec<f64> = (0..goals).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let w = F::one() / F::from_usize(states).unwrap();
    TabularTask {
        goal_prior: raw.iter().map(|p| F::lit(p / total)).collect(),
        state_weights: vec![w; states],
        actions,
    }
}

/// Tabular encoder with a per-state linear-softmax decoder:
/// `logits[a] = w[s][a] * z + b[s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmaxPolicy<F> {
    /// Indexed `[s][g]`.
    pub mean: Vec<Vec<F>>,
    pub std: Vec<Vec<F>>,
    /// Indexed `[s][a]`.
    pub w: Vec<Vec<F>>,
    pub b: Vec<Vec<F>>,
}

impl<F: Scalar> LinearSoftmaxPolicy<F> {
    /// Random encoder means in `[-2, 2]`, stds in `[0.2, 1.5]`, decoder
    /// slopes in `[-3, 3]` and biases in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(task: &TabularTask<F>, rng: &mut R) -> Self {
        let (s, g, a) = (task.states(), task.goals(), task.actions);
        let mut table = |rows: usize, cols: usize, lo: f64, hi: f64| -> Vec<Vec<F>> {
            (0..rows)
                .map(|_| (0..cols).map(|_| F::lit(rng.random_range(lo..hi))).collect())
                .collect()
        };
        Self {
            mean: table(s, g, -2.0, 2.0),
            std: table(s, g, 0.2, 1.5),
            w: table(s, a, -3.0, 3.0),
            b: table(s, a, -1.0, 1.0),
        }
    }

    /// Encoder ignores the goal and the decoder ignores the latent.
    pub fn goal_blind(task: &TabularTask<F>) -> Self {
        let (s, g, a) = (task.states(), task.goals(), task.actions);
        Self {
            mean: vec![vec![F::zero(); g]; s],
            std: vec![vec![F::one(); g]; s],
            w: vec![vec![F::zero(); a]; s],
            b: vec![vec![F::zero(); a]; s],
        }
    }
}

impl<F: Scalar> TabularPolicy<F> for LinearSoftmaxPolicy<F> {
    fn encoder(&self, state: usize, goal: usize) -> (F, F) {
        (self.mean[state][goal], self.std[state][goal])
    }

    fn decoder_probs(&self, state: usize, z: F, out: &mut [F]) {
        let logits: Vec<F> = self.w[state].iter().zip(&self.b[state]).map(|(&w, &b)| w * z + b).collect();
        out.copy_from_slice(&softmax(&logits));
    }
}

/// Scores a feed-forward [`Policy`] with `latent_dim = 1` on explicit state
/// and goal input vectors.
pub struct PolicyAdapter<'a, F> {
    policy: &'a Policy<F>,
    states: Vec<Vec<F>>,
    goals: Vec<Vec<F>>,
    encoded: Vec<Vec<(F, F)>>,
}

impl<'a, F: Scalar> PolicyAdapter<'a, F> {
    pub fn new(policy: &'a Policy<F>, states: Vec<Vec<F>>, goals: Vec<Vec<F>>) -> Result<Self, OracleError> {
        if policy.config().latent_dim != 1 || policy.config().recurrent {
            return Err(OracleError::InvalidTask("adapter needs a feed-forward policy with a scalar latent".into()));
        }
        let memory = RecurrentState { h: Vec::new() };
        let mut encoded = Vec::with_capacity(states.len());
        for s in &states {
            let mut row = Vec::with_capacity(goals.len());
            for g in &goals {
                let e = policy.encode(s, g, &memory)?;
                row.push((e.mean()[0], e.log_std()[0].exp()));
            }
            encoded.push(row);
        }
        Ok(Self {
            policy,
            states,
            goals,
            encoded,
        })
    }

    pub fn goals(&self) -> &[Vec<F>] {
        &self.goals
    }
}

impl<F: Scalar> TabularPolicy<F> for PolicyAdapter<'_, F> {
    fn encoder(&self, state: usize, goal: usize) -> (F, F) {
        self.encoded[state][goal]
    }

    fn decoder_probs(&self, state: usize, z: F, out: &mut [F]) {
        let memory = RecurrentState { h: Vec::new() };
        let (logits, _) = self
            .policy
            .decode(&self.states[state], &crate::numerics::LatentSample(vec![z]), &memory)
            .expect("adapter inputs validated at construction");
        out.copy_from_slice(&softmax(&logits));
    }
}

fn convergence_tol<F: Scalar>() -> F {
    F::lit(1e-9).max(F::epsilon() * F::lit(1e3))
}

/// `pi(a | s, g) = int p_enc(z | s, g) p_dec(a | s, z) dz` for every pair,
/// indexed `[s][g][a]`. Gauss-Hermite order is doubled until all entries
/// move by less than the tolerance.
pub fn action_probabilities<F: Scalar>(task: &TabularTask<F>, policy: &impl TabularPolicy<F>) -> Result<Vec<Vec<Vec<F>>>, OracleError> {
    task.validate()?;
    let eval = |rule: &NormalRule<F>| {
        let mut buf = vec![F::zero(); task.actions];
        (0..task.states())
            .map(|s| {
                (0..task.goals())
                    .map(|g| {
                        let (mu, sd) = policy.encoder(s, g);
                        let mut acc = vec![F::zero(); task.actions];
                        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                            policy.decoder_probs(s, mu + sd * x, &mut buf);
                            for (a, p) in acc.iter_mut().zip(&buf) {
                                *a = *a + w * *p;
                            }
                        }
                        acc
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    let tol = convergence_tol::<F>();
    let mut order = START_ORDER;
    let mut prev = eval(&NormalRule::new(order));
    while order < MAX_HERMITE_ORDER {
        order *= 2;
        let next = eval(&NormalRule::new(order));
        let diff = prev
            .iter()
            .flatten()
            .flatten()
            .zip(next.iter().flatten().flatten())
            .map(|(&a, &b)| (a - b).abs())
            .fold(F::zero(), F::max);
        if diff < tol {
            return Ok(next);
        }
        prev = next;
    }
    // Adaptive fallback, entry by entry.
    let width = F::lit(12.0);
    let mut buf = vec![F::zero(); task.actions];
    let mut out = prev;
    for (s, row) in out.iter_mut().enumerate() {
        for (g, probs) in row.iter_mut().enumerate() {
            let (mu, sd) = policy.encoder(s, g);
            for (a, p) in probs.iter_mut().enumerate() {
                let f = |z: F| {
                    policy.decoder_probs(s, z, &mut buf);
                    let t = (z - mu) / sd;
                    buf[a] * (-F::lit(0.5) * t * t).exp() / (sd * F::lit((2.0 * std::f64::consts::PI).sqrt()))
                };
                *p = integrate(f, mu - width * sd, mu + width * sd, tol * F::lit(0.1)).ok_or(OracleError::Quadrature {
                    what: "action marginal",
                    order,
                })?;
            }
        }
    }
    Ok(out)
}

/// Exact `I(A; G | S)` in nats.
pub fn exact_mi_action<F: Scalar>(task: &TabularTask<F>, policy: &impl TabularPolicy<F>) -> Result<F, OracleError> {
    let pi = action_probabilities(task, policy)?;
    Ok(mi_from_table(task, &pi))
}

/// `I(A;G|S)` from a table of conditionals `pi[s][g][a]`.
pub fn mi_from_table<F: Scalar>(task: &TabularTask<F>, pi: &[Vec<Vec<F>>]) -> F {
    let mut total = F::zero();
    for (s, ps) in task.state_weights.iter().enumerate() {
        let mut marginal = vec![F::zero(); task.actions];
        for (g, pg) in task.goal_prior.iter().enumerate() {
            for (m, p) in marginal.iter_mut().zip(&pi[s][g]) {
                *m = *m + *pg * *p;
            }
        }
        let mut inner = F::zero();
        for (g, pg) in task.goal_prior.iter().enumerate() {
            for (a, &p) in pi[s][g].iter().enumerate() {
                if p > F::zero() {
                    inner = inner + *pg * p * (p / marginal[a]).ln();
                }
            }
        }
        total = total + *ps * inner;
    }
    total
}

fn log_normal<F: Scalar>(z: F, mu: F, sd: F) -> F {
    let t = (z - mu) / sd;
    -F::lit(0.5) * t * t - sd.ln() - F::lit(0.5 * (2.0 * std::f64::consts::PI).ln())
}

/// `log sum_g p(g) N(z; mu_g, sd_g)`, computed stably.
fn log_mixture<F: Scalar>(z: F, prior: &[F], comps: &[(F, F)]) -> F {
    let terms: Vec<F> = prior
        .iter()
        .zip(comps)
        .filter(|(p, _)| **p > F::zero())
        .map(|(&p, &(mu, sd))| p.ln() + log_normal(z, mu, sd))
        .collect();
    let m = terms.iter().copied().fold(F::neg_infinity(), F::max);
    m + terms.iter().map(|&t| (t - m).exp()).fold(F::zero(), |a, b| a + b).ln()
}

/// `sum_g p(g) E_{z ~ N_g}[log m(z)]` for one state: Gauss-Hermite with
/// order doubling, falling back to adaptive Gauss-Kronrod over a window
/// covering every component.
fn cross_entropy_term<F: Scalar>(prior: &[F], comps: &[(F, F)]) -> Result<F, OracleError> {
    let tol = convergence_tol::<F>();
    let gh = |order: usize| {
        let rule = NormalRule::new(order);
        prior
            .iter()
            .zip(comps)
            .filter(|(p, _)| **p > F::zero())
            .map(|(&p, &(mu, sd))| p * rule.expect(mu, sd, |z| log_mixture(z, prior, comps)))
            .fold(F::zero(), |a, b| a + b)
    };
    let mut order = START_ORDER;
    let mut prev = gh(order);
    while order < MAX_HERMITE_ORDER {
        order *= 2;
        let next = gh(order);
        if (next - prev).abs() < tol {
            return Ok(next);
        }
        prev = next;
    }
    let width = F::lit(12.0);
    let lo = comps.iter().map(|&(mu, sd)| mu - width * sd).fold(F::infinity(), F::min);
    let hi = comps.iter().map(|&(mu, sd)| mu + width * sd).fold(F::neg_infinity(), F::max);
    let integrand = |z: F| {
        let lm = log_mixture(z, prior, comps);
        lm.exp() * lm
    };
    integrate(integrand, lo, hi, tol * F::lit(0.1)).ok_or(OracleError::Quadrature {
        what: "latent mixture",
        order,
    })
}

/// Exact `I(Z; G | S)` in nats for a scalar latent, via
/// `H(p(z|s)) - sum_g p(g) H(p(z|s,g))`.
pub fn exact_mi_latent<F: Scalar>(task: &TabularTask<F>, policy: &impl TabularPolicy<F>) -> Result<F, OracleError> {
    task.validate()?;
    let half_log_2pie = F::lit(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln());
    let mut total = F::zero();
    for (s, &ps) in task.state_weights.iter().enumerate() {
        let comps: Vec<(F, F)> = (0..task.goals()).map(|g| policy.encoder(s, g)).collect();
        if comps.iter().any(|&(_, sd)| !(sd >= F::lit(1e-3))) {
            return Err(OracleError::InvalidTask("encoder std below 1e-3".into()));
        }
        let cond_entropy = task
            .goal_prior
            .iter()
            .zip(&comps)
            .map(|(&p, &(_, sd))| p * (half_log_2pie + sd.ln()))
            .fold(F::zero(), |a, b| a + b);
        let cross = cross_entropy_term(&task.goal_prior, &comps)?;
        total = total + ps * (-cross - cond_entropy);
    }
    Ok(total)
}

/// `sum_s p(s) sum_g p(g) KL(p_enc(z|s,g) || N(0, 1))`, closed form.
pub fn expected_kl_penalty<F: Scalar>(task: &TabularTask<F>, policy: &impl TabularPolicy<F>) -> Result<F, OracleError> {
    task.validate()?;
    let mut total = F::zero();
    for (s, &ps) in task.state_weights.iter().enumerate() {
        for (g, &pg) in task.goal_prior.iter().enumerate() {
            let (mu, sd) = policy.encoder(s, g);
            total = total + ps * pg * kl_component(mu, sd.ln(), F::zero(), F::zero());
        }
    }
    Ok(total)
}

/// Result of checking the bound chain on one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub i_ag_s: f64,
    pub i_zg_s: f64,
    pub expected_kl: f64,
    pub tolerance: f64,
    /// `I(A;G|S) <= I(Z;G|S) + tolerance`.
    pub dpi_pass: bool,
    /// `I(Z;G|S) <= E[KL] + tolerance`.
    pub variational_pass: bool,
    pub pass: bool,
}

impl BoundReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Computes all three quantities and checks both inequalities.
pub fn verify_bound_chain<F: Scalar>(task: &TabularTask<F>, policy: &impl TabularPolicy<F>) -> Result<BoundReport, OracleError> {
    let i_ag_s = exact_mi_action(task, policy)?.as_f64();
    let i_zg_s = exact_mi_latent(task, policy)?.as_f64();
    let expected_kl = expected_kl_penalty(task, policy)?.as_f64();
    let tolerance = BOUND_TOLERANCE;
    let dpi_pass = i_ag_s <= i_zg_s + tolerance;
    let variational_pass = i_zg_s <= expected_kl + tolerance;
    Ok(BoundReport {
        i_ag_s,
        i_zg_s,
        expected_kl,
        tolerance,
        dpi_pass,
        variational_pass,
        pass: dpi_pass && variational_pass,
    })
}
