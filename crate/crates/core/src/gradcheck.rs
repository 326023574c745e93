//! Finite-difference verification of the analytic gradients.
//!
//! [`run_gradcheck`] builds a small random multi-behavior fixture and, for
//! every selected variant combination, compares the gradient of each path of
//! the objective against central differences.

use std::fmt;

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::BehaviorGraph;
use crate::objectives::{
    total_loss_weighted, Hyperparameters, IrmVariant, ModelState, OrmScope, PathWeights, RrmDenominator, Triplet,
    TripletBatch,
};
use crate::rng::sub_stream;

/// Denominator floor of [`max_relative_error`]. Central differences at
/// `h = 1e-5` carry roundoff near `ε·|f|/h ≈ 1e-11`, so entries below this
/// floor are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Matrix with entries uniform in `[-1, 1)`, reproducible from `seed`.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = sub_stream(seed, "fixture");
    let dist = Uniform::new(-1.0, 1.0).expect("valid range");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut rng))
}

/// Central differences `(f(x + h e_k) - f(x - h e_k)) / 2h` for every entry.
pub fn central_difference<F>(x: &Array2<f64>, h: f64, mut f: F) -> Array2<f64>
where
    F: FnMut(&Array2<f64>) -> f64,
{
    let mut probe = x.clone();
    let mut out = Array2::zeros(x.raw_dim());
    for (idx, &orig) in x.indexed_iter() {
        probe[idx] = orig + h;
        let up = f(&probe);
        probe[idx] = orig - h;
        let down = f(&probe);
        probe[idx] = orig;
        out[idx] = (up - down) / (2.0 * h);
    }
    out
}

/// `max_k |a_k - b_k| / max(|a_k|, |b_k|, floor)`.
pub fn max_relative_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "gradient shapes differ");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(RELATIVE_ERROR_FLOOR))
        .fold(0.0, f64::max)
}

/// A separately checkable part of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradPath {
    /// Fused BPR plus the L2 regularizer.
    Main,
    /// `λ1 · L_RRM`.
    Rrm,
    /// `λ2 ·` the configured invariance penalty.
    Orm,
    /// The full objective.
    Total,
}

impl GradPath {
    pub const ALL: [GradPath; 4] = [GradPath::Main, GradPath::Rrm, GradPath::Orm, GradPath::Total];

    fn weights(self) -> PathWeights {
        match self {
            GradPath::Main => PathWeights { main: 1.0, rrm: 0.0, orm: 0.0 },
            GradPath::Rrm => PathWeights { main: 0.0, rrm: 1.0, orm: 0.0 },
            GradPath::Orm => PathWeights { main: 0.0, rrm: 0.0, orm: 1.0 },
            GradPath::Total => PathWeights::ALL,
        }
    }
}

impl fmt::Display for GradPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradPath::Main => "main",
            GradPath::Rrm => "rrm",
            GradPath::Orm => "orm",
            GradPath::Total => "total",
        })
    }
}

impl std::str::FromStr for GradPath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        GradPath::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown gradient path '{s}'")))
    }
}

/// One point of {invariance penalty} × {RRM denominator} × {ORM scope}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Variant {
    pub irm_variant: IrmVariant,
    pub rrm_denominator: RrmDenominator,
    pub orm_scope: OrmScope,
}

impl Variant {
    /// All 12 combinations.
    pub fn all() -> Vec<Variant> {
        let mut out = Vec::with_capacity(12);
        for irm_variant in [IrmVariant::Rex, IrmVariant::IrmV1, IrmVariant::IrmV2] {
            for rrm_denominator in [RrmDenominator::WithPositive, RrmDenominator::Literal] {
                for orm_scope in [OrmScope::AllBehaviors, OrmScope::AuxOnly] {
                    out.push(Variant {
                        irm_variant,
                        rrm_denominator,
                        orm_scope,
                    });
                }
            }
        }
        out
    }

    pub fn apply(&self, hp: &mut Hyperparameters) {
        hp.irm_variant = self.irm_variant;
        hp.rrm_denominator = self.rrm_denominator;
        hp.orm_scope = self.orm_scope;
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.irm_variant, self.rrm_denominator, self.orm_scope)
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub num_users: usize,
    pub num_items: usize,
    pub num_behaviors: usize,
    pub dim: usize,
    pub layers: usize,
    pub step: f64,
    pub tolerance: f64,
    pub variants: Vec<Variant>,
    /// Scales one path's analytic gradient by `1 + 1e-2`. Negative control
    /// for the checker itself.
    #[doc(hidden)]
    pub corrupt: Option<GradPath>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_users: 6,
            num_items: 6,
            num_behaviors: 3,
            dim: 4,
            layers: 2,
            step: 1e-5,
            tolerance: 1e-5,
            variants: Variant::all(),
            corrupt: None,
        }
    }
}

/// Random graphs, parameters and one batch covering every user.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub state: ModelState,
    pub graphs: Vec<BehaviorGraph>,
    pub target: usize,
    pub batch: TripletBatch,
    pub batch_users: Vec<u32>,
}

/// Each user gets at least one edge and one non-edge in every behavior, so
/// every behavior contributes a triplet per user. The last behavior is the
/// target.
pub fn random_fixture(cfg: &GradcheckConfig, hp: Hyperparameters) -> Result<Fixture> {
    if cfg.num_users < 2 || cfg.num_items < 2 || cfg.num_behaviors < 1 {
        return Err(Error::Config(
            "gradcheck needs at least 2 users, 2 items and 1 behavior".into(),
        ));
    }
    let (nu, ni) = (cfg.num_users, cfg.num_items);
    let mut rng = sub_stream(cfg.seed, "gradcheck");
    let items: Vec<u32> = (0..ni as u32).collect();
    let mut graphs = Vec::with_capacity(cfg.num_behaviors);
    let mut per_behavior = Vec::with_capacity(cfg.num_behaviors);
    let mut main = Vec::new();
    for b in 0..cfg.num_behaviors {
        let mut pairs = Vec::new();
        let mut triplets = Vec::new();
        for u in 0..nu as u32 {
            let k = rng.random_range(1..ni);
            let mut chosen: Vec<u32> = items.choose_multiple(&mut rng, k).copied().collect();
            chosen.sort_unstable();
            let negatives: Vec<u32> = items.iter().copied().filter(|i| chosen.binary_search(i).is_err()).collect();
            let pos = *chosen.choose(&mut rng).expect("k >= 1");
            let neg = *negatives.choose(&mut rng).expect("k < num_items");
            triplets.push(Triplet::new(u, pos, neg));
            if b + 1 == cfg.num_behaviors {
                let pos = *chosen.choose(&mut rng).expect("k >= 1");
                let neg = *negatives.choose(&mut rng).expect("k < num_items");
                main.push(Triplet::new(u, pos, neg));
            }
            pairs.extend(chosen.into_iter().map(|i| (u, i)));
        }
        graphs.push(BehaviorGraph::from_pairs(format!("b{b}"), nu, ni, &pairs));
        per_behavior.push(triplets);
    }
    let users = random_matrix(nu, hp.dim, cfg.seed.wrapping_mul(2).wrapping_add(1));
    let items = random_matrix(ni, hp.dim, cfg.seed.wrapping_mul(2).wrapping_add(2));
    Ok(Fixture {
        state: ModelState::new(users, items, hp)?,
        graphs,
        target: cfg.num_behaviors - 1,
        batch: TripletBatch { per_behavior, main },
        batch_users: (0..nu as u32).collect(),
    })
}

/// Hyperparameters used by the checker: weights large enough that every
/// path moves the objective visibly.
pub fn gradcheck_hyperparameters(cfg: &GradcheckConfig, variant: Variant) -> Hyperparameters {
    let mut hp = Hyperparameters {
        dim: cfg.dim,
        layers: cfg.layers,
        tau: 0.5,
        lambda1: 0.7,
        lambda2: 0.9,
        lambda_reg: 0.01,
        ..Default::default()
    };
    variant.apply(&mut hp);
    hp
}

#[derive(Debug, Clone, Serialize)]
pub struct PathResult {
    pub variant: String,
    pub path: GradPath,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub results: Vec<PathResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PathResult> {
        self.results.iter().filter(|r| !r.passed)
    }

    pub fn max_error(&self) -> f64 {
        self.results.iter().map(|r| r.max_rel_error).fold(0.0, f64::max)
    }
}

fn path_value(fx: &Fixture, state: &ModelState, path: GradPath) -> Result<f64> {
    let none = PathWeights { main: 0.0, rrm: 0.0, orm: 0.0 };
    let (lb, _) = total_loss_weighted(state, &fx.graphs, fx.target, &fx.batch, &fx.batch_users, none)?;
    let hp = &state.hp;
    Ok(match path {
        GradPath::Main => lb.main,
        GradPath::Rrm => hp.lambda1 * lb.rrm,
        GradPath::Orm => hp.lambda2 * lb.orm,
        GradPath::Total => lb.total,
    })
}

/// Max relative error of one path's analytic gradient over both tables.
pub fn check_path(fx: &Fixture, path: GradPath, step: f64, corrupt: Option<GradPath>) -> Result<f64> {
    let mut weights = path.weights();
    if let Some(c) = corrupt {
        let bump = 1.0 + 1e-2;
        match c {
            GradPath::Main => weights.main *= bump,
            GradPath::Rrm => weights.rrm *= bump,
            GradPath::Orm => weights.orm *= bump,
            GradPath::Total => {
                weights.main *= bump;
                weights.rrm *= bump;
                weights.orm *= bump;
            }
        }
    }
    let (_, grads) = total_loss_weighted(&fx.state, &fx.graphs, fx.target, &fx.batch, &fx.batch_users, weights)?;

    let mut state = fx.state.clone();
    let mut failure = None;
    let mut eval = |s: &ModelState| {
        path_value(fx, s, path).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            f64::NAN
        })
    };
    let fd_users = central_difference(&fx.state.users, step, |u| {
        state.users.assign(u);
        eval(&state)
    });
    state.users.assign(&fx.state.users);
    let fd_items = central_difference(&fx.state.items, step, |i| {
        state.items.assign(i);
        eval(&state)
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(max_relative_error(&grads.d_users, &fd_users).max(max_relative_error(&grads.d_items, &fd_items)))
}

/// Runs every selected variant over all four paths.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut results = Vec::new();
    for &variant in &cfg.variants {
        let hp = gradcheck_hyperparameters(cfg, variant);
        hp.validate()?;
        let fx = random_fixture(cfg, hp)?;
        for path in GradPath::ALL {
            let err = check_path(&fx, path, cfg.step, cfg.corrupt)?;
            results.push(PathResult {
                variant: variant.to_string(),
                path,
                max_rel_error: err,
                passed: err <= cfg.tolerance,
            });
        }
    }
    Ok(GradcheckReport {
        tolerance: cfg.tolerance,
        results,
    })
}
