//! Dense re-implementation of the batch objective, used as the function
//! under finite differences.

use ndarray::{s, Array2};
use rmbrec::gradcheck::Fixture;
use rmbrec::objectives::{IrmVariant, OrmScope, RrmDenominator, Triplet};

use super::{dense_adjacency, dense_propagate, stack};

pub struct DenseProblem {
    pub num_users: usize,
    pub adjacency: Vec<Array2<f64>>,
    pub fx: Fixture,
}

impl DenseProblem {
    pub fn new(fx: Fixture) -> Self {
        let nu = fx.state.users.nrows();
        let ni = fx.state.items.nrows();
        let adjacency = fx
            .graphs
            .iter()
            .map(|g| {
                let pairs: Vec<(u32, u32)> = (0..nu)
                    .flat_map(|u| g.row(u).map(move |(c, _)| (u as u32, (c - nu) as u32)))
                    .collect();
                dense_adjacency(nu, ni, &pairs)
            })
            .collect();
        Self { num_users: nu, adjacency, fx }
    }

    /// Objective value at base tables `zu`, `zi`.
    pub fn total(&self, zu: &Array2<f64>, zi: &Array2<f64>) -> f64 {
        let hp = &self.fx.state.hp;
        let nu = self.num_users;
        let e0 = stack(zu, zi);
        let views: Vec<(Array2<f64>, Array2<f64>)> = self
            .adjacency
            .iter()
            .map(|a| {
                let e = dense_propagate(a, &e0, hp.layers);
                (e.slice(s![..nu, ..]).to_owned(), e.slice(s![nu.., ..]).to_owned())
            })
            .collect();
        let nb = views.len();
        let target = self.fx.target;
        let batch = &self.fx.batch;

        let sampled: Vec<usize> = (0..nb).filter(|&b| !batch.per_behavior[b].is_empty()).collect();
        let orm = if sampled.len() < 2 {
            0.0
        } else {
            match hp.irm_variant {
                IrmVariant::Rex => {
                    let risks: Vec<f64> = sampled
                        .iter()
                        .map(|&b| bpr(&views[b].0, &views[b].1, &batch.per_behavior[b]))
                        .collect();
                    let n = risks.len() as f64;
                    let mean = risks.iter().sum::<f64>() / n;
                    match hp.orm_scope {
                        OrmScope::AllBehaviors => risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n,
                        OrmScope::AuxOnly => {
                            sampled
                                .iter()
                                .zip(&risks)
                                .filter(|(&b, _)| b != target)
                                .map(|(_, r)| (r - mean).powi(2))
                                .sum::<f64>()
                                / (n - 1.0)
                        }
                    }
                }
                IrmVariant::IrmV1 | IrmVariant::IrmV2 => sampled
                    .iter()
                    .filter(|&&b| hp.orm_scope == OrmScope::AllBehaviors || b != target)
                    .map(|&b| {
                        // d/dw of the risk with every score multiplied by w, at w = 1.
                        let t = &batch.per_behavior[b];
                        let g = t
                            .iter()
                            .map(|tr| {
                                let m = margin(&views[b].0, &views[b].1, tr);
                                -m / (1.0 + m.exp())
                            })
                            .sum::<f64>()
                            / t.len() as f64;
                        g * g
                    })
                    .sum(),
            }
        };

        let rrm = if nb < 2 {
            0.0
        } else {
            let users = &self.fx.batch_users;
            let n = users.len();
            let mut sum = 0.0;
            for b in (0..nb).filter(|&b| b != target) {
                for k in 0..n {
                    let x = views[b].0.row(users[k] as usize).to_owned();
                    let pos = cosine(&x, &views[target].0.row(users[k] as usize).to_owned()) / hp.tau;
                    let mut denom = 0.0;
                    if hp.rrm_denominator == RrmDenominator::WithPositive {
                        denom += pos.exp();
                    }
                    for j in (0..n).filter(|&j| j != k) {
                        denom += (cosine(&x, &views[b].0.row(users[j] as usize).to_owned()) / hp.tau).exp();
                    }
                    sum += denom.ln() - pos;
                }
            }
            sum / ((nb - 1) * n) as f64
        };

        let fused_u = views.iter().fold(Array2::zeros(zu.raw_dim()), |acc, v| acc + &v.0) / nb as f64;
        let fused_i = views.iter().fold(Array2::zeros(zi.raw_dim()), |acc, v| acc + &v.1) / nb as f64;
        let reg = hp.lambda_reg * (zu.iter().chain(zi.iter()).map(|v| v * v).sum::<f64>());
        let main = bpr(&fused_u, &fused_i, &batch.main) + reg;
        main + hp.lambda1 * rrm + hp.lambda2 * orm
    }

    /// Central differences of [`DenseProblem::total`] over both tables.
    pub fn numeric_gradient(&self, h: f64) -> (Array2<f64>, Array2<f64>) {
        let (zu, zi) = (&self.fx.state.users, &self.fx.state.items);
        let mut du = Array2::zeros(zu.raw_dim());
        for ((r, c), d) in du.indexed_iter_mut() {
            let (mut p, mut m) = (zu.clone(), zu.clone());
            p[[r, c]] += h;
            m[[r, c]] -= h;
            *d = (self.total(&p, zi) - self.total(&m, zi)) / (2.0 * h);
        }
        let mut di = Array2::zeros(zi.raw_dim());
        for ((r, c), d) in di.indexed_iter_mut() {
            let (mut p, mut m) = (zi.clone(), zi.clone());
            p[[r, c]] += h;
            m[[r, c]] -= h;
            *d = (self.total(zu, &p) - self.total(zu, &m)) / (2.0 * h);
        }
        (du, di)
    }
}

fn margin(p: &Array2<f64>, q: &Array2<f64>, t: &Triplet) -> f64 {
    let u = p.row(t.user as usize);
    u.dot(&q.row(t.pos as usize)) - u.dot(&q.row(t.neg as usize))
}

fn bpr(p: &Array2<f64>, q: &Array2<f64>, triplets: &[Triplet]) -> f64 {
    let sum: f64 = triplets.iter().map(|t| (1.0 + (-margin(p, q, t)).exp()).ln()).sum();
    sum / triplets.len() as f64
}

fn cosine(a: &ndarray::Array1<f64>, b: &ndarray::Array1<f64>) -> f64 {
    a.dot(b) / (a.dot(a).sqrt() * b.dot(b).sqrt())
}

/// `|a - n| / max(|a|, |n|, floor)`, maximized over entries.
pub fn max_rel_error(analytic: &Array2<f64>, numeric: &Array2<f64>, floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
