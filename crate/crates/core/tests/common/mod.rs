//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use cruise_core::channel::{BandConfig, PropagationConstants};
use cruise_core::pbvi::Policy;
use cruise_core::pomdp::{belief_update, Belief, PomdpModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const C: f64 = 299_792_458.0;

/// Neumaier-compensated running sum.
#[derive(Default)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// Beam gain from the explicit array-factor double sum
/// `Σ_m Σ_n exp(j 2π (m Δψ + n Δζ))`, each element phase reduced modulo
/// one turn and accumulated with compensation.
pub fn direct_gain(consts: &PropagationConstants, band: &BandConfig, r: f64, theta: f64, phi: f64, theta_hat: f64, phi_hat: f64) -> f64 {
    let lambda = C / band.frequency_hz;
    let psi = |th: f64, ph: f64| band.d_y_m * ph.cos() * th.sin() / lambda;
    let zeta = |ph: f64| band.d_z_m * ph.sin() / lambda;
    let dpsi = psi(theta, phi) - psi(theta_hat, phi_hat);
    let dzeta = zeta(phi) - zeta(phi_hat);
    let (mut re, mut im) = (Sum::default(), Sum::default());
    for m in 0..band.n_y {
        for n in 0..band.n_z {
            let turns = m as f64 * dpsi + n as f64 * dzeta;
            let t = 2.0 * PI * (turns - turns.round());
            re.add(t.cos());
            im.add(t.sin());
        }
    }
    let af_sq = re.value().powi(2) + im.value().powi(2);
    let n = (band.n_y * band.n_z) as f64;
    consts.k * consts.tx_power_w / (r.powf(consts.eta) * band.frequency_hz.powi(2) * n) * af_sq
}

/// `e^x E₁(x)` for `x > 0`.
pub fn scaled_e1(x: f64) -> f64 {
    if x < 1.0 {
        // power series for E₁
        let euler = 0.577_215_664_901_532_9;
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        (-euler - x.ln() + sum) * x.exp()
    } else {
        // modified Lentz on the continued fraction
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h
    }
}

/// `E[ln(1 + g / X)]` for `X ~ Exp(1)`.
pub fn expected_ln_closed_form(g: f64) -> f64 {
    let euler = 0.577_215_664_901_532_9;
    g.ln() + scaled_e1(g) + euler
}

/// Whether `k` successes in `n` trials is inside the two-sided binomial
/// bounds at the 3σ Gaussian-equivalent level (0.135% per tail).
pub fn within_binomial_3sigma(k: u64, n: u64, p: f64) -> bool {
    use statrs::distribution::{Binomial, DiscreteCDF};
    let tail = 0.001_349_898;
    if p <= 0.0 {
        return k == 0;
    }
    if p >= 1.0 {
        return k == n;
    }
    let dist = Binomial::new(p, n).unwrap();
    let lower = dist.cdf(k);
    let upper = if k == 0 { 1.0 } else { 1.0 - dist.cdf(k - 1) };
    lower > tail && upper > tail
}

/// Finite-horizon value iteration on the Freudenthal grid of step `1/n`
/// over a 3-state simplex, with barycentric interpolation. Returns the
/// value at `b0` after `horizon` iterations.
pub fn grid_value_iteration(model: &PomdpModel, n: usize, horizon: usize, b0: &[f64]) -> f64 {
    assert_eq!(model.num_states(), 3);
    let mut points = Vec::new();
    let mut index = vec![vec![usize::MAX; n + 1]; n + 1];
    for i in 0..=n {
        for j in 0..=(n - i) {
            index[i][j] = points.len();
            points.push([i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64]);
        }
    }
    let interp = |v: &[f64], b: &[f64]| -> f64 {
        // Freudenthal: scale, floor the first two coordinates, pick the triangle.
        let x = b[0] * n as f64;
        let y = b[1] * n as f64;
        let mut i = x.floor() as usize;
        let mut j = y.floor() as usize;
        if i + j > n {
            // clamp numerical overshoot
            if i > 0 {
                i -= 1;
            } else {
                j -= 1;
            }
        }
        let fx = (x - i as f64).clamp(0.0, 1.0);
        let fy = (y - j as f64).clamp(0.0, 1.0);
        if i + j == n {
            return v[index[i][j]];
        }
        if fx + fy <= 1.0 || i + j + 2 > n {
            let v0 = v[index[i][j]];
            let v1 = v[index[i + 1][j]];
            let v2 = v[index[i][j + 1]];
            v0 + fx * (v1 - v0) + fy * (v2 - v0)
        } else {
            let v3 = v[index[i + 1][j + 1]];
            let v1 = v[index[i + 1][j]];
            let v2 = v[index[i][j + 1]];
            // corner (i+1, j+1) with barycentric weights on the upper triangle
            let w3 = fx + fy - 1.0;
            let w1 = 1.0 - fy;
            let w2 = 1.0 - fx;
            w1 * v1 + w2 * v2 + w3 * v3
        }
    };
    let nz = model.num_observations();
    let mut v = vec![0.0; points.len()];
    for _ in 0..horizon {
        let next: Vec<f64> = points
            .iter()
            .map(|b| {
                let belief = Belief::new(b.to_vec()).unwrap();
                let mut best = f64::NEG_INFINITY;
                for a in 0..model.num_actions() {
                    let imm: f64 = (0..3).map(|s| b[s] * model.reward(s, a)).sum();
                    let mut fut = 0.0;
                    for z in 0..nz {
                        let pz: f64 = (0..3).map(|s| b[s] * model.obs(s, a, z)).sum();
                        if pz <= 1e-300 {
                            continue;
                        }
                        let post = belief_update(model, &belief, a, z).unwrap();
                        fut += pz * interp(&v, post.as_slice());
                    }
                    best = best.max(imm + model.discount * fut);
                }
                best
            })
            .collect();
        v = next;
    }
    interp(&v, b0)
}

fn sample<R: Rng>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Mean discounted return of `policy` over `trials` simulated episodes,
/// using the expected reward of the true state each slot.
pub fn simulated_discounted_return(model: &PomdpModel, policy: &Policy, trials: usize, horizon: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let b0 = model.initial_belief();
    let mut returns = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut s = sample(b0.as_slice().iter().copied(), &mut rng);
        let mut b = b0.clone();
        let mut ret = 0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            let a = policy.action(&b);
            ret += disc * model.reward(s, a);
            disc *= model.discount;
            let z = sample((0..model.num_observations()).map(|z| model.obs(s, a, z)), &mut rng);
            b = belief_update(model, &b, a, z).unwrap();
            s = sample((0..model.num_states()).map(|j| model.transition.get(s, j)), &mut rng);
        }
        returns.push(ret);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
