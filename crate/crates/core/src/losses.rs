//! Critic objective with gradient penalty, generator objective, perceptual
//! distance and likelihood-based balancing of regularizer terms.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use texgan_tensor::{Graph, Real, Tensor, Var};

use crate::error::{CoreError, Result};
use crate::nn::{apply_network, BoundParams, NetworkSpec};
use crate::seed;

/// Added under the square root of the per-sample gradient norm.
pub const GRAD_NORM_EPS: f64 = 1e-12;

/// One `ε ~ U[0, 1]` per batch element, drawn from `seed`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InterpolationRule {
    pub seed: u64,
}

impl InterpolationRule {
    pub fn epsilons(&self, n: usize) -> Vec<f64> {
        let mut rng = seed::rng(self.seed, "interpolate", 0);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }
}

/// `X̃ᵢ = εᵢ·Xᵢ + (1 − εᵢ)·X̂ᵢ` with one `ε` per batch element.
pub fn interpolate_with<T: Real>(x: &Tensor<T>, x_hat: &Tensor<T>, eps: &[f64]) -> Result<Tensor<T>> {
    if x.shape() != x_hat.shape() || x.shape().first() != Some(&eps.len()) {
        return Err(CoreError::Shape {
            layer: "interpolate".into(),
            detail: format!("{:?} vs {:?} with {} epsilons", x.shape(), x_hat.shape(), eps.len()),
        });
    }
    let per = x.len() / eps.len();
    let data = x
        .data()
        .iter()
        .zip(x_hat.data())
        .enumerate()
        .map(|(i, (&a, &b))| {
            let e = T::of(eps[i / per]);
            e * a + (T::one() - e) * b
        })
        .collect();
    Ok(Tensor::new(x.shape().to_vec(), data)?)
}

pub fn interpolate<T: Real>(x: &Tensor<T>, x_hat: &Tensor<T>, rule: &InterpolationRule) -> Result<Tensor<T>> {
    let n = x.shape().first().copied().unwrap_or(0);
    interpolate_with(x, x_hat, &rule.epsilons(n))
}

/// Critic objective `em + mu·gp` as graph nodes, plus diagnostics.
#[derive(Clone, Debug)]
pub struct CriticLossTerms {
    /// `mean D(X̂) − mean D(X)`.
    pub em: Var,
    /// `mean (‖∇D(X̃)‖ − 1)²`.
    pub gp: Var,
    pub mu: f64,
    pub total: Var,
    /// Mean per-sample `‖∇D(X̃)‖`.
    pub grad_norm: f64,
}

/// Builds the critic loss on a higher-order `graph`. `x` and `x_hat` enter as
/// constants (the generated batch carries no generator gradient); the
/// penalty is differentiable with respect to the critic parameters.
#[allow(clippy::too_many_arguments)]
pub fn critic_loss<T: Real>(
    graph: &Graph<T>,
    critic: &NetworkSpec,
    params: &BoundParams,
    x: &Tensor<T>,
    x_hat: &Tensor<T>,
    mu: f64,
    rule: &InterpolationRule,
) -> Result<CriticLossTerms> {
    let x_tilde = interpolate(x, x_hat, rule)?;
    let real = graph.constant(x.clone());
    let fake = graph.constant(x_hat.clone());
    let d_real = apply_network(critic, params, graph, real)?;
    let d_fake = apply_network(critic, params, graph, fake)?;
    let em = {
        let a = graph.mean(d_fake)?;
        let b = graph.mean(d_real)?;
        graph.sub(a, b)?
    };
    let (gp, norms) = gradient_penalty(graph, critic, params, x_tilde)?;
    let weighted = graph.scale(gp, mu)?;
    let total = graph.add(em, weighted)?;
    let norms = graph.value(norms);
    let grad_norm = norms.data().iter().map(|v| v.as_f64()).sum::<f64>() / norms.len() as f64;
    Ok(CriticLossTerms {
        em,
        gp,
        mu,
        total,
        grad_norm,
    })
}

/// `mean (‖∇_X̃ D(X̃)‖ − 1)²` and the per-sample norms. Samples are scored
/// independently, so the gradient of `Σ D(X̃ᵢ)` splits into per-sample
/// gradients.
pub fn gradient_penalty<T: Real>(
    graph: &Graph<T>,
    critic: &NetworkSpec,
    params: &BoundParams,
    x_tilde: Tensor<T>,
) -> Result<(Var, Var)> {
    let xt = graph.variable("x_tilde", x_tilde);
    let scores = apply_network(critic, params, graph, xt)?;
    let total = graph.sum(scores)?;
    let grad = graph.input_gradient_node(total, xt)?;
    let norms = graph.row_norms(grad, GRAD_NORM_EPS)?;
    let dev = graph.shift(norms, -1.0)?;
    let sq = graph.square(dev)?;
    Ok((graph.mean(sq)?, norms))
}

/// Compares `u·∇D(x)` from the exact input gradient with the central
/// difference `(D(x + hu) − D(x − hu)) / 2h` along a random unit direction
/// `u` drawn from `seed`. Returns `(exact, finite_difference)` per sample.
pub fn directional_penalty_check(
    critic: &NetworkSpec,
    params: &crate::nn::ParamStore<f64>,
    x: &Tensor<f64>,
    h: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let n = x.shape()[0];
    let per = x.len() / n;
    let mut rng = seed::rng(seed, "gp-direction", 0);
    let mut u: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    for chunk in u.chunks_mut(per) {
        let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
        chunk.iter_mut().for_each(|v| *v /= norm);
    }
    let graph = Graph::<f64>::new();
    let bound = params.bind(&graph, false);
    let xv = graph.variable("x", x.clone());
    let scores = apply_network(critic, &bound, &graph, xv)?;
    let total = graph.sum(scores)?;
    let grad = graph.backward(total, &[xv])?.remove(0);
    let shifted = |sign: f64| -> Result<Tensor<f64>> {
        let data = x.data().iter().zip(&u).map(|(a, d)| a + sign * h * d).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        crate::nn::forward(critic, params, &t)
    };
    let (plus, minus) = (shifted(1.0)?, shifted(-1.0)?);
    Ok((0..n)
        .map(|i| {
            let exact: f64 = (0..per).map(|j| grad.data()[i * per + j] * u[i * per + j]).sum();
            let fd = (plus.data()[i] - minus.data()[i]) / (2.0 * h);
            (exact, fd)
        })
        .collect())
}

/// Mean squared difference of frozen feature maps `Ψ(X)` and `Ψ(X̂)`.
pub fn perceptual_distance<T: Real>(
    graph: &Graph<T>,
    psi: &NetworkSpec,
    params: &BoundParams,
    x: Var,
    x_hat: Var,
) -> Result<Var> {
    if graph.shape(x) != graph.shape(x_hat) {
        return Err(CoreError::Shape {
            layer: "perceptual".into(),
            detail: format!("{:?} vs {:?}", graph.shape(x), graph.shape(x_hat)),
        });
    }
    let fx = apply_network(psi, params, graph, x)?;
    let fy = apply_network(psi, params, graph, x_hat)?;
    Ok(graph.mse(fx, fy)?)
}

/// Learnable log-variances `sᵢ`, one per balanced loss term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleWeights {
    pub s: BTreeMap<String, f64>,
}

impl MleWeights {
    pub fn new(names: &[&str], init: f64) -> Self {
        Self {
            s: names.iter().map(|n| (n.to_string(), init)).collect(),
        }
    }

    /// Registers each `sᵢ` as a scalar graph variable named `mle.<term>`.
    pub fn bind<T: Real>(&self, graph: &Graph<T>) -> BTreeMap<String, Var> {
        self.s
            .iter()
            .map(|(name, &v)| (name.clone(), graph.variable(&format!("mle.{name}"), Tensor::scalar(T::of(v)))))
            .collect()
    }

    /// Effective weight `exp(−sᵢ)`.
    pub fn effective(&self, term: &str) -> Option<f64> {
        self.s.get(term).map(|s| (-s).exp())
    }
}

/// `Σᵢ exp(−sᵢ)·Lᵢ + sᵢ`.
pub fn mle_combine<T: Real>(graph: &Graph<T>, terms: &[(&str, Var)], weights: &BTreeMap<String, Var>) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &(name, loss) in terms {
        let s = *weights.get(name).ok_or_else(|| CoreError::MissingWeight(name.to_string()))?;
        let neg = graph.neg(s)?;
        let w = graph.exp(neg)?;
        let weighted = graph.mul(w, loss)?;
        let term = graph.add(weighted, s)?;
        acc = Some(match acc {
            Some(a) => graph.add(a, term)?,
            None => term,
        });
    }
    acc.ok_or_else(|| CoreError::Config("no loss terms to combine".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    /// MSE weight.
    pub lambda1: f64,
    /// Perceptual weight.
    pub lambda2: f64,
    pub mle_enabled: bool,
}

impl RegularizerConfig {
    pub fn with_mle() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            mle_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(CoreError::Config(format!("regularizer weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
            mle_enabled: false,
        }
    }
}

/// Named generator loss nodes.
#[derive(Clone, Debug)]
pub struct LossBundle {
    /// `−mean D(X̂)`; absent when training without a critic.
    pub adversarial: Option<Var>,
    pub mse: Var,
    pub perceptual: Var,
    pub combined: Var,
    pub x_hat: Var,
}

/// Networks and bound parameters seen by the generator objective. The
/// critic and perceptual parameters must be bound as constants.
pub struct GeneratorLossInputs<'a> {
    pub generator: (&'a NetworkSpec, &'a BoundParams),
    pub critic: Option<(&'a NetworkSpec, &'a BoundParams)>,
    pub perceptual: (&'a NetworkSpec, &'a BoundParams),
}

/// `adversarial + R`, where `R = λ₁·mse + λ₂·perceptual`, or with balancing
/// enabled `R = mle_combine({λ₁·mse, λ₂·perceptual})`. Terms with a zero
/// weight are left out of the balanced sum (their optimal `s` would diverge).
pub fn generator_loss<T: Real>(
    graph: &Graph<T>,
    nets: &GeneratorLossInputs<'_>,
    x: Var,
    x_fbp: Var,
    config: &RegularizerConfig,
    weights: Option<&BTreeMap<String, Var>>,
) -> Result<LossBundle> {
    config.validate()?;
    let (g_spec, g_params) = nets.generator;
    let x_hat = apply_network(g_spec, g_params, graph, x_fbp)?;
    let mse = graph.mse(x, x_hat)?;
    let perceptual = perceptual_distance(graph, nets.perceptual.0, nets.perceptual.1, x, x_hat)?;
    let wmse = graph.scale(mse, config.lambda1)?;
    let wperc = graph.scale(perceptual, config.lambda2)?;
    let regularizer = if config.mle_enabled {
        let weights = weights.ok_or_else(|| CoreError::MissingWeight("mse".into()))?;
        let mut terms = Vec::new();
        if config.lambda1 > 0.0 {
            terms.push(("mse", wmse));
        }
        if config.lambda2 > 0.0 {
            terms.push(("perceptual", wperc));
        }
        mle_combine(graph, &terms, weights)?
    } else {
        graph.add(wmse, wperc)?
    };
    let adversarial = match nets.critic {
        Some((d_spec, d_params)) => {
            let scores = apply_network(d_spec, d_params, graph, x_hat)?;
            let m = graph.mean(scores)?;
            Some(graph.neg(m)?)
        }
        None => None,
    };
    let combined = match adversarial {
        Some(a) => graph.add(a, regularizer)?,
        None => regularizer,
    };
    Ok(LossBundle {
        adversarial,
        mse,
        perceptual,
        combined,
        x_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let x = Tensor::<f64>::full(&[2, 1, 2, 2], 0.0);
        let y = Tensor::<f64>::full(&[2, 1, 2, 2], 2.0);
        assert_eq!(interpolate_with(&x, &y, &[1.0, 1.0]).unwrap(), x);
        assert_eq!(interpolate_with(&x, &y, &[0.0, 0.0]).unwrap(), y);
        let mid = interpolate_with(&x, &y, &[0.5, 0.5]).unwrap();
        assert!(mid.data().iter().all(|&v| v == 1.0));
        assert!(interpolate_with(&x, &Tensor::zeros(&[2, 1, 2, 3]), &[0.5, 0.5]).is_err());
    }

    #[test]
    fn epsilons_are_seeded_and_in_unit_interval() {
        let rule = InterpolationRule { seed: 4 };
        let e = rule.epsilons(100);
        assert_eq!(e, rule.epsilons(100));
        assert!(e.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn mle_with_zero_log_variances_is_a_plain_sum() {
        let g = Graph::<f64>::new();
        let a = g.constant(Tensor::scalar(2.0));
        let b = g.constant(Tensor::scalar(0.5));
        let w = MleWeights::new(&["a", "b"], 0.0).bind(&g);
        let c = mle_combine(&g, &[("a", a), ("b", b)], &w).unwrap();
        assert_eq!(g.value(c).item(), 2.5);
        assert!(matches!(
            mle_combine(&g, &[("c", a)], &w),
            Err(CoreError::MissingWeight(_))
        ));
    }
}
