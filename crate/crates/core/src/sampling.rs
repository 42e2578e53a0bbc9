//! Sampling vectors and expected-residual constants.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::operator::{FiniteSumOperator, SamplingVector};
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub enum SamplingScheme {
    Full { n: usize },
    Minibatch { n: usize, tau: usize },
    SingleElement { probs: Vec<f64>, index: WeightedIndex<f64> },
}

impl SamplingScheme {
    pub fn full(n: usize) -> Self {
        SamplingScheme::Full { n }
    }

    pub fn minibatch(n: usize, tau: usize) -> Result<Self> {
        if n == 0 || tau == 0 || tau > n {
            return Err(Error::config("scheme.tau", format!("need 1 <= tau <= n, got tau={tau}, n={n}")));
        }
        if tau == n {
            return Ok(SamplingScheme::Full { n });
        }
        Ok(SamplingScheme::Minibatch { n, tau })
    }

    pub fn single_element(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::config("scheme.probs", "probabilities must be positive"));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::config("scheme.probs", format!("probabilities sum to {s}, not 1")));
        }
        let index = WeightedIndex::new(&probs).map_err(|e| Error::config("scheme.probs", e.to_string()))?;
        Ok(SamplingScheme::SingleElement { probs, index })
    }

    pub fn uniform_single(n: usize) -> Result<Self> {
        Self::single_element(vec![1.0 / n as f64; n])
    }

    pub fn n(&self) -> usize {
        match self {
            SamplingScheme::Full { n } | SamplingScheme::Minibatch { n, .. } => *n,
            SamplingScheme::SingleElement { probs, .. } => probs.len(),
        }
    }

    /// Number of components touched per draw.
    pub fn batch_size(&self) -> usize {
        match self {
            SamplingScheme::Full { n } => *n,
            SamplingScheme::Minibatch { tau, .. } => *tau,
            SamplingScheme::SingleElement { .. } => 1,
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, SamplingScheme::Full { .. })
    }

    pub fn draw(&self, rng: &mut Rng) -> SamplingVector {
        match self {
            SamplingScheme::Full { n } => SamplingVector::ones(*n),
            SamplingScheme::Minibatch { n, tau } => {
                let mut idx: Vec<usize> = (0..*n).collect();
                let (chosen, _) = idx.partial_shuffle(rng, *tau);
                chosen.sort_unstable();
                let w = *n as f64 / *tau as f64;
                SamplingVector { entries: chosen.iter().map(|&i| (i, w)).collect() }
            }
            SamplingScheme::SingleElement { probs, index } => {
                let j = index.sample(rng);
                SamplingVector { entries: vec![(j, 1.0 / probs[j])] }
            }
        }
    }

    /// Whole support with probabilities. Minibatch support grows as C(n, τ).
    pub fn support(&self) -> Vec<(f64, SamplingVector)> {
        match self {
            SamplingScheme::Full { n } => vec![(1.0, SamplingVector::ones(*n))],
            SamplingScheme::SingleElement { probs, .. } => probs
                .iter()
                .enumerate()
                .map(|(j, p)| (*p, SamplingVector { entries: vec![(j, 1.0 / p)] }))
                .collect(),
            SamplingScheme::Minibatch { n, tau } => {
                let subsets = combinations(*n, *tau);
                let p = 1.0 / subsets.len() as f64;
                let w = *n as f64 / *tau as f64;
                subsets
                    .into_iter()
                    .map(|s| (p, SamplingVector { entries: s.into_iter().map(|i| (i, w)).collect() }))
                    .collect()
            }
        }
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// (δ, σ*²) for τ-minibatch sampling. `star_norms[i]` is ‖F_i(x*)‖.
pub fn er_constants_minibatch(l: &[f64], star_norms: &[f64], n: usize, tau: usize) -> Result<(f64, f64)> {
    if l.len() != n || star_norms.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: l.len().min(star_norms.len()) });
    }
    if tau == 0 || tau > n {
        return Err(Error::config("scheme.tau", "need 1 <= tau <= n"));
    }
    if n == 1 {
        log::warn!("expected-residual constants degenerate for n = 1");
        return Ok((0.0, 0.0));
    }
    let (nf, tf) = (n as f64, tau as f64);
    let c = (nf - tf) / (nf - 1.0) / (nf * tf);
    let sl: f64 = l.iter().map(|v| v * v).sum();
    let ss: f64 = star_norms.iter().map(|v| v * v).sum();
    Ok((2.0 * c * sl, c * ss))
}

/// (δ, σ*²) for single-element sampling with probabilities `probs`.
pub fn er_constants_single_element(l: &[f64], star_norms: &[f64], probs: &[f64]) -> Result<(f64, f64)> {
    let n = probs.len();
    if l.len() != n || star_norms.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: l.len().min(star_norms.len()) });
    }
    if probs.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::config("scheme.probs", "zero probability"));
    }
    let n2 = (n * n) as f64;
    let delta = 2.0 / n2 * l.iter().zip(probs).map(|(li, p)| li * li / p).sum::<f64>();
    let sigma = 1.0 / n2 * star_norms.iter().zip(probs).map(|(s, p)| s * s / p).sum::<f64>();
    Ok((delta, sigma))
}

/// p_i = L_i / Σ L_j.
pub fn importance_probabilities(l: &[f64]) -> Result<Vec<f64>> {
    let s: f64 = l.iter().sum();
    if l.is_empty() || l.iter().any(|v| *v < 0.0 || !v.is_finite()) || !(s > 0.0) {
        return Err(Error::config("scheme.importance", "Lipschitz constants must be nonnegative and not all zero"));
    }
    Ok(l.iter().map(|v| v / s).collect())
}

/// Expected-residual constants of an operator under a scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErConstants {
    pub delta: f64,
    /// `None` when the operator has no known solution.
    pub sigma_star_sq: Option<f64>,
}

pub fn er_constants(op: &dyn FiniteSumOperator, scheme: &SamplingScheme) -> Result<ErConstants> {
    let n = op.n();
    if scheme.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: scheme.n() });
    }
    let l = op
        .meta()
        .component_lipschitz
        .clone()
        .ok_or_else(|| Error::config("problem", "component Lipschitz constants unknown"))?;
    let stars: Option<Vec<f64>> = op.meta().x_star.as_ref().map(|xs| (0..n).map(|i| op.component(i, xs).norm()).collect());
    let zeros = vec![0.0; n];
    let s = stars.as_deref().unwrap_or(&zeros);
    let (delta, sigma) = match scheme {
        SamplingScheme::Full { .. } => (0.0, 0.0),
        SamplingScheme::Minibatch { tau, .. } => er_constants_minibatch(&l, s, n, *tau)?,
        SamplingScheme::SingleElement { probs, .. } => er_constants_single_element(&l, s, probs)?,
    };
    Ok(ErConstants { delta, sigma_star_sq: stars.map(|_| sigma) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_is_all_ones() {
        let mut rng = Rng::new(0);
        assert_eq!(SamplingScheme::full(3).draw(&mut rng), SamplingVector::ones(3));
        assert!(SamplingScheme::minibatch(4, 4).unwrap().is_full());
    }

    #[test]
    fn support_means_are_one() {
        let schemes = vec![
            SamplingScheme::minibatch(2, 1).unwrap(),
            SamplingScheme::minibatch(6, 3).unwrap(),
            SamplingScheme::single_element(vec![0.9, 0.1]).unwrap(),
            SamplingScheme::full(5),
        ];
        for s in schemes {
            let n = s.n();
            let mut ev = vec![0.0; n];
            let mut tot = 0.0;
            for (p, v) in s.support() {
                tot += p;
                for (i, x) in v.to_dense(n).into_iter().enumerate() {
                    ev[i] += p * x;
                }
            }
            assert!((tot - 1.0).abs() < 1e-12);
            for e in ev {
                assert!((e - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_element_outcomes() {
        let s = SamplingScheme::single_element(vec![0.9, 0.1]).unwrap();
        let sup = s.support();
        assert_eq!(sup[0].1.to_dense(2), vec![1.0 / 0.9, 0.0]);
        assert_eq!(sup[1].1.to_dense(2), vec![0.0, 10.0]);
    }

    #[test]
    fn minibatch_draw_shape() {
        let s = SamplingScheme::minibatch(10, 3).unwrap();
        let mut rng = Rng::new(1);
        for _ in 0..50 {
            let v = s.draw(&mut rng);
            assert_eq!(v.entries.len(), 3);
            assert!(v.entries.windows(2).all(|w| w[0].0 < w[1].0));
            assert!(v.entries.iter().all(|e| (e.1 - 10.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn invalid_schemes() {
        assert!(SamplingScheme::minibatch(3, 0).is_err());
        assert!(SamplingScheme::minibatch(3, 4).is_err());
        assert!(SamplingScheme::single_element(vec![0.5, 0.0, 0.5]).is_err());
        assert!(SamplingScheme::single_element(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn minibatch_constants() {
        assert_eq!(er_constants_minibatch(&[1.0, 2.0], &[1.0, 1.0], 2, 2).unwrap(), (0.0, 0.0));
        assert_eq!(er_constants_minibatch(&[1.0, 1.0], &[1.0, 1.0], 2, 1).unwrap(), (2.0, 1.0));
        assert_eq!(er_constants_minibatch(&[3.0], &[1.0], 1, 1).unwrap(), (0.0, 0.0));
        let (d1, _) = er_constants_minibatch(&[1.0, 1.0, 1.0], &[0.0; 3], 3, 1).unwrap();
        let s2 = 2f64.sqrt();
        let (d2, _) = er_constants_minibatch(&[s2, s2, s2], &[0.0; 3], 3, 1).unwrap();
        assert!((d2 - 2.0 * d1).abs() < 1e-14);
    }

    #[test]
    fn single_element_constants() {
        let l = [1.0, 2.0, 3.0, 4.0];
        let (d, s) = er_constants_single_element(&l, &[0.0; 4], &[0.25; 4]).unwrap();
        let sl: f64 = l.iter().map(|v| v * v).sum();
        assert!((d - 2.0 / 4.0 * sl).abs() < 1e-12);
        assert_eq!(s, 0.0);
        assert!(er_constants_single_element(&l, &[0.0; 4], &[0.5, 0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn importance_ratio_on_spike() {
        let mut l = [0.0; 10];
        l[9] = 1.0;
        // importance sampling needs positive probabilities; perturb the zeros slightly
        let l: Vec<f64> = l.iter().map(|v| v + 1e-9).collect();
        let p = importance_probabilities(&l).unwrap();
        let (dis, _) = er_constants_single_element(&l, &[0.0; 10], &p).unwrap();
        let (dus, _) = er_constants_single_element(&l, &[0.0; 10], &[0.1; 10]).unwrap();
        assert!((dis / dus - 0.1).abs() < 1e-6);
    }

    #[test]
    fn importance_examples() {
        assert_eq!(importance_probabilities(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        let p = importance_probabilities(&[2.0; 5]).unwrap();
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-15));
        assert!(importance_probabilities(&[0.0, 0.0]).is_err());
    }
}
