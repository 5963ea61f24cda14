//! Central finite differences, the oracle for [`super::backward`].

use super::{forward, BlockKind, GradientVector, MiniBatch, ModelConfig, ModelError, ModelWeights, Mode, Noise, Result};

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(ModelError::InvalidStep(h));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe)?;
        probe[i] = orig - h;
        let minus = f(&probe)?;
        probe[i] = orig;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Finite-difference gradient of the training loss with the noise held
/// fixed. Running-statistic coordinates do not enter a training-mode loss
/// and are reported as zero.
pub fn fd_gradient(
    weights: &ModelWeights,
    batch: &MiniBatch,
    cfg: &ModelConfig,
    noise: &Noise,
    h: f64,
) -> Result<GradientVector> {
    if !(h > 0.0) {
        return Err(ModelError::InvalidStep(h));
    }
    let layout = weights.layout().clone();
    let mut data = vec![0.0; layout.total()];
    let mut probe = weights.clone();
    for block in layout.blocks().iter().filter(|b| b.kind == BlockKind::Param) {
        for i in block.range() {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let (plus, _) = forward(&probe, batch, cfg, Mode::Train(noise))?;
            probe.data_mut()[i] = orig - h;
            let (minus, _) = forward(&probe, batch, cfg, Mode::Train(noise))?;
            probe.data_mut()[i] = orig;
            data[i] = (plus - minus) / (2.0 * h);
        }
    }
    GradientVector::from_vec(layout, data, batch.n())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{backward, init_weights, Variant};
    use crate::rng;
    use ndarray::Array2;
    use rand::Rng as _;

    #[test]
    fn quadratic_self_test() {
        let g = central_difference(|w| Ok(w[0] * w[0]), &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
        assert!(matches!(
            central_difference(|w| Ok(w[0]), &[1.0], 0.0),
            Err(ModelError::InvalidStep(_))
        ));
    }

    #[test]
    fn zero_step_rejected() {
        let cfg = ModelConfig::new(2, 3);
        let w = init_weights(&cfg).unwrap();
        let batch = MiniBatch::new(Array2::ones((1, 3)), None);
        assert!(fd_gradient(&w, &batch, &cfg, &Noise::none(1, 2), 0.0).is_err());
    }

    fn check(cfg: &ModelConfig, n: usize, seed: u64) {
        let w = init_weights(cfg).unwrap();
        let mut r = rng::seeded(seed);
        let bow = Array2::from_shape_simple_fn((n, cfg.vocab_size), || (r.random::<f64>() * 4.0).floor());
        let embeds = (cfg.variant == Variant::Combined)
            .then(|| Array2::from_shape_simple_fn((n, cfg.embed_dim), || r.random::<f64>() - 0.5));
        let batch = MiniBatch::new(bow, embeds);
        let noise = Noise::sample(n, cfg, &mut r);
        let (_, cache) = forward(&w, &batch, cfg, Mode::Train(&noise)).unwrap();
        let analytic = backward(&cache);
        let numeric = fd_gradient(&w, &batch, cfg, &noise, 1e-5).unwrap();
        for block in w.layout().blocks().iter().filter(|b| b.kind == BlockKind::Param) {
            for i in block.range() {
                let (a, f) = (analytic.data()[i], numeric.data()[i]);
                let ok = if a.abs().max(f.abs()) < 1e-3 {
                    (a - f).abs() <= 1e-7
                } else {
                    (a - f).abs() <= 1e-4 * a.abs().max(f.abs())
                };
                assert!(ok, "{}[{}]: analytic {a} numeric {f}", block.name, i - block.offset);
            }
        }
    }

    #[test]
    fn gradient_matches_fd_with_batch_norm() {
        let cfg = ModelConfig {
            hidden_sizes: vec![6, 5],
            seed: 3,
            ..ModelConfig::new(3, 10)
        };
        check(&cfg, 5, 1);
    }

    #[test]
    fn gradient_matches_fd_with_learned_priors_and_dropout() {
        let cfg = ModelConfig {
            hidden_sizes: vec![7],
            learn_priors: true,
            batch_norm: false,
            dropout: 0.3,
            seed: 4,
            ..ModelConfig::new(4, 9)
        };
        check(&cfg, 6, 2);
    }

    #[test]
    fn gradient_matches_fd_combined_variant() {
        let cfg = ModelConfig {
            hidden_sizes: vec![6, 6],
            variant: Variant::Combined,
            embed_dim: 5,
            batch_norm: true,
            learn_priors: true,
            seed: 5,
            ..ModelConfig::new(3, 8)
        };
        check(&cfg, 4, 3);
    }
}
