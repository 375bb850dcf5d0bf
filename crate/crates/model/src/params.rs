//! Model parameters: per-layer weight blocks, seeded initialization, and the
//! named-flat-array form used by checkpoints.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;

use crate::{ModelError, Result};

/// Direction kernel `K(theta) = sum_l kappa[l] * cos(l*theta - mu[l])`.
///
/// With a single harmonic at `kappa = [1]`, `mu = [0]` the kernel is the
/// constant 1 and message passing loses all direction sensitivity.
pub fn kernel_eval(theta: f64, kappa: &[f64], mu: &[f64]) -> f64 {
    kappa
        .iter()
        .zip(mu)
        .enumerate()
        .map(|(l, (&k, &m))| k * (l as f64 * theta - m).cos())
        .sum()
}

/// One layer's weights. Matrices are stored input-major (`[in_dim * out]`
/// flattened with the input index on rows), so a row-major feature matrix
/// multiplies them directly. The attention vector is kept in its three
/// logical segments; checkpoints concatenate them into a single `a` array.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Self-transform, `[f_in * f_out]`.
    pub w0: Vec<f64>,
    /// Neighbor-message transform, `[f_in * f_out]`.
    pub wn: Vec<f64>,
    /// Attention projection, `[f_in * d]` with `d = f_out`.
    pub wh: Vec<f64>,
    /// Attention weights on the projected source node, `[d]`.
    pub a_src: Vec<f64>,
    /// Attention weights on the projected neighbor, `[d]`.
    pub a_dst: Vec<f64>,
    /// Attention weights on the edge geometry `[distance, sin, cos]`.
    pub a_geo: Vec<f64>,
    /// Kernel amplitudes, one per harmonic.
    pub kappa: Vec<f64>,
    /// Kernel phases, one per harmonic.
    pub mu: Vec<f64>,
}

/// All weights of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimateGraphParams {
    pub layers: Vec<LayerParams>,
    /// Classifier weights, `[f_last * n_classes]`.
    pub wc: Vec<f64>,
    /// Classifier bias, `[n_classes]`.
    pub bc: Vec<f64>,
    /// Feature widths per stage: `dims[0]` is the input width, `dims[l+1]`
    /// the output width of layer `l`.
    pub dims: Vec<usize>,
    pub n_classes: usize,
}

fn uniform_block(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    (0..len).map(|_| dist.sample(rng)).collect()
}

impl ClimateGraphParams {
    /// Seeded initialization: every weight block is symmetric uniform scaled
    /// by `1/sqrt(fan_in)`; the kernel starts in the isotropic regime
    /// (`kappa[0] = 1`, higher harmonics small, phases zero) and the
    /// classifier bias at zero.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        n_layers: usize,
        harmonics: usize,
        n_classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut dims = vec![input_dim];
        dims.extend(std::iter::repeat_n(hidden_dim, n_layers));
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (f_in, f_out) = (dims[l], dims[l + 1]);
            let d = f_out;
            let a_fan = 2 * d + 3;
            let small = Uniform::new_inclusive(-0.1, 0.1);
            layers.push(LayerParams {
                w0: uniform_block(rng, f_in * f_out, f_in),
                wn: uniform_block(rng, f_in * f_out, f_in),
                wh: uniform_block(rng, f_in * d, f_in),
                a_src: uniform_block(rng, d, a_fan),
                a_dst: uniform_block(rng, d, a_fan),
                a_geo: uniform_block(rng, 3, a_fan),
                kappa: std::iter::once(1.0)
                    .chain((1..harmonics).map(|_| small.sample(rng)))
                    .collect(),
                mu: vec![0.0; harmonics],
            });
        }
        let f_last = *dims.last().unwrap();
        ClimateGraphParams {
            layers,
            wc: uniform_block(rng, f_last * n_classes, f_last),
            bc: vec![0.0; n_classes],
            dims,
            n_classes,
        }
    }

    /// Ordered references to every flat parameter array. The order is the
    /// canonical one shared by the optimizer and the gradient checker.
    pub fn arrays(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(&layer.w0);
            out.push(&layer.wn);
            out.push(&layer.wh);
            out.push(&layer.a_src);
            out.push(&layer.a_dst);
            out.push(&layer.a_geo);
            out.push(&layer.kappa);
            out.push(&layer.mu);
        }
        out.push(&self.wc);
        out.push(&self.bc);
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.w0);
            out.push(&mut layer.wn);
            out.push(&mut layer.wh);
            out.push(&mut layer.a_src);
            out.push(&mut layer.a_dst);
            out.push(&mut layer.a_geo);
            out.push(&mut layer.kappa);
            out.push(&mut layer.mu);
        }
        out.push(&mut self.wc);
        out.push(&mut self.bc);
        out
    }

    /// Checkpoint form: named flat arrays, with the three attention segments
    /// concatenated into one `a` array per layer.
    pub fn to_named(&self) -> BTreeMap<String, Vec<f64>> {
        let mut map = BTreeMap::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut a = layer.a_src.clone();
            a.extend_from_slice(&layer.a_dst);
            a.extend_from_slice(&layer.a_geo);
            map.insert(format!("layer{i}.w0"), layer.w0.clone());
            map.insert(format!("layer{i}.wn"), layer.wn.clone());
            map.insert(format!("layer{i}.wh"), layer.wh.clone());
            map.insert(format!("layer{i}.a"), a);
            map.insert(format!("layer{i}.kappa"), layer.kappa.clone());
            map.insert(format!("layer{i}.mu"), layer.mu.clone());
        }
        map.insert("classifier.wc".into(), self.wc.clone());
        map.insert("classifier.bc".into(), self.bc.clone());
        map
    }

    /// Rebuild parameters from checkpoint arrays, validating every length
    /// against the dimension chain.
    pub fn from_named(
        map: &BTreeMap<String, Vec<f64>>,
        dims: &[usize],
        harmonics: usize,
        n_classes: usize,
    ) -> Result<Self> {
        let fetch = |name: &str, want: usize| -> Result<Vec<f64>> {
            let arr = map
                .get(name)
                .ok_or_else(|| ModelError::CheckpointMissing(name.to_string()))?;
            if arr.len() != want {
                return Err(ModelError::CheckpointMismatch {
                    name: name.to_string(),
                    got: arr.len(),
                    want,
                });
            }
            Ok(arr.clone())
        };
        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let (f_in, f_out) = (dims[i], dims[i + 1]);
            let d = f_out;
            let a = fetch(&format!("layer{i}.a"), 2 * d + 3)?;
            layers.push(LayerParams {
                w0: fetch(&format!("layer{i}.w0"), f_in * f_out)?,
                wn: fetch(&format!("layer{i}.wn"), f_in * f_out)?,
                wh: fetch(&format!("layer{i}.wh"), f_in * d)?,
                a_src: a[..d].to_vec(),
                a_dst: a[d..2 * d].to_vec(),
                a_geo: a[2 * d..].to_vec(),
                kappa: fetch(&format!("layer{i}.kappa"), harmonics)?,
                mu: fetch(&format!("layer{i}.mu"), harmonics)?,
            });
        }
        let f_last = *dims.last().unwrap();
        Ok(ClimateGraphParams {
            layers,
            wc: fetch("classifier.wc", f_last * n_classes)?,
            bc: fetch("classifier.bc", n_classes)?,
            dims: dims.to_vec(),
            n_classes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn single_constant_harmonic_is_the_unit_kernel() {
        for theta in [-3.1, -1.0, 0.0, 0.4, 2.9] {
            assert_eq!(kernel_eval(theta, &[1.0], &[0.0]), 1.0);
        }
    }

    #[test]
    fn second_harmonic_alone_flips_sign_across_pi() {
        let kappa = [0.0, 1.0];
        let mu = [0.0, 0.0];
        assert!((kernel_eval(0.0, &kappa, &mu) - 1.0).abs() < 1e-15);
        assert!((kernel_eval(std::f64::consts::PI, &kappa, &mu) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn phase_shift_identity_holds() {
        let kappa = [0.7, -0.3, 0.2, 0.05];
        let mu = [0.1, -0.4, 0.9, 1.3];
        for i in 0..40 {
            let theta = -3.0 + 0.15 * i as f64;
            for phi in [0.3, -1.1, 2.5] {
                let shifted_mu: Vec<f64> =
                    mu.iter().enumerate().map(|(l, &m)| m + l as f64 * phi).collect();
                let lhs = kernel_eval(theta + phi, &kappa, &shifted_mu);
                let rhs = kernel_eval(theta, &kappa, &mu);
                assert!((lhs - rhs).abs() < 1e-12, "theta {theta} phi {phi}");
            }
        }
    }

    #[test]
    fn init_starts_isotropic_with_bounded_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ClimateGraphParams::init(5, 8, 2, 4, 3, &mut rng);
        assert_eq!(p.dims, vec![5, 8, 8]);
        for layer in &p.layers {
            assert_eq!(layer.kappa[0], 1.0);
            assert!(layer.kappa[1..].iter().all(|k| k.abs() <= 0.1));
            assert!(layer.mu.iter().all(|&m| m == 0.0));
        }
        let bound0 = 1.0 / 5f64.sqrt();
        assert!(p.layers[0].w0.iter().all(|w| w.abs() <= bound0));
        assert!(p.bc.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn named_round_trip_preserves_every_array() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ClimateGraphParams::init(4, 6, 2, 3, 2, &mut rng);
        let named = p.to_named();
        assert!(named.contains_key("layer1.a"));
        assert_eq!(named["layer0.a"].len(), 2 * 6 + 3);
        let q = ClimateGraphParams::from_named(&named, &p.dims, 3, 2).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn named_form_rejects_wrong_lengths_and_missing_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ClimateGraphParams::init(4, 6, 1, 2, 2, &mut rng);
        let mut named = p.to_named();
        named.get_mut("layer0.w0").unwrap().pop();
        assert!(matches!(
            ClimateGraphParams::from_named(&named, &p.dims, 2, 2),
            Err(ModelError::CheckpointMismatch { .. })
        ));
        let mut named = p.to_named();
        named.remove("classifier.bc");
        assert!(matches!(
            ClimateGraphParams::from_named(&named, &p.dims, 2, 2),
            Err(ModelError::CheckpointMissing(_))
        ));
    }
}
