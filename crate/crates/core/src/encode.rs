//! Input binarisation: quantile thermometer codes, median thresholding and
//! the fixed random ±1 expansion layer.

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{matvec_pm1, sign_to_bits, BitVector, PackedBitMatrix};
use crate::error::{ensure_dim, Error, Result};

/// Per-feature thermometer thresholds fitted on training rows.
///
/// Feature `f` occupies output bits `f·bits .. (f+1)·bits`; bit `k` is +1
/// iff the value is strictly above threshold `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermometerCodec<F> {
    bits_per_feature: usize,
    thresholds: Vec<F>,
}

impl<F: Float> ThermometerCodec<F> {
    /// Rebuilds a codec from stored thresholds, feature-major.
    pub fn from_thresholds(bits_per_feature: usize, thresholds: Vec<F>) -> Result<Self> {
        if bits_per_feature == 0 || !thresholds.len().is_multiple_of(bits_per_feature) {
            return Err(Error::Config(
                "thermometer threshold table has wrong shape".into(),
            ));
        }
        for t in thresholds.chunks(bits_per_feature) {
            if t.iter().any(|x| !x.is_finite()) || t.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Config(
                    "thermometer thresholds must be finite and sorted".into(),
                ));
            }
        }
        Ok(Self {
            bits_per_feature,
            thresholds,
        })
    }

    pub fn bits_per_feature(&self) -> usize {
        self.bits_per_feature
    }

    pub fn features(&self) -> usize {
        self.thresholds.len() / self.bits_per_feature
    }

    pub fn encoded_width(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[F] {
        &self.thresholds
    }

    pub fn feature_thresholds(&self, f: usize) -> &[F] {
        &self.thresholds[f * self.bits_per_feature..(f + 1) * self.bits_per_feature]
    }

    pub fn encode(&self, row: &[F]) -> Result<BitVector> {
        ensure_dim("encode_thermometer", self.features(), row.len())?;
        let mut out = BitVector::minus_ones(self.encoded_width());
        for (f, &x) in row.iter().enumerate() {
            let base = f * self.bits_per_feature;
            for (k, &t) in self.feature_thresholds(f).iter().enumerate() {
                if x > t {
                    out.set(base + k, true);
                }
            }
        }
        Ok(out)
    }
}

/// Fits equal-mass thresholds per feature at levels `k/(bits+1)`,
/// `k = 1..=bits`, using the nearest-rank quantile.
///
/// `rows` is row-major with `features` columns.
pub fn fit_thermometer<F: Float>(
    rows: &[F],
    features: usize,
    bits: usize,
) -> Result<ThermometerCodec<F>> {
    if bits == 0 {
        return Err(Error::Config("thermometer needs at least one bit".into()));
    }
    if features == 0 || rows.is_empty() {
        return Err(Error::Data("cannot fit an encoder on empty data".into()));
    }
    if !rows.len().is_multiple_of(features) {
        return Err(Error::dim(
            "fit_thermometer",
            features,
            rows.len() % features,
        ));
    }
    if rows.iter().any(|x| !x.is_finite()) {
        return Err(Error::Data("non-finite value in training features".into()));
    }
    let n = rows.len() / features;
    let mut column = Vec::with_capacity(n);
    let mut thresholds = Vec::with_capacity(features * bits);
    for f in 0..features {
        column.clear();
        column.extend(rows.iter().skip(f).step_by(features).copied());
        column.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        for k in 1..=bits {
            // nearest rank: ceil(k·n / (bits+1)), 1-based
            let rank = ((k * n).div_ceil(bits + 1)).max(1);
            thresholds.push(column[rank - 1]);
        }
    }
    ThermometerCodec::from_thresholds(bits, thresholds)
}

/// Per-pixel median thresholding: fit on `rows`, then encode them.
pub fn binarize_median<F: Float>(rows: &[F], features: usize) -> Result<Vec<BitVector>> {
    let codec = fit_thermometer(rows, features, 1)?;
    rows.chunks(features).map(|r| codec.encode(r)).collect()
}

/// Fixed random ±1 projection followed by `sign`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpansionLayer {
    projection: PackedBitMatrix,
    seed: u64,
}

impl ExpansionLayer {
    pub fn new(out_dim: usize, in_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            projection: PackedBitMatrix::random(out_dim, in_dim, &mut rng),
            seed,
        }
    }

    pub fn from_projection(projection: PackedBitMatrix, seed: u64) -> Self {
        Self { projection, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn in_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn projection(&self) -> &PackedBitMatrix {
        &self.projection
    }

    pub fn expand(&self, code: &BitVector) -> Result<BitVector> {
        let z = matvec_pm1(&self.projection, code)?;
        Ok(sign_to_bits(&z))
    }
}

/// How raw features are turned into bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CodecSpec {
    /// Already ±1-valued data: `x > 0` maps to +1.
    Binary,
    Median,
    Thermometer {
        bits: usize,
    },
}

/// A fitted frame encoder: thermometer codec, then optional expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct InputEncoder<F> {
    pub codec: ThermometerCodec<F>,
    pub expansion: Option<ExpansionLayer>,
}

impl<F: Float> InputEncoder<F> {
    /// Fits on `frames`, row-major with `width` columns. `expansion` is
    /// `(K_0, seed)`.
    pub fn fit(
        spec: CodecSpec,
        frames: &[F],
        width: usize,
        expansion: Option<(usize, u64)>,
    ) -> Result<Self> {
        let codec = match spec {
            CodecSpec::Binary => {
                if width == 0 {
                    return Err(Error::Data("zero-width input".into()));
                }
                ThermometerCodec::from_thresholds(1, vec![F::zero(); width])?
            }
            CodecSpec::Median => fit_thermometer(frames, width, 1)?,
            CodecSpec::Thermometer { bits } => fit_thermometer(frames, width, bits)?,
        };
        let expansion =
            expansion.map(|(k0, seed)| ExpansionLayer::new(k0, codec.encoded_width(), seed));
        Ok(Self { codec, expansion })
    }

    pub fn raw_width(&self) -> usize {
        self.codec.features()
    }

    pub fn output_width(&self) -> usize {
        match &self.expansion {
            Some(e) => e.out_dim(),
            None => self.codec.encoded_width(),
        }
    }

    pub fn encode_frame(&self, frame: &[F]) -> Result<BitVector> {
        let code = self.codec.encode(frame)?;
        match &self.expansion {
            Some(e) => e.expand(&code),
            None => Ok(code),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn one_bit_is_median() {
        let rows = [3.0f64, 1.0, 2.0, 5.0, 4.0];
        let c = fit_thermometer(&rows, 1, 1).unwrap();
        assert_eq!(c.thresholds(), &[3.0]);
        let coded: Vec<i8> = rows
            .iter()
            .map(|&x| c.encode(&[x]).unwrap().get_pm1(0))
            .collect();
        assert_eq!(coded, vec![-1, -1, -1, 1, 1]);
        let med = binarize_median(&rows, 1).unwrap();
        assert_eq!(med.iter().map(|v| v.get_pm1(0)).collect::<Vec<_>>(), coded);
    }

    #[test]
    fn constant_feature() {
        let rows = [2.5f32; 12];
        let c = fit_thermometer(&rows, 2, 3).unwrap();
        assert!(c.thresholds().iter().all(|&t| t == 2.5));
        // ties fall below
        assert_eq!(c.encode(&[2.5, 2.5]).unwrap(), BitVector::minus_ones(6));
    }

    #[test]
    fn uniform_quantiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rows: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>()).collect();
        let c = fit_thermometer(&rows, 1, 3).unwrap();
        for (t, want) in c.thresholds().iter().zip([0.25, 0.5, 0.75]) {
            assert!((t - want).abs() < 0.02, "{t} vs {want}");
        }
    }

    #[test]
    fn extremes_and_counts() {
        let rows: Vec<f64> = (0..40).map(f64::from).collect();
        let c = fit_thermometer(&rows, 2, 4).unwrap();
        let lo = c.encode(&[-1.0, -1.0]).unwrap();
        assert_eq!(lo.count_plus(), 0);
        let hi = c.encode(&[100.0, 100.0]).unwrap();
        assert_eq!(hi.count_plus(), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let row = [rng.random_range(-5.0..45.0), rng.random_range(-5.0..45.0)];
            let code = c.encode(&row).unwrap();
            for (f, &x) in row.iter().enumerate() {
                let exceeded = c.feature_thresholds(f).iter().filter(|&&t| x > t).count();
                let plus = (0..4).filter(|&k| code.get(f * 4 + k)).count();
                assert_eq!(plus, exceeded);
            }
        }
    }

    #[test]
    fn errors() {
        assert!(fit_thermometer::<f64>(&[], 1, 1).is_err());
        assert!(fit_thermometer(&[1.0, f64::NAN], 1, 1).is_err());
        assert!(fit_thermometer(&[1.0], 1, 0).is_err());
        let c = fit_thermometer(&[1.0, 2.0], 2, 1).unwrap();
        assert!(c.encode(&[1.0]).is_err());
    }

    #[test]
    fn expansion_is_deterministic() {
        let a = ExpansionLayer::new(50, 20, 42);
        let b = ExpansionLayer::new(50, 20, 42);
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let code = BitVector::random(20, &mut rng);
        assert_eq!(a.expand(&code).unwrap(), b.expand(&code).unwrap());
        assert!(a.expand(&BitVector::plus_ones(21)).is_err());
    }

    #[test]
    fn expansion_with_signed_permutation() {
        // each row copies the single input, possibly sign-flipped
        let proj = PackedBitMatrix::from_pm1(3, 1, &[1, -1, 1]).unwrap();
        let layer = ExpansionLayer::from_projection(proj, 0);
        let out = layer.expand(&BitVector::from_pm1(&[-1])).unwrap();
        assert_eq!(out.to_pm1(), vec![-1, 1, -1]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn order_preserving(
                train in proptest::collection::vec(-100.0f64..100.0, 1..60),
                bits in 1usize..8,
                x in -120.0f64..120.0,
                y in -120.0f64..120.0,
            ) {
                let c = fit_thermometer(&train, 1, bits).unwrap();
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                let a = c.encode(&[lo]).unwrap();
                let b = c.encode(&[hi]).unwrap();
                prop_assert!(a.count_plus() <= b.count_plus());
                // +1 bits form a prefix of the ascending thresholds
                let plus = a.count_plus();
                prop_assert!((0..bits).all(|k| a.get(k) == (k < plus)));
                for r in &train {
                    prop_assert!(c.encode(&[*r]).is_ok());
                }
            }
        }
    }
}
