use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::{derive_seed, DenoiseRequest, DenoiseResponse, Denoiser, Handshake, OracleDenoiser};

/// The oracle's clean predictions plus i.i.d. Gaussian noise, seeded per
/// (view, frame, timestep, foreground/background).
#[derive(Debug, Clone)]
pub struct NoisyOracleDenoiser {
    oracle: OracleDenoiser,
    sigma: f64,
    seed: u64,
}

impl NoisyOracleDenoiser {
    pub fn new(oracle: OracleDenoiser, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "noise sigma must be >= 0, got {sigma}"
            )));
        }
        Ok(Self {
            oracle,
            sigma,
            seed,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Denoiser for NoisyOracleDenoiser {
    fn handshake(&self) -> Result<Handshake> {
        Ok(Handshake {
            name: "noisy-oracle".into(),
            ..self.oracle.handshake()?
        })
    }

    fn denoise(&self, req: &DenoiseRequest) -> Result<DenoiseResponse> {
        let mut resp = self.oracle.denoise(req)?;
        if self.sigma == 0.0 {
            return Ok(resp);
        }
        for (k, frame) in resp.frames.iter_mut().enumerate() {
            let seed = derive_seed(
                self.seed,
                &[
                    req.view_id as u64,
                    k as u64,
                    req.timestep as u64,
                    req.background as u64,
                ],
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in frame.data_mut() {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v = (*v as f64 + self.sigma * n) as f32;
            }
        }
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::tests::request;
    use crate::geometry::{default_rig, primitives};
    use crate::grid::Grid;
    use crate::raster::RasterConfig;

    fn oracle() -> OracleDenoiser {
        let mesh = primitives::quad(1.0, 1.0);
        let rig = default_rig(2.0, 1, false).unwrap();
        OracleDenoiser::new(
            &[Grid::filled(1, 8, 8, 0.25)],
            &mesh,
            &rig,
            16,
            &RasterConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_sigma_is_oracle_bitwise() {
        let o = oracle();
        let n = NoisyOracleDenoiser::new(o.clone(), 0.0, 3).unwrap();
        let req = request(1, 1, 16, 16);
        assert_eq!(n.denoise(&req).unwrap(), o.denoise(&req).unwrap());
    }

    #[test]
    fn seeded_and_deterministic() {
        let n = NoisyOracleDenoiser::new(oracle(), 0.1, 3).unwrap();
        let req = request(1, 1, 16, 16);
        assert_eq!(n.denoise(&req).unwrap(), n.denoise(&req).unwrap());
        let mut other = req.clone();
        other.timestep = 2;
        assert_ne!(n.denoise(&req).unwrap(), n.denoise(&other).unwrap());
    }

    #[test]
    fn sample_std_matches_sigma() {
        let o = oracle();
        let n = NoisyOracleDenoiser::new(o.clone(), 0.1, 11).unwrap();
        // 10^4 draws of one pixel across timesteps.
        let px = 8 * 16 + 8;
        let clean = o.render(0, 0).data()[px] as f64;
        let draws: Vec<f64> = (1..=10_000)
            .map(|t| {
                let mut req = request(1, 1, 16, 16);
                req.timestep = t;
                n.denoise(&req).unwrap().frames[0].data()[px] as f64 - clean
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let std = var.sqrt();
        // std of the sample std is about sigma / sqrt(2 n)
        let tol = 3.0 * 0.1 / (2.0f64 * 10_000.0).sqrt();
        assert!((std - 0.1).abs() < tol, "std {std}");
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(NoisyOracleDenoiser::new(oracle(), -0.1, 0).is_err());
    }
}
