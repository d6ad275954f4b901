use rand::Rng;

use crate::channel::FreqChannel;
use crate::error::Result;
use crate::linalg::{cn_matrix, orthonormal_complement, CMat};
use crate::model::{DigitalPrecoders, SystemConfig};
use crate::realize::sorted_svd;

use super::{project_spectral_ball, InitScheme};

/// `W_n = c P^H H_n` with `c` chosen so the budget is met with equality;
/// all-zero if the steered channel vanishes.
pub(crate) fn matched_filter_precoders(
    p: &CMat,
    channel: &FreqChannel,
    total_power: f64,
) -> DigitalPrecoders {
    let ph = p.adjoint();
    let mut w = DigitalPrecoders::new(channel.subcarriers().iter().map(|h| &ph * h).collect())
        .expect("consistent block shapes");
    let power = w.power();
    if power > 0.0 {
        w.scale((total_power / power).sqrt());
    }
    w
}

fn dominant_subspace(channel: &FreqChannel, n_rf: usize) -> CMat {
    let (u, _, _) = sorted_svd(&channel.stacked());
    let take = u.ncols().min(n_rf);
    let mut p = CMat::zeros(channel.n_tx(), n_rf);
    p.columns_mut(0, take).copy_from(&u.columns(0, take));
    if take < n_rf {
        let extra = orthonormal_complement(&u.columns(0, take).into_owned(), n_rf - take);
        p.columns_mut(take, extra.ncols()).copy_from(&extra);
    }
    p
}

/// Starting point `(P_0, W_0)` for the hybrid solvers.
///
/// The matched-filter scheme takes the `N_RF` dominant left singular vectors
/// of the stacked channel; the random scheme projects a Gaussian matrix onto
/// the spectral ball. `W_0` is the matched filter through `P_0`, scaled to
/// the full budget.
pub fn initialize<R: Rng + ?Sized>(
    config: &SystemConfig,
    channel: &FreqChannel,
    scheme: InitScheme,
    rng: &mut R,
) -> Result<(CMat, DigitalPrecoders)> {
    config.validate()?;
    let p0 = match scheme {
        InitScheme::MatchedFilter => dominant_subspace(channel, config.n_rf),
        InitScheme::RandomProjected => {
            project_spectral_ball(&cn_matrix(rng, config.n_tx, config.n_rf, 1.0)).into_inner()
        }
    };
    let w0 = matched_filter_precoders(&p0, channel, config.total_power);
    Ok((p0, w0))
}

/// Starting precoders for the fully-digital solver.
pub(crate) fn digital_start<R: Rng + ?Sized>(
    config: &SystemConfig,
    channel: &FreqChannel,
    scheme: InitScheme,
    rng: &mut R,
) -> DigitalPrecoders {
    let mut w = match scheme {
        InitScheme::MatchedFilter => DigitalPrecoders::new(channel.subcarriers().to_vec()),
        InitScheme::RandomProjected => DigitalPrecoders::new(
            (0..config.n_subcarriers)
                .map(|_| cn_matrix(rng, config.n_tx, config.n_users, 1.0))
                .collect(),
        ),
    }
    .expect("consistent block shapes");
    let power = w.power();
    if power > 0.0 {
        w.scale((config.total_power / power).sqrt());
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channel;
    use crate::linalg::spectral_norm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn both_schemes_are_feasible_and_deterministic() {
        let cfg = SystemConfig::small();
        let ch = generate_channel(&cfg, 1).unwrap();
        for scheme in [InitScheme::MatchedFilter, InitScheme::RandomProjected] {
            let (p, w) = initialize(&cfg, &ch, scheme, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            assert!(spectral_norm(&p) <= 1.0 + 1e-10);
            assert!((w.power() - cfg.total_power).abs() <= 1e-10 * cfg.total_power);
            let (p2, w2) =
                initialize(&cfg, &ch, scheme, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            assert_eq!(p, p2);
            assert_eq!(w.blocks(), w2.blocks());
        }
        let (p, _) = initialize(
            &cfg,
            &ch,
            InitScheme::MatchedFilter,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let gram = p.adjoint() * &p;
        assert!((gram - CMat::identity(cfg.n_rf, cfg.n_rf)).norm() < 1e-10);
    }

    #[test]
    fn more_chains_than_channel_rank_are_padded() {
        let cfg = SystemConfig {
            n_subcarriers: 1,
            n_tx: 6,
            n_users: 1,
            n_rf: 3,
            n_taps: 1,
            ..SystemConfig::small()
        };
        let ch = generate_channel(&cfg, 2).unwrap();
        let (p, _) = initialize(
            &cfg,
            &ch,
            InitScheme::MatchedFilter,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!((p.adjoint() * &p - CMat::identity(3, 3)).norm() < 1e-10);
    }
}
