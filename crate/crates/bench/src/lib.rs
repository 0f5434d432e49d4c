//! Fixtures shared by the benchmarks.

use failsift_core::{
    build_feature_matrix, campaign_alphabet, generate_campaign, AnomalyConfig, AnomalyModel, FeatureMatrix, SynthCampaign, SynthSpec,
};

/// Noisy synthetic campaign with `modes` classes of `per_mode` traces.
pub fn campaign(modes: usize, per_mode: usize, seed: u64) -> SynthCampaign {
    generate_campaign(&SynthSpec {
        num_modes: modes,
        traces_per_mode: per_mode,
        noise_rate: 0.05,
        seed,
        ..SynthSpec::default()
    })
    .expect("valid synthetic campaign")
}

pub fn seq_matrix(s: &SynthCampaign) -> FeatureMatrix {
    let c = &s.campaign;
    build_feature_matrix(c, &campaign_alphabet(c).expect("events"), None).expect("matrix")
}

pub fn anomaly_matrix(s: &SynthCampaign) -> FeatureMatrix {
    AnomalyModel::fit(&s.campaign, &AnomalyConfig::default())
        .and_then(|m| m.feature_matrix(&s.campaign))
        .expect("anomaly matrix")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_expected_shape() {
        let s = campaign(4, 10, 0);
        assert_eq!(seq_matrix(&s).nrows(), 40);
        let a = anomaly_matrix(&s);
        assert_eq!(a.nrows(), 40);
        assert_eq!(a.ncols() % 2, 0);
    }
}
