//! Failure-mode clustering of fault-injection campaign traces.
//!
//! Traces become either raw event-count vectors or anomaly vectors (spurious
//! and omitted events relative to fault-free behaviour). These are
//! clustered with k-medoids or deep embedded clustering and scored against
//! ground truth by purity.

pub mod anomaly;
pub mod dec;
pub mod error;
pub mod evaluate;
pub mod gradcheck;
pub mod kmedoids;
pub mod nn;
pub mod synth;
pub mod trace;
pub mod vectorize;

pub use anomaly::{
    build_anomaly_matrix, detect_anomalies, fold_backbone, lcs_pair, train_vmm, AnomalyConfig, AnomalyModel, AnomalyVector,
    CommonBackbone, Thresholds, VmmModel,
};
pub use dec::{
    dec_fit, init_centroids, kl_gradients, kl_loss, soft_assign, target_distribution, target_distribution_with, Centroids,
    DecConfig, DecResult, RefreshRecord, SoftAssignment, TargetDistribution,
};
pub use error::{Error, Result};
pub use evaluate::{
    distribution_report, map_clusters, purity, render_distribution_svg, resolve_truth, ClusterClassMapping, DistributionReport,
    PurityReport,
};
pub use gradcheck::{gradient_check, CheckLoss, GradCheckReport};
pub use kmedoids::{k_medoids, ClusteringResult, DistanceMetric, Initialization, KMedoidsConfig};
pub use nn::{init_autoencoder, train_autoencoder, AutoencoderModel, EncoderSpec, SgdConfig};
pub use synth::{generate_campaign, SynthCampaign, SynthSpec};
pub use trace::{load_campaign, validate_campaign, Campaign, DatasetFormat, Event, FailureLabel, GroundTruth, Trace};
pub use vectorize::{build_alphabet, build_feature_matrix, campaign_alphabet, EventAlphabet, FeatureMatrix};
