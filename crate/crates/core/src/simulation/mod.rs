//! Monte Carlo study over the six designs.

pub mod campaign;
pub mod designs;
pub mod generate;
pub mod significance;

pub use campaign::{run_campaign, summarize, Campaign, CampaignConfig, ComparisonTable, MethodSummary, ReplicationResult};
pub use designs::DesignSpec;
pub use generate::{generate, generate_stream, Draw};
pub use significance::{paired_t_p_value, significance_stars, Comparison, Stars};
