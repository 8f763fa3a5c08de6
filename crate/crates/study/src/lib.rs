//! Blinded pairwise preference study: raters see an image with two unlabeled
//! heatmaps, pick "A", "B" or "both", and an administrator later unblinds
//! the votes into relative frequencies per method.

pub mod error;
pub mod manifest;
pub mod server;
pub mod tally;
pub mod votes;

pub use error::{Result, StudyError};
pub use manifest::{assign_labels, create_study, StudyItem, StudyManifest};
pub use server::{router, Study};
pub use tally::{tally, Frequencies, OutcomeCounts, TallyResult};
pub use votes::{Choice, VoteLog, VoteRecord};

/// Serves `studies` on `listener` until the future is dropped or ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, studies: Vec<Study>, admin_token: String) -> std::io::Result<()> {
    let app = router(studies, admin_token);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
