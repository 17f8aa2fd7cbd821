//! Serve the fixed breast cancer coefficient table over HTTP until interrupted.
//!
//! cargo run --example prediction_service -- 8080
//! curl localhost:8080/api/meta
//! curl -X POST localhost:8080/api/predict -H 'content-type: application/json' \
//!   -d '{"profiles": [{"age": "75+", "T": "T2", "N": "N3", "grade": "III&IV", "ER": "negative",
//!        "PR": "negative", "surgery": "mastectomy", "chemotherapy": "no"}], "grid": [5, 10]}'

use std::path::PathBuf;

use rmtl::serve::{serve, ServeConfig};

#[tokio::main]
async fn main() -> rmtl::Result<()> {
    let port = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(8080);
    let model_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/breast_cancer_model.json");
    serve(ServeConfig { model_path, static_dir: None, port }).await
}
