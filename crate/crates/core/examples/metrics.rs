// Evaluation metrics on a hand-made prediction, inside the transparent mask
// and over the whole image, written as CSV.
//
// cargo run --release --example metrics

use depthfill::geometry::{DepthMap, Mask};
use depthfill::objective::{metrics, write_metrics_csv, LossConfig, MetricsReport, Scope};

pub fn run_example() -> Result<Vec<MetricsReport>, Box<dyn std::error::Error>> {
    // a 4x2 scene at 1.1 m; the left half is transparent and predicted 10 cm short
    let gt = DepthMap::new(4, 2, 1.1);
    let mask = Mask::from_fn(4, 2, |u, _| u < 2);
    let pred = DepthMap::from_fn(4, 2, |u, _| if u < 2 { 1.0 } else { 1.1 });

    let config = LossConfig::default();
    let reports: Vec<MetricsReport> = [Scope::Masked, Scope::Global]
        .into_iter()
        .map(|scope| metrics(&pred, &gt, &mask, &config, scope).map(|acc| acc.report(scope)))
        .collect::<Result<_, _>>()?;
    let rows: Vec<(String, MetricsReport)> = reports.iter().map(|r| (r.scope.as_str().to_string(), r.clone())).collect();
    write_metrics_csv(std::io::stdout().lock(), None, &rows)?;
    Ok(reports)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
