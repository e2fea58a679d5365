//! Compares an equivariant detector with its plain-convolution baseline over
//! input rotations. Both are untrained here, so only the shape of the curve
//! (flat under quarter turns for the equivariant model) is meaningful.

use equikit::detector::{Detector, DetectorConfig};
use equikit::harness::{rotation_sweep, sweep_angles, sweep_csv, DatasetSpec, SceneConfig};

fn main() -> equikit::Result<()> {
    let cfg = DetectorConfig {
        n: 4,
        score_threshold: 0.0,
        ..DetectorConfig::default()
    };
    let model = Detector::new(cfg.clone(), 0)?;
    let baseline = Detector::new(cfg.baseline(), 0)?;
    let scenes = DatasetSpec {
        seed: 0,
        count: 3,
        scene: SceneConfig {
            size: 33,
            min_length: 8.0,
            max_length: 14.0,
            ..SceneConfig::default()
        },
    }
    .generate()?;
    let rows = rotation_sweep(&model, Some(&baseline), &scenes, &sweep_angles(45.0))?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
