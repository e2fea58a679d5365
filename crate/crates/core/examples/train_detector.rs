//! Trains a small C4 detector on a handful of small scenes, saves the run and evaluates
//! it upright and rotated by 90°.

use equikit::detector::{load_checkpoint, DetectorConfig};
use equikit::harness::{evaluate, save_run, train, DatasetSpec, SceneConfig, TrainConfig};

fn main() -> equikit::Result<()> {
    let scene = SceneConfig {
        size: 33,
        min_length: 8.0,
        max_length: 14.0,
        max_objects: 2,
        ..SceneConfig::default()
    };
    let cfg = TrainConfig {
        detector: DetectorConfig {
            n: 4,
            score_threshold: 0.05,
            ..DetectorConfig::default()
        },
        data: DatasetSpec {
            seed: 0,
            count: 16,
            scene: scene.clone(),
        },
        epochs: 60,
        lr: 0.02,
        warmup_steps: 8,
        lr_steps: vec![45],
        ..TrainConfig::default()
    };
    let outcome = train(&cfg, |s| {
        if s.epoch % 10 == 0 {
            println!("epoch {} loss {:.4} (focal {:.4}, giou {:.4})", s.epoch, s.loss, s.focal, s.giou)
        }
    })?;

    let dir = std::env::temp_dir().join("equikit_train_example");
    std::fs::create_dir_all(&dir)?;
    save_run(&outcome, &cfg, &dir)?;
    let model = load_checkpoint(&dir)?;
    println!("{} parameters, saved to {}", model.summary().total, dir.display());

    let test = DatasetSpec {
        seed: 1000,
        count: 8,
        scene,
    }
    .generate()?;
    for deg in [0.0, 90.0] {
        let m = evaluate(&model, &test, deg)?;
        println!("rotation {deg:>4}°: AP50 {:.3}, AP75 {:.3}", m.ap50, m.ap75);
    }
    Ok(())
}
