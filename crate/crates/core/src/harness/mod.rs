//! Synthetic data, equivariance certification, training, evaluation and the
//! rotation-robustness sweep.

mod eval;
mod scene;
mod train;
mod verify;

pub use eval::{
    class_ap, detect_all, edge_concentration, eleven_point_ap, evaluate, rotation_sweep, score_detections, sweep_angles, sweep_csv,
    Metrics, SweepRow,
};
pub use scene::{
    gen_scene, load_dataset, render, rotate_scene, save_dataset, DatasetSpec, SceneConfig, SceneObject, Shape, SyntheticScene, DATASET_FILE,
};
pub use train::{loss_csv, save_run, train, train_on, EpochStats, TrainConfig, TrainOutcome};
pub use verify::{rel_l2_disk, smooth_field, verify_equivariance, EquivReport, LayerCheck, VerifyOptions, LAYERS};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "EQUIKIT_THREADS";

/// Pool sized by `EQUIKIT_THREADS` (rayon's default when unset or invalid).
pub fn thread_pool() -> rayon::ThreadPool {
    let n = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool")
}
