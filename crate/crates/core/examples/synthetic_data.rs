//! Generates a small synthetic oriented-object dataset and writes it to disk.

use equikit::harness::{load_dataset, save_dataset, DatasetSpec, SceneConfig};

fn main() -> equikit::Result<()> {
    let spec = DatasetSpec {
        seed: 7,
        count: 4,
        scene: SceneConfig::default(),
    };
    let scenes = spec.generate()?;
    for (i, s) in scenes.iter().enumerate() {
        let classes: Vec<usize> = s.objects.iter().map(|o| o.class).collect();
        println!("scene {i}: image {:?}, classes {classes:?}", s.image.shape());
    }

    let dir = std::env::temp_dir().join("equikit_synthetic_example");
    save_dataset(&spec, &scenes, &dir)?;
    let reloaded = load_dataset(&dir)?;
    println!("wrote and reloaded {} scenes in {}", reloaded.len(), dir.display());
    Ok(())
}
