use crate::detector::GtObject;
use crate::error::{Error, Result};
use crate::geometry::{format_obb, parse_obb, ObbRecord, OrientedBox, Point};
use crate::tensor::kernels::rotate_image_angle;
use crate::tensor::{read_tensor, rotate_image, rotate_point, write_tensor, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

/// Shape drawn inside an object's box, indexed by class id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Rectangle,
    Ellipse,
    /// Base along the first box edge, apex at the middle of the opposite one.
    Triangle,
    /// Rectangle with a centred hole of half its size.
    Frame,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Rectangle, Shape::Ellipse, Shape::Triangle, Shape::Frame];

    /// Filled fraction of the box.
    pub fn fill_factor(self) -> f64 {
        match self {
            Shape::Rectangle => 1.0,
            Shape::Ellipse => std::f64::consts::FRAC_PI_4,
            Shape::Triangle => 0.5,
            Shape::Frame => 0.75,
        }
    }

    /// Membership in box-local coordinates scaled to `[-1, 1]²`.
    fn contains(self, u: f64, v: f64) -> bool {
        if u.abs() > 1.0 || v.abs() > 1.0 {
            return false;
        }
        match self {
            Shape::Rectangle => true,
            Shape::Ellipse => u * u + v * v <= 1.0,
            Shape::Triangle => u.abs() <= (1.0 - v) / 2.0,
            Shape::Frame => u.abs() > 0.5 || v.abs() > 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Square canvas side in pixels.
    pub size: usize,
    /// Number of classes, 2 to 4 (rectangle, ellipse, triangle, frame).
    pub num_classes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Range of the long box side in pixels.
    pub min_length: f64,
    pub max_length: f64,
    /// Range of long side / short side.
    pub min_aspect: f64,
    pub max_aspect: f64,
    /// Object angle range in degrees.
    pub min_angle_deg: f64,
    pub max_angle_deg: f64,
    /// Keep every box inside the canvas's inscribed circle so that any
    /// rotation about the centre leaves it uncropped.
    pub inscribed: bool,
    /// Supersampling factor per axis.
    pub supersample: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            size: 65,
            num_classes: 3,
            min_objects: 1,
            max_objects: 3,
            min_length: 12.0,
            max_length: 28.0,
            min_aspect: 1.5,
            max_aspect: 3.0,
            min_angle_deg: 0.0,
            max_angle_deg: 360.0,
            inscribed: true,
            supersample: 4,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(2..=4).contains(&self.num_classes) {
            return bad("num_classes must be between 2 and 4");
        }
        if self.min_objects > self.max_objects || self.min_length > self.max_length || self.min_aspect > self.max_aspect {
            return bad("inverted range in scene config");
        }
        if self.min_aspect < 1.0 || self.min_length <= 0.0 || self.supersample == 0 || self.size < 9 {
            return bad("scene sizes out of range");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub bbox: OrientedBox,
    pub class: usize,
    pub color: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub seed: u64,
    /// `[3, size, size]` in `[0, 1]`.
    pub image: Tensor,
    pub objects: Vec<GtObject>,
}

impl SyntheticScene {
    pub fn records(&self) -> Vec<ObbRecord> {
        self.objects
            .iter()
            .map(|o| ObbRecord {
                bbox: o.bbox,
                class: o.class,
                score: None,
            })
            .collect()
    }
}

/// Maps image points into a box's frame scaled to `[-1, 1]²`.
struct LocalFrame {
    c: Point,
    cos: f64,
    sin: f64,
    half_w: f64,
    half_h: f64,
}

impl LocalFrame {
    fn new(b: &OrientedBox) -> Self {
        let (w, h, a) = b.size_and_angle();
        let (sin, cos) = a.sin_cos();
        Self {
            c: b.center(),
            cos,
            sin,
            half_w: w / 2.0,
            half_h: h / 2.0,
        }
    }

    fn map(&self, p: Point) -> (f64, f64) {
        let d = p.sub(self.c);
        let u = self.cos * d.x + self.sin * d.y;
        let v = -self.sin * d.x + self.cos * d.y;
        (u / self.half_w, v / self.half_h)
    }
}

/// Rasterises objects onto a black canvas with `ss × ss` supersampling;
/// later objects paint over earlier ones.
pub fn render(size: usize, objects: &[SceneObject], ss: usize) -> Tensor {
    let plane = size * size;
    let mut img = vec![0.0; 3 * plane];
    let shapes: Vec<Shape> = objects.iter().map(|o| Shape::ALL[o.class]).collect();
    let frames: Vec<LocalFrame> = objects.iter().map(|o| LocalFrame::new(&o.bbox)).collect();
    for y in 0..size {
        for x in 0..size {
            let mut acc = [0.0; 3];
            for sy in 0..ss {
                for sx in 0..ss {
                    let p = Point::new(
                        x as f64 + (sx as f64 + 0.5) / ss as f64 - 0.5,
                        y as f64 + (sy as f64 + 0.5) / ss as f64 - 0.5,
                    );
                    let mut col = [0.0; 3];
                    for ((o, shape), frame) in objects.iter().zip(&shapes).zip(&frames) {
                        let (u, v) = frame.map(p);
                        if shape.contains(u, v) {
                            col = o.color;
                        }
                    }
                    for c in 0..3 {
                        acc[c] += col[c];
                    }
                }
            }
            for c in 0..3 {
                img[c * plane + y * size + x] = acc[c] / (ss * ss) as f64;
            }
        }
    }
    Tensor::new(&[3, size, size], img).expect("canvas shape")
}

/// Generates a scene; the same seed and config always give identical bytes.
/// Objects are placed without overlapping; placements that fail after a
/// bounded number of attempts are dropped.
pub fn gen_scene(seed: u64, cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(cfg.min_objects..=cfg.max_objects);
    let mid = (cfg.size as f64 - 1.0) / 2.0;
    let mut objects: Vec<SceneObject> = Vec::new();
    for _ in 0..count {
        for _attempt in 0..100 {
            let len = rng.random_range(cfg.min_length..=cfg.max_length);
            let aspect = rng.random_range(cfg.min_aspect..=cfg.max_aspect);
            let angle = rng.random_range(cfg.min_angle_deg..=cfg.max_angle_deg).to_radians();
            let class = rng.random_range(0..cfg.num_classes);
            let half_diag = 0.5 * len.hypot(len / aspect);
            let reach = if cfg.inscribed { mid - 1.0 - half_diag } else { mid - half_diag };
            if reach < 0.0 {
                continue;
            }
            let (cx, cy) = if cfg.inscribed {
                let r = reach * rng.random::<f64>().sqrt();
                let t = rng.random_range(0.0..TAU);
                (mid + r * t.cos(), mid + r * t.sin())
            } else {
                (mid + rng.random_range(-reach..=reach), mid + rng.random_range(-reach..=reach))
            };
            let bbox = OrientedBox::from_center(cx, cy, len, len / aspect, angle);
            let color = [0.0; 3].map(|_| rng.random_range(0.35..1.0));
            let clear = objects
                .iter()
                .all(|o| crate::geometry::box_iou(&o.bbox, &bbox).map(|v| v == 0.0).unwrap_or(false));
            if clear {
                objects.push(SceneObject { bbox, class, color });
                break;
            }
        }
    }
    Ok(SyntheticScene {
        seed,
        image: render(cfg.size, &objects, cfg.supersample),
        objects: objects
            .iter()
            .map(|o| GtObject {
                bbox: o.bbox,
                class: o.class,
            })
            .collect(),
    })
}

/// Rotates image and boxes by `deg` degrees about the canvas centre
/// (counter-clockwise as displayed), keeping the canvas size with zero fill.
/// Multiples of 90° are exact.
pub fn rotate_scene(scene: &SyntheticScene, deg: f64) -> SyntheticScene {
    let turns = deg / 90.0;
    let image = if turns.fract() == 0.0 {
        rotate_image(&scene.image, turns as i64, 4)
    } else {
        rotate_image_angle(&scene.image, deg.to_radians())
    };
    let (h, w) = scene.image.hw();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let a = if turns.fract() == 0.0 {
        std::f64::consts::FRAC_PI_2 * turns
    } else {
        deg.to_radians()
    };
    let rot = |p: Point| {
        if turns.fract() == 0.0 {
            // Exact integer arithmetic on quarter turns.
            let (dx, dy) = (p.x - cx, p.y - cy);
            let (rx, ry) = match (turns as i64).rem_euclid(4) {
                0 => (dx, dy),
                1 => (dy, -dx),
                2 => (-dx, -dy),
                _ => (-dy, dx),
            };
            Point::new(cx + rx, cy + ry)
        } else {
            let (x, y) = rotate_point(p.x, p.y, cx, cy, a);
            Point::new(x, y)
        }
    };
    SyntheticScene {
        seed: scene.seed,
        image,
        objects: scene
            .objects
            .iter()
            .map(|o| GtObject {
                bbox: OrientedBox {
                    corners: o.bbox.corners.map(rot),
                },
                class: o.class,
            })
            .collect(),
    }
}

/// A reproducible list of scenes: scene `i` uses seed `seed + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub seed: u64,
    pub count: usize,
    pub scene: SceneConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 64,
            scene: SceneConfig::default(),
        }
    }
}

impl DatasetSpec {
    pub fn generate(&self) -> Result<Vec<SyntheticScene>> {
        (0..self.count as u64)
            .map(|i| gen_scene(self.seed.wrapping_add(i), &self.scene))
            .collect()
    }
}

pub const DATASET_FILE: &str = "dataset.json";

/// Writes `scene_XXXX.eqtn` images, `scene_XXXX.txt` ground truth and the
/// generating spec to `dir`.
pub fn save_dataset(spec: &DatasetSpec, scenes: &[SyntheticScene], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(DATASET_FILE), serde_json::to_string_pretty(spec)?)?;
    for (i, s) in scenes.iter().enumerate() {
        let mut w = BufWriter::new(File::create(dir.join(format!("scene_{i:04}.eqtn")))?);
        write_tensor(&mut w, &s.image)?;
        std::fs::write(dir.join(format!("scene_{i:04}.txt")), format_obb(&s.records()))?;
    }
    Ok(())
}

/// Reads a directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Vec<SyntheticScene>> {
    let spec: DatasetSpec = serde_json::from_str(&std::fs::read_to_string(dir.join(DATASET_FILE))?)?;
    let mut out = Vec::new();
    for i in 0..spec.count {
        let image = read_tensor(&mut BufReader::new(File::open(dir.join(format!("scene_{i:04}.eqtn")))?))?;
        let objects = parse_obb(&std::fs::read_to_string(dir.join(format!("scene_{i:04}.txt")))?)?
            .into_iter()
            .map(|r| GtObject {
                bbox: r.bbox,
                class: r.class,
            })
            .collect();
        out.push(SyntheticScene {
            seed: spec.seed.wrapping_add(i as u64),
            image,
            objects,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}
