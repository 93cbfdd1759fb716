//! Named scenarios for the failure modes the trackers are meant to cover.
//!
//! | preset               | difficulty knob                                          |
//! |----------------------|----------------------------------------------------------|
//! | `occlusion_reappear` | a car vanishes for frames 3-4 and comes back             |
//! | `lookalike_pair`     | two identical cars driving side by side                  |
//! | `small_fast`         | 3-6 px objects moving up to 5 px per frame               |
//! | `deformation`        | objects growing or shrinking every frame, sub-pixel motion |
//! | `crowd`              | seven objects, two of them crossing with partial occlusion |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ObjectSpec, SceneSpec, Shape};
use crate::error::{Error, Result};
use crate::mask::Category;

pub const PRESET_NAMES: [&str; 5] = [
    "occlusion_reappear",
    "lookalike_pair",
    "small_fast",
    "deformation",
    "crowd",
];

const CAR: u16 = 10;
const PERSON: u16 = 11;
const WIDTH: usize = 128;
const HEIGHT: usize = 96;
const FRAMES: usize = 12;

fn stuff() -> Vec<Category> {
    vec![Category::stuff(1, "sky"), Category::stuff(2, "road")]
}

fn things() -> Vec<Category> {
    vec![Category::thing(CAR, "car"), Category::thing(PERSON, "person")]
}

fn scene(objects: Vec<ObjectSpec>, seed: u64) -> SceneSpec {
    SceneSpec {
        width: WIDTH,
        height: HEIGHT,
        n_frames: FRAMES,
        stuff: stuff(),
        things: things(),
        objects,
        seed,
    }
}

fn obj(shape: Shape, class_id: u16, size: [f64; 2], position: [f64; 2], velocity: [f64; 2]) -> ObjectSpec {
    ObjectSpec::new(shape, class_id, size, position, velocity)
}

/// Looks up a preset by name. `seed` only drives the per-frame id shuffle.
pub fn preset(name: &str, seed: u64) -> Result<SceneSpec> {
    use Shape::*;
    let objects = match name {
        "occlusion_reappear" => {
            let mut car = obj(Rect, CAR, [18.0, 10.0], [30.0, 60.0], [1.0, 0.0]);
            car.visible = vec![(0, 3), (5, FRAMES)];
            vec![
                car,
                obj(Ellipse, PERSON, [8.0, 16.0], [90.0, 40.0], [-1.0, 0.0]),
            ]
        }
        "lookalike_pair" => vec![
            obj(Rect, CAR, [14.0, 10.0], [30.0, 55.0], [3.0, 0.0]),
            obj(Rect, CAR, [14.0, 10.0], [30.0, 70.0], [3.0, 0.0]),
            obj(Ellipse, PERSON, [8.0, 16.0], [100.0, 30.0], [-1.0, 1.0]),
        ],
        "small_fast" => vec![
            obj(Rect, CAR, [4.0, 4.0], [10.0, 50.0], [4.0, 1.0]),
            obj(Ellipse, PERSON, [5.0, 3.0], [110.0, 20.0], [-5.0, 0.0]),
            obj(Rect, PERSON, [3.0, 6.0], [40.0, 85.0], [3.0, -2.0]),
            obj(Ellipse, CAR, [6.0, 4.0], [90.0, 40.0], [0.0, 4.0]),
        ],
        "deformation" => {
            let mut grow = obj(Ellipse, CAR, [12.0, 8.0], [40.0, 30.0], [1.5, 0.0]);
            grow.scale_per_frame = 1.08;
            let mut shrink = obj(Rect, CAR, [20.0, 14.0], [90.0, 70.0], [-1.0, 0.5]);
            shrink.scale_per_frame = 0.95;
            let mut person = obj(Ellipse, PERSON, [6.0, 14.0], [20.0, 70.0], [1.0, -0.5]);
            person.scale_per_frame = 1.04;
            vec![grow, shrink, person]
        }
        "crowd" => {
            let mut a = obj(Rect, CAR, [20.0, 12.0], [20.0, 60.0], [4.0, 0.0]);
            a.z = 0;
            let mut b = obj(Rect, CAR, [16.0, 10.0], [90.0, 66.0], [-3.0, 0.0]);
            b.z = 1;
            vec![
                a,
                b,
                obj(Rect, PERSON, [8.0, 14.0], [40.0, 30.0], [1.0, 1.0]),
                obj(Rect, PERSON, [8.0, 14.0], [60.0, 30.0], [0.0, 1.0]),
                obj(Ellipse, PERSON, [7.0, 12.0], [110.0, 30.0], [-2.0, 1.0]),
                obj(Rect, CAR, [14.0, 8.0], [70.0, 85.0], [2.0, 0.0]),
                obj(Rect, CAR, [12.0, 8.0], [20.0, 85.0], [1.0, 0.0]),
            ]
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset {other:?}; expected one of {PRESET_NAMES:?}"
            )))
        }
    };
    Ok(scene(objects, seed))
}

/// Shape catalogue for the appearance-training scenario: every entry has a
/// distinct outline after aspect-preserving RoI scaling.
const CATALOGUE: [(Shape, f64); 8] = [
    (Shape::Rect, 1.0),
    (Shape::Rect, 2.0),
    (Shape::Rect, 0.5),
    (Shape::Rect, 3.0),
    (Shape::Ellipse, 1.0),
    (Shape::Ellipse, 2.0),
    (Shape::Ellipse, 0.5),
    (Shape::Ellipse, 1.0 / 3.0),
];

/// A two-frame scene of 3-5 non-overlapping objects with pairwise distinct
/// shapes, all of one class, with random size, motion and mild deformation.
pub fn distinct_shapes(seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(3..=5);
    let mut kinds: Vec<usize> = (0..CATALOGUE.len()).collect();
    for i in 0..k {
        let j = rng.random_range(i..kinds.len());
        kinds.swap(i, j);
    }
    let mut objects: Vec<ObjectSpec> = Vec::with_capacity(k);
    for &kind in &kinds[..k] {
        let (shape, aspect) = CATALOGUE[kind];
        let long = rng.random_range(10.0..26.0);
        let size = if aspect >= 1.0 {
            [long, long / aspect]
        } else {
            [long * aspect, long]
        };
        // rejection-sample a spot clear of earlier objects, margin for motion
        let mut placed = None;
        for _ in 0..200 {
            let cx = rng.random_range(size[0] / 2.0 + 4.0..WIDTH as f64 - size[0] / 2.0 - 4.0);
            let cy = rng.random_range(size[1] / 2.0 + 4.0..HEIGHT as f64 - size[1] / 2.0 - 4.0);
            let clear = objects.iter().all(|o| {
                (o.position[0] - cx).abs() > (o.size[0] + size[0]) / 2.0 + 6.0
                    || (o.position[1] - cy).abs() > (o.size[1] + size[1]) / 2.0 + 6.0
            });
            if clear {
                placed = Some([cx, cy]);
                break;
            }
        }
        let Some(position) = placed else { continue };
        let mut o = obj(
            shape,
            CAR,
            size,
            position,
            [
                rng.random_range(-2i32..=2) as f64,
                rng.random_range(-2i32..=2) as f64,
            ],
        );
        o.scale_per_frame = rng.random_range(0.92..1.08);
        objects.push(o);
    }
    SceneSpec {
        width: WIDTH,
        height: HEIGHT,
        n_frames: 2,
        stuff: stuff(),
        things: things(),
        objects,
        seed,
    }
}
