//! Render the three camera views of one frame as PPM images and report the
//! depth and class statistics of the feature grid.

use std::fs;

use intentdrive::simworld::{generate_episode, GenConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = GenConfig::default();
    let ep = generate_episode(&config, 11)?;
    let frame = &ep.frames[10];
    let [m, h, w, _] = frame.image_shape;
    for cam in 0..m {
        let mut ppm = format!("P6\n{w} {h}\n255\n").into_bytes();
        ppm.extend_from_slice(&frame.images[cam * h * w * 3..(cam + 1) * h * w * 3]);
        let path = format!("view_{cam}.ppm");
        fs::write(&path, ppm)?;
        println!("wrote {path}");
    }
    let depth = frame.depth.data();
    let hit: Vec<f64> = depth.iter().copied().filter(|d| *d > 0.0).collect();
    let nearest = hit.iter().copied().fold(f64::INFINITY, f64::min);
    println!("{} of {} feature cells hit geometry, nearest {nearest:.2} m", hit.len(), depth.len());
    let mut classes = std::collections::BTreeMap::new();
    for c in &frame.semantics {
        *classes.entry(*c).or_insert(0) += 1;
    }
    println!("class histogram {classes:?}");
    Ok(())
}
