//! Voxelize a float point cloud, write it as PLY and read it back.

use reproguard::octree::{ply, voxelize};

fn main() -> reproguard::Result<()> {
    let points: Vec<[f64; 3]> = (0..2000)
        .map(|i| {
            let t = i as f64 * 0.01;
            [t.cos() * (1.0 + 0.1 * t), t.sin() * (1.0 + 0.1 * t), 0.05 * t]
        })
        .collect();
    let cloud = voxelize(&points, 8)?;

    let dir = std::env::temp_dir().join("reproguard-ply-io");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("spiral.ply");
    ply::write_ply(&path, &cloud)?;
    let back = ply::read_cloud(&path, None)?;
    assert_eq!(back, cloud);

    let text = std::fs::read_to_string(&path)?;
    println!("{} points -> {} voxels, {}", points.len(), cloud.len(), path.display());
    for line in text.lines().take(10) {
        println!("  {line}");
    }
    Ok(())
}
