//! Cut images into 33x33 tiles (edge-anchored on ragged borders), merge them
//! back, and check the round trip is exact.

use srtile::synth::scene;
use srtile::tiling::{merge_tiles, split_tiles, TileGrid};

fn main() -> srtile::Result<()> {
    for (h, w) in [(231, 231), (400, 400), (99, 99), (100, 100), (34, 70)] {
        let grid = TileGrid::new(h, w, 33)?;
        println!("{h}x{w}: {} tiles, rows at {:?}", grid.len(), grid.rows);
    }
    let img = scene(100, 137, 3);
    let (tiles, grid) = split_tiles(&img, 33)?;
    let back = merge_tiles(&tiles, &grid)?;
    println!("100x137 split/merge exact: {}", back == img);
    Ok(())
}
