//! Tile grids and epoch batch plans.
//!
//! Images are cut into `t x t` tiles on a regular grid. When an extent is not
//! a multiple of `t`, the last row/column of tiles is anchored to the far edge
//! and overlaps its neighbour; merging averages the overlap.
//!
//! Training batches come from a seeded shuffle of all tiles. In
//! random-learning mode only `k` of the `ceil(n/b)` batches are used per
//! epoch, with `k` uniform on `1..=max(1, n/(8b))`.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Placement of every tile in the source image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub height: usize,
    pub width: usize,
    pub tile: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Grid origins along one axis: `0, t, 2t, ...` plus `n - t` if the grid
/// leaves a remainder.
fn axis_origins(n: usize, t: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n / t).map(|i| i * t).collect();
    if !n.is_multiple_of(t) {
        v.push(n - t);
    }
    v
}

impl TileGrid {
    pub fn new(height: usize, width: usize, tile: usize) -> Result<Self> {
        if tile == 0 {
            return Err(Error::Config("tile size must be positive".into()));
        }
        if height < tile {
            return Err(Error::Shape {
                op: "TileGrid::new",
                axis: "height (must be >= tile)",
                expected: tile,
                found: height,
            });
        }
        if width < tile {
            return Err(Error::Shape {
                op: "TileGrid::new",
                axis: "width (must be >= tile)",
                expected: tile,
                found: width,
            });
        }
        Ok(TileGrid {
            height,
            width,
            tile,
            rows: axis_origins(height, tile),
            cols: axis_origins(width, tile),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tile origins `(row, col)` in row-major order.
    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .flat_map(move |&r| self.cols.iter().map(move |&c| (r, c)))
    }

    /// True when every pixel lies in at least one tile.
    pub fn covers_image(&self) -> bool {
        let mut hit = vec![false; self.height * self.width];
        for (r, c) in self.origins() {
            for i in r..r + self.tile {
                hit[i * self.width + c..i * self.width + c + self.tile].fill(true);
            }
        }
        hit.into_iter().all(|b| b)
    }
}

pub fn split_tiles(image: &Tensor, t: usize) -> Result<(Vec<Tensor>, TileGrid)> {
    let (_, h, w) = image.chw()?;
    let grid = TileGrid::new(h, w, t)?;
    let tiles = grid
        .origins()
        .map(|(r, c)| image.crop(r, c, t, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((tiles, grid))
}

/// Writes each tile back to its origin, averaging pixels covered more than once.
pub fn merge_tiles(tiles: &[Tensor], grid: &TileGrid) -> Result<Tensor> {
    if tiles.len() != grid.len() {
        return Err(Error::Shape {
            op: "merge_tiles",
            axis: "tile count",
            expected: grid.len(),
            found: tiles.len(),
        });
    }
    let first = tiles.first().ok_or(Error::Empty("merge_tiles: no tiles"))?;
    let (c, _, _) = first.chw()?;
    let (h, w, t) = (grid.height, grid.width, grid.tile);
    let mut sum = vec![0.0; c * h * w];
    let mut count = vec![0u32; h * w];
    for (tile, (r, col)) in tiles.iter().zip(grid.origins()) {
        let (tc, th, tw) = tile.chw()?;
        for (axis, expected, found) in [("channels", c, tc), ("tile height", t, th), ("tile width", t, tw)] {
            if expected != found {
                return Err(Error::Shape {
                    op: "merge_tiles",
                    axis,
                    expected,
                    found,
                });
            }
        }
        for i in 0..t {
            for j in 0..t {
                count[(r + i) * w + col + j] += 1;
            }
        }
        for ci in 0..c {
            for i in 0..t {
                let dst = (ci * h + r + i) * w + col;
                let src = &tile.data()[(ci * t + i) * t..(ci * t + i + 1) * t];
                for (d, s) in sum[dst..dst + t].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }
    for ci in 0..c {
        for p in 0..h * w {
            sum[ci * h * w + p] /= count[p] as f64;
        }
    }
    Tensor::from_vec(&[c, h, w], sum)
}

/// Seeded uniform shuffle of `0..n`, chunked into `ceil(n/b)` batches.
pub fn shuffled_batches<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::Empty("make_batches: no tiles"));
    }
    if b == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order.chunks(b).map(<[usize]>::to_vec).collect())
}

/// Shuffles `tiles` and groups them into batches of `b` (the last may be short).
pub fn make_batches<T: Clone, R: Rng + ?Sized>(tiles: &[T], b: usize, rng: &mut R) -> Result<Vec<Vec<T>>> {
    Ok(shuffled_batches(tiles.len(), b, rng)?
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| tiles[i].clone()).collect())
        .collect())
}

/// One epoch's random-learning selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub n_items: usize,
    pub batch_size: usize,
    pub batch_count: usize,
    pub k_max: usize,
    /// Batch indices to process this epoch, distinct.
    pub selected: Vec<usize>,
}

impl BatchPlan {
    /// Largest batch count a random-learning epoch may draw: `max(1, n / (8b))`.
    pub fn k_max(n: usize, b: usize) -> usize {
        (n / (8 * b)).max(1)
    }

    /// Draws `k` uniformly from `1..=k_max`, then `k` distinct batches uniformly.
    pub fn draw<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("random_select: no tiles"));
        }
        if b == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        let batch_count = n.div_ceil(b);
        let k_max = Self::k_max(n, b).min(batch_count);
        let k = rng.random_range(1..=k_max);
        let selected = index::sample(rng, batch_count, k).into_vec();
        Ok(BatchPlan {
            n_items: n,
            batch_size: b,
            batch_count,
            k_max,
            selected,
        })
    }

    /// Every batch, in order; the sequential schedule.
    pub fn all(n: usize, b: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("batch plan: no tiles"));
        }
        if b == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        let batch_count = n.div_ceil(b);
        Ok(BatchPlan {
            n_items: n,
            batch_size: b,
            batch_count,
            k_max: batch_count,
            selected: (0..batch_count).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.selected.len()
    }

    /// Number of samples the selected batches hold.
    pub fn sample_count(&self) -> usize {
        self.selected
            .iter()
            .map(|&i| {
                let start = i * self.batch_size;
                (start + self.batch_size).min(self.n_items) - start
            })
            .sum()
    }
}

/// Random-learning selection over already-formed batches.
pub fn random_select<T, R: Rng + ?Sized>(batches: &[Vec<T>], rng: &mut R) -> Result<BatchPlan> {
    let first = batches.first().ok_or(Error::Empty("random_select: no batches"))?;
    let n = batches.iter().map(Vec::len).sum();
    BatchPlan::draw(n, first.len().max(1), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn image(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn([3, h, w], |_, _, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn tile_counts() {
        assert_eq!(TileGrid::new(231, 231, 33).unwrap().len(), 49);
        let g = TileGrid::new(400, 400, 33).unwrap();
        assert_eq!(g.len(), 169);
        assert_eq!(*g.rows.last().unwrap(), 367);
        let (tiles, g) = split_tiles(&image(33, 33, 1), 33).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(tiles[0], image(33, 33, 1));
    }

    #[test]
    fn split_is_row_major() {
        let img = image(66, 99, 2);
        let (tiles, g) = split_tiles(&img, 33).unwrap();
        let o: Vec<_> = g.origins().collect();
        assert_eq!(o[..4], [(0, 0), (0, 33), (0, 66), (33, 0)]);
        assert_eq!(tiles[4], img.crop(33, 33, 33, 33).unwrap());
    }

    #[test]
    fn split_rejects_small_image() {
        assert!(split_tiles(&image(32, 40, 3), 33).is_err());
        assert!(split_tiles(&image(40, 32, 3), 33).is_err());
    }

    #[test]
    fn round_trips() {
        for (h, w) in [(99, 99), (100, 100), (34, 70), (33, 65)] {
            let img = image(h, w, (h * w) as u64);
            let (tiles, g) = split_tiles(&img, 33).unwrap();
            assert_eq!(merge_tiles(&tiles, &g).unwrap(), img, "{h}x{w}");
        }
    }

    #[test]
    fn zeroed_tile_only_touches_its_region() {
        let img = image(99, 66, 5);
        let (mut tiles, g) = split_tiles(&img, 33).unwrap();
        tiles[3] = Tensor::zeros(&[3, 33, 33]);
        let merged = merge_tiles(&tiles, &g).unwrap();
        let (r0, c0) = g.origins().nth(3).unwrap();
        for c in 0..3 {
            for i in 0..99 {
                for j in 0..66 {
                    let inside = (r0..r0 + 33).contains(&i) && (c0..c0 + 33).contains(&j);
                    if inside {
                        assert_eq!(merged.at(c, i, j), 0.0);
                    } else {
                        assert_eq!(merged.at(c, i, j), img.at(c, i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn merge_rejects_mismatch() {
        let img = image(66, 66, 6);
        let (tiles, g) = split_tiles(&img, 33).unwrap();
        assert!(merge_tiles(&tiles[..3], &g).is_err());
        let mut bad = tiles.clone();
        bad[0] = Tensor::zeros(&[3, 32, 33]);
        assert!(merge_tiles(&bad, &g).is_err());
    }

    #[test]
    fn batching_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = shuffled_batches(48, 8, &mut rng).unwrap();
        assert_eq!(b.len(), 6);
        assert!(b.iter().all(|x| x.len() == 8));
        let b = shuffled_batches(5, 8, &mut rng).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 5);
        assert!(shuffled_batches(0, 8, &mut rng).is_err());

        let tiles: Vec<u32> = (0..20).collect();
        let a = make_batches(&tiles, 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let a2 = make_batches(&tiles, 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, a2);
        let mut flat: Vec<u32> = a.concat();
        flat.sort();
        assert_eq!(flat, tiles);
    }

    #[test]
    fn selection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut seen = [false; 3];
        for _ in 0..200 {
            let p = BatchPlan::draw(144, 8, &mut rng).unwrap();
            assert_eq!(p.batch_count, 18);
            assert_eq!(p.k_max, 2);
            assert!((1..=2).contains(&p.k()));
            seen[p.k()] = true;
        }
        assert!(seen[1] && seen[2]);
        for _ in 0..50 {
            let p = BatchPlan::draw(63, 8, &mut rng).unwrap();
            assert_eq!(p.k(), 1);
        }
    }

    #[test]
    fn sample_count_handles_short_batch() {
        let p = BatchPlan {
            n_items: 20,
            batch_size: 8,
            batch_count: 3,
            k_max: 3,
            selected: vec![2, 0],
        };
        assert_eq!(p.sample_count(), 12);
        assert_eq!(BatchPlan::all(20, 8).unwrap().sample_count(), 20);
    }

    #[test]
    fn random_select_over_batches() {
        let tiles: Vec<u8> = vec![0; 1024];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batches = make_batches(&tiles, 8, &mut rng).unwrap();
        let p = random_select(&batches, &mut rng).unwrap();
        assert_eq!(p.k_max, 16);
        assert_eq!(p.batch_count, 128);
    }
}
