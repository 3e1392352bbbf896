//! Same-size padding: how much each side is padded for a given kernel and
//! stride, and what mirror and zero fills look like.

use srtile::padding::{pad, same_pad_spec_for, FillMode};
use srtile::tensor::{conv2d_valid, ConvKernel, Tensor};

fn main() -> srtile::Result<()> {
    println!("  k  s   h  ->  padded  (top,bottom)");
    for (k, s) in [(3, 1), (7, 1), (4, 1), (3, 2), (7, 2)] {
        let spec = same_pad_spec_for(33, 33, (k, k), (s, s), FillMode::Mirror)?;
        let (ph, _) = spec.padded_extent(33, 33);
        println!("{k:>3} {s:>2} {:>3}  -> {ph:>6}   ({},{})", 33, spec.top, spec.bottom);
    }

    let row = Tensor::from_vec(&[1, 1, 3], vec![1.0, 2.0, 3.0])?;
    for mode in [FillMode::Mirror, FillMode::Zero] {
        let spec = srtile::padding::PadSpec {
            top: 0,
            bottom: 0,
            left: 2,
            right: 2,
            mode,
        };
        println!("{mode:?}: {:?}", pad(&row, &spec)?.data());
    }

    // a 7x7 convolution after same-size padding keeps a 33x33 tile at 33x33
    let x = Tensor::from_fn([3, 33, 33], |c, i, j| (c + i * j) as f64 / 100.0);
    let k = ConvKernel::zeros(8, 3, 7, 7);
    let spec = same_pad_spec_for(33, 33, (7, 7), (1, 1), FillMode::Mirror)?;
    let y = conv2d_valid(&pad(&x, &spec)?, &k)?;
    println!("conv output {:?}", y.dims());
    Ok(())
}
