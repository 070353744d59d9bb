//! The banded dispersing matrix and its adjoint.
//!
//! `cargo run --example disperse_aggregate -- 3 8`

use candle_core::{Device, Tensor};
use drjscc::codec_dynamic::{aggregate, disperse, DisperseMatrix};

fn main() -> drjscc::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (remaining, total) = match args[..] {
        [c, m] => (c, m),
        _ => (3, 8),
    };
    let matrix = DisperseMatrix::new(remaining, total)?;
    println!("M for c_n = {remaining}, m = {total} (band width K = {}):", matrix.kernel());
    for i in 0..matrix.rows() {
        let row: Vec<String> = (0..matrix.cols()).map(|j| format!("{:5.3}", matrix.get(i, j))).collect();
        println!("  {}", row.join(" "));
    }

    let dev = Device::Cpu;
    let u = Tensor::arange(0f64, remaining as f64, &dev)?.reshape((1, 1, remaining))?;
    let spread = disperse(&u, &matrix)?;
    let back = aggregate(&spread, &matrix)?;
    println!("U       = {:?}", u.flatten_all()?.to_vec1::<f64>()?);
    println!("U·M     = {:?}", spread.flatten_all()?.to_vec1::<f64>()?);
    println!("U·M·Mᵀ  = {:?}", back.flatten_all()?.to_vec1::<f64>()?);

    let v = Tensor::rand(-1f64, 1f64, (1, 1, total), &dev)?;
    let lhs = (spread * &v)?.sum_all()?.to_scalar::<f64>()?;
    let rhs = (u * aggregate(&v, &matrix)?)?.sum_all()?.to_scalar::<f64>()?;
    println!("<U·M, V> = {lhs:.12}, <U, V·Mᵀ> = {rhs:.12}");
    Ok(())
}
