//! The PSNR metric on reference cases.
//!
//! `cargo run --example psnr`

use drjscc::evaluation::{psnr, psnr_from_mse, psnr_with_max};
use drjscc::ImageTensor;

fn main() -> drjscc::Result<()> {
    println!("MSE = MAX^2           -> {} dB", psnr_from_mse(1.0, 1.0));
    println!("MSE = 0.01, MAX = 1   -> {} dB", psnr_from_mse(0.01, 1.0));
    println!("MSE = 0               -> {} dB", psnr_from_mse(0.0, 1.0));

    let x = [0.1, 0.5, 0.9, 0.3];
    let y = [0.12, 0.45, 0.88, 0.33];
    let unit = psnr_with_max(&x, &y, 1.0)?;
    let x255: Vec<f64> = x.iter().map(|v| v * 255.0).collect();
    let y255: Vec<f64> = y.iter().map(|v| v * 255.0).collect();
    println!("[0,1] scale {unit:.9} dB, [0,255] scale {:.9} dB", psnr_with_max(&x255, &y255, 255.0)?);

    let image = ImageTensor::new(1, 2, 2, vec![0.0, 0.25, 0.5, 1.0])?;
    let noisy = ImageTensor::new(1, 2, 2, vec![0.0, 0.25, 0.5, 0.5])?;
    println!("image with one pixel off by 0.5 -> {:.4} dB", psnr(&image, &noisy)?);
    Ok(())
}
