//! The synthetic designs, signals, and noise laws.

use rankreg::datagen::{gen_design, gen_noise, gen_signal, Design, DesignSpec, Noise, Signal};
use rankreg::GroupStructure;
use rankreg::WeightRule;

fn corr(x: &nalgebra::DMatrix<f64>, a: usize, b: usize) -> f64 {
    let (ca, cb) = (x.column(a), x.column(b));
    let (ma, mb) = (ca.mean(), cb.mean());
    let cov: f64 = ca.iter().zip(cb.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum();
    let va: f64 = ca.iter().map(|u| (u - ma).powi(2)).sum();
    let vb: f64 = cb.iter().map(|v| (v - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn main() -> rankreg::Result<()> {
    for kind in [Design::C1, Design::C2, Design::C3] {
        let x = gen_design(&DesignSpec { kind, n: 2000, p: 5 }, 4)?;
        println!("{kind}: corr(1,2) {:.2}, corr(1,3) {:.2}", corr(&x, 0, 1), corr(&x, 0, 2));
    }
    let groups = GroupStructure::contiguous(200, 20, WeightRule::SqrtSize)?;
    for s in [Signal::S1, Signal::S2, Signal::S3, Signal::S4] {
        let beta = gen_signal(s, 200, &groups)?;
        println!("{s}: {} nonzeros, first {:?}", beta.iter().filter(|v| **v != 0.0).count(), &beta[..4]);
    }
    for e in [Noise::E1, Noise::E2, Noise::E3, Noise::E4, Noise::E5, Noise::E6] {
        let mut eps = gen_noise(e, 10001, 5);
        eps.sort_by(f64::total_cmp);
        println!("{e}: median {:+.3}, IQR {:.3}", eps[5000], eps[7500] - eps[2500]);
    }
    Ok(())
}
