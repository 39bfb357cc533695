// NT-Xent on toy embeddings: the two variants, the symmetric form used for
// pretraining, and a check of its analytic gradient.

use crossmodal_cil::losses::{ntxent, symmetric_ntxent, ContrastiveBatch, ContrastiveConfig, NtXentVariant};

pub fn run_example() -> crossmodal_cil::Result<()> {
    let a = vec![vec![1.0, 0.0, 0.2], vec![0.0, 1.0, 0.1], vec![0.3, 0.2, 1.0]];
    let aligned = a.clone();
    let shuffled = vec![a[1].clone(), a[2].clone(), a[0].clone()];

    for variant in [NtXentVariant::AsPrinted, NtXentVariant::PositiveExcluded] {
        for tau in [0.01, 0.02, 0.04, 0.5] {
            let mut b = ContrastiveBatch::new(&a, &aligned, tau);
            b.variant = variant;
            let good = ntxent(&b, 0)?;
            let mut s = ContrastiveBatch::new(&a, &shuffled, tau);
            s.variant = variant;
            let bad = ntxent(&s, 0)?;
            println!("{variant:?} tau {tau:<5} anchor 0: aligned {good:>10.4}  misaligned {bad:>10.4}");
        }
    }

    let cfg = ContrastiveConfig::default();
    let sym = symmetric_ntxent(&a, &shuffled, &cfg)?;
    println!("symmetric loss {:.6}", sym.value);

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..a.len() {
        for k in 0..a[i].len() {
            let mut plus = a.clone();
            plus[i][k] += h;
            let mut minus = a.clone();
            minus[i][k] -= h;
            let fd = (symmetric_ntxent(&plus, &shuffled, &cfg)?.value - symmetric_ntxent(&minus, &shuffled, &cfg)?.value) / (2.0 * h);
            let rel = (fd - sym.grad_a[i][k]).abs() / fd.abs().max(sym.grad_a[i][k].abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    println!("largest relative gradient error vs central differences: {worst:.2e}");
    assert!(worst < 1e-4);
    Ok(())
}

#[allow(dead_code)]
fn main() -> crossmodal_cil::Result<()> {
    run_example()
}
