//! The odd/even loop-law density ratio against its two-term small-r law:
//! the difference shrinks like r^{2(3κ/8-1)}.

use fkmix::exact::{rn_ratio, rn_ratio_asymptotic, CleParams, SeriesAccuracy};

fn main() {
    let acc = SeriesAccuracy::default();
    for &kappa in &[16.0 / 3.0, 5.0, 6.0, 7.0] {
        let p = CleParams::new(kappa).unwrap();
        println!(
            "kappa = {kappa:.6}   (iota = {:.4}, amplitude = {:.4})",
            p.predicted_iota, p.amplitude
        );
        println!(
            "  {:>10} {:>18} {:>18} {:>12} {:>14}",
            "r", "ratio", "two-term law", "difference", "diff / r^(2 iota)"
        );
        for &r in &[0.1, 0.03, 0.01, 0.003, 0.001] {
            let exact = rn_ratio(kappa, r, acc).unwrap();
            let asym = rn_ratio_asymptotic(kappa, r).unwrap();
            let diff = exact - asym;
            println!(
                "  {r:>10.4} {exact:>18.12} {asym:>18.12} {diff:>12.3e} {:>14.4}",
                diff.abs() / r.powf(2.0 * p.predicted_iota)
            );
        }
        println!();
    }
}
