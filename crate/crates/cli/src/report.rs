use std::fmt::Write;

use ccgan_core::eval::Summary;

/// Per-term losses with their coefficients and weighted contributions.
///
/// Rust's float formatting ignores the process locale, so the decimal
/// separator is always `.`.
pub fn print_loss_breakdown(summary: &Summary) -> String {
    let b = &summary.final_losses;
    let mut out = String::new();
    let _ = writeln!(out, "{:<8} {:>14} {:>8} {:>14}", "term", "value", "lambda", "weighted");
    let mut sum = 0.0;
    for (name, value, coef, weighted) in b.terms() {
        sum += weighted;
        let _ = writeln!(out, "{name:<8} {value:>14.6} {coef:>8.3} {weighted:>14.6}");
    }
    let _ = writeln!(out, "{:<8} {:>14} {:>8} {:>14.6}", "total", "", "", sum);
    let _ = writeln!(
        out,
        "disc_t {:.6}  disc_s {:.6}  target accuracy {:.4}",
        summary.final_disc_t, summary.final_disc_s, summary.final_accuracy
    );
    out
}
