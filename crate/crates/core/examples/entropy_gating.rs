//! How the entropy gate picks tokens. A short, hand-made response with a
//! few uncertain positions is gated at several ρ, then compared with the
//! soft weighting; finally the clipped surrogate of one token is traced as
//! the policy ratio moves.
//!
//! ```bash
//! cargo run --example entropy_gating
//! ```

use earl::rlcore::{entropy_threshold, token_term, GateConfig};

fn main() {
    let tokens = [
        "module", "mux2", "(", "input", "sel", ",", "input", "a", ",", "input", "b", ",", "output", "y", ")", ";",
        "assign", "y", "=", "sel", "?", "a", ":", "b", ";", "endmodule",
    ];
    let entropies = [
        0.01, 0.42, 0.0, 0.03, 0.61, 0.02, 0.02, 0.09, 0.0, 0.15, 0.06, 0.03, 0.05, 0.33, 0.0, 0.0, 0.04, 0.12, 0.0,
        0.71, 0.88, 0.52, 0.0, 0.47, 0.01, 0.02,
    ];
    for rho in [0.0, 0.5, 0.8, 0.9] {
        let gates = GateConfig::mask(rho).gates(&entropies);
        let kept: Vec<&str> = tokens.iter().zip(&gates).filter(|(_, &g)| g == 1.0).map(|(t, _)| *t).collect();
        println!(
            "rho {rho:.1}: tau {:>6.3}  keeps {:2}/{}  {}",
            entropy_threshold(&entropies, rho),
            kept.len(),
            tokens.len(),
            kept.join(" ")
        );
    }
    let weights = GateConfig::archer().gates(&entropies);
    println!("\nweighting by H / max H:");
    for (t, w) in tokens.iter().zip(&weights).filter(|(_, &w)| w > 0.25) {
        println!("  {t:<6} {w:.3}");
    }

    println!("\nclipped surrogate, eps_low 0.2, eps_high 0.28");
    println!("ratio   A=+1: value  coeff   A=-1: value  coeff");
    for r in [0.6f64, 0.8, 1.0, 1.2, 1.28, 1.4] {
        let term = |adv| token_term(r.ln(), 0.0, adv, 1.0, 0.2, 0.28, 1.0);
        let (pos, neg) = (term(1.0), term(-1.0));
        println!(
            "{r:5.2}   {:>10.3} {:>6.3}   {:>10.3} {:>6.3}",
            pos.surrogate, pos.coeff, neg.surrogate, neg.coeff
        );
    }
}
