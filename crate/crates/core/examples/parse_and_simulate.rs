//! Parses a MiniRTL counter, prints its interface, and runs it cycle by
//! cycle. A malformed variant shows the parser's error.
//!
//! ```bash
//! cargo run --example parse_and_simulate
//! ```

use earl::minirtl::{parse_source, simulate, Stimulus, Vocab};

const COUNTER: &str = "module cnt2 ( input clk , input rst , output reg q0 , output reg q1 ) ; \
    always @ ( posedge clk ) if ( rst ) q0 <= 0 ; else q0 <= ~ q0 ; \
    always @ ( posedge clk ) if ( rst ) q1 <= 0 ; else q1 <= q1 ^ q0 ; endmodule";

fn main() {
    let vocab = Vocab::minirtl();
    let ast = parse_source(vocab, COUNTER).expect("counter parses");
    println!("module {}", ast.interface.module_name);
    for p in &ast.interface.ports {
        println!("  {:?} {} [{} bit]", p.direction, p.name, p.width);
    }
    println!("canonical: {}", ast.to_source());

    let stim = Stimulus {
        inputs: vec!["clk".into(), "rst".into()],
        cycles: vec![vec![0, 1], vec![0, 0], vec![0, 0], vec![0, 0], vec![0, 0], vec![0, 1], vec![0, 0]],
        reset_cycles: 0,
    };
    let trace = simulate(&ast, &stim).expect("stimulus matches the interface");
    println!("\ncycle  rst  {}", trace.outputs.join("  "));
    for (i, (row, inp)) in trace.cycles.iter().zip(&stim.cycles).enumerate() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:>2}")).collect();
        println!("{i:>5}  {:>3}  {}", inp[1], vals.join("  "));
    }

    let broken = COUNTER.replace("q0 <= 0 ;", "q0 <= 0");
    match parse_source(vocab, &broken) {
        Ok(_) => println!("\nunexpectedly parsed"),
        Err(e) => println!("\nmissing semicolon: {e}"),
    }
}
