//! Walks one generated task through every stage of the cascaded reward.
//!
//! ```bash
//! cargo run --example reward_cascade -- [seed]
//! ```

use earl::minirtl::Vocab;
use earl::reward::{score_text, RewardSchedule};
use earl::taskgen::{generate_task, Difficulty, TaskKind};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let vocab = Vocab::minirtl();
    let task = generate_task(seed, TaskKind::Combinational, Difficulty::Easy).expect("task");
    let reference = task.reference_text.clone();
    println!("task {}\nreference: {reference}\n", task.id);

    let name = &task.reference.interface.module_name;
    let out = task.reference.interface.outputs().next().expect("an output").name.clone();
    let spare = ["z", "q", "t0", "e"]
        .into_iter()
        .find(|n| task.reference.decl(n).is_none())
        .expect("a free identifier");
    let flipped = match reference.find(" & ") {
        Some(_) => reference.replacen(" & ", " | ", 1),
        None => reference.replacen(" | ", " & ", 1),
    };
    let cases = [
        ("reference", reference.clone()),
        ("missing endmodule", reference.replace(" endmodule", "")),
        ("renamed module", reference.replacen(name.as_str(), "top1", 1)),
        ("output renamed", reference.replace(&format!(" {out} "), &format!(" {spare} "))),
        ("one operator changed", flipped),
        ("constant output", format!("module {name} ( {} ) ; assign {out} = 0 ; endmodule", ports(&task))),
    ];
    for schedule in [RewardSchedule::default(), RewardSchedule::binary()] {
        println!("schedule {schedule:?}");
        for (label, text) in &cases {
            let b = score_text(vocab, text, &task, &schedule);
            println!(
                "  {label:<22} stage {:<10} interface {:.2}  match {:.2}  pass {:<5}  R = {:.3}",
                format!("{:?}", b.stage),
                b.interface_score,
                b.functional_fraction,
                b.functional_pass,
                b.reward
            );
        }
    }
}

fn ports(task: &earl::taskgen::Task) -> String {
    let text = &task.reference_text;
    let open = text.find('(').unwrap() + 2;
    let close = text.find(") ;").unwrap() - 1;
    text[open..close].to_string()
}
