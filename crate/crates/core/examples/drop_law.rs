//! Prints the RED drop law for the default parameters.

use redsim::red_model::{drop_probability, RedParams};

fn main() {
    let params = RedParams::default();
    let r = params.capacity;
    println!("q_min = {} pkts, q_max = {} pkts", params.q_min * r, params.q_max * r);
    println!("{:>8} {:>8}", "q_avg", "p");
    for q in [0.0, 50.0, 75.0, 90.0, 112.5, 130.0, 150.0, 150.5, 200.0, 300.0] {
        println!("{q:>8.1} {:>8.4}", drop_probability(q, &params));
    }
}
