//! Scores a noisy sentence and its correction with every metric.

use asca::metrics::MetricName;

fn main() {
    let truth = "the quick brown fox jumps over the lazy dog";
    let pairs = [
        ("noisy", "thw quicj brown fpx jumps ovrr the lazy dog"),
        ("corrected", "the quick brown fox jumps over the lazy dog"),
    ];
    print!("{:<10}", "");
    for m in MetricName::ALL {
        print!("{:>10}", m.label());
    }
    println!();
    for (name, hyp) in pairs {
        print!("{name:<10}");
        for m in MetricName::ALL {
            print!("{:>10.3}", m.score(truth, hyp));
        }
        println!();
    }
}
