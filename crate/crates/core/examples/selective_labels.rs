//! Values and labels of communication links for one step, and the selector
//! loss they induce.
//!
//! cargo run --example selective_labels

use t2mac::comm::{bce_loss, label_step, LinkValueMode, DEFAULT_LABEL_THRESHOLD};
use t2mac::evidence::EvidenceVector;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ev = |v: &[f64]| EvidenceVector::new(v.to_vec());
    // payloads[i][j] is what agent i would send to agent j; the diagonal is
    // each agent's own evidence
    let payloads = vec![
        vec![ev(&[0.5, 0.5, 0.0])?, ev(&[6.0, 0.0, 0.0])?, ev(&[0.0, 0.0, 0.0])?],
        vec![ev(&[0.0, 3.0, 0.0])?, ev(&[0.2, 0.0, 0.1])?, ev(&[0.0, 0.1, 0.0])?],
        vec![ev(&[0.0, 0.0, 0.0])?, ev(&[2.0, 0.0, 0.0])?, ev(&[0.0, 0.0, 9.0])?],
    ];
    for mode in [LinkValueMode::LeaveOneOut, LinkValueMode::BeforeCommunication] {
        println!("{mode:?}");
        let labels = label_step(&payloads, 0, DEFAULT_LABEL_THRESHOLD, mode)?;
        for l in &labels {
            println!("  {} -> {}  v = {:+.4}  y = {}", l.sender, l.recipient, l.value, l.label);
        }
        // a selector that opens every link with probability 0.7
        let probs = vec![0.7; labels.len()];
        let targets: Vec<f64> = labels.iter().map(|l| f64::from(l.label)).collect();
        let (loss, _) = bce_loss(&probs, &targets)?;
        println!("  selector BCE at p = 0.7: {loss:.4}");
    }
    Ok(())
}
