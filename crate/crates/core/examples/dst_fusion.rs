//! Evidence, opinions and Dempster-Shafer fusion on hand-picked inputs.
//!
//! cargo run --example dst_fusion

use t2mac::comm::{integrate_inbox, TailoredMessage};
use t2mac::evidence::{
    combine_pair, conflict, evidence_from_opinion, expected_action_values, opinion_from_evidence, DirichletOpinion,
    EvidenceVector,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let e = EvidenceVector::new(vec![2.0, 2.0])?;
    let op = opinion_from_evidence(&e);
    println!("e = {:?}  ->  {op}  (S = {})", e.values(), op.strength());
    println!("back to evidence: {:?}", evidence_from_opinion(&op)?.values());

    // two agents that each back a different action
    let left = DirichletOpinion::new(vec![0.5, 0.0], 0.5)?;
    let right = DirichletOpinion::new(vec![0.0, 0.5], 0.5)?;
    println!("\nconflict C = {}", conflict(&left, &right));
    let fused = combine_pair(&left, &right)?;
    println!("{left}  (+)  {right}  =  {fused}");
    println!("expected action values {:?}", expected_action_values(&fused));

    // a vacuous opinion changes nothing
    let vacuous = DirichletOpinion::vacuous(2);
    println!("\nwith vacuous: {}", combine_pair(&fused, &vacuous)?);

    // near-certain and contradictory: the guard refuses
    let sure_a = opinion_from_evidence(&EvidenceVector::new(vec![1e12, 0.0])?);
    let sure_b = opinion_from_evidence(&EvidenceVector::new(vec![0.0, 1e12])?);
    println!("\nnear-certain disagreement: {}", combine_pair(&sure_a, &sure_b).unwrap_err());

    // an inbox: agent 2 fuses its own view with messages from agents 0 and 1
    let local = opinion_from_evidence(&EvidenceVector::new(vec![1.0, 0.0, 0.0])?);
    let inbox = vec![
        TailoredMessage::new(0, 2, EvidenceVector::new(vec![4.0, 0.0, 1.0])?, 0)?,
        TailoredMessage::new(1, 2, EvidenceVector::new(vec![0.0, 0.0, 0.0])?, 0)?,
    ];
    let integrated = integrate_inbox(&local, &inbox)?;
    println!(
        "\nlocal {local}\nafter inbox {}  evidence {:?}",
        integrated.opinion,
        integrated.evidence.values()
    );
    Ok(())
}
