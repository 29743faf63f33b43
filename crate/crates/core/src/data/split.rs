//! Sequence-number based train/eval split.

use super::skeleton::SkeletonSequence;
use crate::error::{Error, Result};

/// Sequence number held out for evaluation.
pub const EVAL_SEQUENCE: u32 = 3;

/// Sequences numbered [`EVAL_SEQUENCE`] go to eval, all others to train.
/// Both halves are sorted by (subject, action, sequence) regardless of input order.
pub fn split_train_eval(
    sequences: Vec<SkeletonSequence>,
) -> Result<(Vec<SkeletonSequence>, Vec<SkeletonSequence>)> {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for seq in sequences {
        match seq.sequence {
            None => {
                return Err(Error::validation(format!(
                    "sequence {}/{} has no sequence number",
                    seq.subject, seq.action
                )))
            }
            Some(EVAL_SEQUENCE) => eval.push(seq),
            Some(_) => train.push(seq),
        }
    }
    let key = |s: &SkeletonSequence| (s.subject.clone(), s.action.clone(), s.sequence);
    train.sort_by_key(key);
    eval.sort_by_key(key);
    Ok((train, eval))
}
