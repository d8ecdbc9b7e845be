use crate::error::{PjxError, Result};
use crate::model::{AnswerDistribution, EOS, PAD};
use crate::tensor::{Graph, Var};

/// Probabilities are floored here before the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

fn nll(g: &mut Graph, probs: Var, gold: usize) -> Result<Var> {
    let n = g.shape(probs).iter().product::<usize>();
    if gold >= n {
        return Err(PjxError::Input(format!("gold index {gold} outside {n} classes")));
    }
    let p = g.pick(probs, gold)?;
    let l = g.ln_floor(p, LOG_FLOOR);
    Ok(g.scale(l, -1.0))
}

/// `-ln p(gold)` for an answer distribution node.
pub fn answer_loss(g: &mut Graph, probs: Var, gold: usize) -> Result<Var> {
    nll(g, probs, gold)
}

/// Summed `-ln p(word)` over teacher-forced steps; PAD targets are skipped.
pub fn explanation_loss(g: &mut Graph, step_probs: &[Var], gold: &[usize]) -> Result<Var> {
    if step_probs.len() != gold.len() {
        return Err(PjxError::Contract(format!(
            "{} decoder steps for {} gold tokens",
            step_probs.len(),
            gold.len()
        )));
    }
    if gold.last() != Some(&EOS) {
        return Err(PjxError::Contract("gold justification must end with EOS".into()));
    }
    let mut total: Option<Var> = None;
    for (&probs, &tok) in step_probs.iter().zip(gold) {
        if tok == PAD {
            continue;
        }
        let l = nll(g, probs, tok)?;
        total = Some(match total {
            Some(t) => g.add(t, l)?,
            None => l,
        });
    }
    Ok(total.expect("EOS step is never skipped"))
}

/// Plain-value answer loss.
pub fn answer_nll(pred: &AnswerDistribution, gold: usize) -> Result<f64> {
    let probs = pred.probs();
    if gold >= probs.len() {
        return Err(PjxError::Input(format!("gold index {gold} outside {} classes", probs.len())));
    }
    Ok(-probs[gold].max(LOG_FLOOR).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn uniform_answer_costs_ln_classes() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::vector(vec![0.25; 4]));
        let l = answer_loss(&mut g, p, 2).unwrap();
        assert!((g.scalar(l) - 4f64.ln()).abs() < 1e-12);
        let d = AnswerDistribution::new(vec![0.25; 4]).unwrap();
        assert!((answer_nll(&d, 0).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!(answer_loss(&mut g, p, 4).is_err());
    }

    #[test]
    fn one_hot_answer_costs_nothing() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::vector(vec![0.0, 1.0, 0.0]));
        let l = answer_loss(&mut g, p, 1).unwrap();
        assert!(g.scalar(l).abs() <= 1e-9);
        // floor keeps a zero probability finite
        let l = answer_loss(&mut g, p, 0).unwrap();
        assert!((g.scalar(l) + LOG_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn explanation_loss_cases() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::vector(vec![0.125; 8]));
        let l = explanation_loss(&mut g, &[p], &[EOS]).unwrap();
        assert!((g.scalar(l) - 8f64.ln()).abs() < 1e-12);
        assert!(explanation_loss(&mut g, &[p, p], &[EOS]).is_err());
        assert!(explanation_loss(&mut g, &[p], &[5]).is_err());
        let mut sure = vec![0.0; 8];
        sure[EOS] = 1.0;
        let q = g.constant(Tensor::vector(sure));
        let l = explanation_loss(&mut g, &[p, q], &[PAD, EOS]).unwrap();
        assert!(g.scalar(l) <= 1e-9);
    }
}
