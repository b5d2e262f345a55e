use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EntropyError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("distribution {index} has {got} entries, expected {expected}")]
    Width {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("distribution {index} is not a probability vector (sum {sum})")]
    NotNormalized { index: usize, sum: f64 },
}

fn shannon(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// `alpha_sample * mean_i H(p_i) - alpha_batch * H(mean_i p_i)`, natural log.
pub fn entropy_loss(
    probs: &[Vec<f64>],
    alpha_sample: f64,
    alpha_batch: f64,
) -> Result<f64, EntropyError> {
    let first = probs.first().ok_or(EntropyError::EmptyBatch)?;
    let width = first.len();
    for (index, p) in probs.iter().enumerate() {
        if p.len() != width {
            return Err(EntropyError::Width {
                index,
                expected: width,
                got: p.len(),
            });
        }
        let sum: f64 = p.iter().sum();
        if p.iter().any(|&x| x < 0.0 || !x.is_finite()) || (sum - 1.0).abs() > 1e-6 {
            return Err(EntropyError::NotNormalized { index, sum });
        }
    }
    let n = probs.len() as f64;
    let h_sample = probs.iter().map(|p| shannon(p)).sum::<f64>() / n;
    let mut mean = vec![0.0; width];
    for p in probs {
        for (m, &x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(alpha_sample * h_sample - alpha_batch * shannon(&mean))
}
