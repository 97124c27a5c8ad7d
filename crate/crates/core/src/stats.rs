//! Small descriptive statistics shared across modules.

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance (divides by `n`).
pub fn variance(values: &[f64]) -> f64 {
    let mu = mean(values);
    values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / values.len() as f64
}

pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

/// Sample standard deviation (divides by `n - 1`); zero for fewer than two values.
pub fn sample_std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    let ss = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Coefficient of variation `std / mean`, population normalisation.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    std_dev(values) / mean(values)
}
