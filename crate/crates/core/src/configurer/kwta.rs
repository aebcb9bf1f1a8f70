use crate::error::{FtnError, Result};

/// Keep the `k` largest values as `true`. Ties go to the lowest index.
pub fn kwta(values: &[f64], k: usize) -> Result<Vec<bool>> {
    if k == 0 || k > values.len() {
        return Err(FtnError::Config(format!("k = {k} outside 1..={} for kwta", values.len())));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut gates = vec![false; values.len()];
    for &i in &order[..k] {
        gates[i] = true;
    }
    Ok(gates)
}
