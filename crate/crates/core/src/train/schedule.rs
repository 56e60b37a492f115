/// Cosine annealing from `lr0` at step 0 to 0 at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64) -> f64 {
    if total_steps == 0 {
        return lr0;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    (lr0 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())).max(0.0)
}
