/// Decides when the cascade stops adding layers.
///
/// A layer counts as an improvement only if its accuracy exceeds the best
/// accuracy seen so far by more than `epsilon`. Growth stops after
/// `patience` consecutive non-improving layers, or once `max_layers` layers
/// exist.
#[derive(Debug, Clone)]
pub struct GrowthController {
    patience: usize,
    epsilon: f64,
    max_layers: usize,
    accuracies: Vec<f64>,
    best: f64,
    stale: usize,
}

impl GrowthController {
    pub fn new(patience: usize, epsilon: f64, max_layers: usize) -> Self {
        GrowthController {
            patience: patience.max(1),
            epsilon,
            max_layers,
            accuracies: Vec::new(),
            best: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    /// Records the next layer's accuracy; returns whether another layer
    /// should be grown.
    pub fn observe(&mut self, accuracy: f64) -> bool {
        if self.accuracies.is_empty() || accuracy > self.best + self.epsilon {
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.best = self.best.max(accuracy);
        self.accuracies.push(accuracy);
        self.stale < self.patience && self.accuracies.len() < self.max_layers
    }

    pub fn accuracies(&self) -> &[f64] {
        &self.accuracies
    }

    pub fn best_layer(&self) -> Option<usize> {
        best_layer_index(&self.accuracies)
    }
}

/// Index of the highest accuracy, lowest index on ties.
pub fn best_layer_index(accuracies: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &a) in accuracies.iter().enumerate() {
        if best.is_none_or(|b| a > accuracies[b]) {
            best = Some(i);
        }
    }
    best
}

/// Number of layers the stopping rule would grow when fed `accuracies` in
/// order (the sequence may be longer than what gets consumed).
pub fn replay_growth(accuracies: &[f64], patience: usize, epsilon: f64, max_layers: usize) -> usize {
    let mut controller = GrowthController::new(patience, epsilon, max_layers);
    for &a in accuracies {
        if !controller.observe(a) {
            break;
        }
    }
    controller.accuracies().len()
}
